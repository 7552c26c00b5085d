// SPDX-License-Identifier: MIT
#include "kshk/fluid.hpp"
#include "kshk/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace kshk {

ConservedState to_conserved(const HydroState& v) {
    if (!v.valid()) throw NonPhysicalState("to_conserved: rho, T must be > 0");
    ConservedState w;
    w.rho = v.rho;
    w.m = v.rho * v.u;
    w.E = 0.5 * v.rho * v.u * v.u + 1.5 * v.rho * v.T;
    return w;
}

HydroState from_conserved(const ConservedState& w) {
    if (!(w.rho > 0.0))
        throw NonPhysicalState("from_conserved: rho must be > 0");
    const double eint = w.E - 0.5 * w.m * w.m / w.rho;
    if (!(eint > 0.0))
        throw NonPhysicalState("from_conserved: internal energy must be > 0");
    HydroState v;
    v.rho = w.rho;
    v.u = w.m / w.rho;
    v.T = (2.0 / 3.0) * eint / w.rho;
    return v;
}

ConservedState euler_flux(const HydroState& v) {
    ConservedState f;
    f.rho = v.rho * v.u;
    f.m = v.rho * v.u * v.u + v.rho * v.T;
    f.E = 0.5 * v.rho * v.u * v.u * v.u + 2.5 * v.rho * v.u * v.T;
    return f;
}

Eigen::Matrix3d flux0_jacobian(const HydroState& v) {
    Eigen::Matrix3d J;
    J << 1.0, 0.0, 0.0,
         v.u, v.rho, 0.0,
         0.5 * v.u * v.u + 1.5 * v.T, v.rho * v.u, 1.5 * v.rho;
    return J;
}

Eigen::Matrix3d flux1_jacobian(const HydroState& v) {
    Eigen::Matrix3d J;
    J << v.u, v.rho, 0.0,
         v.u * v.u + v.T, 2.0 * v.rho * v.u, v.rho,
         0.5 * v.u * v.u * v.u + 2.5 * v.u * v.T,
         1.5 * v.rho * v.u * v.u + 2.5 * v.rho * v.T,
         2.5 * v.rho * v.u;
    return J;
}

double sound_speed(const HydroState& v) { return std::sqrt(5.0 * v.T / 3.0); }

CharFields char_fields(const HydroState& v) {
    if (!v.valid()) throw NonPhysicalState("char_fields: invalid state");
    CharFields cf;
    cf.c = sound_speed(v);
    cf.lambdas = {v.u - cf.c, v.u, v.u + cf.c};
    const double rho = v.rho, T = v.T, c = cf.c;
    // Acoustic fields scaled so r.grad(lambda) = 1; the middle field is
    // linearly degenerate and keeps its natural scaling.
    cf.rvecs.col(0) << -3.0 * rho / (4.0 * c), 0.75, -2.0 * T / (4.0 * c);
    cf.rvecs.col(1) << -3.0 * rho, 0.0, 3.0 * T;
    cf.rvecs.col(2) << 3.0 * rho / (4.0 * c), 0.75, 2.0 * T / (4.0 * c);
    return cf;
}

namespace {

Eigen::Vector3d as_vec(const ConservedState& w) {
    return Eigen::Vector3d(w.rho, w.m, w.E);
}

double lambda3(const HydroState& v) { return v.u + sound_speed(v); }

} // namespace

RHSolution rh_solve(const HydroState& v_minus, double epsilon) {
    if (!v_minus.valid())
        throw NonPhysicalState("rh_solve: invalid upstream state");
    if (epsilon < 0.0 || epsilon > 0.2)
        throw std::invalid_argument("rh_solve: epsilon must lie in [0, 0.2]");

    const CharFields cfm = char_fields(v_minus);
    const Eigen::Vector3d f0m = as_vec(to_conserved(v_minus));
    const Eigen::Vector3d f1m = as_vec(euler_flux(v_minus));
    const double lam3m = cfm.lambdas[2];

    Eigen::Vector4d x; // (rho+, u+, T+, s)
    x.head<3>() = Eigen::Vector3d(v_minus.rho, v_minus.u, v_minus.T)
                  - epsilon * cfm.rvecs.col(2);
    x(3) = lam3m - 0.5 * epsilon;

    auto residual = [&](const Eigen::Vector4d& y) -> Eigen::Vector4d {
        HydroState vp{y(0), y(1), y(2)};
        if (!vp.valid()) return Eigen::Vector4d::Constant(1e30);
        Eigen::Vector4d r;
        r.head<3>() = as_vec(euler_flux(vp)) - f1m
                      - y(3) * (as_vec(to_conserved(vp)) - f0m);
        r(3) = lambda3(vp) - lam3m + epsilon;
        return r;
    };

    std::vector<double> history;
    Eigen::Vector4d r = residual(x);
    history.push_back(r.lpNorm<Eigen::Infinity>());
    const double tol = 1e-12;
    for (int iter = 0; iter < 50; ++iter) {
        if (history.back() <= tol) break;
        HydroState vp{x(0), x(1), x(2)};
        Eigen::Matrix4d J = Eigen::Matrix4d::Zero();
        J.block<3, 3>(0, 0) = flux1_jacobian(vp) - x(3) * flux0_jacobian(vp);
        J.block<3, 1>(0, 3) = -(as_vec(to_conserved(vp)) - f0m);
        J(3, 0) = 0.0;
        J(3, 1) = 1.0;
        J(3, 2) = std::sqrt(5.0 / (3.0 * vp.T)) / 2.0;
        J(3, 3) = 0.0;
        Eigen::Vector4d step = J.fullPivLu().solve(-r);
        double damp = 1.0;
        Eigen::Vector4d xn;
        Eigen::Vector4d rn;
        bool improved = false;
        for (int h = 0; h < 30; ++h) {
            xn = x + damp * step;
            rn = residual(xn);
            if (rn.lpNorm<Eigen::Infinity>() < history.back()) {
                improved = true;
                break;
            }
            damp *= 0.5;
        }
        if (!improved) {
            throw NewtonDivergence("rh_solve: damped Newton stalled", history);
        }
        x = xn;
        r = rn;
        history.push_back(r.lpNorm<Eigen::Infinity>());
    }
    if (history.back() > tol)
        throw NewtonDivergence("rh_solve: no convergence in 50 iterations",
                               history);

    RHSolution sol;
    sol.v_minus = v_minus;
    sol.v_plus = HydroState{x(0), x(1), x(2)};
    sol.speed = x(3);
    sol.epsilon = epsilon;
    const double slack = 1e-10;
    if (!(lambda3(sol.v_plus) <= sol.speed + slack &&
          sol.speed <= lam3m + slack))
        throw LaxViolation("rh_solve: converged root violates the entropy "
                           "condition");
    return sol;
}

} // namespace kshk
