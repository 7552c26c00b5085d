// SPDX-License-Identifier: MIT
#include "kshk/ns_shock.hpp"

#include "kshk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace kshk {

namespace {

// Constants of the first integrals, fixed by the left state:
// rows of J(V) - s U(V) - B(V) V' are identically (j, m0, e0).
struct FluxConstants {
    double s = 0.0;
    double j = 0.0;
    double m0 = 0.0;
    double e0 = 0.0;
};

FluxConstants flux_constants(const ShockFrame& frame) {
    const ConservedState w = to_conserved(frame.v_minus);
    const ConservedState fl = euler_flux(frame.v_minus);
    FluxConstants c;
    c.s = frame.speed;
    c.j = fl.rho - c.s * w.rho;
    c.m0 = fl.m - c.s * w.m;
    c.e0 = fl.E - c.s * w.E;
    return c;
}

double relative_speed(double u, const FluxConstants& c) {
    const double rel = u - c.s;
    if (std::abs(rel) <= 1e-12 * std::max(1.0, std::abs(c.s)))
        throw DegenerateMassFlux("reduced profile ODE: u - s = " +
                                 std::to_string(rel));
    return rel;
}

Eigen::Vector2d reduced_rhs(const Eigen::Vector2d& y, const FluxConstants& c,
                            const TransportModel& model) {
    const double u = y(0), T = y(1);
    if (!(T > 0.0))
        throw NonPhysicalState("reduced profile ODE: T <= 0");
    const double rel = relative_speed(u, c);
    Eigen::Vector2d f;
    f(0) = (c.j * u + c.j * T / rel - c.m0) / model.mu(T);
    f(1) = (-0.5 * c.j * u * u + 1.5 * c.j * T + c.m0 * u - c.e0) /
           model.conductivity(T);
    return f;
}

Eigen::Matrix2d rest_point_jacobian(const Eigen::Vector2d& y,
                                    const FluxConstants& c,
                                    const TransportModel& model) {
    const double u = y(0), T = y(1);
    const double rel = relative_speed(u, c);
    const double mu = model.mu(T);
    const double ka = model.conductivity(T);
    Eigen::Matrix2d J;
    J(0, 0) = (c.j - c.j * T / (rel * rel)) / mu;
    J(0, 1) = (c.j / rel) / mu;
    J(1, 0) = (-c.j * u + c.m0) / ka;
    J(1, 1) = 1.5 * c.j / ka;
    return J;
}

// Real eigenpairs of a 2x2 with distinct real eigenvalues.
struct EigenPair {
    double lambda = 0.0;
    Eigen::Vector2d vec = Eigen::Vector2d::Zero();
};

std::pair<EigenPair, EigenPair> real_eigenpairs(const Eigen::Matrix2d& J) {
    const double tr = J.trace();
    const double det = J.determinant();
    const double disc = tr * tr - 4.0 * det;
    if (disc <= 0.0)
        throw EigSolverFailure("profile linearization: complex eigenvalues");
    const double root = std::sqrt(disc);
    auto pair_for = [&](double lam) {
        EigenPair p;
        p.lambda = lam;
        // row of (J - lam I) with the larger norm gives the direction
        const Eigen::Vector2d r0(J(0, 0) - lam, J(0, 1));
        const Eigen::Vector2d r1(J(1, 0), J(1, 1) - lam);
        const Eigen::Vector2d r = r0.norm() >= r1.norm() ? r0 : r1;
        p.vec = Eigen::Vector2d(-r(1), r(0)).normalized();
        return p;
    };
    EigenPair lo = pair_for(0.5 * (tr - root));
    EigenPair hi = pair_for(0.5 * (tr + root));
    return {lo, hi};
}

struct OrbitPoint {
    double x = 0.0;
    Eigen::Vector2d y = Eigen::Vector2d::Zero();
    Eigen::Vector2d f = Eigen::Vector2d::Zero();
};

// Dormand-Prince 5(4) with the first-same-as-last stage.  Accepted points
// are recorded with their derivatives for local cubic interpolation.
template <class Rhs, class Stop>
std::vector<OrbitPoint> integrate_orbit(const Rhs& rhs,
                                        const Eigen::Vector2d& y0, double h0,
                                        double x_max, const Stop& stop) {
    constexpr double rtol = 1e-11, atol = 1e-13;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                     a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                     a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                     b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                     e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    std::vector<OrbitPoint> pts;
    double x = 0.0, h = h0;
    Eigen::Vector2d y = y0;
    Eigen::Vector2d k1 = rhs(y);
    pts.push_back({x, y, k1});
    bool rejected = false;
    for (long step = 0; step < 500000; ++step) {
        if (stop(pts.back()))
            return pts;
        if (x >= x_max)
            throw OrbitEscape("profile shooting: passed x = " +
                              std::to_string(x_max) +
                              " without reaching the right state");
        if (h < 1e-13)
            throw OrbitEscape("profile shooting: step size underflow");
        const Eigen::Vector2d k2 = rhs(y + h * (a21 * k1));
        const Eigen::Vector2d k3 = rhs(y + h * (a31 * k1 + a32 * k2));
        const Eigen::Vector2d k4 = rhs(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const Eigen::Vector2d k5 =
            rhs(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Eigen::Vector2d k6 = rhs(
            y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const Eigen::Vector2d ynew =
            y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Eigen::Vector2d k7 = rhs(ynew);
        const Eigen::Vector2d de =
            e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7;
        double err = 0.0;
        for (int i = 0; i < 2; ++i) {
            const double sk =
                atol + rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
            const double q = h * de(i) / sk;
            err += q * q;
        }
        err = std::sqrt(0.5 * err);
        if (err <= 1.0) {
            x += h;
            y = ynew;
            k1 = k7;
            pts.push_back({x, y, k1});
            double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
            fac = std::min(rejected ? 1.0 : 5.0, std::max(0.2, fac));
            h *= fac;
            rejected = false;
        } else {
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
            rejected = true;
        }
    }
    throw OrbitEscape("profile shooting: step budget exhausted");
}

// Cubic Hermite value on [p0, p1] at local parameter t in [0, 1].
Eigen::Vector2d hermite_value(const OrbitPoint& p0, const OrbitPoint& p1,
                              double t) {
    const double h = p1.x - p0.x;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    return h00 * p0.y + (h10 * h) * p0.f + h01 * p1.y + (h11 * h) * p1.f;
}

Eigen::Vector2d orbit_value(const std::vector<OrbitPoint>& pts, double x) {
    auto it = std::upper_bound(
        pts.begin(), pts.end(), x,
        [](double v, const OrbitPoint& p) { return v < p.x; });
    if (it == pts.begin())
        return pts.front().y;
    if (it == pts.end())
        return pts.back().y;
    const OrbitPoint& p1 = *it;
    const OrbitPoint& p0 = *(it - 1);
    const double t = (x - p0.x) / (p1.x - p0.x);
    return hermite_value(p0, p1, t);
}

// Root of u(x) = target inside one accepted step, by bisection on the
// cubic interpolant; u is strictly monotone along the orbit.
double crossing_in_step(const OrbitPoint& p0, const OrbitPoint& p1,
                        double target) {
    double lo = 0.0, hi = 1.0;
    const double sign = p1.y(0) < p0.y(0) ? 1.0 : -1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double val = hermite_value(p0, p1, mid)(0);
        if (sign * (val - target) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return p0.x + 0.5 * (lo + hi) * (p1.x - p0.x);
}

} // namespace

ShockFrame shock_frame(double epsilon) {
    return rh_solve(HydroState{1.0, 0.0, 1.0}, epsilon);
}

std::pair<double, double> reduced_ode(const HydroState& v,
                                      const ShockFrame& frame,
                                      const TransportModel& model) {
    const FluxConstants c = flux_constants(frame);
    const Eigen::Vector2d f = reduced_rhs(Eigen::Vector2d(v.u, v.T), c, model);
    return {f(0), f(1)};
}

Eigen::Matrix2d endpoint_linearization(const HydroState& v,
                                       const ShockFrame& frame,
                                       const TransportModel& model) {
    const FluxConstants c = flux_constants(frame);
    return rest_point_jacobian(Eigen::Vector2d(v.u, v.T), c, model);
}

NSProfile solve_profile(const ShockFrame& frame, const TransportModel& model,
                        const ProfileGrid& grid) {
    if (grid.half_width < 8.0)
        throw GridTooShort("profile grid must span at least [-8/eps, 8/eps]");
    if (grid.nodes < 3)
        throw ValidationError("profile grid needs at least 3 nodes");
    const double eps = frame.epsilon;
    const FluxConstants c = flux_constants(frame);
    const Eigen::Vector2d eq_m(frame.v_minus.u, frame.v_minus.T);
    const Eigen::Vector2d eq_p(frame.v_plus.u, frame.v_plus.T);

    const auto [stab_m, unst_m] =
        real_eigenpairs(rest_point_jacobian(eq_m, c, model));
    if (!(unst_m.lambda > 0.0) || !(stab_m.lambda < 0.0))
        throw OrbitEscape("left state is not a saddle of the reduced system");
    const double lam_out = unst_m.lambda;
    Eigen::Vector2d w = unst_m.vec;
    if (w.dot(eq_p - eq_m) < 0.0)
        w = -w;

    const auto [fast_p, slow_p] =
        real_eigenpairs(rest_point_jacobian(eq_p, c, model));
    // both negative at the attracting end; the orbit lands on the slow one
    const double lam_in = std::max(fast_p.lambda, slow_p.lambda);
    if (!(lam_in < 0.0))
        throw OrbitEscape("right state is not attracting in the reduced system");

    const double u_lo = std::min(eq_m(0), eq_p(0)), u_hi = std::max(eq_m(0), eq_p(0));
    const double T_lo = std::min(eq_m(1), eq_p(1)), T_hi = std::max(eq_m(1), eq_p(1));
    const double u_margin = 0.5 * (u_hi - u_lo), T_margin = 0.5 * (T_hi - T_lo);
    const double stop_dist = 1e-10;

    const double delta = 1e-8 * eps;
    const Eigen::Vector2d y0 = eq_m + delta * w;
    auto rhs = [&](const Eigen::Vector2d& y) { return reduced_rhs(y, c, model); };
    auto stop = [&](const OrbitPoint& p) {
        if ((p.y - eq_p).norm() <= stop_dist)
            return true;
        if (p.y(0) < u_lo - u_margin || p.y(0) > u_hi + u_margin ||
            p.y(1) < T_lo - T_margin || p.y(1) > T_hi + T_margin)
            throw OrbitEscape("profile shooting left the connecting region at x = " +
                              std::to_string(p.x));
        return false;
    };
    const std::vector<OrbitPoint> pts =
        integrate_orbit(rhs, y0, 0.01 / lam_out, 2000.0 / eps, stop);
    if ((pts.back().y - eq_p).norm() > stop_dist)
        throw OrbitEscape("profile shooting stopped away from the right state");

    // translation normalization: u((u_-+u_+)/2) sits at x = 0
    const double u_mid = 0.5 * (eq_m(0) + eq_p(0));
    double x_star = -1.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const bool above = pts[k].y(0) >= u_mid;
        const bool above_next = pts[k + 1].y(0) >= u_mid;
        if (above == above_next)
            continue;
        x_star = crossing_in_step(pts[k], pts[k + 1], u_mid);
        break;
    }
    if (x_star < 0.0)
        throw OrbitEscape("profile shooting never crossed the midpoint value");

    const int n = grid.nodes;
    const double x_lo = -grid.half_width / eps;
    const double step = 2.0 * grid.half_width / eps / (n - 1);
    const double x_end = pts.back().x;
    const Eigen::Vector2d off_end = pts.back().y - eq_p;

    NSProfile out;
    out.frame = frame;
    out.grid.resize(n);
    out.states.resize(n);
    out.deriv.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x = x_lo + i * step;
        out.grid(i) = x;
        const double xo = x + x_star;
        Eigen::Vector2d y, f;
        if (xo < 0.0) {
            const Eigen::Vector2d off = (delta * std::exp(lam_out * xo)) * w;
            y = eq_m + off;
            f = lam_out * off;
        } else if (xo > x_end) {
            const Eigen::Vector2d off = std::exp(lam_in * (xo - x_end)) * off_end;
            y = eq_p + off;
            f = lam_in * off;
        } else {
            y = orbit_value(pts, xo);
            f = rhs(y);
        }
        const double rel = relative_speed(y(0), c);
        const double rho = c.j / rel;
        out.states[i] = HydroState{rho, y(0), y(1)};
        out.deriv[i] = Eigen::Vector3d(-rho * f(0) / rel, f(0), f(1));
    }
    return out;
}

ProfileField lift_profile(const NSProfile& profile,
                          const CollisionTensor& tensor, double kappa,
                          LiftMode mode, int threads) {
    const int n = static_cast<int>(profile.states.size());
    ProfileField out;
    out.grid = profile.grid;
    out.frame = profile.frame;
    out.mode = mode;
    out.nodes.resize(n);

    struct Failure {
        int node = -1;
        std::exception_ptr err;
    };
    auto run = [&](int lo, int hi, Failure& fail) {
        for (int i = lo; i < hi; ++i) {
            try {
                const HydroState& v = profile.states[i];
                if (mode == LiftMode::continuum) {
                    out.nodes[i] = maxwellian_coeffs(tensor.set, v);
                } else {
                    const MacroState a = conserved_to_macro(to_conserved(v));
                    out.nodes[i] = discretized_maxwellian(tensor, kappa, a).coeffs;
                }
            } catch (const NewtonDivergence& e) {
                fail.node = i;
                fail.err = std::make_exception_ptr(NewtonDivergence(
                    "lift_profile: node " + std::to_string(i) + ": " + e.what(),
                    e.residual_history));
                return;
            } catch (...) {
                fail.node = i;
                fail.err = std::current_exception();
                return;
            }
        }
    };

    const int nt = std::max(1, std::min(threads, n));
    std::vector<Failure> fails(nt);
    if (nt == 1) {
        run(0, n, fails[0]);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n + nt - 1) / nt;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back(run, std::min(t * chunk, n),
                              std::min((t + 1) * chunk, n), std::ref(fails[t]));
        for (auto& th : pool)
            th.join();
    }
    for (const Failure& f : fails)
        if (f.err)
            std::rethrow_exception(f.err);
    return out;
}

ProfileReport profile_diagnostics(const NSProfile& profile,
                                  const TransportModel& model) {
    const FluxConstants c = flux_constants(profile.frame);
    const int n = static_cast<int>(profile.states.size());
    ProfileReport rep;

    for (int i = 0; i < n; ++i) {
        const HydroState& v = profile.states[i];
        const ConservedState w = to_conserved(v);
        const ConservedState fl = euler_flux(v);
        const Eigen::Vector3d fd = diffusion_matrix(v, model) * profile.deriv[i];
        const double r0 = fl.rho - c.s * w.rho - fd(0) - c.j;
        const double r1 = fl.m - c.s * w.m - fd(1) - c.m0;
        const double r2 = fl.E - c.s * w.E - fd(2) - c.e0;
        rep.flux_invariance = std::max(
            rep.flux_invariance,
            std::max(std::abs(r0), std::max(std::abs(r1), std::abs(r2))));
    }

    int center = 0;
    for (int i = 1; i < n; ++i)
        if (std::abs(profile.grid(i)) < std::abs(profile.grid(center)))
            center = i;
    {
        const HydroState& v = profile.states[center];
        const Eigen::Vector3d& d = profile.deriv[center];
        const double dm = d(0) * v.u + v.rho * d(1);
        const double dE = 0.5 * d(0) * v.u * v.u + v.rho * v.u * d(1) +
                          1.5 * (d(0) * v.T + v.rho * d(2));
        const double da2 = (2.0 * dE - 3.0 * d(0)) / std::sqrt(6.0);
        rep.center_slope = Eigen::Vector3d(d(0), dm, da2).norm();
    }

    auto fit_rate = [&](int lo, int hi) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int m = 0;
        for (int i = lo; i < hi; ++i) {
            const double du = std::abs(profile.deriv[i](1));
            if (du < 1e-300)
                continue;
            const double x = profile.grid(i), y = std::log(du);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++m;
        }
        if (m < 2)
            return 0.0;
        const double denom = m * sxx - sx * sx;
        return denom > 0.0 ? std::abs((m * sxy - sx * sy) / denom) : 0.0;
    };
    rep.decay_rate_left = fit_rate(0, n / 3);
    rep.decay_rate_right = fit_rate(n - n / 3, n);

    auto entropy_flux = [&](const HydroState& v) {
        const double sp = 1.5 * std::log(v.T) - std::log(v.rho);
        return (v.u - c.s) * (-v.rho * sp);
    };
    rep.entropy_flux_difference =
        entropy_flux(profile.states[n - 1]) - entropy_flux(profile.states[0]);
    return rep;
}

} // namespace kshk
