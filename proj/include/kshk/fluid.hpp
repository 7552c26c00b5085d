// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>
#include <array>

namespace kshk {

// Hydrodynamic variables V = (rho, u, T), one-dimensional bulk velocity.
struct HydroState {
    double rho = 1.0;
    double u = 0.0;
    double T = 1.0;
    bool valid() const { return rho > 0.0 && T > 0.0; }
};

// Conservative variables W = (rho, m, E) with m = rho*u and
// E = rho*u^2/2 + (3/2)*rho*T.
struct ConservedState {
    double rho = 1.0;
    double m = 0.0;
    double E = 1.5;
};

// Characteristic structure of the Euler system at a state: speeds
// (u-c, u, u+c), right eigenvectors of the generalized problem
// (lambda_i f0' - f1') r_i = 0 as columns, and the sound speed.
struct CharFields {
    std::array<double, 3> lambdas{};
    Eigen::Matrix3d rvecs = Eigen::Matrix3d::Zero();
    double c = 0.0;
};

// A 3-family shock joined by the Rankine-Hugoniot conditions, parametrized
// by the amplitude epsilon via lambda_3(v_plus) = lambda_3(v_minus) - epsilon.
struct RHSolution {
    HydroState v_minus;
    HydroState v_plus;
    double speed = 0.0;
    double epsilon = 0.0;
};

ConservedState to_conserved(const HydroState& v);

// Inverse of to_conserved; throws NonPhysicalState if rho <= 0 or the
// internal energy E - m^2/(2 rho) is <= 0.
HydroState from_conserved(const ConservedState& w);

// Euler flux f1(V) = (rho u, rho u^2 + rho T, rho u^3/2 + (5/2) rho u T).
ConservedState euler_flux(const HydroState& v);

// Jacobians of f0 and f1 with respect to (rho, u, T).
Eigen::Matrix3d flux0_jacobian(const HydroState& v);
Eigen::Matrix3d flux1_jacobian(const HydroState& v);

double sound_speed(const HydroState& v);

CharFields char_fields(const HydroState& v);

// Solves the Rankine-Hugoniot system for the 3-shock of amplitude epsilon:
// three jump conditions plus lambda_3(V+) = lambda_3(V-) - epsilon, unknowns
// (V+, s).  Newton iteration from the linear prediction V- - eps*r3(V-),
// s = lambda_3(V-) - eps/2.  Throws NewtonDivergence (with the residual
// history) if the iteration fails, LaxViolation if the converged root does
// not satisfy lambda_3(V+) <= s <= lambda_3(V-).
RHSolution rh_solve(const HydroState& v_minus, double epsilon);

} // namespace kshk
