// SPDX-License-Identifier: MIT
#pragma once

#include "kshk/chapman.hpp"

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace kshk {

// Travelling-frame data for the profile: endpoints, speed and amplitude.
// Identical content to the Rankine-Hugoniot solution.
using ShockFrame = RHSolution;

// Frame of the 3-shock of amplitude epsilon at the reference left state
// (1, 0, 1).
ShockFrame shock_frame(double epsilon);

// Right-hand side of the profile ODE reduced to (u, T).  The mass first
// integral j = rho (u - s) = rho_-(u_- - s) eliminates rho; the integrated
// momentum and energy relations give
//
//   mu(T) du/dx = j u + j T / (u - s) - m0
//   ka(T) dT/dx = -j u^2 / 2 + (3/2) j T + m0 u - e0
//
// with m0, e0 fixed by the left state.  Throws DegenerateMassFlux when
// u - s vanishes to working precision.
std::pair<double, double> reduced_ode(const HydroState& v,
                                      const ShockFrame& frame,
                                      const TransportModel& model);

// Jacobian of the reduced vector field at a rest point of the system
// (the mu'(T), ka'(T) terms drop because the numerators vanish there).
Eigen::Matrix2d endpoint_linearization(const HydroState& v,
                                       const ShockFrame& frame,
                                       const TransportModel& model);

struct ProfileGrid {
    double half_width = 10.0; // L: grid covers [-L/eps, L/eps]
    int nodes = 801;          // odd keeps x = 0 on the grid
};

struct NSProfile {
    Eigen::VectorXd grid;
    std::vector<HydroState> states;
    std::vector<Eigen::Vector3d> deriv; // d/dx (rho, u, T) per node
    ShockFrame frame;
};

// Heteroclinic profile by saddle shooting from v_- + delta * (unstable
// eigenvector), delta = 1e-8 * epsilon, integrated with an adaptive
// embedded 5(4) Runge-Kutta pair (rtol 1e-11, atol 1e-13) until within
// 1e-10 of v_+.  Translation is normalized so u(0) = (u_- + u_+)/2, then
// the orbit is resampled onto `grid.nodes` points uniform in the stretched
// variable eps*x on [-L/eps, L/eps].  Beyond the integrated span the
// states follow the endpoint linearizations, which is the orbit's own
// asymptotics to second order in the residual offset.  Throws GridTooShort
// if half_width < 8 and OrbitEscape if the orbit leaves the connecting
// region.
NSProfile solve_profile(const ShockFrame& frame, const TransportModel& model,
                        const ProfileGrid& grid = {});

enum class LiftMode { continuum, discretized };

// Per-node Maxwellian lift of the profile.
struct ProfileField {
    Eigen::VectorXd grid;
    std::vector<SpectralVector> nodes;
    ShockFrame frame;
    LiftMode mode = LiftMode::continuum;
};

// continuum: coefficients of the projected Maxwellian at each node state;
// discretized: the moment-constrained Newton equilibrium.  Newton failures
// rethrow NewtonDivergence tagged with the node index.  Nodes are
// independent; `threads` > 1 splits them into contiguous chunks with the
// results written in place, so the output order is deterministic.
ProfileField lift_profile(const NSProfile& profile,
                          const CollisionTensor& tensor, double kappa,
                          LiftMode mode, int threads = 1);

struct ProfileReport {
    // max over nodes of the first-integral residual |J(V) - s U - B V' - c|
    // (infinity norm over the three conservation rows).
    double flux_invariance = 0.0;
    // |d/dx (a0, a1, a2)| of the macro lift at the node nearest x = 0.
    double center_slope = 0.0;
    // |slope| of the least-squares fit of log|du/dx| on the outer third of
    // the grid, one per side.
    double decay_rate_left = 0.0;
    double decay_rate_right = 0.0;
    // [(u - s)(-rho log(T^{3/2}/rho))] at the right end minus the left end;
    // negative when the profile dissipates.
    double entropy_flux_difference = 0.0;
};

ProfileReport profile_diagnostics(const NSProfile& profile,
                                  const TransportModel& model);

} // namespace kshk
