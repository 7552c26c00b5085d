// SPDX-License-Identifier: MIT
#pragma once

#include <vector>

#include <Eigen/Dense>

#include "kshk/chapman.hpp"
#include "kshk/collision.hpp"
#include "kshk/hermite.hpp"
#include "kshk/kawashima.hpp"
#include "kshk/ns_shock.hpp"

namespace kshk {

// Matrices of the macroscopic travelling-wave ODE at a frozen background
// state: a is the conserved-variable flux Jacobian, b the diffusion matrix
// pulled back to conserved variables, P the shear making P b P^{-1} vanish
// outside its lower-right 2x2 corner b22, and m = b22^{-1} m0 the reduced
// first-order coefficient matrix after eliminating the density row through
// the first integral.  omega diagonalizes m; lambda0 is the slow eigenvalue
// (order eps_hat), lambda_minus the O(1) negative one.
struct MacroODEPack {
    Eigen::Matrix3d a;
    Eigen::Matrix3d b;
    Eigen::Matrix3d P;
    Eigen::Matrix2d b22;
    Eigen::Matrix2d m;
    Eigen::Matrix2d omega;   // unit columns (omega_0 | omega_minus)
    double lambda0 = 0.0;
    double lambda_minus = 0.0;
    double eps_hat = 0.0;    // (s - u)^2 - 5T/3
};

// Evaluates the pack at state v with wave speed s; transport coefficients
// mu(T), conductivity(T) come from the model.  Checks the closed-form
// determinant (3 rho^2 / (2 mu ka)) eps_hat against the direct determinant
// and the diagonalization residual internally.  Throws SonicDegeneracy when
// |s - u| <= 1e-8 and EigSolverFailure if the 2x2 spectrum is not real.
MacroODEPack macro_ode_matrices(const HydroState& v, const TransportModel& model,
                                double speed);

// Phase covector in the macro coordinates (a0, a1, a2) of the spectral
// basis: the pullback of (0, omega(0)^{-T} e1) through P at the profile
// centre state and the moment map, normalized to unit length with the
// largest-magnitude component positive.
Eigen::Vector3d build_ell(const NSProfile& profile, const TransportModel& model);

// First-order form -dF/dx + A(x) F = G of the linearized Galerkin problem,
// F = (u, v, w) with u the macro coordinates, v the micro coordinates and
// w = dv/dx.  A varies with x only through the collision linearization at
// the node backgrounds; the transport blocks A00..A11 are constant.  G
// carries the microscopic source as (0, 0, V^T z / eta).
struct FirstOrderSystem {
    IndexSetPtr set;
    Eigen::VectorXd grid;
    double eta = 0.0;
    double speed = 0.0;
    std::vector<Eigen::MatrixXd> A;       // per-node coefficient matrix
    std::vector<Eigen::VectorXd> G;       // per-node source
    Eigen::MatrixXd A_minus, A_plus;      // limits at the grid ends
    Eigen::MatrixXd basis_macro, basis_micro;
    Eigen::Matrix3d A00;
    Eigen::MatrixXd A01, A10, A11;
    int dim() const { return static_cast<int>(A_minus.rows()); }
    int micro_dim() const { return (dim() - 3) / 2; }
};

// Builds the system on the field's grid with the linearized collision
// matrix at each node's lifted Maxwellian; endpoint matrices use the frame
// states v-/v+ lifted with the field's own mode.  z is one microscopic
// SpectralVector per node (empty z means zero source).  Throws
// NonMicroscopicSource if some z node has a macro component.
FirstOrderSystem assemble_system(const ProfileField& field,
                                 const CollisionTensor& tensor, double kappa,
                                 double eta, const std::vector<SpectralVector>& z,
                                 int threads = 1);

// Spectral data of the endpoint matrices: eigenvalues, the spectral
// projectors onto the unstable subspace of A- and the stable subspace of
// A+ (sorted Schur + Sylvester), their dimensions, and the hyperbolicity
// margin min |Re lambda| over both ends.
struct EndpointAnalysis {
    Eigen::VectorXcd spectrum_minus, spectrum_plus;
    Eigen::MatrixXd unstable_proj_minus;
    Eigen::MatrixXd stable_proj_plus;
    int dim_unstable_minus = 0;
    int dim_stable_plus = 0;
    double margin = 0.0;
};

// Throws ImaginaryAxisEigenvalue if some eigenvalue has |Re| <= 1e-10, and
// ValidationError if the two dimensions do not sum to dim + 1.
EndpointAnalysis endpoint_analysis(const FirstOrderSystem& system);

enum class HalfLine { left, right };

// Conjugator to constant coefficients on one half-line: T solves
// dT/dx = A(x) T - T A_lim with T -> I at the far end, constructed as the
// fixed point of the hyperbolic variation-of-constants map with modewise
// splitting of ad(A_lim) at the threshold kappa_threshold.  The grid is the
// half-line part of the system grid with extra nodes inserted near the
// matching point to resolve the fast transient; base_index locates the
// original nodes inside it.
struct ConjugationResult {
    Eigen::VectorXd grid;                 // ascending x over the half-line
    std::vector<Eigen::MatrixXd> T;
    std::vector<Eigen::MatrixXd> A_nodes; // coefficient matrix on .grid
    Eigen::MatrixXd A_limit;
    std::vector<int> base_index;
    double theta = 0.0;
    double kappa_threshold = 0.0;
    double delta_fit = 0.0;               // fitted decay rate of A(x) - A_lim
    int iterations = 0;
    double c1_estimate = 0.0;             // sup ||T - I|| e^{theta |x|}
};

// Fitted exponential decay rate of ||A(x) - A_lim|| on one half-line.
double coefficient_decay_fit(const FirstOrderSystem& system, HalfLine side);

// theta must lie in (0, fitted decay rate); the splitting threshold is the
// geometric mean of theta and the fit.  Retries a tail-first sweep ordering
// when plain iteration diverges and throws ContractionFailure if neither
// converges.
ConjugationResult conjugation_transform(const FirstOrderSystem& system,
                                        HalfLine side, double theta);

// sup over nodes of ||T' - A(x) T + T A_lim|| with T' from sixth-order
// finite differences on the stored grid.
double conjugation_residual(const ConjugationResult& conj);

struct BVPSolution {
    Eigen::VectorXd grid;
    std::vector<Eigen::VectorXd> state;   // (u, v, w) per node
    std::vector<SpectralVector> f;        // lift(u) + v per node
    double residual = 0.0;                // scheme residual, sup over cells
    double boundary_value = 0.0;          // ell . u at the centre node
};

// Direct collocation solve of -dF/dx + A(x) F = G with fourth-order
// midpoint differences, boundary rows projecting onto the endpoint
// stable/unstable subspaces, and the phase row ell . u(0) = d.  Throws
// SingularBVP (with a condition estimate) if the factorization fails.
BVPSolution solve_bvp(const FirstOrderSystem& system, const Eigen::Vector3d& ell,
                      double d);

// Cross-validation solver: conjugates each half-line to constant
// coefficients, represents the solution by the exponential-dichotomy
// variation-of-constants formula with free data in U(A-) x S(A+), and
// matches value and phase at x = 0.
BVPSolution solve_bvp_matched(const FirstOrderSystem& system,
                              const Eigen::Vector3d& ell, double d, double theta);

// Twisted energy functional E[f] and the measured constant of the estimate
// ||dx f||^2 + ||v||^2 <= C (||z||^2 + ||dx z||^2 + eps^2 ||u||^2) in the
// epsilon-weighted proxy norms (H^1 weight on f, plain coefficient norm in
// place of H^{-1} on z).  slack is taken against the reference constant 1e3.
struct EnergyReport {
    double value = 0.0;
    double dissipation = 0.0;
    double source = 0.0;
    double constant = 0.0;
    double slack = 0.0;
    double lambda = 0.0;
};

// f, z on the common grid; derivatives by fourth-order differences and
// integrals by trapezoid.  Throws GridMismatch when the lengths disagree.
EnergyReport energy_diagnostic(const std::vector<SpectralVector>& f,
                               const std::vector<SpectralVector>& z,
                               const Eigen::VectorXd& grid,
                               const Compensator& comp, double lambda,
                               double epsilon, const KernelParams& params);

struct EtaSample {
    double eta = 0.0;
    double boundary_value = 0.0;
    double sup_norm = 0.0;
    double sup_diff_prev = 0.0;   // against the previous eta's solution
};

// Documents viscosity sensitivity: solves the same problem across etas.
std::vector<EtaSample> eta_sweep(const ProfileField& field,
                                 const CollisionTensor& tensor, double kappa,
                                 const std::vector<double>& etas,
                                 const std::vector<SpectralVector>& z,
                                 const Eigen::Vector3d& ell, double d);

} // namespace kshk
