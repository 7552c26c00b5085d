// SPDX-License-Identifier: MIT
#pragma once

#include "kshk/collision.hpp"

#include <Eigen/Dense>
#include <memory>
#include <utility>

namespace kshk {

// Reference transport coefficients together with the kernel parameters
// they were computed under.
struct TransportCoeffs {
    double mu_tilde = 0.0;
    double kappa_tilde = 0.0;
    double gamma = 0.0;
    double s = 0.0;
    double kappa = 0.0;
};

// Coefficient vectors of Phi(xi) M and Psi(xi) M for the fields
// Phi = xi_1^2 - |xi|^2 / 3 and Psi = xi_1 (|xi|^2 - 5).  Psi has degree 3,
// so the basis needs N >= 3.  Both are purely microscopic.
std::pair<SpectralVector, SpectralVector>
burnett_fields(const IndexSetPtr& set);

// Solves L x = -Phi M and L y = -Psi M on the microscopic subspace, where
// L is the linearized collision matrix at the reference Maxwellian.
std::pair<SpectralVector, SpectralVector>
invert_burnett(const Eigen::MatrixXd& L, const IndexSetPtr& set);

// Temperature evaluator for the transport coefficients.  State dependence
// is handled by rescaling the reference solve instead of reassembling:
//
//   mu(T) = T^{1 - gamma/2} mu_tilde(T^{1 - s - gamma/2} kappa)
//
// and likewise for the conductivity, where mu_tilde(k) is computed from
// L_plain + k L_lift at the reference Maxwellian.  Off-reference solves
// are memoized by (T, kappa) rounded to 12 digits behind a mutex, so one
// model can be shared across threads; copies share the cache.
class TransportModel {
public:
    // Runs the Burnett inversion at params.kappa internally.
    TransportModel(const IndexSetPtr& set, const KernelParams& params,
                   Eigen::MatrixXd L_plain, Eigen::MatrixXd L_lift);

    const TransportCoeffs& coeffs() const;
    double mu(double T) const;
    double conductivity(double T) const;

    // Uncached (mu_tilde, kappa_tilde) at an explicit lift weight; the
    // scaling-law consistency checks compare the evaluator against this.
    std::pair<double, double> solve_reference(double kappa_eff) const;

private:
    struct State;
    TransportModel(std::shared_ptr<State> state);
    std::shared_ptr<State> state_;

    friend TransportModel transport_coeffs(const SpectralVector&,
                                           const SpectralVector&,
                                           const KernelParams&,
                                           Eigen::MatrixXd, Eigen::MatrixXd);
};

// Builds the model from inverted Burnett solutions obtained under
// L = L_plain + params.kappa * L_lift at the reference Maxwellian:
// mu_tilde = <Phi M, phi_tilde>, kappa_tilde = <Psi M, psi_tilde> / 4.
// Throws NonPositiveCoefficient if either is not positive.
TransportModel transport_coeffs(const SpectralVector& phi_tilde,
                                const SpectralVector& psi_tilde,
                                const KernelParams& params,
                                Eigen::MatrixXd L_plain,
                                Eigen::MatrixXd L_lift);

// Convenience: contract the tensor at the reference Maxwellian and run the
// inversion at tensor.params.kappa.
TransportModel transport_from_tensor(const CollisionTensor& tensor);

// Diffusion matrix in (rho, u, T)-derivative form.  Rows are the diffusive
// (mass, momentum, energy) fluxes:
//   row 0 = 0,  row 1 = (0, mu(T), 0),  row 2 = (0, mu(T) u, conductivity(T)).
Eigen::Matrix3d diffusion_matrix(const HydroState& v,
                                 const TransportModel& model);

// Central-difference Jacobian (step 1e-5) of the constrained equilibrium
// family in the macro coordinates; column k is the response to the k-th
// coordinate.  Throws JacobianUnavailable when a perturbed solve fails.
Eigen::MatrixXd maxwellian_family_jacobian(const CollisionTensor& tensor,
                                           double kappa,
                                           const MacroState& macro);

// Microscopic correction map at a fixed background.  Columns of b_perp are
// the corrections driven by unit derivatives of the three macro
// coordinates, so f_perp = b_perp * (da0, da1, da2)/dx.
struct MicroCorrection {
    IndexSetPtr set;
    Eigen::MatrixXd b_perp;

    SpectralVector apply(const MacroState& du_dx) const;
};

// Correction at a constrained-equilibrium background: the family Jacobian
// dM is taken through the Newton solve, the transport term applies
// xi1_matrix, the uncentred projection dM * (macro components) is removed,
// and the remainder is inverted on the microscopic subspace.
MicroCorrection micro_correction_map(const CollisionTensor& tensor,
                                     double kappa,
                                     const DiscretizedMaxwellian& background);

// Same construction through the projected continuum Maxwellian family.
MicroCorrection micro_correction_map(const CollisionTensor& tensor,
                                     double kappa,
                                     const HydroState& background);

// Evaluated corrections f_perp = b_perp * du_dx.
SpectralVector micro_correction(const CollisionTensor& tensor, double kappa,
                                const DiscretizedMaxwellian& background,
                                const MacroState& du_dx);
SpectralVector micro_correction(const CollisionTensor& tensor, double kappa,
                                const HydroState& background,
                                const MacroState& du_dx);

} // namespace kshk
