// SPDX-License-Identifier: MIT
#pragma once

#include "kshk/fluid.hpp"
#include "kshk/quadrature.hpp"

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <vector>

namespace kshk {

// Collision kernel parameters: angular singularity s, velocity power gamma,
// angular normalization c_b, and lift weight kappa.  Hard potentials:
// s in (0, 1/2), gamma in (0, 1).  Utility norms also accept the boundary
// values (e.g. gamma = s = 0 for the plain norm).
struct KernelParams {
    double s = 0.25;
    double gamma = 0.5;
    double c_b = 1.0;
    double kappa = 0.0;
};

// p-law preset: s = 1/(p-1), gamma = (p-5)/(p-1).
KernelParams kernel_from_power_law(double p);

using MultiIndex = std::array<int, 3>;

// Velocity basis indices: all alpha with |alpha| <= N and alpha_2, alpha_3
// even, ordered by total degree and then descending lexicographically, so
// the macroscopic triple (0,0,0), (1,0,0), (2,0,0),... leads the list.
class HermiteIndexSet {
public:
    explicit HermiteIndexSet(int N);

    int N() const { return N_; }
    int dim() const { return static_cast<int>(indices_.size()); }
    const MultiIndex& index(int i) const { return indices_[i]; }
    const std::vector<MultiIndex>& indices() const { return indices_; }
    int degree(int i) const {
        return indices_[i][0] + indices_[i][1] + indices_[i][2];
    }
    // Position of alpha in the ordering, or -1 if absent.
    int find(const MultiIndex& alpha) const;

private:
    int N_;
    std::vector<MultiIndex> indices_;
};

using IndexSetPtr = std::shared_ptr<const HermiteIndexSet>;

IndexSetPtr build_index_set(int N);

// Coefficients over a HermiteIndexSet: f = sum c_alpha psi_alpha with
// psi_alpha orthonormal, so the plain norm is the Euclidean norm of coeffs.
struct SpectralVector {
    IndexSetPtr set;
    Eigen::VectorXd coeffs;

    SpectralVector() = default;
    explicit SpectralVector(IndexSetPtr s)
        : set(std::move(s)), coeffs(Eigen::VectorXd::Zero(set->dim())) {}
    SpectralVector(IndexSetPtr s, Eigen::VectorXd c)
        : set(std::move(s)), coeffs(std::move(c)) {}
    double norm() const { return coeffs.norm(); }
};

// Coordinates of the projection onto the conserved span
// {M, xi_1 M, (|xi|^2-3) M / sqrt(6)}.
struct MacroState {
    double a0 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
};

// Normalized probabilists' Hermite value h_n(x) (orthonormal under the
// standard normal weight).
double hermite_h1d(int n, double x);

// First n+1 values h_0(x).. h_n(x) by the three-term recurrence.
void hermite_h1d_all(int n, double x, double* out);

// Polynomial factor h_alpha(xi) = prod_i h_{alpha_i}(xi_i).
double eval_hermite_poly(const MultiIndex& alpha, const Eigen::Vector3d& xi);

// Global Maxwellian M(xi) = (2 pi)^{-3/2} exp(-|xi|^2 / 2).
double maxwellian(const Eigen::Vector3d& xi);

// Basis function psi_alpha(xi) = h_alpha(xi) M(xi).
double eval_basis(const MultiIndex& alpha, const Eigen::Vector3d& xi);

// Evaluate h_alpha for every alpha in the set at one point.
Eigen::VectorXd eval_poly_vector(const HermiteIndexSet& set,
                                 const Eigen::Vector3d& xi);

// Coefficient truncation onto a coarser set (throws IncompatibleSets when
// the target has an index missing from the source).
SpectralVector project(const SpectralVector& f, const IndexSetPtr& target);

// || L_osc^ell f || computed diagonally via the eigenvalues (|alpha| + 3/2).
double oscillator_norm(const SpectralVector& f, int ell);

// Orthogonal split f = lift(macro) + micro against the conserved span.
std::pair<MacroState, SpectralVector> macro_split(const SpectralVector& f);

// Embed a MacroState into the basis (inverse of the macro part of the split).
SpectralVector macro_lift(const MacroState& a, const IndexSetPtr& set);

// Conserved moments (rho, m, E) carried by a spectral vector.
ConservedState moments(const SpectralVector& f);
ConservedState macro_to_conserved(const MacroState& a);
MacroState conserved_to_macro(const ConservedState& w);

// Coefficients of the local Maxwellian with hydrodynamic state v, i.e.
// c_alpha = <M_v, psi_alpha>, via Gauss-Hermite in the shifted variable
// (exact: the integrand is polynomial against the shifted Gaussian).
SpectralVector maxwellian_coeffs(const IndexSetPtr& set, const HydroState& v);

// Orthonormal basis of the macroscopic span as columns (B x 3).
Eigen::MatrixXd macro_basis(const HermiteIndexSet& set);

// Orthonormal basis of the microscopic complement as columns (B x (B-3)),
// deterministic (Householder QR completion of the macro basis).
Eigen::MatrixXd micro_basis(const HermiteIndexSet& set);

// Matrix of f -> Pi_N(xi_1 f) in the psi basis.  By the recurrence
// xi h_n = sqrt(n+1) h_{n+1} + sqrt(n) h_{n-1} the matrix is symmetric with
// entries sqrt(alpha_1 + 1) at alpha + e_1 and sqrt(alpha_1) at alpha - e_1;
// couplings leaving the index set are truncated.
Eigen::MatrixXd xi1_matrix(const HermiteIndexSet& set);

// Weighted norm || <xi>^{gamma/2+s} f / sqrt(M) ||_{L^2} via tensorized
// Gauss-Hermite of the given order (the weight is not polynomial, so the
// order is higher than the module's moment default).
double hh1_proxy_norm(const SpectralVector& f, const KernelParams& params,
                      int quad_order = 32);

// Tensorized Gauss-Hermite iteration over the standard normal weight in 3D:
// calls fn(xi, w) for every node.  Order `n` per dimension.
template <class Fn>
void for_each_gh3(int n, Fn&& fn) {
    const Rule1D g = gauss_hermite_prob(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const Eigen::Vector3d xi(g.nodes(i), g.nodes(j), g.nodes(k));
                fn(xi, g.weights(i) * g.weights(j) * g.weights(k));
            }
}

} // namespace kshk
