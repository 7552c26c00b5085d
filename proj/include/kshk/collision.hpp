// SPDX-License-Identifier: MIT
#pragma once

#include "kshk/hermite.hpp"

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace kshk {

// Quadrature configuration for tensor assembly in center-of-mass/relative
// coordinates: Gauss-Hermite in the center variable, generalized
// Gauss-Laguerre in the relative speed (the |u|^gamma factor is absorbed
// into the radial weight, so no kinked integrand remains), a product sphere
// rule for the relative direction, and graded dyadic panels times a uniform
// azimuthal rule for the deflection angle.
struct QuadratureConfig {
    int c_order = 5;      // GH order per center dimension
    int r_order = 4;      // radial Gauss-Laguerre order
    int mu_order = 5;     // Gauss-Legendre order in cos(polar) for u-hat
    int phi_order = 12;   // uniform azimuthal nodes (u-hat and sigma)
    int theta_levels = 6; // dyadic panels for the deflection angle
    int theta_pts = 4;    // Gauss points per panel

    // Orders making every polynomial factor exact for basis degree N; the
    // only quadrature error left is the panel rule on theta^{-1-2s}.
    static QuadratureConfig defaults_for(int N);
    QuadratureConfig doubled() const;
    bool operator==(const QuadratureConfig&) const = default;
};

// Galerkin collision tensors over a basis: main[g](a,b) is the weak-form
// entry <Q_{s,gamma}(psi_a, psi_b), psi_g>, lift the same with the velocity
// power 2-2s.  Both are symmetrized in (a, b).
struct CollisionTensor {
    IndexSetPtr set;
    KernelParams params;
    QuadratureConfig quad;
    std::vector<Eigen::MatrixXd> main;
    std::vector<Eigen::MatrixXd> lift;

    int dim() const { return set ? set->dim() : 0; }
};

// Assembles both tensors.  Deterministic for any thread count: work is
// chunked by the first center-node index, each chunk accumulates privately,
// and chunks are reduced in fixed ascending order.
CollisionTensor assemble_tensor(const IndexSetPtr& set,
                                const KernelParams& params,
                                const QuadratureConfig& quad,
                                int threads = 1);

// (Q_kappa(g,f))_c = sum_{a,b} (main + kappa*lift)[c](a,b) g_a f_b.
SpectralVector apply_Q(const CollisionTensor& tensor, double kappa,
                       const SpectralVector& g, const SpectralVector& f);

// Matrix of f -> Q_kappa(g,f) + Q_kappa(f,g) in the psi basis.
Eigen::MatrixXd linearized_matrix(const CollisionTensor& tensor, double kappa,
                                  const SpectralVector& background);

// Solution of the moment-constrained equilibrium system
//   P f = macro,  (I-P) Q_kappa(f,f) = 0
// by Newton iteration from the projected continuum Maxwellian.
struct DiscretizedMaxwellian {
    SpectralVector coeffs;
    MacroState macro;
    double newton_residual = 0.0;
    int iterations = 0;
};

DiscretizedMaxwellian discretized_maxwellian(const CollisionTensor& tensor,
                                             double kappa,
                                             const MacroState& macro);

// Direct quadrature assembly of the linearized operator at the reference
// Maxwellian, split into the unlifted part and the lift part
// (L = first + kappa * second).  Equivalent to contracting the assembled
// tensor against the Maxwellian background, but avoids the full tensor
// cost, which matters for large basis dimensions.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd>
assemble_linearized_direct(const IndexSetPtr& set, const KernelParams& params,
                           const QuadratureConfig& quad, int threads = 1);

// Spectral diagnostics of a linearized collision matrix: kernel dimension
// of the symmetrized operator, coercivity margin delta0 on the microscopic
// subspace (plain metric and the weighted-proxy metric), and the angles
// between the numerical near-kernel vectors and the conserved span.
struct GapReport {
    int kernel_dim = 0;
    double delta0 = 0.0;
    double delta0_proxy = 0.0;
    std::vector<double> kernel_angles;
};

GapReport spectral_gap(const Eigen::MatrixXd& L, const IndexSetPtr& set,
                       const KernelParams& params,
                       double kernel_tol = 1e-7);

// Binary tensor cache.  Layout: magic "KSHK", format version, basis and
// kernel parameters, quadrature orders, the two payloads, and a checksum.
void save_tensor(const CollisionTensor& tensor, const std::string& path);
CollisionTensor load_tensor(const std::string& path);

// Loads `path` if it exists and matches (set, params, quad); otherwise
// assembles and writes the cache (best effort; assembly failures propagate,
// write failures do not).
CollisionTensor load_or_assemble(const IndexSetPtr& set,
                                 const KernelParams& params,
                                 const QuadratureConfig& quad,
                                 const std::string& path, int threads = 1);

// Canonical cache file name for a parameter combination, e.g.
// "tensor_N3_g0.5_s0.25_cb1_q5-4-5-12-6-4.bin".
std::string tensor_cache_name(int N, const KernelParams& params,
                              const QuadratureConfig& quad);

} // namespace kshk
