// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>

#include "kshk/hermite.hpp"

namespace kshk {

// Skew-symmetric finite-rank compensator supported on the degree <= 3 block
// of the basis, used to restore coercivity of the transport-collision pairing
// in the hydrodynamic directions.
struct Compensator {
    IndexSetPtr set;
    Eigen::MatrixXd K;   // B x B, K = -K^T, zero outside the degree <= 3 block
    double delta = 0.0;  // macro-block scaling chosen during assembly
    double delta1 = 1.0; // overall scaling applied to the skeleton
};

struct CoercivityReport {
    // Constants of the macro/micro split estimate for the unscaled skeleton:
    // <[K_bar, xi1] f, f> >= c1 ||P f||^2 - C1 ||(I-P) f||^2 on the degree<=3
    // subspace, certified by Schur completion of the commutator blocks.
    double c1 = 0.0;
    double C1 = 0.0;
    // Minimum eigenvalue of sym(K xi1 - L) on the full basis.
    double min_combined_eig = 0.0;
};

// Multiplication by xi1 compressed to the degree <= 3 subspace and embedded
// into the full basis (zero rows/columns above degree 3).  Exact from the
// Hermite recurrence; symmetric.  Requires N >= 3.
Eigen::MatrixXd transport_matrix(const HermiteIndexSet& set);

// Assemble K = delta1 * K_bar with the skeleton
//   K_bar = delta * B K00 B^T + [P, A],  P = B B^T,
// where B is the orthonormal macro basis, K00 the 3x3 rotation pairing the
// density and momentum directions, and [P, A] supplies the +A01 / -A10
// off-diagonal blocks.  delta is the largest dyadic value <= 1 for which the
// macro commutator block delta [K00, A00] + 2 A01 A10 has minimum eigenvalue
// >= delta (half its small-delta slope).
Compensator build_compensator(const IndexSetPtr& set, const Eigen::MatrixXd& A,
                              double delta1 = 1.0);

// Evaluate the coercivity constants of the compensator against a linearized
// collision matrix L at some background (encoded in L).
CoercivityReport coercivity_check(const Compensator& comp,
                                  const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& L);

// Largest dyadic delta1 <= 1 whose compensator makes sym(K xi1 - L) positive
// definite; throws NonPositiveCoefficient if the sweep exhausts.
double choose_delta1(const IndexSetPtr& set, const Eigen::MatrixXd& A,
                     const Eigen::MatrixXd& L);

} // namespace kshk
