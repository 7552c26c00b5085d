// SPDX-License-Identifier: MIT
#include "kshk/kawashima.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <limits>

#include "kshk/errors.hpp"

namespace kshk {

namespace {

Eigen::Matrix3d k00_skeleton() {
    Eigen::Matrix3d K;
    K << 0, 1, 0, //
        -1, 0, 0, //
        0, 0, 0;
    return K;
}

double min_eig(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym,
                                                      Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw EigSolverFailure("coercivity eigensolve failed");
    return es.eigenvalues().minCoeff();
}

// Macro 3x3 block of [K_bar, A] at scaling delta:
// delta [K00, A00] + 2 A01 A10, with A01 A10 = B^T A^2 B - A00^2.
Eigen::Matrix3d macro_commutator_block(const Eigen::MatrixXd& A,
                                       const Eigen::MatrixXd& B,
                                       double delta) {
    const Eigen::Matrix3d K00 = k00_skeleton();
    const Eigen::Matrix3d A00 = B.transpose() * A * B;
    const Eigen::MatrixXd AB = A * B;
    const Eigen::Matrix3d cross = AB.transpose() * AB - A00 * A00;
    return delta * (K00 * A00 - A00 * K00) + 2.0 * cross;
}

} // namespace

Eigen::MatrixXd transport_matrix(const HermiteIndexSet& set) {
    if (set.N() < 3)
        throw DegreeTooSmall("transport matrix needs basis degree >= 3, got " +
                             std::to_string(set.N()));
    Eigen::MatrixXd A = xi1_matrix(set);
    for (int i = 0; i < set.dim(); ++i)
        if (set.degree(i) > 3) {
            A.row(i).setZero();
            A.col(i).setZero();
        }
    return A;
}

Compensator build_compensator(const IndexSetPtr& set, const Eigen::MatrixXd& A,
                              double delta1) {
    const Eigen::MatrixXd B = macro_basis(*set);
    double delta = 1.0;
    while (delta > 1e-8 &&
           min_eig(macro_commutator_block(A, B, delta)) < delta)
        delta /= 2;

    const Eigen::MatrixXd P = B * B.transpose();
    Eigen::MatrixXd Kbar =
        delta * (B * k00_skeleton() * B.transpose()) + (P * A - A * P);
    Compensator comp;
    comp.set = set;
    comp.K = delta1 * Kbar;
    comp.delta = delta;
    comp.delta1 = delta1;
    return comp;
}

CoercivityReport coercivity_check(const Compensator& comp,
                                  const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& L) {
    const HermiteIndexSet& set = *comp.set;
    const Eigen::MatrixXd Kbar = comp.K / comp.delta1;
    const Eigen::MatrixXd B = macro_basis(set);
    const Eigen::MatrixXd V = micro_basis(set);

    // [K_bar, A] is symmetric; certify the split estimate by absorbing the
    // macro-micro cross block with half the macro minimum eigenvalue.
    const Eigen::MatrixXd comm = Kbar * A - A * Kbar;
    const double lam = min_eig(B.transpose() * comm * B);
    const Eigen::MatrixXd X = B.transpose() * comm * V;
    const Eigen::MatrixXd S = V.transpose() * comm * V;
    const double xnorm = Eigen::JacobiSVD<Eigen::MatrixXd>(X).singularValues()(0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ses(S,
                                                       Eigen::EigenvaluesOnly);
    const double snorm = ses.eigenvalues().cwiseAbs().maxCoeff();

    CoercivityReport rep;
    rep.c1 = lam / 2.0;
    rep.C1 = (lam > 0.0)
                 ? 2.0 * xnorm * xnorm / lam + snorm
                 : std::numeric_limits<double>::infinity();

    const Eigen::MatrixXd Xi = xi1_matrix(set);
    const Eigen::MatrixXd KXi = comp.K * Xi;
    const Eigen::MatrixXd M =
        0.5 * (KXi + KXi.transpose()) - 0.5 * (L + L.transpose());
    rep.min_combined_eig = min_eig(M);
    return rep;
}

double choose_delta1(const IndexSetPtr& set, const Eigen::MatrixXd& A,
                     const Eigen::MatrixXd& L) {
    for (double d = 1.0; d > 1e-8; d /= 2) {
        const Compensator comp = build_compensator(set, A, d);
        if (coercivity_check(comp, A, L).min_combined_eig > 0.0) return d;
    }
    throw NonPositiveCoefficient(
        "no dyadic compensator scaling yields a positive combined spectrum");
}

} // namespace kshk
