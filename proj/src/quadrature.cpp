// SPDX-License-Identifier: MIT
#include "kshk/quadrature.hpp"
#include "kshk/errors.hpp"

#include <cmath>
#include <numbers>

namespace kshk {

namespace {

// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix, weight
// of node i is mass * (first eigenvector component)^2.  Eigen returns the
// eigenvalues in increasing order, so the rule is deterministic.
Rule1D golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag,
                    double mass) {
    const int n = static_cast<int>(diag.size());
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) J(i, i) = diag(i);
    for (int i = 0; i + 1 < n; ++i) {
        J(i, i + 1) = offdiag(i);
        J(i + 1, i) = offdiag(i);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Rule1D rule;
    rule.nodes = es.eigenvalues();
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        const double v0 = es.eigenvectors()(0, i);
        rule.weights(i) = mass * v0 * v0;
    }
    return rule;
}

void require_order(int n) {
    if (n < 1) throw QuadratureConfigInvalid("quadrature order must be >= 1");
}

} // namespace

Rule1D gauss_hermite_prob(int n) {
    require_order(n);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(n > 1 ? n - 1 : 0);
    for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
    return golub_welsch(diag, off, 1.0);
}

Rule1D gauss_hermite_phys(int n) {
    require_order(n);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(n > 1 ? n - 1 : 0);
    for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(0.5 * k);
    return golub_welsch(diag, off, std::sqrt(std::numbers::pi));
}

Rule1D gauss_legendre(int n, double a, double b) {
    require_order(n);
    if (!(a < b)) throw QuadratureConfigInvalid("gauss_legendre needs a < b");
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(n > 1 ? n - 1 : 0);
    for (int k = 1; k < n; ++k) {
        const double kk = static_cast<double>(k);
        off(k - 1) = kk / std::sqrt(4.0 * kk * kk - 1.0);
    }
    Rule1D ref = golub_welsch(diag, off, 2.0);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    Rule1D rule;
    rule.nodes = (ref.nodes.array() * half + mid).matrix();
    rule.weights = ref.weights * half;
    return rule;
}

Rule1D gauss_laguerre(int n, double alpha) {
    require_order(n);
    if (!(alpha > -1.0))
        throw QuadratureConfigInvalid("gauss_laguerre needs alpha > -1");
    Eigen::VectorXd diag(n);
    Eigen::VectorXd off(n > 1 ? n - 1 : 0);
    for (int k = 0; k < n; ++k) diag(k) = 2.0 * k + alpha + 1.0;
    for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(k * (k + alpha));
    return golub_welsch(diag, off, std::tgamma(alpha + 1.0));
}

Rule1D graded_theta_rule(double s, int levels, int pts_per_panel) {
    if (!(s > 0.0 && s < 1.0))
        throw QuadratureConfigInvalid("graded_theta_rule needs s in (0,1)");
    if (levels < 1 || pts_per_panel < 1)
        throw QuadratureConfigInvalid("graded_theta_rule needs levels, pts >= 1");
    const double pi = std::numbers::pi;
    Rule1D rule;
    rule.nodes.resize(levels * pts_per_panel);
    rule.weights.resize(levels * pts_per_panel);
    int pos = 0;
    for (int k = 1; k <= levels; ++k) {
        const double hi = pi / std::pow(2.0, k);
        const double lo = 0.5 * hi;
        Rule1D panel = gauss_legendre(pts_per_panel, lo, hi);
        for (int j = 0; j < pts_per_panel; ++j, ++pos) {
            const double th = panel.nodes(j);
            rule.nodes(pos) = th;
            rule.weights(pos) = panel.weights(j) * std::pow(th, -1.0 - 2.0 * s);
        }
    }
    return rule;
}

Rule1D uniform_azimuthal(int m) {
    if (m < 1) throw QuadratureConfigInvalid("uniform_azimuthal needs m >= 1");
    const double pi = std::numbers::pi;
    Rule1D rule;
    rule.nodes.resize(m);
    rule.weights = Eigen::VectorXd::Constant(m, 2.0 * pi / m);
    for (int j = 0; j < m; ++j) rule.nodes(j) = 2.0 * pi * j / m;
    return rule;
}

} // namespace kshk
