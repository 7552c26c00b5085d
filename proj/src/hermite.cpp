// SPDX-License-Identifier: MIT
#include "kshk/hermite.hpp"
#include "kshk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kshk {

HermiteIndexSet::HermiteIndexSet(int N) : N_(N) {
    if (N < 2)
        throw DegreeTooSmall("index set needs N >= 2 to contain the "
                             "conserved span");
    for (int deg = 0; deg <= N; ++deg) {
        std::vector<MultiIndex> block;
        for (int a1 = deg; a1 >= 0; --a1)
            for (int a2 = deg - a1; a2 >= 0; --a2) {
                const int a3 = deg - a1 - a2;
                if (a2 % 2 == 0 && a3 % 2 == 0)
                    block.push_back({a1, a2, a3});
            }
        std::sort(block.begin(), block.end(),
                  [](const MultiIndex& a, const MultiIndex& b) { return a > b; });
        indices_.insert(indices_.end(), block.begin(), block.end());
    }
}

int HermiteIndexSet::find(const MultiIndex& alpha) const {
    for (int i = 0; i < dim(); ++i)
        if (indices_[i] == alpha) return i;
    return -1;
}

IndexSetPtr build_index_set(int N) {
    return std::make_shared<const HermiteIndexSet>(N);
}

void hermite_h1d_all(int n, double x, double* out) {
    out[0] = 1.0;
    if (n == 0) return;
    out[1] = x;
    for (int k = 1; k < n; ++k)
        out[k + 1] = (x * out[k] - std::sqrt(static_cast<double>(k)) * out[k - 1])
                     / std::sqrt(static_cast<double>(k + 1));
}

double hermite_h1d(int n, double x) {
    std::vector<double> buf(n + 1);
    hermite_h1d_all(n, x, buf.data());
    return buf[n];
}

double eval_hermite_poly(const MultiIndex& alpha, const Eigen::Vector3d& xi) {
    return hermite_h1d(alpha[0], xi(0)) * hermite_h1d(alpha[1], xi(1)) *
           hermite_h1d(alpha[2], xi(2));
}

double maxwellian(const Eigen::Vector3d& xi) {
    const double c = std::pow(2.0 * std::numbers::pi, -1.5);
    return c * std::exp(-0.5 * xi.squaredNorm());
}

double eval_basis(const MultiIndex& alpha, const Eigen::Vector3d& xi) {
    return eval_hermite_poly(alpha, xi) * maxwellian(xi);
}

Eigen::VectorXd eval_poly_vector(const HermiteIndexSet& set,
                                 const Eigen::Vector3d& xi) {
    const int N = set.N();
    std::vector<double> h1(N + 1), h2(N + 1), h3(N + 1);
    hermite_h1d_all(N, xi(0), h1.data());
    hermite_h1d_all(N, xi(1), h2.data());
    hermite_h1d_all(N, xi(2), h3.data());
    Eigen::VectorXd out(set.dim());
    for (int i = 0; i < set.dim(); ++i) {
        const MultiIndex& a = set.index(i);
        out(i) = h1[a[0]] * h2[a[1]] * h3[a[2]];
    }
    return out;
}

SpectralVector project(const SpectralVector& f, const IndexSetPtr& target) {
    SpectralVector out(target);
    for (int i = 0; i < target->dim(); ++i) {
        const int j = f.set->find(target->index(i));
        if (j < 0)
            throw IncompatibleSets("project: target index missing from source");
        out.coeffs(i) = f.coeffs(j);
    }
    return out;
}

double oscillator_norm(const SpectralVector& f, int ell) {
    if (ell < 0) throw DimensionMismatch("oscillator_norm: ell must be >= 0");
    double acc = 0.0;
    for (int i = 0; i < f.set->dim(); ++i) {
        const double ev = f.set->degree(i) + 1.5;
        const double scaled = f.coeffs(i) * std::pow(ev, ell);
        acc += scaled * scaled;
    }
    return std::sqrt(acc);
}

namespace {

const MultiIndex kZero{0, 0, 0};
const MultiIndex kOne{1, 0, 0};
const MultiIndex kTwo1{2, 0, 0};
const MultiIndex kTwo2{0, 2, 0};
const MultiIndex kTwo3{0, 0, 2};

} // namespace

std::pair<MacroState, SpectralVector> macro_split(const SpectralVector& f) {
    const HermiteIndexSet& set = *f.set;
    const int i0 = set.find(kZero), i1 = set.find(kOne);
    const int i2a = set.find(kTwo1), i2b = set.find(kTwo2), i2c = set.find(kTwo3);
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
    MacroState a;
    a.a0 = f.coeffs(i0);
    a.a1 = f.coeffs(i1);
    a.a2 = (f.coeffs(i2a) + f.coeffs(i2b) + f.coeffs(i2c)) * inv_sqrt3;
    SpectralVector micro = f;
    micro.coeffs(i0) = 0.0;
    micro.coeffs(i1) = 0.0;
    micro.coeffs(i2a) -= a.a2 * inv_sqrt3;
    micro.coeffs(i2b) -= a.a2 * inv_sqrt3;
    micro.coeffs(i2c) -= a.a2 * inv_sqrt3;
    return {a, micro};
}

SpectralVector macro_lift(const MacroState& a, const IndexSetPtr& set) {
    SpectralVector f(set);
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
    f.coeffs(set->find(kZero)) = a.a0;
    f.coeffs(set->find(kOne)) = a.a1;
    f.coeffs(set->find(kTwo1)) = a.a2 * inv_sqrt3;
    f.coeffs(set->find(kTwo2)) = a.a2 * inv_sqrt3;
    f.coeffs(set->find(kTwo3)) = a.a2 * inv_sqrt3;
    return f;
}

ConservedState moments(const SpectralVector& f) {
    return macro_to_conserved(macro_split(f).first);
}

ConservedState macro_to_conserved(const MacroState& a) {
    ConservedState w;
    w.rho = a.a0;
    w.m = a.a1;
    w.E = 1.5 * a.a0 + 0.5 * std::sqrt(6.0) * a.a2;
    return w;
}

MacroState conserved_to_macro(const ConservedState& w) {
    MacroState a;
    a.a0 = w.rho;
    a.a1 = w.m;
    a.a2 = (w.E - 1.5 * w.rho) / (0.5 * std::sqrt(6.0));
    return a;
}

KernelParams kernel_from_power_law(double p) {
    if (!(p > 5.0))
        throw NonPositiveCoefficient("power-law preset needs p > 5 (hard "
                                     "potentials)");
    KernelParams k;
    k.s = 1.0 / (p - 1.0);
    k.gamma = (p - 5.0) / (p - 1.0);
    return k;
}

SpectralVector maxwellian_coeffs(const IndexSetPtr& set, const HydroState& v) {
    if (!v.valid())
        throw NonPhysicalState("maxwellian_coeffs: invalid hydro state");
    const int n = set->N() / 2 + 2;
    const double rt = std::sqrt(v.T);
    SpectralVector out(set);
    for_each_gh3(n, [&](const Eigen::Vector3d& z, double w) {
        const Eigen::Vector3d xi(v.u + rt * z(0), rt * z(1), rt * z(2));
        out.coeffs.noalias() += (w * v.rho) * eval_poly_vector(*set, xi);
    });
    return out;
}

Eigen::MatrixXd macro_basis(const HermiteIndexSet& set) {
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(set.dim(), 3);
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
    U(set.find(kZero), 0) = 1.0;
    U(set.find(kOne), 1) = 1.0;
    U(set.find(kTwo1), 2) = inv_sqrt3;
    U(set.find(kTwo2), 2) = inv_sqrt3;
    U(set.find(kTwo3), 2) = inv_sqrt3;
    return U;
}

Eigen::MatrixXd micro_basis(const HermiteIndexSet& set) {
    const int B = set.dim();
    const Eigen::MatrixXd U = macro_basis(set);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(U);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(B, B);
    Eigen::MatrixXd V = Q.rightCols(B - 3);
    // fix the sign convention so the construction is reproducible
    for (int j = 0; j < V.cols(); ++j) {
        int imax;
        V.col(j).cwiseAbs().maxCoeff(&imax);
        if (V(imax, j) < 0) V.col(j) = -V.col(j);
    }
    return V;
}

Eigen::MatrixXd xi1_matrix(const HermiteIndexSet& set) {
    const int B = set.dim();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(B, B);
    for (int i = 0; i < B; ++i) {
        const MultiIndex& alpha = set.index(i);
        if (alpha[0] > 0) {
            MultiIndex down = alpha;
            --down[0];
            A(set.find(down), i) = std::sqrt(static_cast<double>(alpha[0]));
        }
        MultiIndex up = alpha;
        ++up[0];
        const int j = set.find(up);
        if (j >= 0) A(j, i) = std::sqrt(static_cast<double>(up[0]));
    }
    return A;
}

double hh1_proxy_norm(const SpectralVector& f, const KernelParams& params,
                      int quad_order) {
    if (quad_order < 1)
        throw QuadratureConfigInvalid("hh1_proxy_norm: order must be >= 1");
    const double w_exp = 0.5 * params.gamma + params.s;
    double acc = 0.0;
    for_each_gh3(quad_order, [&](const Eigen::Vector3d& xi, double w) {
        const double g = eval_poly_vector(*f.set, xi).dot(f.coeffs);
        acc += w * std::pow(1.0 + xi.squaredNorm(), w_exp) * g * g;
    });
    return std::sqrt(acc);
}

} // namespace kshk
