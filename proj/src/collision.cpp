// SPDX-License-Identifier: MIT
#include "kshk/collision.hpp"
#include "kshk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

namespace kshk {

QuadratureConfig QuadratureConfig::defaults_for(int N) {
    if (N < 2) throw DegreeTooSmall("quadrature defaults need N >= 2");
    QuadratureConfig q;
    const int d = 3 * N;
    q.c_order = (d + 2) / 2;
    q.r_order = std::max(4, (d / 2 + 2) / 2 + 1);
    q.mu_order = (d + 2) / 2;
    q.phi_order = std::max(12, 2 * ((d + 2) / 2));
    q.theta_levels = 6;
    q.theta_pts = 4;
    return q;
}

QuadratureConfig QuadratureConfig::doubled() const {
    QuadratureConfig q = *this;
    q.c_order *= 2;
    q.r_order *= 2;
    q.mu_order *= 2;
    q.phi_order *= 2;
    q.theta_pts *= 2;
    // theta_levels is kept: the grazing cutoff is part of the discretized
    // kernel, not of the quadrature resolution
    return q;
}

namespace {

void validate_kernel(const KernelParams& p) {
    if (!(p.gamma > 0.0 && p.gamma < 1.0))
        throw std::invalid_argument("kernel: gamma must lie in (0,1)");
    if (!(p.s > 0.0 && p.s < 0.5))
        throw std::invalid_argument("kernel: s must lie in (0,1/2)");
    if (!(p.c_b > 0.0))
        throw std::invalid_argument("kernel: c_b must be positive");
    if (!(p.kappa >= 0.0))
        throw std::invalid_argument("kernel: kappa must be >= 0");
}

void validate_quad(const QuadratureConfig& q) {
    if (q.c_order < 2 || q.r_order < 1 || q.mu_order < 2 || q.phi_order < 4 ||
        q.theta_levels < 1 || q.theta_pts < 1)
        throw QuadratureConfigInvalid("tensor quadrature orders below minimum");
}

// No-allocation evaluator of the polynomial basis factors h_alpha at a point.
struct HEval {
    int N, B;
    const std::vector<MultiIndex>* tri;
    std::vector<double> b1, b2, b3;

    explicit HEval(const HermiteIndexSet& set)
        : N(set.N()), B(set.dim()), tri(&set.indices()),
          b1(N + 1), b2(N + 1), b3(N + 1) {}

    void eval(const double* pt, double* out) {
        hermite_h1d_all(N, pt[0], b1.data());
        hermite_h1d_all(N, pt[1], b2.data());
        hermite_h1d_all(N, pt[2], b3.data());
        for (int i = 0; i < B; ++i) {
            const MultiIndex& a = (*tri)[i];
            out[i] = b1[a[0]] * b2[a[1]] * b3[a[2]];
        }
    }
};

struct AssemblyPlan {
    Rule1D c_rule;        // physicists' GH, weight exp(-x^2)
    Rule1D rad_main;      // Laguerre, alpha = (gamma+1)/2
    Rule1D rad_lift;      // Laguerre, alpha = (3-2s)/2
    Rule1D mu_rule;       // Legendre on [-1,1]
    Rule1D theta_rule;    // graded panels, kernel factor folded in
    int nphi = 0;
    double wphi = 0.0;
    std::vector<double> cphi, sphi;
    std::vector<double> ctheta, stheta;
    double pref_main = 0.0, pref_lift = 0.0;
};

AssemblyPlan make_plan(const KernelParams& p, const QuadratureConfig& q) {
    AssemblyPlan pl;
    pl.c_rule = gauss_hermite_phys(q.c_order);
    pl.rad_main = gauss_laguerre(q.r_order, 0.5 * (p.gamma + 1.0));
    pl.rad_lift = gauss_laguerre(q.r_order, 0.5 * (3.0 - 2.0 * p.s));
    pl.mu_rule = gauss_legendre(q.mu_order, -1.0, 1.0);
    pl.theta_rule = graded_theta_rule(p.s, q.theta_levels, q.theta_pts);
    pl.nphi = q.phi_order;
    pl.wphi = 2.0 * std::numbers::pi / q.phi_order;
    pl.cphi.resize(pl.nphi);
    pl.sphi.resize(pl.nphi);
    for (int j = 0; j < pl.nphi; ++j) {
        const double phi = 2.0 * std::numbers::pi * j / pl.nphi;
        pl.cphi[j] = std::cos(phi);
        pl.sphi[j] = std::sin(phi);
    }
    pl.ctheta.resize(pl.theta_rule.size());
    pl.stheta.resize(pl.theta_rule.size());
    for (int t = 0; t < pl.theta_rule.size(); ++t) {
        pl.ctheta[t] = std::cos(pl.theta_rule.nodes(t));
        pl.stheta[t] = std::sin(pl.theta_rule.nodes(t));
    }
    const double inv8pi3 = std::pow(2.0 * std::numbers::pi, -3.0);
    pl.pref_main = 0.25 * inv8pi3 * std::pow(2.0, p.gamma + 2.0) * p.c_b;
    pl.pref_lift = 0.25 * inv8pi3 * std::pow(2.0, 4.0 - 2.0 * p.s) * p.c_b;
    return pl;
}

enum class Mode { Tensor, Matrix };

// Core kernel: processes the slab of center nodes with first index i0,
// accumulating into the caller's private buffers (length B^3 in tensor
// mode, B^2 in matrix mode).
void assemble_chunk(Mode mode, int i0, const AssemblyPlan& pl,
                    const HermiteIndexSet& set, double* acc_main,
                    double* acc_lift) {
    HEval he(set);
    const int B = he.B;
    const int nc = pl.c_rule.size();
    const int nmu = pl.mu_rule.size();
    const int nth = pl.theta_rule.size();
    std::vector<double> hxi(B), hxs(B), hp(B), hps(B), g0(B), sg0(B);

    for (int i2 = 0; i2 < nc; ++i2)
        for (int i3 = 0; i3 < nc; ++i3) {
            const double c0 = pl.c_rule.nodes(i0);
            const double c1 = pl.c_rule.nodes(i2);
            const double c2 = pl.c_rule.nodes(i3);
            const double wc = pl.c_rule.weights(i0) * pl.c_rule.weights(i2) *
                              pl.c_rule.weights(i3);
            for (int pass = 0; pass < 2; ++pass) {
                const Rule1D& rad = pass ? pl.rad_lift : pl.rad_main;
                const double pref = pass ? pl.pref_lift : pl.pref_main;
                double* acc = pass ? acc_lift : acc_main;
                for (int m = 0; m < rad.size(); ++m) {
                    const double r = 2.0 * std::sqrt(rad.nodes(m));
                    const double half_r = 0.5 * r;
                    const double w_cr = wc * rad.weights(m) * pref;
                    for (int ia = 0; ia < nmu; ++ia) {
                        const double mu = pl.mu_rule.nodes(ia);
                        const double smu = std::sqrt(
                            std::max(0.0, 1.0 - mu * mu));
                        for (int ib = 0; ib < pl.nphi; ++ib) {
                            const double om[3] = {smu * pl.cphi[ib],
                                                  smu * pl.sphi[ib], mu};
                            const double wnode =
                                w_cr * pl.mu_rule.weights(ia) * pl.wphi;
                            // orthonormal frame transverse to om, built from
                            // the least-aligned coordinate axis
                            int ax = 0;
                            if (std::abs(om[1]) < std::abs(om[ax])) ax = 1;
                            if (std::abs(om[2]) < std::abs(om[ax])) ax = 2;
                            double e1[3] = {-om[ax] * om[0], -om[ax] * om[1],
                                            -om[ax] * om[2]};
                            e1[ax] += 1.0;
                            const double n1 = std::sqrt(
                                e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]);
                            e1[0] /= n1; e1[1] /= n1; e1[2] /= n1;
                            const double e2[3] = {
                                om[1] * e1[2] - om[2] * e1[1],
                                om[2] * e1[0] - om[0] * e1[2],
                                om[0] * e1[1] - om[1] * e1[0]};

                            const double xi[3] = {c0 + half_r * om[0],
                                                  c1 + half_r * om[1],
                                                  c2 + half_r * om[2]};
                            const double xis[3] = {c0 - half_r * om[0],
                                                   c1 - half_r * om[1],
                                                   c2 - half_r * om[2]};
                            he.eval(xi, hxi.data());
                            he.eval(xis, hxs.data());
                            std::fill(sg0.begin(), sg0.end(), 0.0);

                            for (int t = 0; t < nth; ++t) {
                                const double ct = pl.ctheta[t];
                                const double st = pl.stheta[t];
                                const double wt = pl.theta_rule.weights(t);
                                for (int j = 0; j < pl.nphi; ++j) {
                                    const double te1 = st * pl.cphi[j];
                                    const double te2 = st * pl.sphi[j];
                                    const double sg[3] = {
                                        ct * om[0] + te1 * e1[0] + te2 * e2[0],
                                        ct * om[1] + te1 * e1[1] + te2 * e2[1],
                                        ct * om[2] + te1 * e1[2] + te2 * e2[2]};
                                    const double xp[3] = {
                                        c0 + half_r * sg[0],
                                        c1 + half_r * sg[1],
                                        c2 + half_r * sg[2]};
                                    const double xps[3] = {
                                        c0 - half_r * sg[0],
                                        c1 - half_r * sg[1],
                                        c2 - half_r * sg[2]};
                                    he.eval(xp, hp.data());
                                    he.eval(xps, hps.data());
                                    const double wsg = wt * pl.wphi;
                                    for (int g = 0; g < B; ++g) {
                                        g0[g] = hp[g] + hps[g] - hxi[g] - hxs[g];
                                        sg0[g] += wsg * g0[g];
                                    }
                                    const double wfull = wnode * wsg;
                                    if (mode == Mode::Tensor) {
                                        for (int a = 0; a < B; ++a) {
                                            const double pa = wfull * hps[a];
                                            for (int b = 0; b < B; ++b) {
                                                const double pab = pa * hp[b];
                                                double* row =
                                                    acc + (a * B + b) * B;
                                                for (int g = 0; g < B; ++g)
                                                    row[g] -= pab * g0[g];
                                            }
                                        }
                                    } else {
                                        for (int b = 0; b < B; ++b) {
                                            const double pb = wfull * g0[b];
                                            double* row = acc + b * B;
                                            for (int g = 0; g < B; ++g)
                                                row[g] -= pb * g0[g];
                                        }
                                    }
                                }
                            }
                            if (mode == Mode::Tensor) {
                                for (int a = 0; a < B; ++a) {
                                    const double pa = wnode * hxs[a];
                                    for (int b = 0; b < B; ++b) {
                                        const double pab = pa * hxi[b];
                                        double* row = acc + (a * B + b) * B;
                                        for (int g = 0; g < B; ++g)
                                            row[g] += pab * sg0[g];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
}

// Runs the chunked assembly and reduces the partials in fixed order.
std::pair<std::vector<double>, std::vector<double>>
run_assembly(Mode mode, const HermiteIndexSet& set, const KernelParams& params,
             const QuadratureConfig& quad, int threads) {
    validate_kernel(params);
    validate_quad(quad);
    if (threads < 1) threads = 1;
    const AssemblyPlan pl = make_plan(params, quad);
    const int B = set.dim();
    const std::size_t sz = mode == Mode::Tensor
                               ? static_cast<std::size_t>(B) * B * B
                               : static_cast<std::size_t>(B) * B;
    const int nchunks = pl.c_rule.size();
    std::vector<std::vector<double>> pm(nchunks), plift(nchunks);
    for (int i = 0; i < nchunks; ++i) {
        pm[i].assign(sz, 0.0);
        plift[i].assign(sz, 0.0);
    }
    auto work = [&](int t0) {
        for (int i = t0; i < nchunks; i += threads)
            assemble_chunk(mode, i, pl, set, pm[i].data(), plift[i].data());
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    std::vector<double> main_acc(sz, 0.0), lift_acc(sz, 0.0);
    for (int i = 0; i < nchunks; ++i) {
        for (std::size_t k = 0; k < sz; ++k) {
            main_acc[k] += pm[i][k];
            lift_acc[k] += plift[i][k];
        }
    }
    return {std::move(main_acc), std::move(lift_acc)};
}

std::vector<Eigen::MatrixXd> to_symmetrized(const std::vector<double>& flat,
                                            int B) {
    std::vector<Eigen::MatrixXd> out(B, Eigen::MatrixXd::Zero(B, B));
    for (int g = 0; g < B; ++g)
        for (int a = 0; a < B; ++a)
            for (int b = 0; b < B; ++b) {
                const double tab = flat[(static_cast<std::size_t>(a) * B + b) * B + g];
                const double tba = flat[(static_cast<std::size_t>(b) * B + a) * B + g];
                out[g](a, b) = 0.5 * (tab + tba);
            }
    return out;
}

} // namespace

CollisionTensor assemble_tensor(const IndexSetPtr& set,
                                const KernelParams& params,
                                const QuadratureConfig& quad, int threads) {
    auto [main_flat, lift_flat] =
        run_assembly(Mode::Tensor, *set, params, quad, threads);
    CollisionTensor t;
    t.set = set;
    t.params = params;
    t.quad = quad;
    t.main = to_symmetrized(main_flat, set->dim());
    t.lift = to_symmetrized(lift_flat, set->dim());
    return t;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd>
assemble_linearized_direct(const IndexSetPtr& set, const KernelParams& params,
                           const QuadratureConfig& quad, int threads) {
    auto [main_flat, lift_flat] =
        run_assembly(Mode::Matrix, *set, params, quad, threads);
    const int B = set->dim();
    Eigen::MatrixXd L0(B, B), L1(B, B);
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < B; ++g) {
            L0(g, b) = main_flat[static_cast<std::size_t>(b) * B + g];
            L1(g, b) = lift_flat[static_cast<std::size_t>(b) * B + g];
        }
    return {std::move(L0), std::move(L1)};
}

SpectralVector apply_Q(const CollisionTensor& tensor, double kappa,
                       const SpectralVector& g, const SpectralVector& f) {
    const int B = tensor.dim();
    if (g.coeffs.size() != B || f.coeffs.size() != B)
        throw DimensionMismatch("apply_Q: coefficient size mismatch");
    SpectralVector out(tensor.set);
    for (int c = 0; c < B; ++c) {
        double v = g.coeffs.dot(tensor.main[c] * f.coeffs);
        if (kappa != 0.0)
            v += kappa * g.coeffs.dot(tensor.lift[c] * f.coeffs);
        out.coeffs(c) = v;
    }
    return out;
}

Eigen::MatrixXd linearized_matrix(const CollisionTensor& tensor, double kappa,
                                  const SpectralVector& background) {
    const int B = tensor.dim();
    if (background.coeffs.size() != B)
        throw DimensionMismatch("linearized_matrix: background size mismatch");
    Eigen::MatrixXd L(B, B);
    for (int c = 0; c < B; ++c) {
        Eigen::VectorXd row = tensor.main[c] * background.coeffs;
        if (kappa != 0.0)
            row += kappa * (tensor.lift[c] * background.coeffs);
        // the tensor is symmetric in its two inputs, so Q(g,f)+Q(f,g)
        // contracts to twice the one-sided product
        L.row(c) = 2.0 * row.transpose();
    }
    return L;
}

DiscretizedMaxwellian discretized_maxwellian(const CollisionTensor& tensor,
                                             double kappa,
                                             const MacroState& macro) {
    const IndexSetPtr& set = tensor.set;
    const int B = set->dim();
    const double dist = std::sqrt((macro.a0 - 1.0) * (macro.a0 - 1.0) +
                                  macro.a1 * macro.a1 + macro.a2 * macro.a2);
    if (dist > 0.2)
        throw std::invalid_argument("discretized_maxwellian: macro state "
                                    "outside the small-data regime");
    const Eigen::MatrixXd U = macro_basis(*set);
    const Eigen::MatrixXd V = micro_basis(*set);
    const Eigen::Vector3d target(macro.a0, macro.a1, macro.a2);

    SpectralVector f = maxwellian_coeffs(
        set, from_conserved(macro_to_conserved(macro)));

    auto residual = [&](const SpectralVector& x) -> Eigen::VectorXd {
        Eigen::VectorXd F(B);
        F.head<3>() = U.transpose() * x.coeffs - target;
        F.tail(B - 3) =
            V.transpose() * apply_Q(tensor, kappa, x, x).coeffs;
        return F;
    };

    std::vector<double> history;
    Eigen::VectorXd F = residual(f);
    history.push_back(F.norm());
    int iter = 0;
    const double tol = 1e-11;
    while (history.back() > tol) {
        if (iter >= 30)
            throw NewtonDivergence(
                "discretized_maxwellian: no convergence in 30 iterations",
                history);
        Eigen::MatrixXd J(B, B);
        J.topRows(3) = U.transpose();
        J.bottomRows(B - 3) =
            V.transpose() * linearized_matrix(tensor, kappa, f);
        const Eigen::VectorXd step = J.fullPivLu().solve(-F);
        f.coeffs += step;
        F = residual(f);
        history.push_back(F.norm());
        ++iter;
        if (history.back() > 10.0 * history.front() + 1.0)
            throw NewtonDivergence("discretized_maxwellian: diverging",
                                   history);
    }
    DiscretizedMaxwellian out;
    out.coeffs = f;
    out.macro = macro;
    out.newton_residual = history.back();
    out.iterations = iter;
    return out;
}

GapReport spectral_gap(const Eigen::MatrixXd& L, const IndexSetPtr& set,
                       const KernelParams& params, double kernel_tol) {
    const int B = set->dim();
    if (L.rows() != B || L.cols() != B)
        throw DimensionMismatch("spectral_gap: matrix does not match basis");
    const Eigen::MatrixXd S = 0.5 * (L + L.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success)
        throw EigSolverFailure("spectral_gap: symmetric eigensolve failed");

    GapReport rep;
    const Eigen::MatrixXd U = macro_basis(*set);
    for (int i = 0; i < B; ++i) {
        if (std::abs(es.eigenvalues()(i)) <= kernel_tol) {
            ++rep.kernel_dim;
            const Eigen::VectorXd v = es.eigenvectors().col(i);
            const double off = (v - U * (U.transpose() * v)).norm();
            rep.kernel_angles.push_back(
                std::asin(std::min(1.0, std::max(0.0, off))));
        }
    }

    const Eigen::MatrixXd V = micro_basis(*set);
    const Eigen::MatrixXd Sm = V.transpose() * S * V;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esm(Sm);
    if (esm.info() != Eigen::Success)
        throw EigSolverFailure("spectral_gap: micro-block eigensolve failed");
    rep.delta0 = -esm.eigenvalues().maxCoeff();

    // proxy metric: same Rayleigh quotient, but against the weighted Gram
    // matrix of the kappa-dependent dissipation norm, whose weight combines
    // the base factor with kappa times the lift factor
    const double w_main = 0.5 * params.gamma + params.s;
    const double w_lift = 1.0 - params.s;
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(B, B);
    for_each_gh3(32, [&](const Eigen::Vector3d& xi, double w) {
        const Eigen::VectorXd h = eval_poly_vector(*set, xi);
        const double q = 1.0 + xi.squaredNorm();
        const double fac = std::pow(q, w_main) +
                           params.kappa * std::pow(q, w_lift);
        W.noalias() += (w * fac) * h * h.transpose();
    });
    const Eigen::MatrixXd Wm = V.transpose() * W * V;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(-Sm, Wm);
    if (ges.info() != Eigen::Success)
        throw EigSolverFailure("spectral_gap: generalized eigensolve failed");
    rep.delta0_proxy = ges.eigenvalues().minCoeff();
    return rep;
}

namespace {

std::uint64_t fnv1a(const unsigned char* data, std::size_t n,
                    std::uint64_t h = 1469598103934665603ull) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

constexpr std::uint32_t kFormatVersion = 1;

void write_bytes(std::ofstream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw IOError("tensor cache: truncated file");
}

} // namespace

void save_tensor(const CollisionTensor& tensor, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IOError("tensor cache: cannot open for writing: " + path);
    const int B = tensor.dim();
    os.write("KSHK", 4);
    write_bytes(os, &kFormatVersion, 4);
    const std::int32_t n = tensor.set->N(), b = B;
    write_bytes(os, &n, 4);
    write_bytes(os, &b, 4);
    const double par[4] = {tensor.params.gamma, tensor.params.s,
                           tensor.params.c_b, tensor.params.kappa};
    write_bytes(os, par, sizeof(par));
    const std::int32_t qs[6] = {tensor.quad.c_order, tensor.quad.r_order,
                                tensor.quad.mu_order, tensor.quad.phi_order,
                                tensor.quad.theta_levels, tensor.quad.theta_pts};
    write_bytes(os, qs, sizeof(qs));
    std::vector<double> payload;
    payload.reserve(2 * static_cast<std::size_t>(B) * B * B);
    for (const auto& part : {&tensor.main, &tensor.lift})
        for (const auto& m : *part)
            payload.insert(payload.end(), m.data(), m.data() + B * B);
    write_bytes(os, payload.data(), payload.size() * sizeof(double));
    const std::uint64_t sum = fnv1a(
        reinterpret_cast<const unsigned char*>(payload.data()),
        payload.size() * sizeof(double));
    write_bytes(os, &sum, 8);
    if (!os) throw IOError("tensor cache: write failed: " + path);
}

CollisionTensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IOError("tensor cache: cannot open: " + path);
    char magic[4];
    read_bytes(is, magic, 4);
    if (std::memcmp(magic, "KSHK", 4) != 0)
        throw ValidationError("tensor cache: bad magic");
    std::uint32_t version;
    read_bytes(is, &version, 4);
    if (version != kFormatVersion)
        throw ValidationError("tensor cache: unsupported format version");
    std::int32_t n, b;
    read_bytes(is, &n, 4);
    read_bytes(is, &b, 4);
    double par[4];
    read_bytes(is, par, sizeof(par));
    std::int32_t qs[6];
    read_bytes(is, qs, sizeof(qs));

    CollisionTensor t;
    t.set = build_index_set(n);
    if (t.set->dim() != b)
        throw ValidationError("tensor cache: dimension mismatch");
    t.params = KernelParams{par[1], par[0], par[2], par[3]};
    t.quad = QuadratureConfig{qs[0], qs[1], qs[2], qs[3], qs[4], qs[5]};

    const std::size_t half = static_cast<std::size_t>(b) * b * b;
    std::vector<double> payload(2 * half);
    read_bytes(is, payload.data(), payload.size() * sizeof(double));
    std::uint64_t sum;
    read_bytes(is, &sum, 8);
    if (sum != fnv1a(reinterpret_cast<const unsigned char*>(payload.data()),
                     payload.size() * sizeof(double)))
        throw ValidationError("tensor cache: checksum mismatch");
    t.main.assign(b, Eigen::MatrixXd(b, b));
    t.lift.assign(b, Eigen::MatrixXd(b, b));
    for (int g = 0; g < b; ++g) {
        std::memcpy(t.main[g].data(), payload.data() + g * b * b,
                    sizeof(double) * b * b);
        std::memcpy(t.lift[g].data(), payload.data() + half + g * b * b,
                    sizeof(double) * b * b);
    }
    return t;
}

std::string tensor_cache_name(int N, const KernelParams& params,
                              const QuadratureConfig& quad) {
    std::ostringstream os;
    os << "tensor_N" << N << "_g" << params.gamma << "_s" << params.s
       << "_cb" << params.c_b << "_q" << quad.c_order << '-' << quad.r_order
       << '-' << quad.mu_order << '-' << quad.phi_order << '-'
       << quad.theta_levels << '-' << quad.theta_pts << ".bin";
    return os.str();
}

CollisionTensor load_or_assemble(const IndexSetPtr& set,
                                 const KernelParams& params,
                                 const QuadratureConfig& quad,
                                 const std::string& path, int threads) {
    if (std::filesystem::exists(path)) {
        try {
            CollisionTensor t = load_tensor(path);
            if (t.set->N() == set->N() && t.quad == quad &&
                t.params.gamma == params.gamma && t.params.s == params.s &&
                t.params.c_b == params.c_b) {
                t.set = set;
                t.params = params;
                return t;
            }
        } catch (const Error&) {
            // fall through to fresh assembly
        }
    }
    CollisionTensor t = assemble_tensor(set, params, quad, threads);
    try {
        std::filesystem::path p(path);
        if (p.has_parent_path())
            std::filesystem::create_directories(p.parent_path());
        save_tensor(t, path);
    } catch (...) {
        // cache write is best effort
    }
    return t;
}

} // namespace kshk
