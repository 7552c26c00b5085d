// SPDX-License-Identifier: MIT
#include "kshk/linear_bvp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include "kshk/errors.hpp"
#include "kshk/fluid.hpp"

namespace kshk {

namespace {

using cdouble = std::complex<double>;

// w = C a between the spectral macro coordinates and (rho, m, E)
Eigen::Matrix3d macro_coordinate_map() {
    Eigen::Matrix3d C;
    C << 1.0, 0.0, 0.0,
         0.0, 1.0, 0.0,
         1.5, 0.0, 0.5 * std::sqrt(6.0);
    return C;
}

int center_node(const Eigen::VectorXd& grid) {
    int c = 0;
    for (int i = 1; i < grid.size(); ++i)
        if (std::abs(grid(i)) < std::abs(grid(c)))
            c = i;
    return c;
}

int interval_of(const Eigen::VectorXd& grid, double x) {
    const int K = static_cast<int>(grid.size());
    const double* b = grid.data();
    int k = static_cast<int>(std::upper_bound(b, b + K, x) - b) - 1;
    return std::clamp(k, 0, K - 2);
}

// Finite-difference weights on an arbitrary stencil (Fornberg recursion);
// column m holds the weights of the m-th derivative at x0.
Eigen::MatrixXd fd_weights(double x0, const Eigen::VectorXd& xs, int order) {
    const int n = static_cast<int>(xs.size());
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, order + 1);
    double c1 = 1.0;
    double c4 = xs(0) - x0;
    c(0, 0) = 1.0;
    for (int i = 1; i < n; ++i) {
        const int mn = std::min(i, order);
        double c2 = 1.0;
        double c5 = c4;
        c4 = xs(i) - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = xs(i) - xs(j);
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    c(i, k) = c1 * (k * c(i - 1, k - 1) - c5 * c(i - 1, k)) / c2;
                c(i, 0) = -c1 * c5 * c(i - 1, 0) / c2;
            }
            for (int k = mn; k >= 1; --k)
                c(j, k) = (c4 * c(j, k) - k * c(j, k - 1)) / c3;
            c(j, 0) = c4 * c(j, 0) / c3;
        }
        c1 = c2;
    }
    return c;
}

// 4-point interpolation stencil and weights for x on grid
void interp4(const Eigen::VectorXd& grid, double x, int& st, Eigen::Vector4d& w) {
    const int K = static_cast<int>(grid.size());
    st = std::clamp(interval_of(grid, x) - 1, 0, K - 4);
    w = fd_weights(x, grid.segment(st, 4), 0).col(0);
}

// int_0^h e^{mu t} t^p dt for p = 0..pmax
Eigen::VectorXcd exp_moments(cdouble mu, double h, int pmax) {
    Eigen::VectorXcd M(pmax + 1);
    if (std::abs(mu) * h < 0.5) {
        for (int p = 0; p <= pmax; ++p) {
            cdouble term = std::pow(h, p + 1) / double(p + 1);
            cdouble sum = term;
            for (int m = 0; m < 48; ++m) {
                term *= mu * h * double(p + m + 1) / (double(m + 1) * double(p + m + 2));
                sum += term;
                if (std::abs(term) <= 1e-18 * std::abs(sum))
                    break;
            }
            M(p) = sum;
        }
    } else {
        const cdouble e = std::exp(mu * h);
        M(0) = (e - 1.0) / mu;
        double hp = 1.0;
        for (int p = 1; p <= pmax; ++p) {
            hp *= h;
            M(p) = (e * hp - double(p) * M(p - 1)) / mu;
        }
    }
    return M;
}

// int_0^h e^{nu (h-t)} t^p dt; bounded for Re nu <= 0
Eigen::VectorXcd conv_moments(cdouble nu, double h, int pmax) {
    Eigen::VectorXcd J(pmax + 1);
    if (std::abs(nu) * h < 0.5) {
        for (int p = 0; p <= pmax; ++p) {
            cdouble term = std::pow(h, p + 1) / double(p + 1);
            cdouble sum = term;
            for (int m = 0; m < 48; ++m) {
                term *= nu * h / double(p + m + 2);
                sum += term;
                if (std::abs(term) <= 1e-18 * std::abs(sum))
                    break;
            }
            J(p) = sum;
        }
    } else {
        J(0) = (std::exp(nu * h) - 1.0) / nu;
        double hp = 1.0;
        for (int p = 1; p <= pmax; ++p) {
            hp *= h;
            J(p) = (double(p) * J(p - 1) - hp) / nu;
        }
    }
    return J;
}

struct CellGeometry {
    double h = 0.0;
    int stencil = 0;
    Eigen::Matrix4d vtinv;   // inverse transpose of the local Vandermonde
};

std::vector<CellGeometry> cell_geometry(const Eigen::VectorXd& grid) {
    const int K = static_cast<int>(grid.size());
    std::vector<CellGeometry> cells(K - 1);
    for (int k = 0; k + 1 < K; ++k) {
        CellGeometry& c = cells[k];
        c.h = grid(k + 1) - grid(k);
        c.stencil = std::clamp(k - 1, 0, K - 4);
        Eigen::Matrix4d V;
        for (int m = 0; m < 4; ++m) {
            const double t = (grid(c.stencil + m) - grid(k)) / c.h;
            double tp = 1.0;
            for (int p = 0; p < 4; ++p) {
                V(m, p) = tp;
                tp *= t;
            }
        }
        c.vtinv = V.inverse().transpose();
    }
    return cells;
}

// Product-integration data of one scalar mode y' = nu y + g:
// down cells target the right node of each interval, up cells the left one.
struct ModeKernel {
    cdouble nu;
    bool down = false;
    Eigen::VectorXcd step;
    std::vector<Eigen::Vector4cd> wts;
};

ModeKernel make_kernel(cdouble nu, bool down, const std::vector<CellGeometry>& cells) {
    const int m = static_cast<int>(cells.size());
    ModeKernel kn;
    kn.nu = nu;
    kn.down = down;
    kn.step.resize(m);
    kn.wts.resize(m);
    for (int k = 0; k < m; ++k) {
        const double h = cells[k].h;
        const Eigen::VectorXcd mom =
            down ? conv_moments(nu, h, 3) : exp_moments(-nu, h, 3);
        Eigen::Vector4cd q;
        double hp = 1.0;
        for (int p = 0; p < 4; ++p) {
            q(p) = mom(p) / hp;
            hp *= h;
        }
        kn.step(k) = down ? std::exp(nu * h) : std::exp(-nu * h);
        kn.wts[k] = cells[k].vtinv.cast<cdouble>() * q;
    }
    return kn;
}

// Particular solution selected by the splitting: down modes accumulate from
// the first node (zero there), up modes from the last (zero there, sign
// flipped so the result solves y' = nu y + g).
void stream(const ModeKernel& kn, const std::vector<CellGeometry>& cells,
            const Eigen::VectorXcd& g, Eigen::VectorXcd& out) {
    const int K = static_cast<int>(g.size());
    out.resize(K);
    cdouble acc = 0.0;
    if (kn.down) {
        out(0) = 0.0;
        for (int k = 0; k + 1 < K; ++k) {
            cdouble cell = 0.0;
            for (int m = 0; m < 4; ++m)
                cell += kn.wts[k](m) * g(cells[k].stencil + m);
            acc = kn.step(k) * acc + cell;
            out(k + 1) = acc;
        }
    } else {
        out(K - 1) = 0.0;
        for (int k = K - 2; k >= 0; --k) {
            cdouble cell = 0.0;
            for (int m = 0; m < 4; ++m)
                cell += kn.wts[k](m) * g(cells[k].stencil + m);
            acc = kn.step(k) * acc + cell;
            out(k) = -acc;
        }
    }
}

struct FixedPointCore {
    int n = 0;
    int K = 0;
    std::vector<CellGeometry> cells;
    std::vector<Eigen::MatrixXcd> Dtilde;
    std::vector<ModeKernel> kern;   // mode (i, j) at index i * n + j
    std::vector<int> down_modes, up_modes;
    double tol = 1e-12;
};

void forcing(const FixedPointCore& c, const std::vector<Eigen::MatrixXcd>& S,
             int m0, std::vector<Eigen::MatrixXcd>& G) {
    for (int k = 0; k < c.K; ++k) {
        if (k < m0) {
            G[k].setZero();
            continue;
        }
        G[k] = c.Dtilde[k];
        G[k].noalias() += c.Dtilde[k] * S[k];
    }
}

bool picard(const FixedPointCore& c, std::vector<Eigen::MatrixXcd>& S, int m0,
            int maxit, int& iters) {
    const int n = c.n, K = c.K;
    std::vector<Eigen::MatrixXcd> G(K, Eigen::MatrixXcd(n, n));
    std::vector<Eigen::MatrixXcd> Snew(K, Eigen::MatrixXcd(n, n));
    Eigen::VectorXcd g(K), s(K);
    double prev = std::numeric_limits<double>::infinity();
    int grow = 0;
    for (int it = 0; it < maxit; ++it) {
        forcing(c, S, m0, G);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < K; ++k)
                    g(k) = G[k](i, j);
                stream(c.kern[i * n + j], c.cells, g, s);
                for (int k = 0; k < K; ++k)
                    Snew[k](i, j) = s(k);
            }
        double change = 0.0, snorm = 0.0;
        for (int k = 0; k < K; ++k) {
            change = std::max(change, (Snew[k] - S[k]).cwiseAbs().maxCoeff());
            snorm = std::max(snorm, Snew[k].cwiseAbs().maxCoeff());
        }
        S.swap(Snew);
        ++iters;
        if (snorm > 1e6)
            return false;
        if (change <= c.tol * std::max(1.0, snorm))
            return true;
        if (change > prev) {
            if (++grow >= 3)
                return false;
        } else {
            grow = 0;
        }
        prev = change;
    }
    return false;
}

// Relaxed symmetric sweeps, tail first: the backward pass recomputes the
// forcing at each node right after updating it, so each up mode is solved
// exactly against the trailing data within one sweep.
bool gauss_seidel(const FixedPointCore& c, std::vector<Eigen::MatrixXcd>& S,
                  int maxit, double omega, int& iters) {
    const int n = c.n, K = c.K;
    std::vector<Eigen::MatrixXcd> G(K, Eigen::MatrixXcd(n, n));
    std::vector<Eigen::MatrixXcd> Sref(K);
    Eigen::VectorXcd acc(n * n);
    double prev = std::numeric_limits<double>::infinity();
    int grow = 0;
    auto refresh = [&](int k) {
        G[k] = c.Dtilde[k];
        G[k].noalias() += c.Dtilde[k] * S[k];
    };
    for (int k = 0; k < K; ++k)
        refresh(k);
    for (int it = 0; it < maxit; ++it) {
        Sref = S;
        acc.setZero();
        for (int k = K - 1; k >= 0; --k) {
            for (int q : c.up_modes) {
                cdouble val = 0.0;
                if (k < K - 1) {
                    const ModeKernel& kn = c.kern[q];
                    cdouble cell = 0.0;
                    for (int m = 0; m < 4; ++m)
                        cell += kn.wts[k](m) * G[c.cells[k].stencil + m](q / n, q % n);
                    acc(q) = kn.step(k) * acc(q) + cell;
                    val = -acc(q);
                }
                S[k](q / n, q % n) = (1.0 - omega) * S[k](q / n, q % n) + omega * val;
            }
            refresh(k);
        }
        acc.setZero();
        for (int k = 0; k < K; ++k) {
            for (int q : c.down_modes) {
                cdouble val = 0.0;
                if (k > 0) {
                    const ModeKernel& kn = c.kern[q];
                    cdouble cell = 0.0;
                    for (int m = 0; m < 4; ++m)
                        cell += kn.wts[k - 1](m) * G[c.cells[k - 1].stencil + m](q / n, q % n);
                    acc(q) = kn.step(k - 1) * acc(q) + cell;
                    val = acc(q);
                }
                S[k](q / n, q % n) = (1.0 - omega) * S[k](q / n, q % n) + omega * val;
            }
            refresh(k);
        }
        double change = 0.0, snorm = 0.0;
        for (int k = 0; k < K; ++k) {
            change = std::max(change, (S[k] - Sref[k]).cwiseAbs().maxCoeff());
            snorm = std::max(snorm, S[k].cwiseAbs().maxCoeff());
        }
        ++iters;
        if (snorm > 1e6)
            return false;
        if (change <= c.tol * std::max(1.0, snorm))
            return true;
        if (change > prev) {
            if (++grow >= 5)
                return false;
        } else {
            grow = 0;
        }
        prev = change;
    }
    return false;
}

// Spectral projector onto the invariant subspace with sign(Re lambda) as
// requested, by reordering the complex Schur form and solving the small
// Sylvester equation for the block coupling.
Eigen::MatrixXd spectral_projector(const Eigen::MatrixXd& A, bool unstable, int& k_out) {
    const int n = static_cast<int>(A.rows());
    Eigen::ComplexSchur<Eigen::MatrixXcd> schur(A.cast<cdouble>());
    if (schur.info() != Eigen::Success)
        throw EigSolverFailure("complex Schur decomposition failed");
    Eigen::MatrixXcd T = schur.matrixT();
    Eigen::MatrixXcd Q = schur.matrixU();
    auto sel = [&](int i) {
        const double re = T(i, i).real();
        return unstable ? re > 0.0 : re < 0.0;
    };
    int k = 0;
    for (int i = 0; i < n; ++i)
        if (sel(i))
            ++k;
    for (int target = 0; target < k; ++target) {
        int j = target;
        while (j < n && !sel(j))
            ++j;
        for (; j > target; --j) {
            const cdouble a = T(j - 1, j - 1);
            const cdouble b = T(j - 1, j);
            const cdouble dgl = T(j, j);
            cdouble v0 = b, v1 = dgl - a;
            const double nv = std::sqrt(std::norm(v0) + std::norm(v1));
            Eigen::Matrix2cd Gm;
            if (nv < 1e-300) {
                Gm << 0.0, 1.0, 1.0, 0.0;
            } else {
                v0 /= nv;
                v1 /= nv;
                Gm << v0, -std::conj(v1), v1, std::conj(v0);
            }
            T.block(j - 1, j - 1, 2, n - j + 1) =
                Gm.adjoint() * T.block(j - 1, j - 1, 2, n - j + 1);
            T.block(0, j - 1, j + 1, 2) = T.block(0, j - 1, j + 1, 2) * Gm;
            Q.middleCols(j - 1, 2) = Q.middleCols(j - 1, 2) * Gm;
            T(j, j - 1) = 0.0;
        }
    }
    Eigen::MatrixXcd R(k, n - k);
    if (k > 0 && k < n) {
        const Eigen::MatrixXcd T11 = T.topLeftCorner(k, k);
        const Eigen::MatrixXcd T12 = T.topRightCorner(k, n - k);
        const Eigen::MatrixXcd T22 = T.bottomRightCorner(n - k, n - k);
        const Eigen::MatrixXcd Ik = Eigen::MatrixXcd::Identity(k, k);
        for (int j = 0; j < n - k; ++j) {
            Eigen::VectorXcd rhs = T12.col(j);
            for (int i = 0; i < j; ++i)
                rhs += R.col(i) * T22(i, j);
            R.col(j) = (T11 - T22(j, j) * Ik).partialPivLu().solve(rhs);
        }
    }
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(n, n);
    M.topLeftCorner(k, k).setIdentity();
    if (k > 0 && k < n)
        M.topRightCorner(k, n - k) = R;
    Eigen::MatrixXd P = (Q * M * Q.adjoint()).real();
    const double pscale = std::max(1.0, P.norm() * P.norm());
    const double ascale = std::max(1.0, A.norm()) * std::max(1.0, P.norm());
    if ((P * P - P).norm() > 1e-8 * pscale ||
        (P * A - A * P).norm() > 1e-8 * ascale)
        throw ValidationError("spectral projector failed idempotence or commutation check");
    k_out = k;
    return P;
}

double trapezoid(const Eigen::VectorXd& vals, const Eigen::VectorXd& grid) {
    double s = 0.0;
    for (int k = 0; k + 1 < grid.size(); ++k)
        s += 0.5 * (vals(k) + vals(k + 1)) * (grid(k + 1) - grid(k));
    return s;
}

double collocation_residual(const FirstOrderSystem& sys,
                            const std::vector<Eigen::VectorXd>& F) {
    const int K = static_cast<int>(sys.grid.size());
    const int n = sys.dim();
    double sup = 0.0;
    for (int k = 0; k + 1 < K; ++k) {
        const int st = std::clamp(k - 1, 0, K - 4);
        const double xm = 0.5 * (sys.grid(k) + sys.grid(k + 1));
        const Eigen::MatrixXd W = fd_weights(xm, sys.grid.segment(st, 4), 1);
        Eigen::MatrixXd Amid = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd Gmid = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd Fmid = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd dF = Eigen::VectorXd::Zero(n);
        for (int m = 0; m < 4; ++m) {
            Amid += W(m, 0) * sys.A[st + m];
            Gmid += W(m, 0) * sys.G[st + m];
            Fmid += W(m, 0) * F[st + m];
            dF += W(m, 1) * F[st + m];
        }
        sup = std::max(sup, (-dF + Amid * Fmid - Gmid).lpNorm<Eigen::Infinity>());
    }
    return sup;
}

// Mirrored half-line problem: ascending y with y = 0 at the matching node,
// the left side flipped so both run toward their limit matrix.
struct HalfProblem {
    Eigen::VectorXd y;
    std::vector<Eigen::MatrixXd> A;
    Eigen::MatrixXd A_lim;
};

HalfProblem half_problem(const FirstOrderSystem& sys, HalfLine side, int mid) {
    const int K = static_cast<int>(sys.grid.size());
    const int Kh = (side == HalfLine::left) ? mid + 1 : K - mid;
    if (Kh < 8)
        throw GridTooShort("half-line needs at least 8 nodes");
    HalfProblem hp;
    hp.y.resize(Kh);
    hp.A.resize(Kh);
    if (side == HalfLine::right) {
        for (int j = 0; j < Kh; ++j) {
            hp.y(j) = sys.grid(mid + j) - sys.grid(mid);
            hp.A[j] = sys.A[mid + j];
        }
        hp.A_lim = sys.A_plus;
    } else {
        for (int j = 0; j < Kh; ++j) {
            hp.y(j) = sys.grid(mid) - sys.grid(mid - j);
            hp.A[j] = -sys.A[mid - j];
        }
        hp.A_lim = -sys.A_minus;
    }
    return hp;
}

// Union of the base half-grid with a stretched transient mesh near y = 0;
// spacing grows like exp(mu y / 7) from beta / mu until it meets the base
// spacing, which keeps the node count near flat in mu.
Eigen::VectorXd refine_grid(const Eigen::VectorXd& base, double mu,
                            std::vector<int>& base_index) {
    std::vector<double> extra;
    if (mu > 1e-8) {
        const double beta = 0.08;
        double x = 0.0;
        for (int it = 0; it < 4000; ++it) {
            const double ex = mu * x / 7.0;
            if (ex > 40.0)
                break;
            const double step = beta / mu * std::exp(ex);
            const int iv = interval_of(base, x);
            if (step >= base(iv + 1) - base(iv))
                break;
            x += step;
            if (x >= base(base.size() - 1))
                break;
            const int jv = interval_of(base, x);
            if (std::min(x - base(jv), base(jv + 1) - x) < 0.2 * step)
                continue;
            extra.push_back(x);
        }
    }
    const int nb = static_cast<int>(base.size());
    const int ne = static_cast<int>(extra.size());
    Eigen::VectorXd out(nb + ne);
    base_index.assign(nb, -1);
    int ib = 0, ie = 0, pos = 0;
    while (ib < nb || ie < ne) {
        const bool take_base = (ie >= ne) || (ib < nb && base(ib) <= extra[ie]);
        if (take_base) {
            base_index[ib] = pos;
            out(pos++) = base(ib++);
        } else {
            out(pos++) = extra[ie++];
        }
    }
    return out.head(pos).eval();
}

struct DecaySample {
    double t = 0.0;
    double n = 0.0;
};

double fit_decay(std::vector<DecaySample>& pts) {
    const int m = static_cast<int>(pts.size());
    double st = 0.0, sl = 0.0, stt = 0.0, stl = 0.0;
    for (const DecaySample& p : pts) {
        const double l = std::log(p.n);
        st += p.t;
        sl += l;
        stt += p.t * p.t;
        stl += p.t * l;
    }
    const double denom = m * stt - st * st;
    if (std::abs(denom) < 1e-30)
        throw ValidationError("degenerate decay fit");
    return -(m * stl - st * sl) / denom;
}

} // namespace

MacroODEPack macro_ode_matrices(const HydroState& v, const TransportModel& model,
                                double speed) {
    if (!v.valid())
        throw NonPhysicalState("macro_ode_matrices: invalid background state");
    const double D = speed - v.u;
    if (std::abs(D) <= 1e-8)
        throw SonicDegeneracy("wave speed coincides with the background velocity");
    const double mu = model.mu(v.T);
    const double ka = model.conductivity(v.T);
    if (mu <= 0.0 || ka <= 0.0)
        throw NonPositiveCoefficient("transport coefficients must be positive");

    MacroODEPack p;
    const Eigen::Matrix3d f0inv = flux0_jacobian(v).inverse();
    p.a = flux1_jacobian(v) * f0inv;
    p.b = diffusion_matrix(v, model) * f0inv;
    p.P << 1.0, 0.0, 0.0,
           -v.u, 1.0, 0.0,
           -0.5 * v.u * v.u - 1.5 * v.T, 0.0, 1.0;
    const Eigen::Matrix3d Pinv = p.P.inverse();
    const Eigen::Matrix3d bs = p.P * p.b * Pinv;
    const double bscale = std::max(1.0, bs.norm());
    double off = 0.0;
    for (int i = 0; i < 3; ++i)
        off = std::max({off, std::abs(bs(0, i)), std::abs(bs(i, 0))});
    if (off > 1e-12 * bscale)
        throw ValidationError("sheared diffusion matrix has entries outside its corner block");
    p.b22 = bs.block(1, 1, 2, 2);

    const Eigen::Matrix3d M =
        p.P * (p.a - speed * Eigen::Matrix3d::Identity()) * Pinv;
    Eigen::Matrix2d m0 = M.block(1, 1, 2, 2);
    m0.col(0) += M.block(1, 0, 2, 1) / D;
    p.m = p.b22.inverse() * m0;
    p.eps_hat = D * D - 5.0 * v.T / 3.0;

    const double det_closed = 1.5 * v.rho * v.rho / (mu * ka) * p.eps_hat;
    const double det = p.m.determinant();
    const double dscale = std::max({1.0, std::abs(det_closed), p.m.norm() * p.m.norm()});
    if (std::abs(det - det_closed) > 1e-9 * dscale)
        throw ValidationError("reduced macro matrix violates its determinant identity");

    const double tr = p.m.trace();
    double disc = tr * tr - 4.0 * det;
    if (disc < 0.0) {
        if (disc > -1e-12 * (tr * tr + 4.0 * std::abs(det) + 1e-300))
            disc = 0.0;
        else
            throw EigSolverFailure("reduced macro matrix has complex spectrum");
    }
    const double sq = std::sqrt(disc);
    const double r1 = 0.5 * (tr + (tr >= 0.0 ? sq : -sq));
    const double r2 = (r1 != 0.0) ? det / r1 : 0.5 * (tr - sq);
    if (std::abs(r1) >= std::abs(r2)) {
        p.lambda_minus = r1;
        p.lambda0 = r2;
    } else {
        p.lambda_minus = r2;
        p.lambda0 = r1;
    }

    auto evec = [&](double lam) {
        Eigen::Vector2d w1(p.m(0, 1), lam - p.m(0, 0));
        Eigen::Vector2d w2(lam - p.m(1, 1), p.m(1, 0));
        Eigen::Vector2d w = (w1.norm() >= w2.norm()) ? w1 : w2;
        if (w.norm() < 1e-300)
            w = Eigen::Vector2d(1.0, 0.0);
        w.normalize();
        int imax = 0;
        w.cwiseAbs().maxCoeff(&imax);
        return (w(imax) < 0.0) ? Eigen::Vector2d(-w) : w;
    };
    p.omega.col(0) = evec(p.lambda0);
    p.omega.col(1) = evec(p.lambda_minus);
    Eigen::Matrix2d Dg;
    Dg << p.lambda0, 0.0, 0.0, p.lambda_minus;
    if ((p.m * p.omega - p.omega * Dg).norm() > 1e-9 * std::max(1.0, p.m.norm()))
        throw EigSolverFailure("macro eigenbasis failed to diagonalize");
    return p;
}

Eigen::Vector3d build_ell(const NSProfile& profile, const TransportModel& model) {
    if (profile.grid.size() < 1 || profile.states.empty())
        throw GridTooShort("profile has no nodes");
    const int c = center_node(profile.grid);
    const MacroODEPack pk =
        macro_ode_matrices(profile.states[c], model, profile.frame.speed);
    const Eigen::Vector2d elltilde =
        pk.omega.transpose().partialPivLu().solve(Eigen::Vector2d(1.0, 0.0));
    const Eigen::Vector3d lw(0.0, elltilde(0), elltilde(1));
    Eigen::Vector3d ell =
        macro_coordinate_map().transpose() * (pk.P.transpose() * lw);
    ell.normalize();
    int imax = 0;
    ell.cwiseAbs().maxCoeff(&imax);
    if (ell(imax) < 0.0)
        ell = -ell;
    return ell;
}

FirstOrderSystem assemble_system(const ProfileField& field,
                                 const CollisionTensor& tensor, double kappa,
                                 double eta, const std::vector<SpectralVector>& z,
                                 int threads) {
    if (eta <= 0.0)
        throw NonPositiveCoefficient("viscous weight eta must be positive");
    const int K = static_cast<int>(field.grid.size());
    if (K < 8)
        throw GridTooShort("need at least 8 grid nodes");
    if (static_cast<int>(field.nodes.size()) != K)
        throw DimensionMismatch("field nodes do not match the grid");
    const IndexSetPtr set = tensor.set;
    const int B = set->dim();
    if (field.nodes[0].coeffs.size() != B)
        throw DimensionMismatch("field coefficients do not match the tensor basis");
    if (!z.empty() && static_cast<int>(z.size()) != K)
        throw DimensionMismatch("source nodes do not match the grid");

    FirstOrderSystem sys;
    sys.set = set;
    sys.grid = field.grid;
    sys.eta = eta;
    sys.speed = field.frame.speed;
    sys.basis_macro = macro_basis(*set);
    sys.basis_micro = micro_basis(*set);
    const int r = B - 3;
    const int n = 3 + 2 * r;
    const Eigen::MatrixXd At =
        xi1_matrix(*set) - sys.speed * Eigen::MatrixXd::Identity(B, B);
    sys.A00 = sys.basis_macro.transpose() * At * sys.basis_macro;
    sys.A01 = sys.basis_macro.transpose() * At * sys.basis_micro;
    sys.A10 = sys.A01.transpose();
    sys.A11 = sys.basis_micro.transpose() * At * sys.basis_micro;

    auto block_matrix = [&](const SpectralVector& bg) {
        const Eigen::MatrixXd L = linearized_matrix(tensor, kappa, bg);
        const Eigen::MatrixXd L0 = sys.basis_micro.transpose() * L * sys.basis_macro;
        const Eigen::MatrixXd L1 = sys.basis_micro.transpose() * L * sys.basis_micro;
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
        M.block(0, 0, 3, 3) = sys.A00 / eta;
        M.block(0, 3, 3, r) = sys.A01 / eta;
        M.block(3, 3 + r, r, r).setIdentity();
        M.block(3 + r, 0, r, 3) = (sys.A10 * sys.A00 / eta - L0) / eta;
        M.block(3 + r, 3, r, r) = (sys.A10 * sys.A01 / eta - L1) / eta;
        M.block(3 + r, 3 + r, r, r) = sys.A11 / eta;
        return M;
    };

    sys.A.resize(K);
    std::exception_ptr fail;
    auto run = [&](int lo, int hi, std::exception_ptr& err) {
        try {
            for (int i = lo; i < hi; ++i)
                sys.A[i] = block_matrix(field.nodes[i]);
        } catch (...) {
            err = std::current_exception();
        }
    };
    const int nt = std::max(1, std::min(threads, K));
    if (nt == 1) {
        run(0, K, fail);
    } else {
        std::vector<std::exception_ptr> errs(nt);
        std::vector<std::thread> pool;
        const int chunk = (K + nt - 1) / nt;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back(run, std::min(t * chunk, K),
                              std::min((t + 1) * chunk, K), std::ref(errs[t]));
        for (auto& th : pool)
            th.join();
        for (auto& e : errs)
            if (e && !fail)
                fail = e;
    }
    if (fail)
        std::rethrow_exception(fail);

    auto lift_state = [&](const HydroState& vst) {
        if (field.mode == LiftMode::continuum)
            return maxwellian_coeffs(set, vst);
        return discretized_maxwellian(tensor, kappa,
                                      conserved_to_macro(to_conserved(vst)))
            .coeffs;
    };
    sys.A_minus = block_matrix(lift_state(field.frame.v_minus));
    sys.A_plus = block_matrix(lift_state(field.frame.v_plus));

    sys.G.assign(K, Eigen::VectorXd::Zero(n));
    if (!z.empty()) {
        double zmag = 0.0;
        for (int k = 0; k < K; ++k) {
            if (z[k].coeffs.size() != B)
                throw DimensionMismatch("source coefficients do not match the basis");
            zmag = std::max(zmag, z[k].coeffs.norm());
        }
        for (int k = 0; k < K; ++k) {
            const double mac = (sys.basis_macro.transpose() * z[k].coeffs).norm();
            if (mac > 1e-10 * std::max(1.0, zmag))
                throw NonMicroscopicSource(
                    "source has a macroscopic component at node " + std::to_string(k));
            sys.G[k].tail(r) = sys.basis_micro.transpose() * z[k].coeffs / eta;
        }
    }
    return sys;
}

EndpointAnalysis endpoint_analysis(const FirstOrderSystem& sys) {
    const int n = sys.dim();
    EndpointAnalysis ea;
    Eigen::EigenSolver<Eigen::MatrixXd> esm(sys.A_minus);
    Eigen::EigenSolver<Eigen::MatrixXd> esp(sys.A_plus);
    if (esm.info() != Eigen::Success || esp.info() != Eigen::Success)
        throw EigSolverFailure("endpoint eigenvalue solve failed");
    ea.spectrum_minus = esm.eigenvalues();
    ea.spectrum_plus = esp.eigenvalues();
    double margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        margin = std::min(margin, std::abs(ea.spectrum_minus(i).real()));
        margin = std::min(margin, std::abs(ea.spectrum_plus(i).real()));
    }
    ea.margin = margin;
    if (margin <= 1e-10)
        throw ImaginaryAxisEigenvalue("endpoint spectrum touches the imaginary axis");
    int du = 0, ds = 0;
    for (int i = 0; i < n; ++i) {
        if (ea.spectrum_minus(i).real() > 0.0)
            ++du;
        if (ea.spectrum_plus(i).real() < 0.0)
            ++ds;
    }
    if (du + ds != n + 1)
        throw ValidationError("dichotomy dimensions " + std::to_string(du) + " + " +
                              std::to_string(ds) + " do not sum to " +
                              std::to_string(n + 1));
    int ku = 0, ks = 0;
    ea.unstable_proj_minus = spectral_projector(sys.A_minus, true, ku);
    ea.stable_proj_plus = spectral_projector(sys.A_plus, false, ks);
    if (ku != du || ks != ds)
        throw ValidationError("projector rank disagrees with the eigenvalue count");
    ea.dim_unstable_minus = du;
    ea.dim_stable_plus = ds;
    return ea;
}

double coefficient_decay_fit(const FirstOrderSystem& sys, HalfLine side) {
    const int K = static_cast<int>(sys.grid.size());
    const int mid = center_node(sys.grid);
    const Eigen::MatrixXd& lim =
        (side == HalfLine::left) ? sys.A_minus : sys.A_plus;
    std::vector<DecaySample> all;
    const int lo = (side == HalfLine::left) ? 0 : mid;
    const int hi = (side == HalfLine::left) ? mid : K - 1;
    double nmax = 0.0;
    for (int k = lo; k <= hi; ++k) {
        DecaySample s;
        s.t = std::abs(sys.grid(k) - sys.grid(mid));
        s.n = (sys.A[k] - lim).norm();
        nmax = std::max(nmax, s.n);
        all.push_back(s);
    }
    if (nmax <= 1e-13 * (1.0 + lim.norm()))
        return 1e6;   // constant coefficients decay instantly
    const double span = std::abs(sys.grid(hi == mid ? lo : hi) - sys.grid(mid));
    const double floor = 1e-11 * nmax;
    std::vector<DecaySample> pts;
    for (const DecaySample& s : all)
        if (s.n > floor && s.t >= 0.05 * span)
            pts.push_back(s);
    if (pts.size() < 8) {
        pts.clear();
        for (const DecaySample& s : all)
            if (s.n > floor && s.t > 0.0)
                pts.push_back(s);
    }
    if (pts.size() < 8)
        throw ValidationError("too few nodes to fit the coefficient decay rate");
    const double delta = fit_decay(pts);
    if (delta <= 0.0)
        throw ValidationError("coefficient matrix does not decay toward its limit");
    return delta;
}

ConjugationResult conjugation_transform(const FirstOrderSystem& sys, HalfLine side,
                                        double theta) {
    const int n = sys.dim();
    const int K = static_cast<int>(sys.grid.size());
    const int mid = center_node(sys.grid);
    const double delta = coefficient_decay_fit(sys, side);
    if (!(theta > 0.0) || theta >= delta)
        throw ValidationError("theta must lie in (0, delta_fit)");
    const double kth = std::sqrt(theta * delta);

    HalfProblem hp = half_problem(sys, side, mid);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(hp.A_lim.cast<cdouble>());
    if (ces.info() != Eigen::Success)
        throw EigSolverFailure("limit matrix eigenvalue solve failed");
    const Eigen::VectorXcd lam = ces.eigenvalues();
    const Eigen::MatrixXcd W = ces.eigenvectors();
    const double lmax = lam.cwiseAbs().maxCoeff();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(lam(i) - lam(j)) < 1e-7 * std::max(lmax, 1e-30))
                throw EigSolverFailure("limit matrix spectrum is not simple");
    double mu_max = 0.0;
    for (int i = 0; i < n; ++i)
        mu_max = std::max(mu_max, std::abs(lam(i).real()));
    mu_max *= 2.0;

    std::vector<int> bidx;
    const Eigen::VectorXd y = refine_grid(hp.y, mu_max, bidx);
    const int Kref = static_cast<int>(y.size());
    std::vector<Eigen::MatrixXd> Aref(Kref);
    {
        std::vector<int> is_base(Kref, -1);
        for (int j = 0; j < static_cast<int>(bidx.size()); ++j)
            is_base[bidx[j]] = j;
        for (int k = 0; k < Kref; ++k) {
            if (is_base[k] >= 0) {
                Aref[k] = hp.A[is_base[k]];
                continue;
            }
            int st = 0;
            Eigen::Vector4d w;
            interp4(hp.y, y(k), st, w);
            Aref[k] = w(0) * hp.A[st] + w(1) * hp.A[st + 1] + w(2) * hp.A[st + 2] +
                      w(3) * hp.A[st + 3];
        }
    }

    FixedPointCore core;
    core.n = n;
    core.K = Kref;
    core.cells = cell_geometry(y);
    const Eigen::MatrixXcd Winv = W.inverse();
    core.Dtilde.resize(Kref);
    for (int k = 0; k < Kref; ++k)
        core.Dtilde[k] = Winv * (Aref[k] - hp.A_lim).cast<cdouble>() * W;
    core.kern.reserve(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const cdouble nu = lam(i) - lam(j);
            const bool down = nu.real() <= -kth;
            core.kern.push_back(make_kernel(nu, down, core.cells));
            if (down)
                core.down_modes.push_back(i * n + j);
            else
                core.up_modes.push_back(i * n + j);
        }

    std::vector<Eigen::MatrixXcd> S(Kref, Eigen::MatrixXcd::Zero(n, n));
    int iters = 0;
    bool ok = picard(core, S, 0, 60, iters);
    if (!ok) {
        const double ytail = std::min(2.0 / delta, 0.5 * y(Kref - 1));
        int m0 = Kref - 1;
        for (int k = 0; k < Kref; ++k)
            if (y(k) >= ytail) {
                m0 = k;
                break;
            }
        for (auto& Mk : S)
            Mk.setZero();
        picard(core, S, m0, 60, iters);
        double warm = 0.0;
        for (const auto& Mk : S)
            warm = std::max(warm, Mk.cwiseAbs().maxCoeff());
        if (warm > 1e3)
            for (auto& Mk : S)
                Mk.setZero();
        for (double omega : {1.0, 0.5, 0.25}) {
            std::vector<Eigen::MatrixXcd> Sw = S;
            if (gauss_seidel(core, Sw, 80, omega, iters)) {
                S = Sw;
                ok = true;
                break;
            }
        }
        if (!ok)
            throw ContractionFailure(
                "conjugation fixed point failed to contract (side " +
                std::string(side == HalfLine::left ? "left" : "right") + ", theta " +
                std::to_string(theta) + ")");
    }

    std::vector<Eigen::MatrixXd> T(Kref);
    double imax_err = 0.0, rescale = 1.0;
    for (int k = 0; k < Kref; ++k) {
        const Eigen::MatrixXcd Tc =
            Eigen::MatrixXcd::Identity(n, n) + W * S[k] * Winv;
        imax_err = std::max(imax_err, Tc.imag().cwiseAbs().maxCoeff());
        rescale = std::max(rescale, Tc.real().cwiseAbs().maxCoeff());
        T[k] = Tc.real();
    }
    if (imax_err > 1e-6 * rescale)
        throw ValidationError("conjugator acquired a non-real component");
    double c1 = 0.0;
    for (int k = 0; k < Kref; ++k)
        c1 = std::max(c1, (T[k] - Eigen::MatrixXd::Identity(n, n)).norm() *
                              std::exp(theta * y(k)));

    ConjugationResult res;
    res.theta = theta;
    res.kappa_threshold = kth;
    res.delta_fit = delta;
    res.iterations = iters;
    res.c1_estimate = c1;
    if (side == HalfLine::right) {
        res.grid.resize(Kref);
        for (int k = 0; k < Kref; ++k)
            res.grid(k) = sys.grid(mid) + y(k);
        res.T = std::move(T);
        res.A_nodes = std::move(Aref);
        res.A_limit = sys.A_plus;
        res.base_index = bidx;
    } else {
        res.grid.resize(Kref);
        res.T.resize(Kref);
        res.A_nodes.resize(Kref);
        for (int k = 0; k < Kref; ++k) {
            res.grid(k) = sys.grid(mid) - y(Kref - 1 - k);
            res.T[k] = T[Kref - 1 - k];
            res.A_nodes[k] = -Aref[Kref - 1 - k];
        }
        res.A_limit = sys.A_minus;
        res.base_index.resize(mid + 1);
        for (int j = 0; j <= mid; ++j)
            res.base_index[j] = Kref - 1 - bidx[mid - j];
    }
    return res;
}

double conjugation_residual(const ConjugationResult& conj) {
    const int K = static_cast<int>(conj.grid.size());
    if (K < 7)
        throw GridTooShort("residual check needs at least 7 nodes");
    const int n = static_cast<int>(conj.A_limit.rows());
    double sup = 0.0;
    for (int j = 0; j < K; ++j) {
        const int st = std::clamp(j - 3, 0, K - 7);
        const Eigen::VectorXd w =
            fd_weights(conj.grid(j), conj.grid.segment(st, 7), 1).col(1);
        Eigen::MatrixXd Tp = Eigen::MatrixXd::Zero(n, n);
        for (int m = 0; m < 7; ++m)
            Tp += w(m) * conj.T[st + m];
        const Eigen::MatrixXd R =
            Tp - conj.A_nodes[j] * conj.T[j] + conj.T[j] * conj.A_limit;
        sup = std::max(sup, R.norm());
    }
    return sup;
}

BVPSolution solve_bvp(const FirstOrderSystem& sys, const Eigen::Vector3d& ell,
                      double d) {
    const int K = static_cast<int>(sys.grid.size());
    const int n = sys.dim();
    const int r = sys.micro_dim();
    if (K < 8)
        throw GridTooShort("need at least 8 grid nodes");
    const EndpointAnalysis ea = endpoint_analysis(sys);
    const int rL = n - ea.dim_unstable_minus;
    const int rR = n - ea.dim_stable_plus;

    const Eigen::MatrixXd PsL =
        Eigen::MatrixXd::Identity(n, n) - ea.unstable_proj_minus;
    const Eigen::MatrixXd PuR =
        Eigen::MatrixXd::Identity(n, n) - ea.stable_proj_plus;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrL(PsL.transpose());
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrR(PuR.transpose());
    const Eigen::MatrixXd BL =
        (qrL.householderQ() * Eigen::MatrixXd::Identity(n, rL)).transpose();
    const Eigen::MatrixXd BR =
        (qrR.householderQ() * Eigen::MatrixXd::Identity(n, rR)).transpose();
    const int c = center_node(sys.grid);

    const int N = K * n;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(K - 1) * 4 * n * n + (rL + rR + 1) * n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
    for (int k = 0; k + 1 < K; ++k) {
        const int st = std::clamp(k - 1, 0, K - 4);
        const double h = sys.grid(k + 1) - sys.grid(k);
        const double xm = 0.5 * (sys.grid(k) + sys.grid(k + 1));
        const Eigen::MatrixXd W = fd_weights(xm, sys.grid.segment(st, 4), 1);
        Eigen::MatrixXd Amid = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd Gmid = Eigen::VectorXd::Zero(n);
        for (int m = 0; m < 4; ++m) {
            Amid += W(m, 0) * sys.A[st + m];
            Gmid += W(m, 0) * sys.G[st + m];
        }
        for (int m = 0; m < 4; ++m) {
            const Eigen::MatrixXd Bm =
                h * (W(m, 0) * Amid -
                     W(m, 1) * Eigen::MatrixXd::Identity(n, n));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (Bm(i, j) != 0.0)
                        trip.emplace_back(k * n + i, (st + m) * n + j, Bm(i, j));
        }
        rhs.segment(k * n, n) = h * Gmid;
    }
    const int row0 = (K - 1) * n;
    for (int i = 0; i < rL; ++i)
        for (int j = 0; j < n; ++j)
            trip.emplace_back(row0 + i, j, BL(i, j));
    for (int i = 0; i < rR; ++i)
        for (int j = 0; j < n; ++j)
            trip.emplace_back(row0 + rL + i, (K - 1) * n + j, BR(i, j));
    for (int j = 0; j < 3; ++j)
        trip.emplace_back(row0 + rL + rR, c * n + j, ell(j));
    rhs(row0 + rL + rR) = d;

    Eigen::SparseMatrix<double> Msp(N, N);
    Msp.setFromTriplets(trip.begin(), trip.end());
    Msp.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(Msp);
    lu.factorize(Msp);
    if (lu.info() != Eigen::Success)
        throw SingularBVP("collocation matrix factorization failed at " +
                          std::to_string(N) + " unknowns");
    const Eigen::VectorXd X = lu.solve(rhs);
    const double relres = (Msp * X - rhs).norm() /
                          (rhs.norm() + Msp.norm() * X.norm() + 1e-300);
    if (relres > 1e-6)
        throw SingularBVP("near-singular collocation system: relative residual " +
                          std::to_string(relres) + ", log|det| " +
                          std::to_string(lu.logAbsDeterminant()));

    BVPSolution sol;
    sol.grid = sys.grid;
    sol.state.resize(K);
    sol.f.resize(K);
    for (int k = 0; k < K; ++k) {
        sol.state[k] = X.segment(k * n, n);
        sol.f[k] = SpectralVector(
            sys.set, sys.basis_macro * sol.state[k].head(3) +
                         sys.basis_micro * sol.state[k].segment(3, r));
    }
    sol.residual = collocation_residual(sys, sol.state);
    sol.boundary_value = ell.dot(sol.state[c].head(3));
    return sol;
}

namespace {

struct SideData {
    ConjugationResult conj;
    Eigen::MatrixXcd W;
    Eigen::VectorXcd lam;
    std::vector<int> free_idx;
    Eigen::MatrixXcd Zpart;   // particular solution in the eigenbasis, n x Kref
    int match_node = 0;
};

SideData build_side(const FirstOrderSystem& sys, HalfLine side, double theta,
                    int mid) {
    SideData sd;
    sd.conj = conjugation_transform(sys, side, theta);
    const int n = sys.dim();
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(sd.conj.A_limit.cast<cdouble>());
    if (ces.info() != Eigen::Success)
        throw EigSolverFailure("limit matrix eigenvalue solve failed");
    sd.lam = ces.eigenvalues();
    sd.W = ces.eigenvectors();
    const double lmax = sd.lam.cwiseAbs().maxCoeff();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(sd.lam(i) - sd.lam(j)) < 1e-7 * std::max(lmax, 1e-30))
                throw EigSolverFailure("limit matrix spectrum is not simple");
    const Eigen::MatrixXcd Winv = sd.W.inverse();

    const int K = static_cast<int>(sys.grid.size());
    const int Kh = (side == HalfLine::left) ? mid + 1 : K - mid;
    Eigen::VectorXd xb(Kh);
    std::vector<const Eigen::VectorXd*> Gb(Kh);
    for (int j = 0; j < Kh; ++j) {
        const int gidx = (side == HalfLine::left) ? j : mid + j;
        xb(j) = sys.grid(gidx);
        Gb[j] = &sys.G[gidx];
    }

    const int Kref = static_cast<int>(sd.conj.grid.size());
    std::vector<int> is_base(Kref, -1);
    for (int j = 0; j < Kh; ++j)
        is_base[sd.conj.base_index[j]] = j;
    Eigen::MatrixXcd Ht(n, Kref);
    for (int k = 0; k < Kref; ++k) {
        Eigen::VectorXd Gk(n);
        if (is_base[k] >= 0) {
            Gk = *Gb[is_base[k]];
        } else {
            int st = 0;
            Eigen::Vector4d w;
            interp4(xb, sd.conj.grid(k), st, w);
            Gk = w(0) * (*Gb[st]) + w(1) * (*Gb[st + 1]) + w(2) * (*Gb[st + 2]) +
                 w(3) * (*Gb[st + 3]);
        }
        const Eigen::VectorXd Hk = -sd.conj.T[k].partialPivLu().solve(Gk);
        Ht.col(k) = Winv * Hk.cast<cdouble>();
    }

    const std::vector<CellGeometry> cells = cell_geometry(sd.conj.grid);
    sd.Zpart.resize(n, Kref);
    Eigen::VectorXcd g(Kref), s(Kref);
    for (int i = 0; i < n; ++i) {
        const bool down = sd.lam(i).real() <= 0.0;
        const ModeKernel kn = make_kernel(sd.lam(i), down, cells);
        g = Ht.row(i);
        stream(kn, cells, g, s);
        sd.Zpart.row(i) = s;
        const bool free_mode =
            (side == HalfLine::right) ? down : (sd.lam(i).real() > 0.0);
        if (free_mode)
            sd.free_idx.push_back(i);
    }
    sd.match_node = (side == HalfLine::right) ? 0 : Kref - 1;
    return sd;
}

} // namespace

BVPSolution solve_bvp_matched(const FirstOrderSystem& sys,
                              const Eigen::Vector3d& ell, double d, double theta) {
    const int K = static_cast<int>(sys.grid.size());
    const int n = sys.dim();
    const int r = sys.micro_dim();
    const int mid = center_node(sys.grid);
    endpoint_analysis(sys);

    SideData L = build_side(sys, HalfLine::left, theta, mid);
    SideData R = build_side(sys, HalfLine::right, theta, mid);
    const int kL = static_cast<int>(L.free_idx.size());
    const int kR = static_cast<int>(R.free_idx.size());
    if (kL + kR != n + 1)
        throw ValidationError("matching system is not square");

    const Eigen::MatrixXcd ML =
        L.conj.T[L.match_node].cast<cdouble>() * L.W;
    const Eigen::MatrixXcd MR =
        R.conj.T[R.match_node].cast<cdouble>() * R.W;
    const Eigen::VectorXcd pL = L.Zpart.col(L.match_node);
    const Eigen::VectorXcd pR = R.Zpart.col(R.match_node);

    Eigen::MatrixXcd Msys = Eigen::MatrixXcd::Zero(n + 1, n + 1);
    Eigen::VectorXcd rhs(n + 1);
    for (int a = 0; a < kL; ++a)
        Msys.block(0, a, n, 1) = ML.col(L.free_idx[a]);
    for (int a = 0; a < kR; ++a)
        Msys.block(0, kL + a, n, 1) = -MR.col(R.free_idx[a]);
    rhs.head(n) = MR * pR - ML * pL;
    const Eigen::VectorXcd MRpR = MR * pR;
    for (int a = 0; a < kR; ++a) {
        cdouble acc = 0.0;
        for (int i = 0; i < 3; ++i)
            acc += ell(i) * MR(i, R.free_idx[a]);
        Msys(n, kL + a) = acc;
    }
    {
        cdouble acc = 0.0;
        for (int i = 0; i < 3; ++i)
            acc += ell(i) * MRpR(i);
        rhs(n) = cdouble(d, 0.0) - acc;
    }
    const Eigen::VectorXcd coef = Msys.colPivHouseholderQr().solve(rhs);
    const double mres =
        (Msys * coef - rhs).norm() / (rhs.norm() + Msys.norm() * coef.norm() + 1e-300);
    if (mres > 1e-6)
        throw SingularBVP("matching system is near singular: relative residual " +
                          std::to_string(mres));

    BVPSolution sol;
    sol.grid = sys.grid;
    sol.state.resize(K);
    sol.f.resize(K);
    double im_err = 0.0, re_scale = 1.0;
    auto reconstruct = [&](const SideData& sd, const Eigen::VectorXcd& cfree,
                           int half_node) {
        const int p = sd.conj.base_index[half_node];
        const double x = sd.conj.grid(p) - sd.conj.grid(sd.match_node);
        Eigen::VectorXcd Zt = sd.Zpart.col(p);
        for (int a = 0; a < static_cast<int>(sd.free_idx.size()); ++a)
            Zt(sd.free_idx[a]) += cfree(a) * std::exp(sd.lam(sd.free_idx[a]) * x);
        const Eigen::VectorXcd F = sd.conj.T[p].cast<cdouble>() * (sd.W * Zt);
        im_err = std::max(im_err, F.imag().cwiseAbs().maxCoeff());
        re_scale = std::max(re_scale, F.real().cwiseAbs().maxCoeff());
        return Eigen::VectorXd(F.real());
    };
    const Eigen::VectorXcd cL = coef.head(kL);
    const Eigen::VectorXcd cR = coef.tail(kR);
    for (int k = 0; k < K; ++k) {
        if (k < mid)
            sol.state[k] = reconstruct(L, cL, k);
        else
            sol.state[k] = reconstruct(R, cR, k - mid);
        sol.f[k] = SpectralVector(
            sys.set, sys.basis_macro * sol.state[k].head(3) +
                         sys.basis_micro * sol.state[k].segment(3, r));
    }
    if (im_err > 1e-6 * re_scale)
        throw ValidationError("matched solution acquired a non-real component");
    sol.residual = collocation_residual(sys, sol.state);
    sol.boundary_value = ell.dot(sol.state[mid].head(3));
    return sol;
}

EnergyReport energy_diagnostic(const std::vector<SpectralVector>& f,
                               const std::vector<SpectralVector>& z,
                               const Eigen::VectorXd& grid,
                               const Compensator& comp, double lambda,
                               double epsilon, const KernelParams& params) {
    const int K = static_cast<int>(grid.size());
    if (static_cast<int>(f.size()) != K || static_cast<int>(z.size()) != K)
        throw GridMismatch("f, z and the grid must have matching lengths");
    if (K < 5)
        throw GridTooShort("need at least 5 grid nodes");
    const int B = static_cast<int>(comp.K.rows());
    if (f[0].coeffs.size() != B || z[0].coeffs.size() != B)
        throw DimensionMismatch("coefficients do not match the compensator basis");
    const IndexSetPtr set = f[0].set ? f[0].set : comp.set;

    std::vector<Eigen::VectorXd> df(K), dz(K);
    for (int k = 0; k < K; ++k) {
        const int st = std::clamp(k - 2, 0, K - 5);
        const Eigen::VectorXd w = fd_weights(grid(k), grid.segment(st, 5), 1).col(1);
        df[k] = Eigen::VectorXd::Zero(B);
        dz[k] = Eigen::VectorXd::Zero(B);
        for (int m = 0; m < 5; ++m) {
            df[k] += w(m) * f[st + m].coeffs;
            dz[k] += w(m) * z[st + m].coeffs;
        }
    }

    Eigen::VectorXd e1(K), e2(K), e3(K), diss(K), src(K);
    for (int k = 0; k < K; ++k) {
        e1(k) = dz[k].dot(df[k]);
        e2(k) = z[k].coeffs.dot(f[k].coeffs);
        e3(k) = (comp.K * z[k].coeffs).dot(df[k]);
        const double hdf = hh1_proxy_norm(SpectralVector(set, df[k]), params);
        const auto split = macro_split(f[k]);
        const double hmic = hh1_proxy_norm(split.second, params);
        diss(k) = hdf * hdf + hmic * hmic;
        const MacroState& a = split.first;
        const double umag2 = a.a0 * a.a0 + a.a1 * a.a1 + a.a2 * a.a2;
        src(k) = z[k].coeffs.squaredNorm() + dz[k].squaredNorm() +
                 epsilon * epsilon * umag2;
    }

    EnergyReport rep;
    rep.lambda = lambda;
    rep.value = trapezoid(e1, grid) + lambda * trapezoid(e2, grid) +
                trapezoid(e3, grid);
    rep.dissipation = epsilon * trapezoid(diss, grid);
    rep.source = epsilon * trapezoid(src, grid);
    rep.constant = (rep.source > 0.0) ? rep.dissipation / rep.source : 0.0;
    rep.slack = 1e3 * rep.source - rep.dissipation;
    return rep;
}

std::vector<EtaSample> eta_sweep(const ProfileField& field,
                                 const CollisionTensor& tensor, double kappa,
                                 const std::vector<double>& etas,
                                 const std::vector<SpectralVector>& z,
                                 const Eigen::Vector3d& ell, double d) {
    std::vector<EtaSample> out;
    std::vector<Eigen::VectorXd> prev;
    for (double eta : etas) {
        const FirstOrderSystem sys = assemble_system(field, tensor, kappa, eta, z);
        const BVPSolution sol = solve_bvp(sys, ell, d);
        EtaSample smp;
        smp.eta = eta;
        smp.boundary_value = sol.boundary_value;
        for (const Eigen::VectorXd& st : sol.state)
            smp.sup_norm = std::max(smp.sup_norm, st.lpNorm<Eigen::Infinity>());
        if (!prev.empty())
            for (size_t k = 0; k < sol.state.size(); ++k)
                smp.sup_diff_prev = std::max(
                    smp.sup_diff_prev,
                    (sol.state[k] - prev[k]).lpNorm<Eigen::Infinity>());
        prev = sol.state;
        out.push_back(smp);
    }
    return out;
}

} // namespace kshk
