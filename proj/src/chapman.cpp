// SPDX-License-Identifier: MIT
#include "kshk/chapman.hpp"

#include "kshk/errors.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>

namespace kshk {

namespace {

SpectralVector reference_background(const IndexSetPtr& set) {
    SpectralVector bg(set);
    bg.coeffs(0) = 1.0;
    return bg;
}

} // namespace

std::pair<SpectralVector, SpectralVector>
burnett_fields(const IndexSetPtr& set) {
    if (!set || set->N() < 3)
        throw DegreeTooSmall("burnett_fields: basis degree must be >= 3");
    const double r2 = std::sqrt(2.0);
    SpectralVector phi(set);
    phi.coeffs(set->find({2, 0, 0})) = 2.0 * r2 / 3.0;
    phi.coeffs(set->find({0, 2, 0})) = -r2 / 3.0;
    phi.coeffs(set->find({0, 0, 2})) = -r2 / 3.0;
    SpectralVector psi(set);
    psi.coeffs(set->find({3, 0, 0})) = std::sqrt(6.0);
    psi.coeffs(set->find({1, 2, 0})) = r2;
    psi.coeffs(set->find({1, 0, 2})) = r2;
    return {std::move(phi), std::move(psi)};
}

std::pair<SpectralVector, SpectralVector>
invert_burnett(const Eigen::MatrixXd& L, const IndexSetPtr& set) {
    if (!set || L.rows() != set->dim() || L.cols() != set->dim())
        throw DimensionMismatch("invert_burnett: matrix does not match basis");
    const auto [phi, psi] = burnett_fields(set);
    const Eigen::MatrixXd V = micro_basis(*set);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(V.transpose() * L * V);
    if (!lu.isInvertible())
        throw SingularMicroBlock("invert_burnett: micro block not invertible");
    SpectralVector phi_t(set, V * lu.solve(V.transpose() * (-phi.coeffs)));
    SpectralVector psi_t(set, V * lu.solve(V.transpose() * (-psi.coeffs)));
    const double rp = (L * phi_t.coeffs + phi.coeffs).norm();
    const double rq = (L * psi_t.coeffs + psi.coeffs).norm();
    if (rp > 1e-10 * std::max(1.0, phi.norm()) ||
        rq > 1e-10 * std::max(1.0, psi.norm()))
        throw SingularMicroBlock("invert_burnett: inversion residual too large");
    return {std::move(phi_t), std::move(psi_t)};
}

struct TransportModel::State {
    IndexSetPtr set;
    KernelParams params;
    Eigen::MatrixXd L_plain;
    Eigen::MatrixXd L_lift;
    TransportCoeffs base;
    mutable std::mutex mutex;
    mutable std::map<std::pair<long long, long long>, std::pair<double, double>>
        cache;
};

TransportModel::TransportModel(std::shared_ptr<State> state)
    : state_(std::move(state)) {}

TransportModel::TransportModel(const IndexSetPtr& set,
                               const KernelParams& params,
                               Eigen::MatrixXd L_plain,
                               Eigen::MatrixXd L_lift) {
    const Eigen::MatrixXd L = L_plain + params.kappa * L_lift;
    const auto [phi_t, psi_t] = invert_burnett(L, set);
    *this = transport_coeffs(phi_t, psi_t, params, std::move(L_plain),
                             std::move(L_lift));
}

const TransportCoeffs& TransportModel::coeffs() const { return state_->base; }

std::pair<double, double>
TransportModel::solve_reference(double kappa_eff) const {
    const State& st = *state_;
    const Eigen::MatrixXd L = st.L_plain + kappa_eff * st.L_lift;
    const auto [phi_t, psi_t] = invert_burnett(L, st.set);
    const auto [phi, psi] = burnett_fields(st.set);
    const double mu_t = phi.coeffs.dot(phi_t.coeffs);
    const double kap_t = 0.25 * psi.coeffs.dot(psi_t.coeffs);
    if (!(mu_t > 0.0) || !(kap_t > 0.0))
        throw NonPositiveCoefficient(
            "transport solve produced a non-positive coefficient");
    return {mu_t, kap_t};
}

double TransportModel::mu(double T) const {
    const State& st = *state_;
    if (!(T > 0.0))
        throw std::invalid_argument("transport evaluator: T must be positive");
    const double kappa_eff =
        std::pow(T, 1.0 - st.params.s - 0.5 * st.params.gamma) * st.params.kappa;
    if (kappa_eff == st.params.kappa)
        return std::pow(T, 1.0 - 0.5 * st.params.gamma) * st.base.mu_tilde;
    std::lock_guard<std::mutex> hold(st.mutex);
    const auto key = std::make_pair(std::llround(T * 1e12),
                                    std::llround(st.params.kappa * 1e12));
    auto it = st.cache.find(key);
    if (it == st.cache.end())
        it = st.cache.emplace(key, solve_reference(kappa_eff)).first;
    return std::pow(T, 1.0 - 0.5 * st.params.gamma) * it->second.first;
}

double TransportModel::conductivity(double T) const {
    const State& st = *state_;
    if (!(T > 0.0))
        throw std::invalid_argument("transport evaluator: T must be positive");
    const double kappa_eff =
        std::pow(T, 1.0 - st.params.s - 0.5 * st.params.gamma) * st.params.kappa;
    if (kappa_eff == st.params.kappa)
        return std::pow(T, 1.0 - 0.5 * st.params.gamma) * st.base.kappa_tilde;
    std::lock_guard<std::mutex> hold(st.mutex);
    const auto key = std::make_pair(std::llround(T * 1e12),
                                    std::llround(st.params.kappa * 1e12));
    auto it = st.cache.find(key);
    if (it == st.cache.end())
        it = st.cache.emplace(key, solve_reference(kappa_eff)).first;
    return std::pow(T, 1.0 - 0.5 * st.params.gamma) * it->second.second;
}

TransportModel transport_coeffs(const SpectralVector& phi_tilde,
                                const SpectralVector& psi_tilde,
                                const KernelParams& params,
                                Eigen::MatrixXd L_plain,
                                Eigen::MatrixXd L_lift) {
    const IndexSetPtr set = phi_tilde.set;
    if (!set || !psi_tilde.set || psi_tilde.set->dim() != set->dim() ||
        L_plain.rows() != set->dim() || L_lift.rows() != set->dim())
        throw DimensionMismatch("transport_coeffs: dimensions do not match");
    const auto [phi, psi] = burnett_fields(set);
    auto state = std::make_shared<TransportModel::State>();
    state->set = set;
    state->params = params;
    state->L_plain = std::move(L_plain);
    state->L_lift = std::move(L_lift);
    state->base.mu_tilde = phi.coeffs.dot(phi_tilde.coeffs);
    state->base.kappa_tilde = 0.25 * psi.coeffs.dot(psi_tilde.coeffs);
    state->base.gamma = params.gamma;
    state->base.s = params.s;
    state->base.kappa = params.kappa;
    if (!(state->base.mu_tilde > 0.0) || !(state->base.kappa_tilde > 0.0))
        throw NonPositiveCoefficient(
            "transport_coeffs: coefficients must be positive");
    return TransportModel(std::move(state));
}

TransportModel transport_from_tensor(const CollisionTensor& tensor) {
    const SpectralVector bg = reference_background(tensor.set);
    Eigen::MatrixXd L_plain = linearized_matrix(tensor, 0.0, bg);
    Eigen::MatrixXd L_lift = linearized_matrix(tensor, 1.0, bg) - L_plain;
    return TransportModel(tensor.set, tensor.params, std::move(L_plain),
                          std::move(L_lift));
}

Eigen::Matrix3d diffusion_matrix(const HydroState& v,
                                 const TransportModel& model) {
    const double mu = model.mu(v.T);
    Eigen::Matrix3d B = Eigen::Matrix3d::Zero();
    B(1, 1) = mu;
    B(2, 1) = mu * v.u;
    B(2, 2) = model.conductivity(v.T);
    return B;
}

namespace {

MacroState shifted(const MacroState& a, int k, double h) {
    MacroState out = a;
    if (k == 0)
        out.a0 += h;
    else if (k == 1)
        out.a1 += h;
    else
        out.a2 += h;
    return out;
}

constexpr double kJacobianStep = 1e-5;

// Shared tail: apply the transport matrix to the family Jacobian, remove
// the uncentred projection, and invert on the microscopic subspace.
MicroCorrection correction_from_jacobian(const CollisionTensor& tensor,
                                         double kappa,
                                         const Eigen::VectorXd& bg_coeffs,
                                         const Eigen::MatrixXd& J) {
    const IndexSetPtr& set = tensor.set;
    const Eigen::MatrixXd A = xi1_matrix(*set);
    const Eigen::MatrixXd L =
        linearized_matrix(tensor, kappa, SpectralVector(set, bg_coeffs));
    const Eigen::MatrixXd U = macro_basis(*set);
    const Eigen::MatrixXd V = micro_basis(*set);
    const Eigen::MatrixXd G = A * J;
    const Eigen::MatrixXd G_perp = G - J * (U.transpose() * G);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(V.transpose() * L * V);
    if (!lu.isInvertible())
        throw SingularMicroBlock("micro_correction: micro block not invertible");
    MicroCorrection out{set, V * lu.solve(V.transpose() * G_perp)};
    const double scale = std::max(1.0, G_perp.norm());
    if ((L * out.b_perp - G_perp).norm() > 1e-10 * scale)
        throw SingularMicroBlock(
            "micro_correction: inversion residual too large");
    return out;
}

} // namespace

Eigen::MatrixXd maxwellian_family_jacobian(const CollisionTensor& tensor,
                                           double kappa,
                                           const MacroState& macro) {
    Eigen::MatrixXd J(tensor.dim(), 3);
    for (int k = 0; k < 3; ++k) {
        try {
            const DiscretizedMaxwellian up =
                discretized_maxwellian(tensor, kappa,
                                       shifted(macro, k, kJacobianStep));
            const DiscretizedMaxwellian dn =
                discretized_maxwellian(tensor, kappa,
                                       shifted(macro, k, -kJacobianStep));
            J.col(k) =
                (up.coeffs.coeffs - dn.coeffs.coeffs) / (2.0 * kJacobianStep);
        } catch (const Error& e) {
            throw JacobianUnavailable(
                std::string("maxwellian_family_jacobian: ") + e.what());
        } catch (const std::invalid_argument& e) {
            throw JacobianUnavailable(
                std::string("maxwellian_family_jacobian: ") + e.what());
        }
    }
    return J;
}

SpectralVector MicroCorrection::apply(const MacroState& du_dx) const {
    return SpectralVector(
        set, b_perp * Eigen::Vector3d(du_dx.a0, du_dx.a1, du_dx.a2));
}

MicroCorrection micro_correction_map(const CollisionTensor& tensor,
                                     double kappa,
                                     const DiscretizedMaxwellian& background) {
    const Eigen::MatrixXd J =
        maxwellian_family_jacobian(tensor, kappa, background.macro);
    return correction_from_jacobian(tensor, kappa, background.coeffs.coeffs, J);
}

MicroCorrection micro_correction_map(const CollisionTensor& tensor,
                                     double kappa,
                                     const HydroState& background) {
    const IndexSetPtr& set = tensor.set;
    const MacroState macro = conserved_to_macro(to_conserved(background));
    Eigen::MatrixXd J(tensor.dim(), 3);
    for (int k = 0; k < 3; ++k) {
        try {
            const HydroState up = from_conserved(
                macro_to_conserved(shifted(macro, k, kJacobianStep)));
            const HydroState dn = from_conserved(
                macro_to_conserved(shifted(macro, k, -kJacobianStep)));
            J.col(k) = (maxwellian_coeffs(set, up).coeffs -
                        maxwellian_coeffs(set, dn).coeffs) /
                       (2.0 * kJacobianStep);
        } catch (const Error& e) {
            throw JacobianUnavailable(
                std::string("micro_correction: Maxwellian family: ") + e.what());
        }
    }
    return correction_from_jacobian(tensor, kappa,
                                    maxwellian_coeffs(set, background).coeffs,
                                    J);
}

SpectralVector micro_correction(const CollisionTensor& tensor, double kappa,
                                const DiscretizedMaxwellian& background,
                                const MacroState& du_dx) {
    return micro_correction_map(tensor, kappa, background).apply(du_dx);
}

SpectralVector micro_correction(const CollisionTensor& tensor, double kappa,
                                const HydroState& background,
                                const MacroState& du_dx) {
    return micro_correction_map(tensor, kappa, background).apply(du_dx);
}

} // namespace kshk
