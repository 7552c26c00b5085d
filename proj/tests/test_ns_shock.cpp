#include "doctest.h"

#include "kshk/errors.hpp"
#include "kshk/ns_shock.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

using namespace kshk;

namespace {

std::string cache_dir() {
    if (const char* env = std::getenv("KSHK_CACHE_DIR")) return env;
    return "kshk_cache";
}

const CollisionTensor& tensor4() {
    static const CollisionTensor t = [] {
        const KernelParams par;
        const QuadratureConfig quad = QuadratureConfig::defaults_for(4);
        return load_or_assemble(build_index_set(4), par, quad,
                                cache_dir() + "/" +
                                    tensor_cache_name(4, par, quad));
    }();
    return t;
}

// kappa = 0: the tensors are cached with a zero lift weight.
const TransportModel& model0() {
    static const TransportModel m = transport_from_tensor(tensor4());
    return m;
}

const NSProfile& profile05() {
    static const NSProfile p = solve_profile(shock_frame(0.05), model0());
    return p;
}

std::pair<double, double> real_eigenvalues(const Eigen::Matrix2d& J) {
    const Eigen::EigenSolver<Eigen::Matrix2d> es(J);
    REQUIRE(es.info() == Eigen::Success);
    REQUIRE(std::abs(es.eigenvalues()(0).imag()) <= 1e-12);
    const double l0 = es.eigenvalues()(0).real();
    const double l1 = es.eigenvalues()(1).real();
    return {std::min(l0, l1), std::max(l0, l1)};
}

} // namespace

TEST_CASE("reduced field has rest points exactly at the frame endpoints") {
    const ShockFrame fr = shock_frame(0.05);
    const TransportModel& m = model0();

    CHECK(fr.v_minus.rho == 1.0);
    CHECK(fr.v_minus.u == 0.0);
    CHECK(fr.v_minus.T == 1.0);
    CHECK(fr.epsilon == 0.05);

    const auto [du_m, dT_m] = reduced_ode(fr.v_minus, fr, m);
    CHECK(du_m == 0.0);
    CHECK(dT_m == 0.0);

    const auto [du_p, dT_p] = reduced_ode(fr.v_plus, fr, m);
    CHECK(std::abs(du_p) <= 1e-10);
    CHECK(std::abs(dT_p) <= 1e-10);

    CHECK_THROWS_AS(reduced_ode(HydroState{1.0, fr.speed, 1.0}, fr, m),
                    DegenerateMassFlux);
    CHECK_THROWS_AS(reduced_ode(HydroState{1.0, 0.0, -1.0}, fr, m),
                    NonPhysicalState);
}

TEST_CASE("reduced field points from the left state toward the right one") {
    const ShockFrame fr = shock_frame(0.05);
    const TransportModel& m = model0();

    // saddle at v_-: real eigenvalues of opposite sign, unstable rate O(eps)
    const Eigen::Matrix2d Jm = endpoint_linearization(fr.v_minus, fr, m);
    const auto [lam_stab, lam_unst] = real_eigenvalues(Jm);
    CHECK(Jm.determinant() < 0.0);
    CHECK(lam_stab < 0.0);
    CHECK(lam_unst > 0.0);
    CHECK(lam_unst / fr.epsilon >= 1.0);
    CHECK(lam_unst / fr.epsilon <= 6.0);

    // attracting node at v_+
    const Eigen::Matrix2d Jp = endpoint_linearization(fr.v_plus, fr, m);
    const auto [lam_fast, lam_slow] = real_eigenvalues(Jp);
    CHECK(lam_fast < 0.0);
    CHECK(lam_slow < 0.0);

    // field at the chord midpoint advances toward v_+ in both components
    const double um = 0.5 * (fr.v_minus.u + fr.v_plus.u);
    const double Tm = 0.5 * (fr.v_minus.T + fr.v_plus.T);
    const double j = fr.v_minus.rho * (fr.v_minus.u - fr.speed);
    const HydroState mid{j / (um - fr.speed), um, Tm};
    const auto [du, dT] = reduced_ode(mid, fr, m);
    CHECK(du < 0.0);
    CHECK(dT < 0.0);
    const double toward = du * (fr.v_plus.u - fr.v_minus.u) +
                          dT * (fr.v_plus.T - fr.v_minus.T);
    CHECK(toward > 0.0);
}

TEST_CASE("profile attains the endpoints under the pinned normalization") {
    const ShockFrame fr = shock_frame(0.05);
    const NSProfile& p = profile05();
    const int n = static_cast<int>(p.states.size());

    REQUIRE(n == 801);
    CHECK(p.grid(0) == -200.0);
    CHECK(p.grid(n - 1) == 200.0);
    CHECK(p.grid((n - 1) / 2) == 0.0);

    auto state_gap = [](const HydroState& a, const HydroState& b) {
        return std::max(std::abs(a.rho - b.rho),
                        std::max(std::abs(a.u - b.u), std::abs(a.T - b.T)));
    };
    CHECK(state_gap(p.states.front(), fr.v_minus) <= 1e-6);
    CHECK(state_gap(p.states.back(), fr.v_plus) <= 1e-6);

    const double u_mid = 0.5 * (fr.v_minus.u + fr.v_plus.u);
    CHECK(std::abs(p.states[(n - 1) / 2].u - u_mid) <= 1e-12);

    double residual = 0.0, chain = 0.0;
    for (int i = 0; i < n; ++i) {
        CHECK(p.states[i].valid());
        const auto [du, dT] = reduced_ode(p.states[i], fr, model0());
        residual = std::max(residual, std::abs(du - p.deriv[i](1)));
        residual = std::max(residual, std::abs(dT - p.deriv[i](2)));
        const double rel = p.states[i].u - fr.speed;
        chain = std::max(chain, std::abs(p.deriv[i](0) +
                                         p.states[i].rho * p.deriv[i](1) / rel));
    }
    CHECK(residual <= 1e-9);
    CHECK(chain <= 1e-12);
}

TEST_CASE("profile velocity is monotone and the entropy flux dissipates") {
    const NSProfile& p = profile05();
    const int n = static_cast<int>(p.states.size());

    // strictly decreasing u wherever the slope is resolvable above roundoff
    for (int i = 0; i + 1 < n; ++i) {
        CHECK(p.states[i + 1].u <= p.states[i].u);
        if (std::abs(p.deriv[i](1)) > 1e-13 &&
            std::abs(p.deriv[i + 1](1)) > 1e-13)
            CHECK(p.states[i + 1].u < p.states[i].u);
    }

    const ProfileReport rep = profile_diagnostics(p, model0());
    CHECK(rep.flux_invariance <= 1e-8);
    CHECK(rep.entropy_flux_difference < 0.0);
    CHECK(rep.center_slope > 0.0);
}

TEST_CASE("tail decay rates match the endpoint linearizations") {
    const ShockFrame fr = shock_frame(0.05);
    const ProfileReport rep = profile_diagnostics(profile05(), model0());

    const auto [lm0, lam_unst] =
        real_eigenvalues(endpoint_linearization(fr.v_minus, fr, model0()));
    const auto [lp0, lam_slow] =
        real_eigenvalues(endpoint_linearization(fr.v_plus, fr, model0()));
    CHECK(lam_unst > 0.0);
    CHECK(lam_slow < 0.0);

    // the outer third mixes the linearized tail (slope exactly the
    // eigenvalue) with a stretch of integrated orbit whose last decade
    // sits at the integrator noise floor; the fit lands within ~3e-4
    CHECK(rep.decay_rate_left ==
          doctest::Approx(lam_unst).epsilon(2e-3));
    CHECK(rep.decay_rate_right ==
          doctest::Approx(-lam_slow).epsilon(2e-3));

    // the fitted exponent is O(eps); the measured constant sits near 3.5
    // for these transport coefficients, so the window is kept wide
    for (double rate : {rep.decay_rate_left, rep.decay_rate_right}) {
        CHECK(rate >= 0.25 * fr.epsilon);
        CHECK(rate <= 6.0 * fr.epsilon);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "decay left %.17g right %.17g unst %.17g",
                  rep.decay_rate_left, rep.decay_rate_right, lam_unst);
    MESSAGE(buf);
}

TEST_CASE("slope magnitudes scale as the amplitude squared") {
    const NSProfile& p1 = profile05();
    const NSProfile p2 = solve_profile(shock_frame(0.025), model0());

    auto max_du = [](const NSProfile& p) {
        double m = 0.0;
        for (const auto& d : p.deriv) m = std::max(m, std::abs(d(1)));
        return m;
    };
    const double ratio_max = max_du(p1) / max_du(p2);
    CHECK(ratio_max >= 2.8);
    CHECK(ratio_max <= 5.2);

    const ProfileReport r1 = profile_diagnostics(p1, model0());
    const ProfileReport r2 = profile_diagnostics(p2, model0());
    CHECK(r2.flux_invariance <= 1e-8);

    const double ratio_center = r1.center_slope / r2.center_slope;
    CHECK(ratio_center >= 2.8);
    CHECK(ratio_center <= 5.2);

    // decay exponent is linear in eps
    const double ratio_decay = r1.decay_rate_right / r2.decay_rate_right;
    CHECK(ratio_decay >= 1.4);
    CHECK(ratio_decay <= 2.6);

    char buf[160];
    std::snprintf(buf, sizeof buf, "ratios max %.17g center %.17g decay %.17g",
                  ratio_max, ratio_center, ratio_decay);
    MESSAGE(buf);
}

TEST_CASE("resampling is stable under grid refinement") {
    const ShockFrame fr = shock_frame(0.05);
    const NSProfile& coarse = profile05();
    const NSProfile fine = solve_profile(fr, model0(), ProfileGrid{10.0, 1601});

    double gap = 0.0;
    for (int i = 0; i < 801; ++i) {
        REQUIRE(fine.grid(2 * i) == coarse.grid(i));
        gap = std::max(gap, std::abs(fine.states[2 * i].u - coarse.states[i].u));
        gap = std::max(gap, std::abs(fine.states[2 * i].T - coarse.states[i].T));
        gap = std::max(gap,
                       std::abs(fine.states[2 * i].rho - coarse.states[i].rho));
    }
    CHECK(gap <= 1e-8);

    CHECK_THROWS_AS(solve_profile(fr, model0(), ProfileGrid{7.0, 801}),
                    GridTooShort);
    CHECK_THROWS_AS(solve_profile(fr, model0(), ProfileGrid{10.0, 2}),
                    ValidationError);
}

TEST_CASE("profile lift reproduces each node's conserved moments") {
    const NSProfile& p = profile05();
    const CollisionTensor& t = tensor4();
    const double kappa = 0.05;

    const ProfileField cont = lift_profile(p, t, kappa, LiftMode::continuum);
    const ProfileField disc = lift_profile(p, t, kappa, LiftMode::discretized);
    const int n = static_cast<int>(p.states.size());
    REQUIRE(static_cast<int>(cont.nodes.size()) == n);
    REQUIRE(static_cast<int>(disc.nodes.size()) == n);

    double moment_gap = 0.0, split_gap = 0.0, cross = 0.0;
    for (int i = 0; i < n; ++i) {
        const ConservedState w = to_conserved(p.states[i]);
        for (const ProfileField* f : {&cont, &disc}) {
            const ConservedState mw = moments(f->nodes[i]);
            moment_gap = std::max(moment_gap, std::abs(mw.rho - w.rho));
            moment_gap = std::max(moment_gap, std::abs(mw.m - w.m));
            moment_gap = std::max(moment_gap, std::abs(mw.E - w.E));
        }
        const MacroState a = conserved_to_macro(w);
        const MacroState am = macro_split(disc.nodes[i]).first;
        split_gap = std::max(split_gap, std::abs(am.a0 - a.a0));
        split_gap = std::max(split_gap, std::abs(am.a1 - a.a1));
        split_gap = std::max(split_gap, std::abs(am.a2 - a.a2));
        cross = std::max(cross,
                         (disc.nodes[i].coeffs - cont.nodes[i].coeffs).norm());
    }
    CHECK(moment_gap <= 1e-10);
    CHECK(split_gap <= 1e-10);
    CHECK(cross <= 1e-3);
    CHECK(cross >= 1e-8);
    char buf[120];
    std::snprintf(buf, sizeof buf, "moments %.3g split %.3g cross %.6g",
                  moment_gap, split_gap, cross);
    MESSAGE(buf);
}

TEST_CASE("lift at the reference state is the reference Maxwellian") {
    const CollisionTensor& t = tensor4();
    NSProfile ref;
    ref.frame = shock_frame(0.05);
    ref.grid = Eigen::VectorXd::Zero(1);
    ref.states = {HydroState{1.0, 0.0, 1.0}};
    ref.deriv = {Eigen::Vector3d::Zero()};

    for (LiftMode mode : {LiftMode::continuum, LiftMode::discretized}) {
        const ProfileField f = lift_profile(ref, t, 0.05, mode);
        CHECK(std::abs(f.nodes[0].coeffs(0) - 1.0) <= 1e-12);
        CHECK(f.nodes[0].coeffs.tail(f.nodes[0].coeffs.size() - 1).norm() <=
              1e-12);
    }
}

TEST_CASE("parallel lifting is deterministic") {
    const NSProfile& p = profile05();
    const CollisionTensor& t = tensor4();
    const ProfileField serial =
        lift_profile(p, t, 0.05, LiftMode::discretized, 1);
    const ProfileField par = lift_profile(p, t, 0.05, LiftMode::discretized, 3);
    for (std::size_t i = 0; i < serial.nodes.size(); ++i)
        CHECK((serial.nodes[i].coeffs - par.nodes[i].coeffs).norm() == 0.0);
}
