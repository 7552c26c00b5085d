#include "doctest.h"

#include "kshk/errors.hpp"
#include "kshk/fluid.hpp"

#include <cmath>
#include <random>

using namespace kshk;

namespace {

std::mt19937 rng_at(unsigned seed) { return std::mt19937(seed); }

HydroState random_state(std::mt19937& rng) {
    std::uniform_real_distribution<double> ur(0.3, 3.0);
    std::uniform_real_distribution<double> uu(-2.0, 2.0);
    return HydroState{ur(rng), uu(rng), ur(rng)};
}

} // namespace

TEST_CASE("to_conserved matches the moment identities") {
    const ConservedState w = to_conserved(HydroState{1.0, 0.0, 1.0});
    CHECK(w.rho == doctest::Approx(1.0));
    CHECK(w.m == doctest::Approx(0.0));
    CHECK(w.E == doctest::Approx(1.5));

    const ConservedState w2 = to_conserved(HydroState{2.0, 0.0, 0.5});
    CHECK(w2.E == doctest::Approx(1.5));
}

TEST_CASE("conserved round trip") {
    auto rng = rng_at(991);
    for (int i = 0; i < 100; ++i) {
        const HydroState v = random_state(rng);
        const HydroState back = from_conserved(to_conserved(v));
        CHECK(back.rho == doctest::Approx(v.rho).epsilon(1e-14));
        CHECK(back.u == doctest::Approx(v.u).epsilon(1e-14));
        CHECK(back.T == doctest::Approx(v.T).epsilon(1e-14));
    }
}

TEST_CASE("from_conserved solves for temperature") {
    const HydroState v = from_conserved(ConservedState{1.0, 0.0, 1.5});
    CHECK(v.rho == doctest::Approx(1.0));
    CHECK(v.T == doctest::Approx(1.0));

    const HydroState v2 = from_conserved(ConservedState{1.0, 1.0, 1.0});
    CHECK(v2.u == doctest::Approx(1.0));
    CHECK(v2.T == doctest::Approx(1.0 / 3.0));

    CHECK_THROWS_AS(from_conserved(ConservedState{1.0, 0.0, -1.0}),
                    NonPhysicalState);
    CHECK_THROWS_AS(from_conserved(ConservedState{-1.0, 0.0, 1.0}),
                    NonPhysicalState);
}

TEST_CASE("euler flux values") {
    const ConservedState f = euler_flux(HydroState{1.0, 0.0, 1.0});
    CHECK(f.rho == doctest::Approx(0.0));
    CHECK(f.m == doctest::Approx(1.0));
    CHECK(f.E == doctest::Approx(0.0));

    const ConservedState g = euler_flux(HydroState{1.0, 1.0, 1e-15});
    CHECK(g.rho == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.m == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.E == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("flux jacobians match finite differences") {
    const HydroState v{1.0, 0.3, 1.2};
    const double h = 1e-5;
    const Eigen::Matrix3d J1 = flux1_jacobian(v);
    const Eigen::Matrix3d J0 = flux0_jacobian(v);
    for (int c = 0; c < 3; ++c) {
        HydroState vp = v, vm = v;
        (c == 0 ? vp.rho : c == 1 ? vp.u : vp.T) += h;
        (c == 0 ? vm.rho : c == 1 ? vm.u : vm.T) -= h;
        const ConservedState fp = euler_flux(vp), fm = euler_flux(vm);
        const ConservedState wp = to_conserved(vp), wm = to_conserved(vm);
        const Eigen::Vector3d d1((fp.rho - fm.rho) / (2 * h),
                                 (fp.m - fm.m) / (2 * h),
                                 (fp.E - fm.E) / (2 * h));
        const Eigen::Vector3d d0((wp.rho - wm.rho) / (2 * h),
                                 (wp.m - wm.m) / (2 * h),
                                 (wp.E - wm.E) / (2 * h));
        CHECK((J1.col(c) - d1).lpNorm<Eigen::Infinity>() < 1e-6);
        CHECK((J0.col(c) - d0).lpNorm<Eigen::Infinity>() < 1e-6);
    }
}

TEST_CASE("determinant of the conserved-variable jacobian") {
    auto rng = rng_at(313);
    for (int i = 0; i < 20; ++i) {
        const HydroState v = random_state(rng);
        CHECK(flux0_jacobian(v).determinant()
              == doctest::Approx(1.5 * v.rho * v.rho).epsilon(1e-12));
    }
}

TEST_CASE("characteristic fields at the reference state") {
    const CharFields cf = char_fields(HydroState{1.0, 0.0, 1.0});
    CHECK(cf.c == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-14));
    CHECK(cf.rvecs(0, 2) == doctest::Approx(0.5809475019311126).epsilon(1e-12));
    CHECK(cf.rvecs(1, 2) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(cf.rvecs(2, 2) == doctest::Approx(0.3872983346207417).epsilon(1e-12));
    CHECK(cf.lambdas[0] < cf.lambdas[1]);
    CHECK(cf.lambdas[1] < cf.lambdas[2]);
}

TEST_CASE("generalized eigenvalue residuals vanish") {
    auto rng = rng_at(771);
    for (int i = 0; i < 100; ++i) {
        const HydroState v = random_state(rng);
        const CharFields cf = char_fields(v);
        const Eigen::Matrix3d f0 = flux0_jacobian(v);
        const Eigen::Matrix3d f1 = flux1_jacobian(v);
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector3d res =
                (cf.lambdas[k] * f0 - f1) * cf.rvecs.col(k);
            CHECK(res.lpNorm<Eigen::Infinity>() < 1e-12);
        }
    }
}

TEST_CASE("genuine nonlinearity normalization and degeneracy") {
    auto rng = rng_at(552);
    const double h = 1e-6;
    for (int i = 0; i < 20; ++i) {
        const HydroState v = random_state(rng);
        const CharFields cf = char_fields(v);
        auto lam = [](const HydroState& w, int k) {
            return char_fields(w).lambdas[k];
        };
        for (int k : {0, 2}) {
            const Eigen::Vector3d r = cf.rvecs.col(k);
            const HydroState vp{v.rho + h * r(0), v.u + h * r(1),
                                v.T + h * r(2)};
            const HydroState vm{v.rho - h * r(0), v.u - h * r(1),
                                v.T - h * r(2)};
            const double d = (lam(vp, k) - lam(vm, k)) / (2 * h);
            CHECK(d == doctest::Approx(1.0).epsilon(1e-8));
        }
        const Eigen::Vector3d r2 = cf.rvecs.col(1);
        const HydroState vp{v.rho + h * r2(0), v.u + h * r2(1),
                            v.T + h * r2(2)};
        const HydroState vm{v.rho - h * r2(0), v.u - h * r2(1),
                            v.T - h * r2(2)};
        CHECK(std::abs((lam(vp, 1) - lam(vm, 1)) / (2 * h)) < 1e-8);
    }
}

TEST_CASE("rh_solve zero amplitude returns the upstream state") {
    const RHSolution sol = rh_solve(HydroState{1.0, 0.0, 1.0}, 0.0);
    CHECK(sol.v_plus.rho == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(sol.v_plus.u == doctest::Approx(0.0).epsilon(1e-13));
    CHECK(sol.v_plus.T == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(sol.speed == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-13));
}

TEST_CASE("rh_solve small amplitude asymptotics") {
    const HydroState vm{1.0, 0.0, 1.0};
    const CharFields cf = char_fields(vm);
    const double lam3 = cf.lambdas[2];

    const RHSolution sol = rh_solve(vm, 0.01);
    CHECK(std::abs(sol.speed - 1.2859944) <= 1e-3);
    const Eigen::Vector3d pred =
        Eigen::Vector3d(1.0, 0.0, 1.0) - 0.01 * cf.rvecs.col(2);
    CHECK(std::abs(sol.v_plus.rho - pred(0)) <= 5e-4);
    CHECK(std::abs(sol.v_plus.u - pred(1)) <= 5e-4);
    CHECK(std::abs(sol.v_plus.T - pred(2)) <= 5e-4);

    // residual of the jump conditions at the solution
    auto jump = [&](const RHSolution& s) {
        const ConservedState f1p = euler_flux(s.v_plus);
        const ConservedState f1m = euler_flux(s.v_minus);
        const ConservedState f0p = to_conserved(s.v_plus);
        const ConservedState f0m = to_conserved(s.v_minus);
        Eigen::Vector3d r;
        r << f1p.rho - f1m.rho - s.speed * (f0p.rho - f0m.rho),
            f1p.m - f1m.m - s.speed * (f0p.m - f0m.m),
            f1p.E - f1m.E - s.speed * (f0p.E - f0m.E);
        return r.lpNorm<Eigen::Infinity>();
    };
    CHECK(jump(sol) < 1e-12);

    // second-order remainder: errors shrink by ~4 when epsilon halves
    double err_v[3], err_s[3];
    const double eps[3] = {0.02, 0.01, 0.005};
    for (int i = 0; i < 3; ++i) {
        const RHSolution s = rh_solve(vm, eps[i]);
        const Eigen::Vector3d lin =
            Eigen::Vector3d(1.0, 0.0, 1.0) - eps[i] * cf.rvecs.col(2);
        err_v[i] = (Eigen::Vector3d(s.v_plus.rho, s.v_plus.u, s.v_plus.T) - lin)
                       .norm();
        err_s[i] = std::abs(s.speed - (lam3 - 0.5 * eps[i]));
        // Lax entropy condition with the strict inequalities of a 3-shock
        CHECK(char_fields(s.v_plus).lambdas[2] <= s.speed + 1e-10);
        CHECK(s.speed <= lam3 + 1e-10);
    }
    CHECK(err_v[0] / err_v[1] == doctest::Approx(4.0).epsilon(0.25));
    CHECK(err_v[1] / err_v[2] == doctest::Approx(4.0).epsilon(0.25));
    CHECK(err_s[0] / err_s[1] == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("rh_solve input validation") {
    CHECK_THROWS(rh_solve(HydroState{1.0, 0.0, 1.0}, 0.5));
    CHECK_THROWS_AS(rh_solve(HydroState{-1.0, 0.0, 1.0}, 0.01),
                    NonPhysicalState);
}
