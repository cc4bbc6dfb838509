#include <doctest.h>

#include <random>

#include "semiprop/exact.hpp"
#include "semiprop/linalg.hpp"
#include "semiprop/propagator.hpp"

using namespace semiprop;

namespace {
VectorXcd vec1(cplx a) {
    VectorXcd v(1);
    v << a;
    return v;
}

Trajectory solve_with_riccati(const Family& fam, const OperatorPolynomial& H, const VectorXcd& z_i,
                              const VectorXcd& z_f_star, double T, int n_samples = 17) {
    BvpOptions opts;
    opts.ode_tol = 1e-12;
    opts.newton_tol = 1e-11;
    opts.final_integration.n_samples = n_samples;
    opts.final_integration.with_riccati = true;
    return solve_bvp(fam, H, z_i, z_f_star, 0.0, T, z_i.conjugate(), opts);
}
} // namespace

TEST_CASE("action closed forms") {
    SUBCASE("harmonic oscillator with the half quantum") {
        Family fam = Family::canonical(1, 32);
        double w = 1.0, T = 1.7;
        auto H = make_poly(fam, {{cplx(w), {"a1+", "a1"}}, {cplx(0.5 * w), {}}});
        VectorXcd z_i = vec1(cplx(0.7, 0.3)), z_f_star = vec1(cplx(-0.2, -0.5));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, T);
        cplx want = z_f_star[0] * z_i[0] * std::exp(cplx(0.0, -w * T)) - cplx(0.0, 0.5 * w * T);
        CHECK(std::abs(action(fam, H, tr) - want) < 1e-9);
    }
    SUBCASE("T = 0 leaves only the boundary term") {
        Family fam = Family::spin({1.0});
        auto H = make_poly(fam, {{cplx(1.0), {"Jz1"}}});
        VectorXcd z_i = vec1(cplx(0.4, 0.1)), z_f_star = vec1(cplx(0.2, -0.3));
        Trajectory tr = solve_bvp(fam, H, z_i, z_f_star, 0.0, 0.0, z_i.conjugate());
        cplx want = kahler(fam, z_f_star, z_i).f;
        CHECK(std::abs(action(fam, H, tr) - want) < 1e-12);
    }
    SUBCASE("spin precession: 2J ln(1 + z_f* z_i e^{-iwT}) + iJwT") {
        double w = 1.0, T = 2.3;
        for (double J : {0.5, 1.0, 5.0}) {
            Family fam = Family::spin({J});
            auto H = make_poly(fam, {{cplx(w), {"Jz1"}}});
            VectorXcd z_i = vec1(cplx(0.5, 0.2)), z_f_star = vec1(cplx(0.3, -0.4));
            Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, T);
            cplx want = 2.0 * J * std::log(1.0 + z_f_star[0] * z_i[0] * std::exp(cplx(0.0, -w * T))) +
                        cplx(0.0, J * w * T);
            CHECK(std::abs(action(fam, H, tr) - want) < 1e-9);
        }
    }
}

TEST_CASE("correction term closed forms") {
    SUBCASE("harmonic oscillator: iwT/2") {
        Family fam = Family::canonical(1, 32);
        double w = 1.3, T = 0.9;
        auto H = make_poly(fam, {{cplx(w), {"a1+", "a1"}}});
        VectorXcd z_i = vec1(cplx(0.4, 0.1)), z_f_star = vec1(cplx(0.2, 0.2));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, T);
        CHECK(std::abs(correction_term(fam, H, tr) - cplx(0.0, 0.5 * w * T)) < 1e-10);
    }
    SUBCASE("constant hamiltonian has no correction") {
        Family fam = Family::spin({1.0});
        auto H = make_poly(fam, {{cplx(0.7), {}}});
        VectorXcd z_i = vec1(cplx(0.3, 0.0)), z_f_star = vec1(cplx(0.1, 0.1));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, 1.1);
        CHECK(std::abs(correction_term(fam, H, tr)) < 1e-12);
    }
    SUBCASE("spin precession: iwT/2 independent of J") {
        double w = 0.8, T = 1.6;
        for (double J : {0.5, 2.0}) {
            Family fam = Family::spin({J});
            auto H = make_poly(fam, {{cplx(w), {"Jz1"}}});
            VectorXcd z_i = vec1(cplx(0.5, -0.2)), z_f_star = vec1(cplx(0.25, 0.3));
            Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, T);
            CHECK(std::abs(correction_term(fam, H, tr) - cplx(0.0, 0.5 * w * T)) < 1e-10);
        }
    }
}

TEST_CASE("normalization term") {
    SUBCASE("canonical at the origin") {
        Family fam = Family::canonical(1, 16);
        CHECK(normalization_term(fam, vec1(0.0), vec1(0.0)) == 0.0);
    }
    SUBCASE("canonical z_i=1, z_f=2: -(4+1)/2") {
        Family fam = Family::canonical(1, 16);
        CHECK(normalization_term(fam, vec1(1.0), vec1(2.0)) == doctest::Approx(-2.5).epsilon(1e-14));
    }
    SUBCASE("spin J=1, z_i=1, z_f=0: -ln 2") {
        Family fam = Family::spin({1.0});
        CHECK(normalization_term(fam, vec1(1.0), vec1(0.0)) ==
              doctest::Approx(-std::log(2.0)).epsilon(1e-14));
    }
}

TEST_CASE("prefactor") {
    SUBCASE("harmonic oscillator: ln C = -iwT/2") {
        Family fam = Family::canonical(1, 32);
        double w = 1.0, T = 2.2;
        auto H = make_poly(fam, {{cplx(w), {"a1+", "a1"}}});
        VectorXcd z_i = vec1(cplx(0.7, 0.3)), z_f_star = vec1(cplx(-0.2, -0.5));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, T);
        CHECK(std::abs(prefactor(fam, H, tr) - cplx(0.0, -0.5 * w * T)) < 1e-10);
    }
    SUBCASE("T = 0: ln C = 0") {
        Family fam = Family::sun(2, 3);
        auto H = make_poly(fam, {{cplx(1.0), {"E12"}}, {cplx(1.0), {"E21"}}});
        VectorXcd z_i = vec1(cplx(0.2, 0.1)), z_f_star = vec1(cplx(0.3, -0.1));
        Trajectory tr = solve_bvp(fam, H, z_i, z_f_star, 0.0, 0.0, z_i.conjugate());
        CHECK(std::abs(prefactor(fam, H, tr)) < 1e-14);
    }
    SUBCASE("continuous accumulation matches the pointwise value (spin precession)") {
        Family fam = Family::spin({1.0});
        double w = 1.0, T = 1.9;
        auto H = make_poly(fam, {{cplx(w), {"Jz1"}}});
        VectorXcd z_i = vec1(cplx(0.6, 0.1)), z_f_star = vec1(cplx(0.35, -0.25));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, T);
        cplx lnc = prefactor(fam, H, tr);
        // pointwise: C^4 = [det g(t_i)/det g(t_f)] / det(M22)^2, branch free
        const auto& s0 = tr.initial();
        const auto& s1 = tr.final();
        cplx detg_i = metric(fam, s0.point.zbar, s0.point.z).determinant();
        cplx detg_f = metric(fam, s1.point.zbar, s1.point.z).determinant();
        cplx detM22 = s1.tangent.M22.determinant();
        cplx want4 = detg_i / detg_f / (detM22 * detM22);
        CHECK(std::abs(std::exp(4.0 * lnc) - want4) < 1e-8 * std::max(1.0, std::abs(want4)));
    }
}

TEST_CASE("riccati route for the reduced propagator") {
    SUBCASE("free evolution: G11 stays zero") {
        Family fam = Family::spin({1.5});
        auto H = build_poly(fam, std::vector<Term>{});
        VectorXcd z_i = vec1(cplx(0.3, 0.2));
        IntegrationOptions opts;
        opts.with_riccati = true;
        Trajectory tr = integrate_trajectory(fam, H, z_i, z_i.conjugate(), 0.0, 1.0, 1e-12, opts);
        CHECK(tr.final().G11.cwiseAbs().maxCoeff() < 1e-13);
        CHECK(std::abs(riccati_reduced_propagator(fam, H, tr)) < 1e-13);
    }
    SUBCASE("harmonic oscillator: both routes give ln K_red = 0") {
        // Atil = Ctil = 0 keeps G11 = 0, and the Btil trace cancels the
        // prefactor against the correction term exactly
        Family fam = Family::canonical(1, 32);
        double w = 1.0, T = 1.4;
        auto H = make_poly(fam, {{cplx(w), {"a1+", "a1"}}});
        VectorXcd z_i = vec1(cplx(0.7, 0.3)), z_f_star = vec1(cplx(-0.2, -0.5));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, T);
        cplx ric = riccati_reduced_propagator(fam, H, tr);
        cplx tan = ln_reduced_propagator_tangent(fam, H, tr);
        CHECK(std::abs(ric) < 1e-10);
        CHECK(std::abs(tan) < 1e-10);
    }
    SUBCASE("one-axis twisting J=5: riccati equals tangent within 1e-6") {
        Family fam = Family::spin({5.0});
        for (double chiT : {0.05, 0.1, 0.2}) {
            auto H = make_poly(fam, {{cplx(chiT), {"Jz1", "Jz1"}}});
            VectorXcd z_i = vec1(cplx(0.5, 0.15)), z_f_star = vec1(cplx(0.4, -0.1));
            Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, 1.0);
            cplx ric = riccati_reduced_propagator(fam, H, tr);
            cplx tan = ln_reduced_propagator_tangent(fam, H, tr);
            CHECK(std::abs(ric - tan) < 1e-6);
        }
    }
    SUBCASE("SU(3) trimer: matrix Theta path agrees too") {
        Family fam = Family::sun(3, 3);
        auto H = make_poly(fam, {{cplx(1.0), {"E12"}},
                                 {cplx(1.0), {"E21"}},
                                 {cplx(0.6), {"E23"}},
                                 {cplx(0.6), {"E32"}},
                                 {cplx(0.3), {"E1,1", "E1,1"}}});
        VectorXcd z_i(2), z_f_star(2);
        z_i << cplx(0.3, 0.1), cplx(-0.15, 0.2);
        z_f_star << cplx(0.25, -0.1), cplx(0.1, 0.12);
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, 0.8);
        cplx ric = riccati_reduced_propagator(fam, H, tr);
        cplx tan = ln_reduced_propagator_tangent(fam, H, tr);
        CHECK(std::abs(ric - tan) < 1e-6);
    }
    SUBCASE("theta squares back to the metric wherever the route runs") {
        Family fam = Family::sun(3, 2);
        auto H = make_poly(fam, {{cplx(1.0), {"E12"}}, {cplx(1.0), {"E21"}}});
        std::mt19937_64 rng(13);
        std::normal_distribution<double> g(0.0, 0.3);
        for (int trial = 0; trial < 20; ++trial) {
            PhasePoint p;
            p.z = VectorXcd(2);
            p.zbar = VectorXcd(2);
            for (int j = 0; j < 2; ++j) {
                p.z[j] = cplx(g(rng), g(rng));
                p.zbar[j] = cplx(g(rng), g(rng));
            }
            auto sv = second_variation_matrices(fam, H, p, 0.0);
            MatrixXcd gm = metric(fam, p.zbar, p.z);
            CHECK((sv.Theta * sv.Theta - gm).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("second variation matrices") {
    std::vector<std::pair<Family, OperatorPolynomial>> cases;
    {
        Family fam = Family::canonical(1, 40);
        cases.push_back({fam, make_poly(fam, {{cplx(1.0), {"a1+", "a1"}},
                                              {cplx(0.3), {"a1+", "a1+", "a1", "a1"}}})});
    }
    {
        Family fam = Family::spin({2.0});
        cases.push_back({fam, make_poly(fam, {{cplx(0.7), {"Jz1"}}, {cplx(0.35), {"Jz1", "Jz1"}}})});
    }
    {
        Family fam = Family::sun(3, 3);
        cases.push_back({fam, make_poly(fam, {{cplx(1.0), {"E12"}},
                                              {cplx(1.0), {"E21"}},
                                              {cplx(0.5), {"E23"}},
                                              {cplx(0.5), {"E32"}},
                                              {cplx(0.3), {"E2,2", "E2,2"}}})});
    }
    std::mt19937_64 rng(37);
    std::normal_distribution<double> g(0.0, 0.3);
    auto rand_point = [&](const Family& fam) {
        PhasePoint p;
        p.z = VectorXcd(fam.dim());
        p.zbar = VectorXcd(fam.dim());
        for (int j = 0; j < fam.dim(); ++j) {
            p.z[j] = cplx(g(rng), g(rng));
            p.zbar[j] = cplx(g(rng), g(rng));
        }
        return p;
    };

    SUBCASE("three equivalent forms agree at random trajectory points") {
        for (auto& [fam, H] : cases) {
            for (int trial = 0; trial < 10; ++trial) {
                PhasePoint p = rand_point(fam);
                MatrixXcd A1, B1, C1, A2, B2, C2, A3, B3, C3;
                variation_abc(fam, H, p, 0.0, VariationForm::Definition, A1, B1, C1);
                variation_abc(fam, H, p, 0.0, VariationForm::Hessian, A2, B2, C2);
                variation_abc(fam, H, p, 0.0, VariationForm::FieldJacobian, A3, B3, C3);
                CHECK((A1 - A2).cwiseAbs().maxCoeff() < 1e-8);
                CHECK((B1 - B2).cwiseAbs().maxCoeff() < 1e-8);
                CHECK((C1 - C2).cwiseAbs().maxCoeff() < 1e-8);
                CHECK((A2 - A3).cwiseAbs().maxCoeff() < 1e-8);
                CHECK((B2 - B3).cwiseAbs().maxCoeff() < 1e-8);
                CHECK((C2 - C3).cwiseAbs().maxCoeff() < 1e-8);
            }
        }
    }
    SUBCASE("A and C are symmetric") {
        for (auto& [fam, H] : cases) {
            for (int trial = 0; trial < 10; ++trial) {
                PhasePoint p = rand_point(fam);
                MatrixXcd A, B, C;
                variation_abc(fam, H, p, 0.0, VariationForm::Hessian, A, B, C);
                CHECK((A - A.transpose()).cwiseAbs().maxCoeff() < 1e-10);
                CHECK((C - C.transpose()).cwiseAbs().maxCoeff() < 1e-10);
            }
        }
    }
    SUBCASE("trace identity tr[xi B] = tr(R11 - R22)/2") {
        for (auto& [fam, H] : cases) {
            for (int trial = 0; trial < 10; ++trial) {
                PhasePoint p = rand_point(fam);
                MatrixXcd A, B, C;
                variation_abc(fam, H, p, 0.0, VariationForm::Hessian, A, B, C);
                MatrixXcd xi = metric_inverse(fam, p.zbar, p.z);
                StabilityBlocks R = stability_blocks(fam, H, p, 0.0);
                cplx lhs = (xi * B).trace();
                cplx rhs = 0.5 * (R.R11.trace() - R.R22.trace());
                CHECK(std::abs(lhs - rhs) < 1e-8);
            }
        }
    }
}

TEST_CASE("assembled semiclassical propagator") {
    SUBCASE("harmonic oscillator is exact") {
        Family fam = Family::canonical(1, 32);
        double w = 1.0, T = 2.4;
        auto H = make_poly(fam, {{cplx(w), {"a1+", "a1"}}, {cplx(0.5 * w), {}}});
        VectorXcd z_i = vec1(cplx(0.7, 0.3)), z_f = vec1(cplx(-0.2, 0.5));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f.conjugate(), T);
        auto c = evaluate_contribution(fam, H, tr);
        cplx ksc = assemble_ksc(fam, H, {c});
        cplx want = std::exp(-0.5 * std::norm(z_f[0]) - 0.5 * std::norm(z_i[0]) +
                             std::conj(z_f[0]) * z_i[0] * std::exp(cplx(0.0, -w * T)) -
                             cplx(0.0, 0.5 * w * T));
        CHECK(std::abs(ksc - want) < 1e-9 * std::abs(want));
    }
    SUBCASE("T = 0 reproduces the overlap") {
        for (const Family& fam : {Family::canonical(1, 24), Family::spin({1.5}), Family::sun(3, 2)}) {
            OperatorPolynomial H =
                fam.kind() == FamilyKind::Canonical
                    ? make_poly(fam, {{cplx(1.0), {"a1+", "a1"}}})
                    : (fam.kind() == FamilyKind::Spin ? make_poly(fam, {{cplx(1.0), {"Jz1"}}})
                                                      : make_poly(fam, {{cplx(1.0), {"E12"}},
                                                                        {cplx(1.0), {"E21"}}}));
            VectorXcd z_i(fam.dim()), z_f(fam.dim());
            for (int j = 0; j < fam.dim(); ++j) {
                z_i[j] = cplx(0.4, 0.1 - 0.05 * j);
                z_f[j] = cplx(-0.2 + 0.1 * j, 0.3);
            }
            Trajectory tr = solve_bvp(fam, H, z_i, z_f.conjugate(), 0.0, 0.0, z_i.conjugate());
            cplx ksc = assemble_ksc(fam, H, {evaluate_contribution(fam, H, tr)});
            cplx want = overlap(fam, z_f.conjugate(), z_i, true);
            CHECK(std::abs(ksc - want) < 1e-12);
        }
    }
    SUBCASE("spin precession J=1/2 closed form") {
        Family fam = Family::spin({0.5});
        double w = 1.0, T = 1.8;
        auto H = make_poly(fam, {{cplx(w), {"Jz1"}}});
        VectorXcd z_i = vec1(cplx(0.6, -0.1)), z_f = vec1(cplx(0.3, 0.4));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f.conjugate(), T);
        cplx ksc = assemble_ksc(fam, H, {evaluate_contribution(fam, H, tr)});
        cplx u = std::conj(z_f[0]) * z_i[0] * std::exp(cplx(0.0, -w * T));
        cplx want = std::exp(cplx(0.0, 0.5 * w * T)) * (1.0 + u) /
                    std::sqrt((1.0 + std::norm(z_f[0])) * (1.0 + std::norm(z_i[0])));
        CHECK(std::abs(ksc - want) < 1e-9 * std::abs(want));
    }
    SUBCASE("empty contribution set is an error") {
        Family fam = Family::spin({0.5});
        auto H = make_poly(fam, {{cplx(1.0), {"Jz1"}}});
        CHECK_THROWS_AS(assemble_ksc(fam, H, {}), EmptyContributionSet);
    }
}

TEST_CASE("prefactor branch continuity on a long twisting trajectory") {
    Family fam = Family::spin({5.0});
    auto H = make_poly(fam, {{cplx(0.25), {"Jz1", "Jz1"}}});
    VectorXcd z_i = vec1(cplx(0.8, 0.1));
    IntegrationOptions opts;
    opts.n_samples = 101;
    Trajectory tr = integrate_trajectory(fam, H, z_i, z_i.conjugate(), 0.0, 6.0, 1e-11, opts);
    cplx prev{};
    for (size_t k = 0; k < tr.samples.size(); ++k) {
        const auto& s = tr.samples[k];
        cplx lnc = 0.5 * (-0.5 * s.lndetg_acc - s.lndetM22_acc);
        if (k > 0) CHECK(std::abs(lnc - prev) < M_PI); // no branch jumps
        prev = lnc;
        // pointwise cross-check, branch free through the 4th power
        cplx detg_i = metric(fam, tr.initial().point.zbar, tr.initial().point.z).determinant();
        cplx detg_t = metric(fam, s.point.zbar, s.point.z).determinant();
        cplx detM22 = s.tangent.M22.determinant();
        cplx want4 = detg_i / detg_t / (detM22 * detM22);
        CHECK(std::abs(std::exp(4.0 * lnc) - want4) < 1e-7 * std::max(1.0, std::abs(want4)));
    }
}

TEST_CASE("action derivative checks") {
    SUBCASE("harmonic oscillator") {
        Family fam = Family::canonical(1, 32);
        auto H = make_poly(fam, {{cplx(1.0), {"a1+", "a1"}}, {cplx(0.5), {}}});
        VectorXcd z_i = vec1(cplx(0.7, 0.3)), z_f_star = vec1(cplx(-0.2, -0.5));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, 1.3, 5);
        auto rep = action_derivatives_check(fam, H, tr);
        CHECK(rep.max_rel_err_first <= 1e-5);
        CHECK(rep.max_rel_err_second <= 1e-4);
    }
    SUBCASE("spin precession") {
        Family fam = Family::spin({1.0});
        auto H = make_poly(fam, {{cplx(1.0), {"Jz1"}}});
        VectorXcd z_i = vec1(cplx(0.5, 0.2)), z_f_star = vec1(cplx(0.3, -0.4));
        Trajectory tr = solve_with_riccati(fam, H, z_i, z_f_star, 1.9, 5);
        auto rep = action_derivatives_check(fam, H, tr);
        CHECK(rep.max_rel_err_first <= 1e-5);
        CHECK(rep.max_rel_err_second <= 1e-4);
    }
}

TEST_CASE("focal flag and branch failures") {
    SUBCASE("a focal-flagged trajectory refuses to produce a prefactor") {
        Family fam = Family::canonical(1, 24);
        auto H = make_poly(fam, {{cplx(1.0), {"a1+", "a1"}}});
        VectorXcd z_i = vec1(cplx(0.3, 0.1)), z_f_star = vec1(cplx(0.2, 0.0));
        Trajectory tr = solve_bvp(fam, H, z_i, z_f_star, 0.0, 1.0, z_i.conjugate());
        CHECK(std::isfinite(tr.diagnostics.min_abs_detM22));
        CHECK(tr.diagnostics.min_abs_detM22 > 0.0);
        tr.diagnostics.focal = true; // contract: flagged contributions are not silently returned
        CHECK_THROWS_AS(prefactor(fam, H, tr), FocalPoint);
    }
    SUBCASE("metric eigenvalue on the cut fails the principal square root") {
        Family fam = Family::spin({1.0});
        auto H = make_poly(fam, {{cplx(1.0), {"Jz1"}}});
        // 1 + zbar z purely imaginary makes g negative real
        PhasePoint p{vec1(cplx(-1.0, 0.5)), vec1(cplx(1.0, 0.0))};
        CHECK_THROWS_AS(second_variation_matrices(fam, H, p, 0.0), SqrtBranchFailure);
    }
}

TEST_CASE("coupled two-spin system end to end") {
    // d = 2 with a diagonal metric and an interaction term; semiclassical vs
    // exact stays at the percent level and the fluctuation routes agree
    Family fam = Family::spin({1.5, 1.0});
    auto H = make_poly(fam, {{cplx(1.0), {"Jz1"}},
                             {cplx(0.7), {"Jz2"}},
                             {cplx(0.25), {"Jz1", "Jz2"}}});
    VectorXcd z_i(2), z_f(2);
    z_i << cplx(0.5, 0.1), cplx(0.3, -0.2);
    z_f << cplx(0.4, -0.1), cplx(0.2, 0.25);
    BvpOptions opts;
    opts.ode_tol = 1e-11;
    opts.final_integration.with_riccati = true;
    Trajectory tr = solve_bvp(fam, H, z_i, z_f.conjugate(), 0.0, 1.2, z_i.conjugate(), opts);
    cplx ric = riccati_reduced_propagator(fam, H, tr);
    cplx tan = ln_reduced_propagator_tangent(fam, H, tr);
    CHECK(std::abs(ric - tan) < 1e-6);

    cplx ksc = assemble_ksc(fam, H, {evaluate_contribution(fam, H, tr)});
    auto exact = [&] {
        MatrixXcd h = matrix_representation(fam, H, 0.0);
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es(h);
        VectorXcd phases = (-cplx(0.0, 1.2) * es.eigenvalues().array()).exp().matrix();
        MatrixXcd u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
        return cplx(state_vector(fam, z_f, true).dot(u * state_vector(fam, z_i, true)));
    }();
    CHECK(std::abs(ksc - exact) / std::abs(exact) < 0.05); // J's are small; 1/J regime
}

TEST_CASE("spurious-contribution filter") {
    Family fam = Family::spin({0.5});
    auto H = make_poly(fam, {{cplx(1.0), {"Jz1"}}});
    PropagatorContribution good;
    good.iS_over_hbar = cplx(-0.3, 0.4);
    good.lambda = -0.1;
    good.amplitude = std::exp(good.iS_over_hbar + good.lambda);
    PropagatorContribution spurious;
    spurious.iS_over_hbar = cplx(0.8, -0.2); // |exp(iS/h + Lambda)| = e^{0.7} > 1
    spurious.lambda = -0.1;
    spurious.amplitude = std::exp(spurious.iS_over_hbar + spurious.lambda);

    AssemblyOptions filter_on;
    filter_on.filter_spurious = true;
    CHECK(std::abs(assemble_ksc(fam, H, {good, spurious}, filter_on) - good.amplitude) < 1e-15);
    CHECK(std::abs(assemble_ksc(fam, H, {good, spurious}) -
                   (good.amplitude + spurious.amplitude)) < 1e-15);
    CHECK_THROWS_AS(assemble_ksc(fam, H, {spurious}, filter_on), EmptyContributionSet);
}

TEST_CASE("driven harmonic oscillator: time-dependent semiclassics stays exact") {
    // H(t) = w a+a + f(t)(a+ + a) is quadratic; the Gaussian kernel
    // {z_f|U|z_i} = exp(A + B zbar_f + C z_i + D zbar_f z_i) obeys
    //   i Bdot = w B + f,  i Cdot = f D,  i Adot = f B,  i Ddot = w D,
    // which a fixed-step RK4 solves to machine precision as an oracle
    Family fam = Family::canonical(1, 24);
    double w = 1.0, T = 1.9;
    auto drive = [](double t) { return 0.3 * std::cos(2.2 * t); };
    Term t0;
    t0.coeff = Coefficient(cplx(w));
    t0.ops = {parse_generator(fam, "a1+"), parse_generator(fam, "a1")};
    Term t1;
    t1.coeff = Coefficient(std::function<cplx(double)>([&](double t) { return cplx(drive(t), 0.0); }));
    t1.ops = {parse_generator(fam, "a1+")};
    Term t2;
    t2.coeff = Coefficient(std::function<cplx(double)>([&](double t) { return cplx(drive(t), 0.0); }));
    t2.ops = {parse_generator(fam, "a1")};
    auto H = build_poly(fam, {t0, t1, t2});

    VectorXcd z_i = vec1(cplx(0.5, 0.2)), z_f = vec1(cplx(0.2, -0.3));

    // oracle: scalar coefficient ODEs
    cplx A{}, B{}, C{}, D{1.0};
    {
        const int n = 20000;
        double h = T / n;
        auto rhs = [&](double t, const Eigen::Vector4cd& y) {
            cplx f = drive(t);
            Eigen::Vector4cd dy;
            dy[0] = cplx(0, -1) * f * y[1];          // A
            dy[1] = cplx(0, -1) * (w * y[1] + f);    // B
            dy[2] = cplx(0, -1) * f * y[3];          // C
            dy[3] = cplx(0, -1) * w * y[3];          // D
            return dy;
        };
        Eigen::Vector4cd y;
        y << A, B, C, D;
        for (int s = 0; s < n; ++s) {
            double t = s * h;
            Eigen::Vector4cd k1 = rhs(t, y);
            Eigen::Vector4cd k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
            Eigen::Vector4cd k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
            Eigen::Vector4cd k4 = rhs(t + h, y + h * k3);
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        A = y[0];
        B = y[1];
        C = y[2];
        D = y[3];
    }
    cplx kernel = std::exp(A + B * std::conj(z_f[0]) + C * z_i[0] + D * std::conj(z_f[0]) * z_i[0]);
    cplx want = std::exp(-0.5 * std::norm(z_f[0]) - 0.5 * std::norm(z_i[0])) * kernel;

    BvpOptions opts;
    opts.ode_tol = 1e-12;
    opts.newton_tol = 1e-11;
    Trajectory tr = solve_bvp(fam, H, z_i, z_f.conjugate(), 0.0, T, z_i.conjugate(), opts);
    cplx ksc = assemble_ksc(fam, H, {evaluate_contribution(fam, H, tr)});
    CHECK(std::abs(ksc - want) < 1e-8 * std::abs(want));

    // the Magnus-stepped oracle converges onto the same amplitude
    cplx kex = propagate_exact(fam, H, z_i, z_f, 0.0, T, 1e-6).amplitude;
    CHECK(std::abs(kex - want) < 1e-5 * std::abs(want));
}

TEST_CASE("hbar threads consistently through the pipeline") {
    // spin precession amplitudes are hbar-free; both sides must agree for
    // any hbar if the factors are threaded correctly
    VectorXcd z_i = vec1(cplx(0.5, 0.2)), z_f = vec1(cplx(0.3, -0.4));
    double w = 1.0, T = 1.4, J = 1.0;
    cplx ref;
    bool have_ref = false;
    for (double hbar : {1.0, 0.5, 2.0}) {
        Family fam = Family::spin({J}, hbar);
        auto H = make_poly(fam, {{cplx(w), {"Jz1"}}});
        Trajectory tr = solve_bvp(fam, H, z_i, z_f.conjugate(), 0.0, T, z_i.conjugate());
        cplx ksc = assemble_ksc(fam, H, {evaluate_contribution(fam, H, tr)});
        cplx kex = propagate_exact(fam, H, z_i, z_f, 0.0, T).amplitude;
        CHECK(std::abs(ksc - kex) < 1e-9 * std::abs(kex));
        if (!have_ref) {
            ref = kex;
            have_ref = true;
        }
        CHECK(std::abs(ksc - ref) < 1e-9 * std::abs(ref));
    }
}

TEST_CASE("two uncoupled modes factorize") {
    Family fam = Family::canonical(2, 16);
    double w1 = 1.0, w2 = 0.6, T = 1.3;
    auto H = make_poly(fam, {{cplx(w1), {"a1+", "a1"}}, {cplx(w2), {"a2+", "a2"}}});
    VectorXcd z_i(2), z_f(2);
    z_i << cplx(0.5, 0.2), cplx(-0.3, 0.1);
    z_f << cplx(0.2, -0.4), cplx(0.4, 0.3);
    Trajectory tr = solve_bvp(fam, H, z_i, z_f.conjugate(), 0.0, T, z_i.conjugate());
    cplx ksc = assemble_ksc(fam, H, {evaluate_contribution(fam, H, tr)});
    auto mode = [&](int j, double w) {
        return std::exp(-0.5 * std::norm(z_f[j]) - 0.5 * std::norm(z_i[j]) +
                        std::conj(z_f[j]) * z_i[j] * std::exp(cplx(0.0, -w * T)));
    };
    cplx want = mode(0, w1) * mode(1, w2);
    CHECK(std::abs(ksc - want) < 1e-9 * std::abs(want));
}
