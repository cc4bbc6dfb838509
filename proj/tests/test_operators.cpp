#include <doctest.h>

#include "semiprop/operators.hpp"

using namespace semiprop;

TEST_CASE("normal ordering") {
    SUBCASE("canonical: a1 a1+ -> a1+ a1 + 1") {
        Family fam = Family::canonical(1, 6);
        auto poly = make_poly(fam, {{cplx(1.0), {"a1", "a1+"}}});
        REQUIRE(poly.terms().size() == 2);
        // sorted by degree: identity first, then a1+ a1
        CHECK(poly.terms()[0].ops.empty());
        CHECK(poly.terms()[0].coeff.value == cplx(1.0));
        REQUIRE(poly.terms()[1].ops.size() == 2);
        CHECK(poly.terms()[1].ops[0].kind == GenKind::Create);
        CHECK(poly.terms()[1].ops[1].kind == GenKind::Annihilate);
        // the matrices agree with the unordered product
        MatrixXcd direct = monomial_matrix(fam, {parse_generator(fam, "a1"), parse_generator(fam, "a1+")});
        MatrixXcd built = matrix_representation(fam, poly, 0.0);
        // truncation makes the top-right corner differ; compare the interior
        Eigen::Index n = fam.hilbert_dim() - 1;
        CHECK((direct.topLeftCorner(n, n) - built.topLeftCorner(n, n)).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("empty spec is the zero operator") {
        Family fam = Family::spin({1.0});
        auto poly = build_poly(fam, std::vector<Term>{});
        CHECK(poly.empty());
        CHECK(matrix_representation(fam, poly, 0.0).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("sun: E12 E21 is already ordered; E21 E12 picks up corrections") {
        Family fam = Family::sun(2, 2);
        auto ordered = make_poly(fam, {{cplx(1.0), {"E12", "E21"}}});
        REQUIRE(ordered.terms().size() == 1);
        CHECK(to_string(ordered.terms()[0].ops[0]) == "E1,2");
        CHECK(to_string(ordered.terms()[0].ops[1]) == "E2,1");

        auto swapped = make_poly(fam, {{cplx(1.0), {"E21", "E12"}}});
        // E21 E12 = E12 E21 + E22 - E11
        MatrixXcd direct = monomial_matrix(fam, {parse_generator(fam, "E21"), parse_generator(fam, "E12")});
        CHECK((matrix_representation(fam, swapped, 0.0) - direct).cwiseAbs().maxCoeff() < 1e-14);
        bool has_linear = false;
        for (const auto& t : swapped.terms())
            if (t.ops.size() == 1) has_linear = true;
        CHECK(has_linear);
    }
    SUBCASE("spin ordering J+ then Jz then J-") {
        Family fam = Family::spin({1.5});
        auto poly = make_poly(fam, {{cplx(1.0), {"J-1", "Jz1", "J+1"}}});
        MatrixXcd direct = monomial_matrix(fam, {parse_generator(fam, "J-1"),
                                                 parse_generator(fam, "Jz1"),
                                                 parse_generator(fam, "J+1")});
        CHECK((matrix_representation(fam, poly, 0.0) - direct).cwiseAbs().maxCoeff() < 1e-12);
        for (const auto& t : poly.terms()) {
            int last_rank = -1;
            for (const auto& g : t.ops) {
                int rank = g.kind == GenKind::JPlus ? 0 : (g.kind == GenKind::JZ ? 1 : 2);
                CHECK(rank >= last_rank);
                last_rank = rank;
            }
        }
    }
}

TEST_CASE("generator parsing and validation") {
    Family canonical = Family::canonical(2, 4);
    Family spin = Family::spin({0.5});
    Family sun = Family::sun(3, 1);
    CHECK(parse_generator(canonical, "a2†").kind == GenKind::Create);
    CHECK(parse_generator(canonical, "a2+").i == 1);
    CHECK(parse_generator(spin, "J+1").kind == GenKind::JPlus);
    CHECK(parse_generator(sun, "E13").j == 2);
    CHECK(parse_generator(sun, "E1,3").j == 2);
    CHECK_THROWS_AS(parse_generator(canonical, "J+1"), UnknownGenerator);
    CHECK_THROWS_AS(parse_generator(canonical, "b1"), UnknownGenerator);
    CHECK_THROWS_AS(parse_generator(canonical, "a3"), IndexOutOfRange);
    CHECK_THROWS_AS(parse_generator(sun, "E14"), IndexOutOfRange);
}

TEST_CASE("matrix representations") {
    SUBCASE("spin J=1/2: Jz is diag(-hbar/2, +hbar/2)") {
        Family fam = Family::spin({0.5});
        auto poly = make_poly(fam, {{cplx(1.0), {"Jz1"}}});
        MatrixXcd m = matrix_representation(fam, poly, 0.0);
        CHECK(std::abs(m(0, 0) - cplx(-0.5)) < 1e-15);
        CHECK(std::abs(m(1, 1) - cplx(0.5)) < 1e-15);
        CHECK(std::abs(m(0, 1)) + std::abs(m(1, 0)) == 0.0);
    }
    SUBCASE("canonical cutoff 3: a+a is the number operator") {
        Family fam = Family::canonical(1, 3);
        auto poly = make_poly(fam, {{cplx(1.0), {"a1+", "a1"}}});
        MatrixXcd m = matrix_representation(fam, poly, 0.0);
        for (int k = 0; k <= 3; ++k) CHECK(std::abs(m(k, k) - cplx(double(k))) < 1e-15);
    }
    SUBCASE("zero polynomial gives the zero matrix") {
        Family fam = Family::sun(2, 3);
        auto poly = make_poly(fam, {{cplx(0.0), {"E12"}}});
        CHECK(matrix_representation(fam, poly, 0.0).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("Casimir J^2 = J(J+1) hbar^2 on single spins") {
        for (double J : {0.5, 1.0, 2.5}) {
            Family fam = Family::spin({J});
            auto poly = make_poly(fam, {{cplx(1.0), {"Jz1", "Jz1"}},
                                         {cplx(0.5), {"J+1", "J-1"}},
                                         {cplx(0.5), {"J-1", "J+1"}}});
            MatrixXcd m = matrix_representation(fam, poly, 0.0);
            MatrixXcd want = J * (J + 1.0) * MatrixXcd::Identity(fam.hilbert_dim(), fam.hilbert_dim());
            CHECK((m - want).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("hermiticity of hermitian builds") {
        Family fam = Family::spin({1.0, 0.5});
        auto poly = make_poly(fam, {{cplx(0.7), {"Jz1"}},
                                     {cplx(0.5), {"J+1", "J-2"}},
                                     {cplx(0.5), {"J+2", "J-1"}},
                                     {cplx(0.3), {"Jz2", "Jz2"}}});
        CHECK(is_hermitian(fam, poly, 0.0));
        auto skew = make_poly(fam, {{cplx(0.0, 1.0), {"Jz1"}}});
        CHECK(!is_hermitian(fam, skew, 0.0));
    }
    SUBCASE("time-dependent coefficients sample pointwise") {
        Family fam = Family::canonical(1, 4);
        Term t;
        t.coeff = Coefficient(std::function<cplx(double)>([](double tt) { return cplx(tt, 0.0); }));
        t.ops = {parse_generator(fam, "a1+"), parse_generator(fam, "a1")};
        auto poly = build_poly(fam, {t});
        CHECK(poly.time_dependent());
        CHECK(std::abs(matrix_representation(fam, poly, 2.0)(1, 1) - cplx(2.0)) < 1e-15);
        CHECK(matrix_representation(fam, poly, 0.0).cwiseAbs().maxCoeff() == 0.0);
    }
}
