#include <doctest.h>

#include <random>

#include "semiprop/hamiltonian.hpp"

using namespace semiprop;

namespace {
VectorXcd vec1(cplx a) {
    VectorXcd v(1);
    v << a;
    return v;
}

PhasePoint random_point(const Family& fam, std::mt19937_64& rng, double sigma = 0.4) {
    std::normal_distribution<double> g(0.0, sigma);
    while (true) {
        PhasePoint p;
        p.z.resize(fam.dim());
        p.zbar.resize(fam.dim());
        for (int j = 0; j < fam.dim(); ++j) {
            p.z[j] = cplx(g(rng), g(rng));
            p.zbar[j] = cplx(g(rng), g(rng));
        }
        try {
            forms::check_regular(fam.data(), forms::to_std(p.zbar), forms::to_std(p.z));
        } catch (const SingularPoint&) {
            continue;
        }
        // stay clear of the singular set: the (1 + zbar z)^{2J} overlap loses
        // digits to cancellation as it vanishes
        bool ok = true;
        if (fam.kind() == FamilyKind::Spin) {
            for (int k = 0; k < fam.dim(); ++k)
                if (std::abs(1.0 + p.zbar[k] * p.z[k]) < 0.4) ok = false;
        } else if (fam.kind() == FamilyKind::SuN) {
            cplx s = p.zbar.transpose() * p.z;
            if (std::abs(1.0 + s) < 0.4) ok = false;
        }
        if (ok) return p;
    }
}
} // namespace

TEST_CASE("effective hamiltonian closed forms") {
    SUBCASE("canonical number hamiltonian: H = hbar w zbar z") {
        Family fam = Family::canonical(1, 32);
        double w = 1.3;
        auto H = make_poly(fam, {{cplx(w), {"a1+", "a1"}}});
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            PhasePoint p = random_point(fam, rng);
            auto ev = effective_hamiltonian(fam, H, p, 0.0);
            cplx want = w * p.zbar[0] * p.z[0];
            CHECK(std::abs(ev.value - want) < 1e-10);
            CHECK(std::abs(ev.grad_zbar[0] - w * p.z[0]) < 1e-10);
            CHECK(std::abs(ev.grad_z[0] - w * p.zbar[0]) < 1e-10);
            CHECK(std::abs(ev.hess_zzbar(0, 0) - cplx(w)) < 1e-10);
            CHECK(std::abs(ev.hess_zz(0, 0)) < 1e-10);
            CHECK(std::abs(ev.hess_zbarzbar(0, 0)) < 1e-10);
        }
    }
    SUBCASE("spin precession: H = w hbar J (zbar z - 1)/(1 + zbar z)") {
        double w = 0.8;
        for (double J : {0.5, 1.0, 5.0}) {
            Family fam = Family::spin({J});
            auto H = make_poly(fam, {{cplx(w), {"Jz1"}}});
            std::mt19937_64 rng(17);
            for (int trial = 0; trial < 20; ++trial) {
                PhasePoint p = random_point(fam, rng);
                cplx u = p.zbar[0] * p.z[0];
                cplx want = w * J * (u - 1.0) / (1.0 + u);
                CHECK(std::abs(effective_hamiltonian_value(fam, H, p, 0.0) - want) < 1e-11 * (1 + std::abs(want)));
            }
        }
    }
    SUBCASE("reference point picks out the reference matrix element") {
        Family fam = Family::sun(3, 2);
        auto H = make_poly(fam, {{cplx(0.7), {"E1,1"}}, {cplx(0.4), {"E12"}}, {cplx(0.4), {"E21"}}});
        PhasePoint p{VectorXcd::Zero(2), VectorXcd::Zero(2)};
        cplx got = effective_hamiltonian_value(fam, H, p, 0.0);
        MatrixXcd m = matrix_representation(fam, H, 0.0);
        CHECK(std::abs(got - m(0, 0)) < 1e-13); // reference state |0,0,N> is index 0
    }
    SUBCASE("vanishing duplicated overlap is singular") {
        Family fam = Family::spin({0.5});
        auto H = make_poly(fam, {{cplx(1.0), {"Jz1"}}});
        // {zbar*|z} = (1 + zbar z)^{2J} = 0 at zbar z = -1
        PhasePoint p{vec1(cplx(0.0, 1.0)), vec1(cplx(0.0, 1.0))};
        CHECK_THROWS_AS(effective_hamiltonian_value(fam, H, p, 0.0), SingularPoint);
    }
}

TEST_CASE("dual-number derivatives match finite differences") {
    std::mt19937_64 rng(23);
    std::vector<std::pair<Family, OperatorPolynomial>> cases;
    {
        Family fam = Family::canonical(1, 40);
        cases.push_back({fam, make_poly(fam, {{cplx(1.0), {"a1+", "a1"}},
                                              {cplx(0.3), {"a1+", "a1+", "a1", "a1"}},
                                              {cplx(0.2), {"a1+"}},
                                              {cplx(0.2), {"a1"}}})});
    }
    {
        Family fam = Family::spin({1.5});
        cases.push_back({fam, make_poly(fam, {{cplx(0.9), {"Jz1"}},
                                              {cplx(0.4), {"Jz1", "Jz1"}},
                                              {cplx(0.25), {"J+1"}},
                                              {cplx(0.25), {"J-1"}}})});
    }
    {
        Family fam = Family::sun(3, 3);
        cases.push_back({fam, make_poly(fam, {{cplx(1.0), {"E12"}},
                                              {cplx(1.0), {"E21"}},
                                              {cplx(0.5), {"E23"}},
                                              {cplx(0.5), {"E32"}},
                                              {cplx(0.3), {"E1,1", "E1,1"}}})});
    }
    const double h = 1e-6;
    for (auto& [fam, H] : cases) {
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            PhasePoint p = random_point(fam, rng, 0.3);
            auto ev = effective_hamiltonian(fam, H, p, 0.0);
            for (int j = 0; j < fam.dim(); ++j) {
                PhasePoint pp = p, pm = p;
                pp.z[j] += h;
                pm.z[j] -= h;
                cplx fd = (effective_hamiltonian_value(fam, H, pp, 0.0) -
                           effective_hamiltonian_value(fam, H, pm, 0.0)) /
                          (2.0 * h);
                worst = std::max(worst, std::abs(fd - ev.grad_z[j]) / std::max(1.0, std::abs(fd)));
                pp = p;
                pm = p;
                pp.zbar[j] += h;
                pm.zbar[j] -= h;
                fd = (effective_hamiltonian_value(fam, H, pp, 0.0) -
                      effective_hamiltonian_value(fam, H, pm, 0.0)) /
                     (2.0 * h);
                worst = std::max(worst, std::abs(fd - ev.grad_zbar[j]) / std::max(1.0, std::abs(fd)));
            }
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("hessians match finite differences of dual gradients") {
    std::mt19937_64 rng(29);
    Family fam = Family::sun(3, 2);
    auto H = make_poly(fam, {{cplx(1.0), {"E12"}},
                             {cplx(1.0), {"E21"}},
                             {cplx(0.4), {"E2,2", "E2,2"}}});
    const double h = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        PhasePoint p = random_point(fam, rng, 0.3);
        auto ev = effective_hamiltonian(fam, H, p, 0.0);
        for (int k = 0; k < fam.dim(); ++k) {
            PhasePoint pp = p, pm = p;
            pp.z[k] += h;
            pm.z[k] -= h;
            auto gp = effective_hamiltonian(fam, H, pp, 0.0);
            auto gm = effective_hamiltonian(fam, H, pm, 0.0);
            for (int j = 0; j < fam.dim(); ++j) {
                cplx fd = (gp.grad_z[j] - gm.grad_z[j]) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - ev.hess_zz(j, k)));
                fd = (gp.grad_zbar[j] - gm.grad_zbar[j]) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - ev.hess_zzbar(k, j))); // note: [z][zbar]
            }
            pp = p;
            pm = p;
            pp.zbar[k] += h;
            pm.zbar[k] -= h;
            gp = effective_hamiltonian(fam, H, pp, 0.0);
            gm = effective_hamiltonian(fam, H, pm, 0.0);
            for (int j = 0; j < fam.dim(); ++j) {
                cplx fd = (gp.grad_zbar[j] - gm.grad_zbar[j]) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - ev.hess_zbarzbar(j, k)));
            }
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("physical-slice properties") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 0.5);
    SUBCASE("hermitian H gives real energy on zbar = z*") {
        for (const Family& fam : {Family::canonical(1, 40), Family::spin({2.0}), Family::sun(2, 4)}) {
            OperatorPolynomial H =
                fam.kind() == FamilyKind::Canonical
                    ? make_poly(fam, {{cplx(1.0), {"a1+", "a1"}}, {cplx(0.2), {"a1+"}}, {cplx(0.2), {"a1"}}})
                    : (fam.kind() == FamilyKind::Spin
                           ? make_poly(fam, {{cplx(1.0), {"Jz1"}}, {cplx(0.5), {"Jz1", "Jz1"}}})
                           : make_poly(fam, {{cplx(1.0), {"E12"}}, {cplx(1.0), {"E21"}}}));
            for (int trial = 0; trial < 20; ++trial) {
                VectorXcd z(fam.dim());
                for (int j = 0; j < fam.dim(); ++j) z[j] = cplx(g(rng), g(rng));
                PhasePoint p{z, z.conjugate()};
                cplx v = effective_hamiltonian_value(fam, H, p, 0.0);
                CHECK(std::abs(v.imag()) < 1e-12 * std::max(1.0, std::abs(v)));
            }
        }
    }
    SUBCASE("both prescriptions agree on the slice") {
        Family fam = Family::spin({1.5});
        auto H = make_poly(fam, {{cplx(0.8), {"Jz1"}}, {cplx(0.3), {"J+1", "J-1"}}});
        MatrixXcd m = matrix_representation(fam, H, 0.0);
        for (int trial = 0; trial < 20; ++trial) {
            VectorXcd z = vec1(cplx(g(rng), g(rng)));
            PhasePoint p{z, z.conjugate()};
            cplx ratio = effective_hamiltonian_value(fam, H, p, 0.0);
            HilbertVector v = state_vector(fam, z, true);
            cplx expect = v.dot(m * v);
            CHECK(std::abs(ratio - expect) < 1e-10 * std::max(1.0, std::abs(expect)));
        }
    }
}
