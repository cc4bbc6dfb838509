#include "semiprop/exact.hpp"

#include <Eigen/Eigenvalues>

#include "semiprop/dynamics.hpp"
#include "semiprop/linalg.hpp"
#include "semiprop/propagator.hpp"

namespace semiprop {

namespace {

bool matrix_hermitian(const MatrixXcd& m, double tol = 1e-12) {
    double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

// <z_f| U |z_i> with normalized endpoint states
cplx endpoint_amplitude(const Family& fam, const MatrixXcd& u, const VectorXcd& z_i,
                        const VectorXcd& z_f) {
    HilbertVector vi = state_vector(fam, z_i, true);
    HilbertVector vf = state_vector(fam, z_f, true);
    return vf.dot(u * vi); // Eigen dot conjugates the left argument
}

cplx propagate_once(const Family& fam, const OperatorPolynomial& H, const VectorXcd& z_i,
                    const VectorXcd& z_f, double t_i, double t_f, double tol, ExactResult& meta) {
    const double hbar = fam.hbar();
    if (!H.time_dependent()) {
        meta.method = ExactMethod::Eigendecomposition;
        meta.step_count = 1;
        MatrixXcd h = matrix_representation(fam, H, t_i);
        MatrixXcd u;
        if (matrix_hermitian(h)) {
            Eigen::SelfAdjointEigenSolver<MatrixXcd> es(h);
            VectorXcd phases = (-cplx(0.0, 1.0) * (t_f - t_i) / hbar * es.eigenvalues().array())
                                   .exp()
                                   .matrix();
            u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
        } else {
            u = linalg::expm((-cplx(0.0, 1.0) * (t_f - t_i) / hbar) * h);
        }
        return endpoint_amplitude(fam, u, z_i, z_f);
    }
    meta.method = ExactMethod::SteppedMagnus2;
    cplx prev{};
    bool have_prev = false;
    for (int steps = 16; steps <= (1 << 20); steps *= 2) {
        double dt = (t_f - t_i) / steps;
        MatrixXcd u = MatrixXcd::Identity(fam.hilbert_dim(), fam.hilbert_dim());
        for (int s = 0; s < steps; ++s) {
            double tm = t_i + (s + 0.5) * dt;
            MatrixXcd h = matrix_representation(fam, H, tm);
            u = linalg::expm((-cplx(0.0, 1.0) * dt / hbar) * h) * u;
        }
        cplx amp = endpoint_amplitude(fam, u, z_i, z_f);
        meta.step_count = steps;
        if (have_prev && std::abs(amp - prev) < tol) {
            meta.error_estimate = std::abs(amp - prev);
            return amp;
        }
        prev = amp;
        have_prev = true;
    }
    throw NonConvergentStepping("propagate_exact: Magnus stepping did not converge");
}

} // namespace

ExactResult propagate_exact(const Family& fam, const OperatorPolynomial& H, const VectorXcd& z_i,
                            const VectorXcd& z_f, double t_i, double t_f, double tol) {
    ExactResult res;
    if (fam.kind() != FamilyKind::Canonical) {
        res.amplitude = propagate_once(fam, H, z_i, z_f, t_i, t_f, tol, res);
        return res;
    }
    // canonical: refine the truncation until the amplitude is stable
    double zmax = 0.0;
    for (Eigen::Index j = 0; j < z_i.size(); ++j)
        zmax = std::max({zmax, std::abs(z_i[j]), std::abs(z_f[j])});
    int cutoff = std::max(fam.fock_cutoff(), canonical_cutoff_for(zmax));
    cplx prev{};
    bool have_prev = false;
    for (int iter = 0; iter < 10; ++iter) {
        Family trial = Family::canonical(fam.dim(), cutoff, fam.hbar());
        if (trial.hilbert_dim() > 4096)
            throw TruncationInsufficient("propagate_exact: refinement exceeded the dense-basis budget");
        ExactResult meta;
        cplx amp = propagate_once(trial, H, z_i, z_f, t_i, t_f, tol, meta);
        if (have_prev && std::abs(amp - prev) < tol) {
            res = meta;
            res.amplitude = amp;
            res.error_estimate = std::max(res.error_estimate, std::abs(amp - prev));
            return res;
        }
        prev = amp;
        have_prev = true;
        cutoff *= 2;
    }
    throw TruncationInsufficient("propagate_exact: cutoff refinement did not stabilize");
}

OperatorPolynomial schwinger_image(const OperatorPolynomial& spin_poly, const Family& sun_fam) {
    const Family& sf = spin_poly.family();
    if (sf.kind() != FamilyKind::Spin || sf.dim() != 1)
        throw MappingMismatch("schwinger_image: source must be a single-spin family");
    if (sun_fam.kind() != FamilyKind::SuN || sun_fam.sun_n() != 2)
        throw MappingMismatch("schwinger_image: target must be an SU(2) bosonic family");
    int twoJ = int(std::lround(2.0 * sf.spins()[0]));
    if (sun_fam.sun_N() != twoJ)
        throw MappingMismatch("schwinger_image: need N = 2J, got N=" + std::to_string(sun_fam.sun_N()));
    const double hbar = sf.hbar();

    // expand each spin monomial into a sum of E-monomials
    std::vector<Term> out;
    for (const auto& term : spin_poly.terms()) {
        std::vector<std::pair<cplx, std::vector<Generator>>> partial = {{cplx(1.0), {}}};
        for (const auto& g : term.ops) {
            std::vector<std::pair<cplx, std::vector<Generator>>> next;
            auto append = [&](cplx c, Generator e) {
                for (auto [pc, pops] : partial) {
                    pops.push_back(e);
                    next.push_back({pc * c, std::move(pops)});
                }
            };
            switch (g.kind) {
            case GenKind::JPlus: append(cplx(hbar), Generator{GenKind::E, 0, 1}); break;
            case GenKind::JMinus: append(cplx(hbar), Generator{GenKind::E, 1, 0}); break;
            case GenKind::JZ:
                append(cplx(0.5 * hbar), Generator{GenKind::E, 0, 0});
                append(cplx(-0.5 * hbar), Generator{GenKind::E, 1, 1});
                break;
            default:
                throw MappingMismatch("schwinger_image: non-spin generator in source polynomial");
            }
            partial = std::move(next);
        }
        for (auto& [c, ops] : partial) {
            Term t;
            t.coeff = term.coeff.constant()
                          ? Coefficient(term.coeff.value * c)
                          : Coefficient(std::function<cplx(double)>(
                                [f = term.coeff.fn, c](double tt) { return c * f(tt); }));
            t.ops = std::move(ops);
            out.push_back(std::move(t));
        }
    }
    return build_poly(sun_fam, out);
}

SchwingerReport schwinger_crosscheck(const Family& spin_fam, const OperatorPolynomial& H_spin,
                                     const Family& sun_fam, const OperatorPolynomial& H_sun,
                                     const VectorXcd& z_i, const VectorXcd& z_f, double t_i,
                                     double t_f) {
    if (spin_fam.kind() != FamilyKind::Spin || spin_fam.dim() != 1)
        throw MappingMismatch("schwinger_crosscheck: first family must be a single spin");
    if (sun_fam.kind() != FamilyKind::SuN || sun_fam.sun_n() != 2)
        throw MappingMismatch("schwinger_crosscheck: second family must be SU(2) bosonic");
    int twoJ = int(std::lround(2.0 * spin_fam.spins()[0]));
    if (sun_fam.sun_N() != twoJ || spin_fam.hilbert_dim() != sun_fam.hilbert_dim())
        throw MappingMismatch("schwinger_crosscheck: Hilbert spaces do not correspond (need N = 2J)");

    // under |M> <-> |m1 = J+M, m2 = J-M> both bases enumerate identically,
    // so the mapped Hamiltonian matrices must agree entrywise
    MatrixXcd hs = matrix_representation(spin_fam, H_spin, t_i);
    MatrixXcd hb = matrix_representation(sun_fam, H_sun, t_i);
    double scale = std::max(1.0, hs.cwiseAbs().maxCoeff());
    if ((hs - hb).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw MappingMismatch("schwinger_crosscheck: H_sun is not the Schwinger image of H_spin");

    SchwingerReport rep;
    rep.exact_spin = propagate_exact(spin_fam, H_spin, z_i, z_f, t_i, t_f).amplitude;
    rep.exact_sun = propagate_exact(sun_fam, H_sun, z_i, z_f, t_i, t_f).amplitude;
    rep.exact_abs_diff = std::abs(rep.exact_spin - rep.exact_sun);

    auto ksc = [&](const Family& fam, const OperatorPolynomial& H) {
        auto trajs = enumerate_trajectories(fam, H, z_i, z_f.conjugate(), t_i, t_f, SeedStrategy{});
        if (trajs.empty()) throw NoConvergence("schwinger_crosscheck: no trajectory converged");
        std::vector<PropagatorContribution> cs;
        for (const auto& tr : trajs) cs.push_back(evaluate_contribution(fam, H, tr));
        return assemble_ksc(fam, H, cs);
    };
    rep.ksc_spin = ksc(spin_fam, H_spin);
    rep.ksc_sun = ksc(sun_fam, H_sun);
    rep.sc_abs_diff = std::abs(rep.ksc_spin - rep.ksc_sun);
    return rep;
}

} // namespace semiprop
