#include "semiprop/propagator.hpp"

#include <cmath>

#include "semiprop/linalg.hpp"

namespace semiprop {

using D1 = Dual<cplx>;

// ---------------------------------------------------------------------------
// second variation matrices
// ---------------------------------------------------------------------------
namespace {

// column-k derivative of the metric with respect to z_k (dz=true) or zbar_k
std::vector<MatrixXcd> metric_jacobian(const Family& fam, const PhasePoint& p, bool wrt_z) {
    const int d = fam.dim();
    auto z0 = forms::to_std(p.z);
    auto zb0 = forms::to_std(p.zbar);
    std::vector<MatrixXcd> out(d, MatrixXcd(d, d));
    for (int k = 0; k < d; ++k) {
        std::vector<D1> zz = lift(z0), zb = lift(zb0);
        if (wrt_z) zz[k].d = cplx(1.0);
        else zb[k].d = cplx(1.0);
        SMat<D1> g = forms::metric_at(fam.data(), zb, zz);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) out[k](i, j) = g(i, j).d;
    }
    return out;
}

// f_zz[j][l] = d2 f / dz_j dz_l and its zbar analogue, via duals on the
// closed-form gradients
template <class S>
SMat<S> kahler_hess_zz(const detail::FamilyData& fd, const std::vector<S>& zbar,
                       const std::vector<S>& z) {
    const int d = fd.d;
    SMat<S> h(d, d);
    for (int l = 0; l < d; ++l) {
        std::vector<Dual<S>> zz = lift(z), zb = lift(zbar);
        zz[l].d = S(1.0);
        auto g = forms::kahler_grad_z(fd, zb, zz);
        for (int j = 0; j < d; ++j) h(j, l) = g[j].d;
    }
    return h;
}

template <class S>
SMat<S> kahler_hess_zbzb(const detail::FamilyData& fd, const std::vector<S>& zbar,
                         const std::vector<S>& z) {
    const int d = fd.d;
    SMat<S> h(d, d);
    for (int l = 0; l < d; ++l) {
        std::vector<Dual<S>> zz = lift(z), zb = lift(zbar);
        zb[l].d = S(1.0);
        auto g = forms::kahler_grad_zbar(fd, zb, zz);
        for (int j = 0; j < d; ++j) h(j, l) = g[j].d;
    }
    return h;
}

MatrixXcd to_eig(const SMat<cplx>& m) { return forms::to_eigen(m); }

} // namespace

void variation_abc(const Family& fam, const OperatorPolynomial& H, const PhasePoint& p, double t,
                   VariationForm form, MatrixXcd& A, MatrixXcd& B, MatrixXcd& C) {
    const int d = fam.dim();
    const double hbar = fam.hbar();
    const cplx ih(0.0, 1.0 / hbar);

    if (form == VariationForm::FieldJacobian) {
        StabilityBlocks R = stability_blocks(fam, H, p, t);
        MatrixXcd g = metric(fam, p.zbar, p.z);
        A = -g * R.R21;
        C = g.transpose() * R.R12;
        B = 0.5 * (R.R11.transpose() * g - g * R.R22);
        return;
    }

    EffectiveHamiltonianEval ev = effective_hamiltonian(fam, H, p, t);
    EomRhsResult flow = eom_rhs(fam, H, p, t);
    auto dg_dz = metric_jacobian(fam, p, true);
    auto dg_dzb = metric_jacobian(fam, p, false);

    A.resize(d, d);
    B.resize(d, d);
    C.resize(d, d);

    if (form == VariationForm::Hessian) {
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                cplx a{}, b{}, c{};
                for (int l = 0; l < d; ++l) {
                    a += dg_dz[k](j, l) * flow.zbardot[l];      // d/dz_k (g zbardot)_j
                    c -= dg_dzb[k](l, j) * flow.zdot[l];        // -d/dzbar_k (g^T zdot)_j
                    b += 0.5 * (flow.zbardot[l] * dg_dzb[l](j, k) - flow.zdot[l] * dg_dz[l](j, k));
                }
                A(j, k) = a - ih * ev.hess_zz(j, k);
                C(j, k) = c - ih * ev.hess_zbarzbar(j, k);
                B(j, k) = b - ih * ev.hess_zzbar(j, k);
            }
        return;
    }

    // Definition form: Lagrangian second derivatives with their d/dt pieces
    auto z0 = forms::to_std(p.z);
    auto zb0 = forms::to_std(p.zbar);
    const auto& fd = fam.data();

    // columnwise z / zbar derivatives of f_zz and f_zbzb
    std::vector<MatrixXcd> dfzz_dz(d, MatrixXcd(d, d)), dfzz_dzb(d, MatrixXcd(d, d));
    std::vector<MatrixXcd> dfbb_dz(d, MatrixXcd(d, d)), dfbb_dzb(d, MatrixXcd(d, d));
    for (int k = 0; k < d; ++k) {
        {
            std::vector<D1> zz = lift(z0), zb = lift(zb0);
            zz[k].d = cplx(1.0);
            auto h1 = kahler_hess_zz(fd, zb, zz);
            auto h2 = kahler_hess_zbzb(fd, zb, zz);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    dfzz_dz[k](i, j) = h1(i, j).d;
                    dfbb_dz[k](i, j) = h2(i, j).d;
                }
        }
        {
            std::vector<D1> zz = lift(z0), zb = lift(zb0);
            zb[k].d = cplx(1.0);
            auto h1 = kahler_hess_zz(fd, zb, zz);
            auto h2 = kahler_hess_zbzb(fd, zb, zz);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    dfzz_dzb[k](i, j) = h1(i, j).d;
                    dfbb_dzb[k](i, j) = h2(i, j).d;
                }
        }
    }

    for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
            cplx a{}, b{}, c{};
            for (int l = 0; l < d; ++l) {
                // (i/hbar) d2L/dz2 = 1/2 d/dz [ g zbardot - f_zz zdot ] - (i/hbar) H_zz
                a += 0.5 * (dg_dz[k](j, l) * flow.zbardot[l] - dfzz_dz[k](j, l) * flow.zdot[l]);
                // + 1/2 (zdot d/dz + zbardot d/dzbar) f_zz   [ -d/dt term ]
                a += 0.5 * (flow.zdot[l] * dfzz_dz[l](j, k) + flow.zbardot[l] * dfzz_dzb[l](j, k));
                // (i/hbar) d2L/dzbar2 = 1/2 d/dzbar [ f_bb zbardot - g^T zdot ] - ...
                c += 0.5 * (dfbb_dzb[k](j, l) * flow.zbardot[l] - dg_dzb[k](l, j) * flow.zdot[l]);
                // - 1/2 (zdot d/dz + zbardot d/dzbar) f_bb
                c -= 0.5 * (flow.zdot[l] * dfbb_dz[l](j, k) + flow.zbardot[l] * dfbb_dzb[l](j, k));
                // (i/hbar) d2L/dz dzbar = 1/2 d/dzbar [ g zbardot - f_zz zdot ] - ...
                b += 0.5 * (dg_dzb[k](j, l) * flow.zbardot[l] - dfzz_dzb[k](j, l) * flow.zdot[l]);
            }
            A(j, k) = a - ih * ev.hess_zz(j, k);
            C(j, k) = c - ih * ev.hess_zbarzbar(j, k);
            B(j, k) = b - ih * ev.hess_zzbar(j, k);
        }
}

SecondVariationMatrices second_variation_matrices(const Family& fam, const OperatorPolynomial& H,
                                                  const PhasePoint& p, double t, VariationForm form) {
    SecondVariationMatrices sv;
    variation_abc(fam, H, p, t, form, sv.A, sv.B, sv.C);
    MatrixXcd g = metric(fam, p.zbar, p.z);
    EomRhsResult flow = eom_rhs(fam, H, p, t);
    MatrixXcd gdot = metric_flow_derivative(fam, p, flow.zdot, flow.zbardot);
    sv.Theta = linalg::sqrtm_principal(g);
    sv.ThetaDot = linalg::solve_sylvester_sym(sv.Theta, gdot);
    MatrixXcd thinv = sv.Theta.partialPivLu().inverse();
    sv.Atil = thinv * sv.A * thinv.transpose();
    sv.Ctil = thinv.transpose() * sv.C * thinv;
    sv.Btil = thinv * sv.B * thinv + 0.5 * (thinv * sv.ThetaDot - sv.ThetaDot * thinv);
    return sv;
}

// ---------------------------------------------------------------------------
// contribution pieces
// ---------------------------------------------------------------------------

namespace {

void require_tangent(const Trajectory& traj, const char* who) {
    if (traj.samples.empty() || traj.samples.back().tangent.M22.size() == 0)
        throw Error(std::string(who) + ": trajectory lacks the tangent/quadrature state");
}

} // namespace

cplx action(const Family& fam, const OperatorPolynomial&, const Trajectory& traj) {
    (void)fam;
    require_tangent(traj, "action");
    return traj.final().action_acc;
}

cplx correction_term(const Family& fam, const OperatorPolynomial&, const Trajectory& traj) {
    (void)fam;
    require_tangent(traj, "correction_term");
    return traj.final().correction_acc;
}

double normalization_term(const Family& fam, const VectorXcd& z_i, const VectorXcd& z_f) {
    VectorXcd zic = z_i.conjugate(), zfc = z_f.conjugate();
    cplx fi = forms::kahler_f(fam.data(), forms::to_std(zic), forms::to_std(z_i));
    cplx ff = forms::kahler_f(fam.data(), forms::to_std(zfc), forms::to_std(z_f));
    return -0.5 * ff.real() - 0.5 * fi.real();
}

cplx prefactor(const Family& fam, const OperatorPolynomial&, const Trajectory& traj) {
    (void)fam;
    require_tangent(traj, "prefactor");
    if (traj.diagnostics.focal)
        throw FocalPoint("prefactor: |det M22| fell below 1e-12 along the trajectory");
    const auto& last = traj.final();
    return 0.5 * (-0.5 * last.lndetg_acc - last.lndetM22_acc);
}

cplx riccati_reduced_propagator(const Family&, const OperatorPolynomial&, const Trajectory& traj) {
    if (!traj.riccati_on)
        throw Error("riccati_reduced_propagator: trajectory was integrated without the Riccati block");
    return traj.final().riccati_acc;
}

cplx ln_reduced_propagator_tangent(const Family& fam, const OperatorPolynomial& H,
                                   const Trajectory& traj) {
    return prefactor(fam, H, traj) + correction_term(fam, H, traj);
}

PropagatorContribution evaluate_contribution(const Family& fam, const OperatorPolynomial& H,
                                             const Trajectory& traj) {
    if (traj.z_f_star.size() == 0)
        throw Error("evaluate_contribution: trajectory carries no boundary target");
    PropagatorContribution c;
    c.iS_over_hbar = action(fam, H, traj);
    c.iI_over_hbar = correction_term(fam, H, traj);
    c.lambda = normalization_term(fam, traj.z_i, traj.z_f_star.conjugate());
    c.ln_prefactor = prefactor(fam, H, traj);
    c.amplitude = std::exp(c.iS_over_hbar + c.iI_over_hbar + c.lambda + c.ln_prefactor);
    c.zbar_initial = traj.zbar_i;
    return c;
}

cplx assemble_ksc(const Family&, const OperatorPolynomial&,
                  const std::vector<PropagatorContribution>& contributions,
                  const AssemblyOptions& opts) {
    cplx sum{};
    int used = 0;
    for (const auto& c : contributions) {
        if (opts.filter_spurious &&
            std::abs(std::exp(c.iS_over_hbar + c.lambda)) > 1.0 + opts.spurious_tol)
            continue;
        sum += c.amplitude;
        ++used;
    }
    if (used == 0) throw EmptyContributionSet("assemble_ksc: no contributions to sum");
    return sum;
}

// ---------------------------------------------------------------------------
// action derivative checks
// ---------------------------------------------------------------------------

ActionDerivativeReport action_derivatives_check(const Family& fam, const OperatorPolynomial& H,
                                                const Trajectory& traj, const BvpOptions& opts_in) {
    if (traj.z_f_star.size() == 0)
        throw Error("action_derivatives_check: trajectory carries no boundary target");
    const int d = fam.dim();
    BvpOptions opts = opts_in;
    opts.newton_tol = std::min(opts.newton_tol, 1e-12);
    opts.ode_tol = std::min(opts.ode_tol, 1e-12);
    opts.final_integration.n_samples = 2;
    opts.final_integration.with_riccati = false;

    const VectorXcd z_i = traj.z_i;
    const VectorXcd zf_star = traj.z_f_star;
    const double t_i = traj.t_i, t_f = traj.t_f;
    const VectorXcd seed = traj.zbar_i;

    auto solve = [&](const VectorXcd& zi, const VectorXcd& zfs, double ti, double tf) {
        return solve_bvp(fam, H, zi, zfs, ti, tf, seed, opts);
    };

    ActionDerivativeReport rep;
    // relative against the block scale; the metric and tangent entries are
    // O(1), so exact zeros compare against FD noise at an absolute floor of 1
    auto track = [](double& worst, cplx got, cplx want) {
        double scale = std::max({std::abs(want), std::abs(got), 1.0});
        worst = std::max(worst, std::abs(got - want) / scale);
    };

    const double ht = 1e-5;
    const double hz = 1e-4;

    // (i/hbar) dS/dt_i = +(i/hbar) H(t_i); dS/dt_f = -(i/hbar) H(t_f)
    {
        cplx sp = solve(z_i, zf_star, t_i + ht, t_f).final().action_acc;
        cplx sm = solve(z_i, zf_star, t_i - ht, t_f).final().action_acc;
        cplx fd = (sp - sm) / (2.0 * ht);
        cplx want = cplx(0.0, 1.0 / fam.hbar()) *
                    effective_hamiltonian_value(fam, H, traj.initial().point, t_i);
        track(rep.max_rel_err_first, fd, want);
    }
    {
        cplx sp = solve(z_i, zf_star, t_i, t_f + ht).final().action_acc;
        cplx sm = solve(z_i, zf_star, t_i, t_f - ht).final().action_acc;
        cplx fd = (sp - sm) / (2.0 * ht);
        cplx want = -cplx(0.0, 1.0 / fam.hbar()) *
                    effective_hamiltonian_value(fam, H, traj.final().point, t_f);
        track(rep.max_rel_err_first, fd, want);
    }

    // (i/hbar) dS/dz_i = f_z(zbar(t_i), z_i); (i/hbar) dS/dzbar(t_f) = f_zbar(t_f)
    auto grad_z_at = [&](const PhasePoint& p) {
        return forms::to_eigen(forms::kahler_grad_z(fam.data(), forms::to_std(p.zbar), forms::to_std(p.z)));
    };
    auto grad_zb_at = [&](const PhasePoint& p) {
        return forms::to_eigen(
            forms::kahler_grad_zbar(fam.data(), forms::to_std(p.zbar), forms::to_std(p.z)));
    };
    VectorXcd want_dzi = grad_z_at(traj.initial().point);
    VectorXcd want_dzf = grad_zb_at(traj.final().point);
    for (int j = 0; j < d; ++j) {
        VectorXcd e = VectorXcd::Zero(d);
        e[j] = cplx(hz, 0.0);
        cplx sp = solve(z_i + e, zf_star, t_i, t_f).final().action_acc;
        cplx sm = solve(z_i - e, zf_star, t_i, t_f).final().action_acc;
        track(rep.max_rel_err_first, (sp - sm) / (2.0 * hz), want_dzi[j]);

        sp = solve(z_i, zf_star + e, t_i, t_f).final().action_acc;
        sm = solve(z_i, zf_star - e, t_i, t_f).final().action_acc;
        track(rep.max_rel_err_first, (sp - sm) / (2.0 * hz), want_dzf[j]);
    }

    // second derivatives against the T-block expressions
    const auto& fd0 = fam.data();
    const PhasePoint& pi = traj.initial().point;
    const PhasePoint& pf = traj.final().point;
    MatrixXcd g_i = metric(fam, pi.zbar, pi.z);
    MatrixXcd g_f = metric(fam, pf.zbar, pf.z);
    MatrixXcd fzz_i = to_eig([&] {
        auto m = kahler_hess_zz(fd0, forms::to_std(pi.zbar), forms::to_std(pi.z));
        return m;
    }());
    MatrixXcd fbb_f = to_eig([&] {
        auto m = kahler_hess_zbzb(fd0, forms::to_std(pf.zbar), forms::to_std(pf.z));
        return m;
    }());
    const auto& M = traj.final().tangent;
    Eigen::PartialPivLU<MatrixXcd> m22lu(M.M22);
    MatrixXcd T11 = M.M12 * m22lu.inverse();
    MatrixXcd T12 = M.M11 - M.M12 * m22lu.inverse() * M.M21;
    MatrixXcd T21 = m22lu.inverse();
    MatrixXcd T22 = -m22lu.inverse() * M.M21;

    MatrixXcd want_ff = fbb_f + g_f.transpose() * T11;      // d2S/dzbar_f^2
    MatrixXcd want_fi = g_f.transpose() * T12;              // d2S/dzbar_f dz_i
    MatrixXcd want_if = g_i * T21;                          // d2S/dz_i dzbar_f
    MatrixXcd want_ii = fzz_i + g_i * T22;                  // d2S/dz_i^2

    for (int k = 0; k < d; ++k) {
        VectorXcd e = VectorXcd::Zero(d);
        e[k] = cplx(hz, 0.0);

        Trajectory tp = solve(z_i, zf_star + e, t_i, t_f);
        Trajectory tm = solve(z_i, zf_star - e, t_i, t_f);
        VectorXcd col_ff = (grad_zb_at(tp.final().point) - grad_zb_at(tm.final().point)) / (2.0 * hz);
        VectorXcd col_if = (grad_z_at(tp.initial().point) - grad_z_at(tm.initial().point)) / (2.0 * hz);
        for (int j = 0; j < d; ++j) {
            track(rep.max_rel_err_second, col_ff[j], want_ff(j, k));
            track(rep.max_rel_err_second, col_if[j], want_if(j, k));
        }

        tp = solve(z_i + e, zf_star, t_i, t_f);
        tm = solve(z_i - e, zf_star, t_i, t_f);
        VectorXcd col_fi = (grad_zb_at(tp.final().point) - grad_zb_at(tm.final().point)) / (2.0 * hz);
        VectorXcd col_ii = (grad_z_at(tp.initial().point) - grad_z_at(tm.initial().point)) / (2.0 * hz);
        for (int j = 0; j < d; ++j) {
            track(rep.max_rel_err_second, col_fi[j], want_fi(j, k));
            track(rep.max_rel_err_second, col_ii[j], want_ii(j, k));
        }
    }
    return rep;
}

} // namespace semiprop
