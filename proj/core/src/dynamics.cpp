#include "semiprop/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "semiprop/second_variation.hpp"

namespace semiprop {

using D1 = Dual<cplx>;

EomRhsResult eom_rhs(const Family& fam, const OperatorPolynomial& H, const PhasePoint& p, double t) {
    auto ev = forms::eom_rhs_t<cplx>(fam, H, forms::to_std(p.zbar), forms::to_std(p.z), t);
    return {forms::to_eigen(ev.zdot), forms::to_eigen(ev.zbardot)};
}

namespace {

struct FlowAndStability {
    VectorXcd zdot, zbardot;
    cplx hval;
    StabilityBlocks R;
};

FlowAndStability flow_and_stability(const Family& fam, const OperatorPolynomial& H, const PhasePoint& p,
                                    double t) {
    const int d = fam.dim();
    FlowAndStability out;
    out.zdot.resize(d);
    out.zbardot.resize(d);
    out.R.R11.resize(d, d);
    out.R.R12.resize(d, d);
    out.R.R21.resize(d, d);
    out.R.R22.resize(d, d);
    auto z0 = forms::to_std(p.z);
    auto zb0 = forms::to_std(p.zbar);
    for (int k = 0; k < 2 * d; ++k) {
        std::vector<D1> zz = lift(z0), zb = lift(zb0);
        if (k < d) zz[k].d = cplx(1.0);
        else zb[k - d].d = cplx(1.0);
        auto ev = forms::eom_rhs_t<D1>(fam, H, zb, zz, t);
        if (k == 0) {
            out.hval = ev.hval.v;
            for (int j = 0; j < d; ++j) {
                out.zdot[j] = ev.zdot[j].v;
                out.zbardot[j] = ev.zbardot[j].v;
            }
        }
        for (int j = 0; j < d; ++j) {
            if (k < d) {
                out.R.R11(j, k) = ev.zdot[j].d;
                out.R.R21(j, k) = ev.zbardot[j].d;
            } else {
                out.R.R12(j, k - d) = ev.zdot[j].d;
                out.R.R22(j, k - d) = ev.zbardot[j].d;
            }
        }
    }
    return out;
}

} // namespace

StabilityBlocks stability_blocks(const Family& fam, const OperatorPolynomial& H, const PhasePoint& p,
                                 double t) {
    return flow_and_stability(fam, H, p, t).R;
}

MatrixXcd metric_flow_derivative(const Family& fam, const PhasePoint& p, const VectorXcd& zdot,
                                 const VectorXcd& zbardot) {
    const int d = fam.dim();
    std::vector<D1> zb(d), zz(d);
    for (int j = 0; j < d; ++j) {
        zz[j] = D1(p.z[j], zdot[j]);
        zb[j] = D1(p.zbar[j], zbardot[j]);
    }
    SMat<D1> g = forms::metric_at(fam.data(), zb, zz);
    MatrixXcd gdot(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) gdot(i, j) = g(i, j).d;
    return gdot;
}

cplx Trajectory::energy_at(const OperatorPolynomial& H, size_t sample_index) const {
    const auto& s = samples.at(sample_index);
    return effective_hamiltonian_value(fam, H, s.point, s.t);
}

// ---------------------------------------------------------------------------
// Combined ODE system and the Dormand-Prince 5(4) stepper
// ---------------------------------------------------------------------------
namespace {

// Dormand-Prince tableau with the 4th-order dense-output weights.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[7] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
constexpr double kB4[7] = {5179.0 / 57600,    0.0,        7571.0 / 16695, 393.0 / 640,
                           -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
constexpr double kD[7] = {-12715105075.0 / 11282082432.0,
                          0.0,
                          87487479700.0 / 32700410799.0,
                          -10690763975.0 / 1880347072.0,
                          701980252875.0 / 199316789632.0,
                          -1453857185.0 / 822651844.0,
                          69997945.0 / 29380423.0};

struct OdeSystem {
    const Family& fam;
    const OperatorPolynomial& H;
    bool tangent;
    bool riccati;
    double riccati_blowup;
    int d;
    Eigen::Index oM, oQ, oG, oRic, size;

    OdeSystem(const Family& f, const OperatorPolynomial& h, const IntegrationOptions& opts)
        : fam(f), H(h), tangent(opts.with_tangent), riccati(opts.with_riccati),
          riccati_blowup(opts.riccati_blowup), d(f.dim()) {
        oM = 2 * d;
        oQ = oM + (tangent ? 4 * Eigen::Index(d) * d : 0);
        oG = oQ + (tangent ? 4 : 0);
        oRic = oG + (riccati ? Eigen::Index(d) * d : 0);
        size = oRic + (riccati ? 1 : 0);
        if (riccati && !tangent) throw Error("riccati propagation requires the tangent system");
    }

    PhasePoint point_of(const VectorXcd& y) const {
        return {y.segment(0, d), y.segment(d, d)};
    }

    void rhs(double t, const VectorXcd& y, VectorXcd& dy) const {
        dy.setZero(size);
        PhasePoint p = point_of(y);
        if (!tangent) {
            auto ev = forms::eom_rhs_t<cplx>(fam, H, forms::to_std(p.zbar), forms::to_std(p.z), t);
            for (int j = 0; j < d; ++j) {
                dy[j] = ev.zdot[j];
                dy[d + j] = ev.zbardot[j];
            }
            return;
        }
        auto fs = flow_and_stability(fam, H, p, t);
        for (int j = 0; j < d; ++j) {
            dy[j] = fs.zdot[j];
            dy[d + j] = fs.zbardot[j];
        }
        const Eigen::Index dd = Eigen::Index(d) * d;
        Eigen::Map<const MatrixXcd> M11(y.data() + oM, d, d), M12(y.data() + oM + dd, d, d),
            M21(y.data() + oM + 2 * dd, d, d), M22(y.data() + oM + 3 * dd, d, d);
        Eigen::Map<MatrixXcd> dM11(dy.data() + oM, d, d), dM12(dy.data() + oM + dd, d, d),
            dM21(dy.data() + oM + 2 * dd, d, d), dM22(dy.data() + oM + 3 * dd, d, d);
        dM11 = fs.R.R11 * M11 + fs.R.R12 * M21;
        dM12 = fs.R.R11 * M12 + fs.R.R12 * M22;
        dM21 = fs.R.R21 * M11 + fs.R.R22 * M21;
        dM22 = fs.R.R21 * M12 + fs.R.R22 * M22;

        // quadratures: action, correction, ln det g, ln det M22
        auto fzbar =
            forms::kahler_grad_zbar(fam.data(), forms::to_std(p.zbar), forms::to_std(p.z));
        cplx act{};
        for (int j = 0; j < d; ++j) act += fzbar[j] * fs.zbardot[j];
        act -= cplx(0.0, 1.0 / fam.hbar()) * fs.hval;
        dy[oQ + 0] = act;
        dy[oQ + 1] = 0.25 * (fs.R.R22.trace() - fs.R.R11.trace());
        MatrixXcd gdot = metric_flow_derivative(fam, p, fs.zdot, fs.zbardot);
        MatrixXcd xi = forms::to_eigen(
            forms::metric_inverse_at(fam.data(), forms::to_std(p.zbar), forms::to_std(p.z)));
        dy[oQ + 2] = (xi * gdot).trace();
        MatrixXcd m22dot = dM22;
        dy[oQ + 3] = M22.partialPivLu().solve(m22dot).trace();

        if (riccati) {
            Eigen::Map<const MatrixXcd> G11(y.data() + oG, d, d);
            if (G11.cwiseAbs().maxCoeff() > riccati_blowup)
                throw RiccatiBlowup("riccati: ||G11|| exceeded the blowup bound (conjugate point)");
            auto sv = second_variation_matrices(fam, H, p, t, VariationForm::Hessian);
            Eigen::Map<MatrixXcd> dG11(dy.data() + oG, d, d);
            dG11 = sv.Ctil + sv.Btil.transpose() * G11 + G11 * sv.Atil * G11 + G11 * sv.Btil;
            dy[oRic] = 0.5 * (sv.Atil * G11).trace();
        }
    }

    TrajectorySample unpack(double t, const VectorXcd& y) const {
        TrajectorySample s;
        s.t = t;
        s.point = point_of(y);
        if (tangent) {
            const Eigen::Index dd = Eigen::Index(d) * d;
            s.tangent.M11 = Eigen::Map<const MatrixXcd>(y.data() + oM, d, d);
            s.tangent.M12 = Eigen::Map<const MatrixXcd>(y.data() + oM + dd, d, d);
            s.tangent.M21 = Eigen::Map<const MatrixXcd>(y.data() + oM + 2 * dd, d, d);
            s.tangent.M22 = Eigen::Map<const MatrixXcd>(y.data() + oM + 3 * dd, d, d);
            s.action_acc = y[oQ + 0];
            s.correction_acc = y[oQ + 1];
            s.lndetg_acc = y[oQ + 2];
            s.lndetM22_acc = y[oQ + 3];
        }
        if (riccati) {
            s.G11 = Eigen::Map<const MatrixXcd>(y.data() + oG, d, d);
            s.riccati_acc = y[oRic];
        }
        return s;
    }
};

double error_norm(const VectorXcd& y0, const VectorXcd& y1, const VectorXcd& err, double tol) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        double sc = tol + tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        double q = std::abs(err[i]) / sc;
        acc += q * q;
    }
    return std::sqrt(acc / double(err.size()));
}

} // namespace

Trajectory integrate_trajectory(const Family& fam, const OperatorPolynomial& H, const VectorXcd& z_i,
                                const VectorXcd& zbar_i, double t_i, double t_f, double tol,
                                const IntegrationOptions& opts) {
    if (z_i.size() != fam.dim() || zbar_i.size() != fam.dim())
        throw Error("integrate_trajectory: dimension mismatch");
    if (t_f < t_i) throw Error("integrate_trajectory: t_f must be >= t_i");
    const int n_samples = std::max(2, opts.n_samples);

    OdeSystem sys(fam, H, opts);
    VectorXcd y = VectorXcd::Zero(sys.size);
    y.segment(0, fam.dim()) = z_i;
    y.segment(fam.dim(), fam.dim()) = zbar_i;
    if (opts.with_tangent) {
        const int d = fam.dim();
        const Eigen::Index dd = Eigen::Index(d) * d;
        Eigen::Map<MatrixXcd>(y.data() + sys.oM, d, d).setIdentity();
        Eigen::Map<MatrixXcd>(y.data() + sys.oM + 3 * dd, d, d).setIdentity();
        // (i/hbar) S starts from the boundary-term seed f(zbar(t_i), z_i)
        y[sys.oQ] = forms::kahler_f(fam.data(), forms::to_std(zbar_i), forms::to_std(z_i));
    }

    Trajectory traj{fam, t_i, t_f, z_i, zbar_i, VectorXcd(), opts.with_riccati, {}, {}};

    const double span = t_f - t_i;
    std::vector<double> grid(n_samples);
    for (int k = 0; k < n_samples; ++k)
        grid[k] = t_i + span * double(k) / double(n_samples - 1);
    grid.back() = t_f;

    auto track_focal = [&](const VectorXcd& state) {
        if (!opts.with_tangent) return;
        const int d = fam.dim();
        const Eigen::Index dd = Eigen::Index(d) * d;
        Eigen::Map<const MatrixXcd> M22(state.data() + sys.oM + 3 * dd, d, d);
        double det = std::abs(M22.partialPivLu().determinant());
        traj.diagnostics.min_abs_detM22 = std::min(traj.diagnostics.min_abs_detM22, det);
        if (det < 1e-12) traj.diagnostics.focal = true;
    };

    traj.samples.push_back(sys.unpack(t_i, y));
    track_focal(y);

    if (span == 0.0) {
        traj.samples.push_back(sys.unpack(t_f, y));
        return traj;
    }

    std::vector<VectorXcd> k(7, VectorXcd::Zero(sys.size));
    sys.rhs(t_i, y, k[0]);

    double t = t_i;
    double h = std::min(span, std::max(1e-6 * span, 1e-4));
    size_t next_sample = 1;
    VectorXcd ytmp(sys.size), y1(sys.size), errv(sys.size);

    long guard = 0;
    while (t < t_f) {
        if (++guard > 5000000) throw StepFailure("integrate_trajectory: step count exceeded");
        h = std::min(h, t_f - t);
        if (h < 1e-14 * std::max(1.0, std::abs(t)))
            throw StepFailure("integrate_trajectory: step size underflow near t=" + std::to_string(t));

        // stage failures from singular or out-of-budget points reject the
        // step; only an unavoidable singularity drives h to underflow
        bool stage_failed = false;
        try {
            for (int s = 1; s < 7; ++s) {
                ytmp = y;
                for (int m = 0; m < s; ++m)
                    if (kA[s][m] != 0.0) ytmp += (h * kA[s][m]) * k[m];
                sys.rhs(t + kC[s] * h, ytmp, k[s]);
            }
        } catch (const SingularPoint&) {
            stage_failed = true;
        } catch (const SingularMetric&) {
            stage_failed = true;
        } catch (const TruncationInsufficient&) {
            stage_failed = true;
        }
        if (stage_failed) {
            traj.diagnostics.steps_rejected++;
            h *= 0.25;
            continue;
        }
        y1 = y;
        for (int s = 0; s < 7; ++s)
            if (kB5[s] != 0.0) y1 += (h * kB5[s]) * k[s];
        errv.setZero();
        for (int s = 0; s < 7; ++s) {
            double w = kB5[s] - kB4[s];
            if (w != 0.0) errv += (h * w) * k[s];
        }
        double errn = error_norm(y, y1, errv, tol);
        if (errn <= 1.0) {
            // 4th-order dense output on [t, t+h]
            VectorXcd rc1 = y;
            VectorXcd rc2 = y1 - y;
            VectorXcd rc3 = h * k[0] - rc2;
            VectorXcd rc4 = rc2 - h * k[6] - rc3;
            VectorXcd rc5 = VectorXcd::Zero(sys.size);
            for (int s = 0; s < 7; ++s)
                if (kD[s] != 0.0) rc5 += (h * kD[s]) * k[s];
            while (next_sample < grid.size() && grid[next_sample] <= t + h + 1e-12 * span) {
                double tt = grid[next_sample];
                if (std::abs(tt - (t + h)) <= 1e-12 * span) {
                    traj.samples.push_back(sys.unpack(t + h, y1));
                } else {
                    double th = (tt - t) / h;
                    VectorXcd u =
                        rc1 + th * (rc2 + (1.0 - th) * (rc3 + th * (rc4 + (1.0 - th) * rc5)));
                    traj.samples.push_back(sys.unpack(tt, u));
                }
                ++next_sample;
            }
            t += h;
            y.swap(y1);
            k[0] = k[6]; // FSAL
            track_focal(y);
            traj.diagnostics.steps_accepted++;
            h *= std::clamp(0.9 * std::pow(std::max(errn, 1e-10), -0.2), 0.2, 5.0);
        } else {
            traj.diagnostics.steps_rejected++;
            h *= std::clamp(0.9 * std::pow(errn, -0.2), 0.1, 0.9);
        }
    }
    if (next_sample < grid.size()) {
        // fp guard: emit any trailing grid point at the final state
        traj.samples.push_back(sys.unpack(t_f, y));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Newton shooting
// ---------------------------------------------------------------------------

Trajectory solve_bvp(const Family& fam, const OperatorPolynomial& H, const VectorXcd& z_i,
                     const VectorXcd& z_f_star, double t_i, double t_f, const VectorXcd& seed_zbar_i,
                     const BvpOptions& opts) {
    const int d = fam.dim();
    if (z_i.size() != d || z_f_star.size() != d || seed_zbar_i.size() != d)
        throw Error("solve_bvp: dimension mismatch");

    // reject seeds already inside the singular set
    forms::check_regular(fam.data(), forms::to_std(seed_zbar_i), forms::to_std(z_i));

    auto finalize = [&](const VectorXcd& zbar, std::vector<double> residuals) {
        IntegrationOptions fopts = opts.final_integration;
        fopts.with_tangent = true;
        Trajectory tr = integrate_trajectory(fam, H, z_i, zbar, t_i, t_f, opts.ode_tol, fopts);
        tr.z_f_star = z_f_star;
        tr.diagnostics.newton_residuals = std::move(residuals);
        return tr;
    };

    if (t_f == t_i) return finalize(z_f_star, {0.0});

    VectorXcd zbar = seed_zbar_i;
    std::vector<double> residuals;

    IntegrationOptions newton_opts;
    newton_opts.n_samples = 2;
    newton_opts.with_tangent = true;
    newton_opts.with_riccati = false;

    IntegrationOptions flow_opts;
    flow_opts.n_samples = 2;
    flow_opts.with_tangent = false;

    auto residual_of = [&](const VectorXcd& zb) {
        Trajectory tr = integrate_trajectory(fam, H, z_i, zb, t_i, t_f, opts.ode_tol, flow_opts);
        return (tr.final().point.zbar - z_f_star).cwiseAbs().maxCoeff();
    };

    auto integrate_iterate = [&](const VectorXcd& zb) -> Trajectory {
        try {
            return integrate_trajectory(fam, H, z_i, zb, t_i, t_f, opts.ode_tol, newton_opts);
        } catch (const Error& e) {
            throw NoConvergence(std::string("solve_bvp: iterate not integrable: ") + e.what());
        }
    };

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        Trajectory tr = integrate_iterate(zbar);
        VectorXcd F = tr.final().point.zbar - z_f_star;
        double res = F.cwiseAbs().maxCoeff();
        residuals.push_back(res);
        if (res <= opts.newton_tol) return finalize(zbar, std::move(residuals));

        const MatrixXcd& M22 = tr.final().tangent.M22;
        Eigen::JacobiSVD<MatrixXcd> svd(M22);
        double smin = svd.singularValues().minCoeff();
        double smax = svd.singularValues().maxCoeff();
        if (smin <= 0.0 || smax / smin > opts.jacobian_cond_max)
            throw SingularJacobian("solve_bvp: tangent block M22 numerically singular");

        VectorXcd delta = -M22.partialPivLu().solve(F);
        double alpha = 1.0;
        bool moved = false;
        while (alpha >= std::ldexp(1.0, -30)) {
            VectorXcd cand = zbar + alpha * delta;
            double res_new;
            try {
                res_new = residual_of(cand);
            } catch (const Error&) {
                res_new = std::numeric_limits<double>::infinity();
            }
            if (res_new <= (1.0 - 1e-4 * alpha) * res) {
                zbar = cand;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) throw NoConvergence("solve_bvp: line search failed at residual " + std::to_string(res));
    }
    throw NoConvergence("solve_bvp: no convergence in " + std::to_string(opts.max_iterations) +
                        " iterations");
}

std::vector<Trajectory> enumerate_trajectories(const Family& fam, const OperatorPolynomial& H,
                                               const VectorXcd& z_i, const VectorXcd& z_f_star,
                                               double t_i, double t_f, const SeedStrategy& strategy,
                                               const BvpOptions& opts) {
    const int d = fam.dim();
    std::vector<VectorXcd> seeds;
    seeds.push_back(z_i.conjugate());
    if (strategy.mode == SeedStrategy::Mode::Ring) {
        for (int k = 0; k < strategy.count; ++k) {
            VectorXcd s = z_i.conjugate();
            int comp = k % d;
            int turn = k / d;
            int turns = (strategy.count + d - 1) / d;
            double phi = 2.0 * M_PI * (double(turn) + 0.5) / double(std::max(1, turns));
            s[comp] += strategy.radius * std::exp(cplx(0.0, phi));
            seeds.push_back(s);
        }
    } else {
        std::mt19937_64 rng(strategy.rng_seed);
        std::normal_distribution<double> gauss(0.0, strategy.radius / std::sqrt(2.0));
        for (int k = 0; k < strategy.count; ++k) {
            VectorXcd s = z_i.conjugate();
            for (int j = 0; j < d; ++j) s[j] += cplx(gauss(rng), gauss(rng));
            seeds.push_back(s);
        }
    }

    std::vector<Trajectory> found;
    for (const auto& seed : seeds) {
        try {
            Trajectory tr = solve_bvp(fam, H, z_i, z_f_star, t_i, t_f, seed, opts);
            bool dup = false;
            for (const auto& existing : found) {
                if ((existing.zbar_i - tr.zbar_i).cwiseAbs().maxCoeff() < strategy.dedup_tol) {
                    dup = true;
                    break;
                }
            }
            if (!dup) found.push_back(std::move(tr));
        } catch (const Error&) {
            // seed failed; completeness of the set is heuristic by construction
        }
    }
    std::sort(found.begin(), found.end(), [](const Trajectory& a, const Trajectory& b) {
        for (Eigen::Index j = 0; j < a.zbar_i.size(); ++j) {
            if (a.zbar_i[j].real() != b.zbar_i[j].real()) return a.zbar_i[j].real() < b.zbar_i[j].real();
            if (a.zbar_i[j].imag() != b.zbar_i[j].imag()) return a.zbar_i[j].imag() < b.zbar_i[j].imag();
        }
        return false;
    });
    return found;
}

} // namespace semiprop
