// dynamics.hpp — Classical flow on the duplicated phase space, tangent-matrix
// propagation, and the two-time boundary-value solver.
//
// The equations of motion are
//     zdot    = -(i/hbar) xi^T(zbar,z) dH/dzbar,
//     zbardot = +(i/hbar) xi(zbar,z)   dH/dz,
// integrated together with the tangent system dM/dt = R M and the path
// quadratures needed by the propagator (action, correction, log-determinants,
// optionally the Riccati block). One adaptive embedded RK 5(4) controller
// owns the whole combined state.

#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "semiprop/hamiltonian.hpp"

namespace semiprop {

struct EomRhsResult {
    VectorXcd zdot;
    VectorXcd zbardot;
};

/// Stability matrix blocks R = d(zdot,zbardot)/d(z,zbar), from dual-number
/// Jacobians of the right-hand side.
struct StabilityBlocks {
    MatrixXcd R11, R12, R21, R22;
};

/// Tangent-matrix blocks of M(t, t_i); M(t_i, t_i) = 1.
struct TangentState {
    MatrixXcd M11, M12, M21, M22;

    MatrixXcd full() const {
        const Eigen::Index d = M11.rows();
        MatrixXcd m(2 * d, 2 * d);
        m << M11, M12, M21, M22;
        return m;
    }
};

namespace forms {

template <class S>
struct EomEvalT {
    std::vector<S> zdot, zbardot;
    S hval;
};

/// Templated right-hand side; differentiating it with dual scalars is how the
/// stability blocks are produced.
template <class S>
EomEvalT<S> eom_rhs_t(const Family& fam, const OperatorPolynomial& H, const std::vector<S>& zbar,
                      const std::vector<S>& z, double t) {
    const int d = fam.dim();
    const double hbar = fam.hbar();
    std::vector<S> grad_z(d), grad_zbar(d);
    S hval{};
    for (int k = 0; k < 2 * d; ++k) {
        std::vector<Dual<S>> zb = lift(zbar), zz = lift(z);
        if (k < d) zz[k].d = S(1.0);
        else zb[k - d].d = S(1.0);
        Dual<S> r = eff_hamiltonian(fam, H, zb, zz, t);
        if (k == 0) hval = r.v;
        if (k < d) grad_z[k] = r.d;
        else grad_zbar[k - d] = r.d;
    }
    SMat<S> xi = metric_inverse_at(fam.data(), zbar, z);
    EomEvalT<S> out;
    out.hval = hval;
    const cplx mi_over_h(0.0, -1.0 / hbar);
    const cplx pi_over_h(0.0, 1.0 / hbar);
    out.zdot = matvec_t(xi, grad_zbar); // xi^T v
    out.zbardot = matvec(xi, grad_z);
    for (int k = 0; k < d; ++k) {
        out.zdot[k] = out.zdot[k] * mi_over_h;
        out.zbardot[k] = out.zbardot[k] * pi_over_h;
    }
    return out;
}

} // namespace forms

EomRhsResult eom_rhs(const Family& fam, const OperatorPolynomial& H, const PhasePoint& p, double t);
StabilityBlocks stability_blocks(const Family& fam, const OperatorPolynomial& H, const PhasePoint& p,
                                 double t);

/// Time derivative of the metric along a flow direction,
/// gdot = (zdot . d/dz + zbardot . d/dzbar) g.
MatrixXcd metric_flow_derivative(const Family& fam, const PhasePoint& p, const VectorXcd& zdot,
                                 const VectorXcd& zbardot);

struct TrajectorySample {
    double t = 0.0;
    PhasePoint point;
    TangentState tangent;
    cplx action_acc{};     // (i/hbar) S up to t, incl. the initial boundary piece
    cplx correction_acc{}; // (i/hbar) I up to t
    cplx lndetg_acc{};     // int tr(xi gdot) dt from t_i
    cplx lndetM22_acc{};   // int tr(M22dot M22^-1) dt from t_i
    MatrixXcd G11;         // Riccati block (when enabled)
    cplx riccati_acc{};    // 1/2 int tr(Atil G11) dt
};

struct TrajectoryDiagnostics {
    int steps_accepted = 0;
    int steps_rejected = 0;
    double min_abs_detM22 = std::numeric_limits<double>::infinity();
    bool focal = false; // |det M22| dipped below 1e-12 somewhere
    std::vector<double> newton_residuals;
};

struct IntegrationOptions {
    int n_samples = 33;        // stored grid (>= 2), uniform in t
    bool with_tangent = true;  // propagate M and the quadratures
    bool with_riccati = false; // propagate G11 and the Riccati trace
    double riccati_blowup = 1e12;
};

struct Trajectory {
    Family fam;
    double t_i = 0.0, t_f = 0.0;
    VectorXcd z_i, zbar_i; // initial data of the final integration
    VectorXcd z_f_star;    // BVP target (empty for free integration)
    bool riccati_on = false;
    std::vector<TrajectorySample> samples;
    TrajectoryDiagnostics diagnostics;

    const TrajectorySample& initial() const { return samples.front(); }
    const TrajectorySample& final() const { return samples.back(); }

    /// Effective Hamiltonian along the stored grid (diagnostic).
    cplx energy_at(const OperatorPolynomial& H, size_t sample_index) const;
};

/// Integrate the flow from (z_i, zbar_i); adaptive RK 5(4) with 4th-order
/// dense output at the stored grid. tol is the local error tolerance
/// (absolute and relative) per step.
Trajectory integrate_trajectory(const Family& fam, const OperatorPolynomial& H, const VectorXcd& z_i,
                                const VectorXcd& zbar_i, double t_i, double t_f, double tol,
                                const IntegrationOptions& opts = {});

struct BvpOptions {
    double newton_tol = 1e-10; // infinity-norm of the boundary residual
    int max_iterations = 50;
    double ode_tol = 1e-10;
    double jacobian_cond_max = 1e12;
    IntegrationOptions final_integration = {};
};

/// Newton shooting for the two-time boundary conditions z(t_i) = z_i,
/// zbar(t_f) = z_f_star, with the tangent block M22 as Jacobian and a
/// backtracking line search on the residual norm.
Trajectory solve_bvp(const Family& fam, const OperatorPolynomial& H, const VectorXcd& z_i,
                     const VectorXcd& z_f_star, double t_i, double t_f, const VectorXcd& seed_zbar_i,
                     const BvpOptions& opts = {});

struct SeedStrategy {
    enum class Mode { Ring, Gaussian };
    Mode mode = Mode::Ring;   // Ring is per-component deterministic; Gaussian uses rng_seed
    int count = 8;            // seeds around conj(z_i), in addition to conj(z_i) itself
    double radius = 0.5;
    std::uint64_t rng_seed = 20240915ULL;
    double dedup_tol = 1e-6;  // infinity-norm match on the initial zbar
};

/// Multi-start enumeration of boundary-value trajectories. Seeds that fail to
/// converge or hit singular sets are dropped; converged solutions are
/// deduplicated on their initial zbar and returned in a deterministic order.
std::vector<Trajectory> enumerate_trajectories(const Family& fam, const OperatorPolynomial& H,
                                               const VectorXcd& z_i, const VectorXcd& z_f_star,
                                               double t_i, double t_f, const SeedStrategy& strategy,
                                               const BvpOptions& opts = {});

} // namespace semiprop
