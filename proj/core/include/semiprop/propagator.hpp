// propagator.hpp — Assembly of the semiclassical propagator from converged
// boundary-value trajectories:
//
//   K_sc = sum over trajectories of exp[(i/hbar)S + (i/hbar)I + Lambda + ln C],
//
// with the action and correction integrals accumulated inside the trajectory
// integrator, the normalization term evaluated on the physical slice, and the
// prefactor tracked branch-continuously through its log-determinants. The
// Riccati route re-derives ln K_red from the G11 equation as an independent
// verification path.

#pragma once

#include "semiprop/second_variation.hpp"

namespace semiprop {

struct PropagatorContribution {
    cplx iS_over_hbar{};  // (i/hbar) S, boundary term included
    cplx iI_over_hbar{};  // (i/hbar) I
    double lambda = 0.0;  // Lambda, real and <= 0 for these families
    cplx ln_prefactor{};  // ln C, branch-continuous
    cplx amplitude{};     // exp of the sum
    VectorXcd zbar_initial; // identifies the trajectory
};

/// (i/hbar) S of a converged trajectory (in-integrator quadrature).
cplx action(const Family& fam, const OperatorPolynomial& H, const Trajectory& traj);

/// (i/hbar) I of a converged trajectory.
cplx correction_term(const Family& fam, const OperatorPolynomial& H, const Trajectory& traj);

/// Lambda = -f(z_f*, z_f)/2 - f(z_i*, z_i)/2 on the physical slice.
double normalization_term(const Family& fam, const VectorXcd& z_i, const VectorXcd& z_f);

/// ln C = 1/2 { 1/2 [ln det g(t_i) - ln det g(t_f)] - ln det M22(t_f) } with
/// both log-determinants accumulated continuously along the flow. Throws
/// FocalPoint when |det M22| dipped below 1e-12 anywhere on the trajectory.
cplx prefactor(const Family& fam, const OperatorPolynomial& H, const Trajectory& traj);

/// ln K_red from the Riccati route, 1/2 int tr(Atil G11) dt. The trajectory
/// must have been integrated with the Riccati block enabled.
cplx riccati_reduced_propagator(const Family& fam, const OperatorPolynomial& H, const Trajectory& traj);

/// ln K_red from the tangent route, ln C + (i/hbar) I.
cplx ln_reduced_propagator_tangent(const Family& fam, const OperatorPolynomial& H,
                                   const Trajectory& traj);

/// Full (S, I, Lambda, C) bundle of one trajectory.
PropagatorContribution evaluate_contribution(const Family& fam, const OperatorPolynomial& H,
                                             const Trajectory& traj);

struct AssemblyOptions {
    bool filter_spurious = false;      // drop |exp((i/hbar)S + Lambda)| > 1 + tol
    double spurious_tol = 1e-6;
};

/// K_sc as the sum of contribution amplitudes. Throws EmptyContributionSet.
cplx assemble_ksc(const Family& fam, const OperatorPolynomial& H,
                  const std::vector<PropagatorContribution>& contributions,
                  const AssemblyOptions& opts = {});

struct ActionDerivativeReport {
    double max_rel_err_first = 0.0;  // dS/dt_i, dS/dt_f, dS/dz_i, dS/dzbar_f
    double max_rel_err_second = 0.0; // the four T-block relations
    bool pass(double tol_first = 1e-5, double tol_second = 1e-4) const {
        return max_rel_err_first <= tol_first && max_rel_err_second <= tol_second;
    }
};

/// Finite-difference check of the classical-action derivatives against their
/// endpoint closed forms, re-solving the boundary-value problem under
/// perturbed data. Throws NoConvergence if a perturbed problem fails.
ActionDerivativeReport action_derivatives_check(const Family& fam, const OperatorPolynomial& H,
                                                const Trajectory& traj, const BvpOptions& opts = {});

} // namespace semiprop
