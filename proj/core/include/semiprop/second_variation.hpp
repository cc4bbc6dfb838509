// second_variation.hpp — Matrices of the second variation of the action
// around a trajectory point: A, B, C in three equivalent forms, and their
// tilde counterparts after the Theta = g^(1/2) change of fluctuation
// variables. The Riccati verification route of the reduced propagator is
// built from these.

#pragma once

#include "semiprop/dynamics.hpp"

namespace semiprop {

enum class VariationForm {
    Definition,   // second derivatives of the Lagrangian and d/dt terms
    Hessian,      // metric flow derivatives plus Hamiltonian Hessians
    FieldJacobian // assembled from the stability blocks R and the metric
};

struct SecondVariationMatrices {
    MatrixXcd A, B, C;          // fluctuation quadratic form in (eta, etabar)
    MatrixXcd Atil, Btil, Ctil; // after the Theta transformation
    MatrixXcd Theta;            // principal sqrt of g along the trajectory
    MatrixXcd ThetaDot;
};

/// A, B, C at a phase-space point in the requested form.
void variation_abc(const Family& fam, const OperatorPolynomial& H, const PhasePoint& p, double t,
                   VariationForm form, MatrixXcd& A, MatrixXcd& B, MatrixXcd& C);

/// Full bundle including the tilde matrices; needs the metric flow derivative
/// for Theta-dot, so the flow velocities are computed internally.
SecondVariationMatrices second_variation_matrices(const Family& fam, const OperatorPolynomial& H,
                                                  const PhasePoint& p, double t,
                                                  VariationForm form = VariationForm::Hessian);

} // namespace semiprop
