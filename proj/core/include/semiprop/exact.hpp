// exact.hpp — Exact propagation in the finite Hilbert space, used as the
// validation oracle: K(z_f*, z_i; t_f, t_i) = <z_f| T exp(-(i/hbar)∫H dt) |z_i>.

#pragma once

#include "semiprop/operators.hpp"

namespace semiprop {

enum class ExactMethod { Eigendecomposition, SteppedMagnus2 };

struct ExactResult {
    cplx amplitude{};
    ExactMethod method = ExactMethod::Eigendecomposition;
    int step_count = 0;
    double error_estimate = 0.0;
};

/// Exact amplitude between normalized coherent states. Time-independent H is
/// propagated by one eigendecomposition; time-dependent H by midpoint
/// exponential (second-order Magnus) stepping with step halving until the
/// amplitude moves by less than tol. Canonical families refine the Fock
/// cutoff (doubling) until the amplitude is stable to tol.
ExactResult propagate_exact(const Family& fam, const OperatorPolynomial& H, const VectorXcd& z_i,
                            const VectorXcd& z_f, double t_i, double t_f, double tol = 1e-12);

/// Image of a single-spin polynomial under the Schwinger identification
/// J+ -> hbar E12, J- -> hbar E21, Jz -> hbar (E11 - E22)/2 on the
/// SU(2)-bosonic family with N = 2J.
OperatorPolynomial schwinger_image(const OperatorPolynomial& spin_poly, const Family& sun_fam);

struct SchwingerReport {
    cplx exact_spin{}, exact_sun{};
    cplx ksc_spin{}, ksc_sun{};
    double exact_abs_diff = 0.0;
    double sc_abs_diff = 0.0;
};

/// Cross-check of the spin-J and SU(2)-bosonic (N = 2J) descriptions of one
/// Hamiltonian over identical endpoint labels: exact amplitudes from the two
/// matrix builds, plus the assembled semiclassical amplitudes. Throws
/// MappingMismatch when H_sun is not the Schwinger image of H_spin.
SchwingerReport schwinger_crosscheck(const Family& spin_fam, const OperatorPolynomial& H_spin,
                                     const Family& sun_fam, const OperatorPolynomial& H_sun,
                                     const VectorXcd& z_i, const VectorXcd& z_f, double t_i,
                                     double t_f);

} // namespace semiprop
