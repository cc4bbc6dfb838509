// linalg.hpp — Dense helpers: principal matrix square root, the Sylvester
// solve used for Theta-dot, and the exponential stepping kernel of the oracle.

#pragma once

#include <Eigen/Dense>
#include <complex>

namespace semiprop::linalg {

using Eigen::MatrixXcd;
using cplx = std::complex<double>;

/// Principal square root of a general complex matrix via Schur decomposition,
/// Denman-Beavers iteration as fallback. Throws SqrtBranchFailure when an
/// eigenvalue sits on the closed negative real axis.
MatrixXcd sqrtm_principal(const MatrixXcd& a);

/// Solve X A + A X = B for X (A from a principal square root, so the spectra
/// of A and -A do not overlap).
MatrixXcd solve_sylvester_sym(const MatrixXcd& a, const MatrixXcd& b);

/// exp(A) by scaling-and-squaring with Pade approximation.
MatrixXcd expm(const MatrixXcd& a);

} // namespace semiprop::linalg
