// hamiltonian.hpp — Effective classical Hamiltonian on the duplicated phase
// space: H(zbar, z; t) = {zbar*|H|z} / {zbar*|z}, evaluated from unnormalized
// analytic basis amplitudes so that zbar and z stay independent holomorphic
// variables. All derivatives come from (nested) dual numbers through the same
// evaluation.

#pragma once

#include "semiprop/operators.hpp"

namespace semiprop {

struct EffectiveHamiltonianEval {
    cplx value;
    VectorXcd grad_z;
    VectorXcd grad_zbar;
    MatrixXcd hess_zz;       // [j][k] = d2H/dz_j dz_k
    MatrixXcd hess_zbarzbar; // [j][k] = d2H/dzbar_j dzbar_k
    MatrixXcd hess_zzbar;    // [j][k] = d2H/dz_j dzbar_k
};

namespace forms {

/// Templated ratio {zbar*|H|z} / {zbar*|z}. The bra amplitudes are the same
/// real-coefficient polynomials evaluated at zbar, which is exactly the
/// analytic continuation of the conjugated bra. Throws SingularPoint when the
/// duplicated-space overlap vanishes; canonical families enforce their Fock
/// tail budget first.
template <class S>
S eff_hamiltonian(const Family& fam, const OperatorPolynomial& H, const std::vector<S>& zbar,
                  const std::vector<S>& z, double t) {
    const auto& fd = fam.data();
    if (fd.kind == FamilyKind::Canonical) {
        double x = 0.0;
        for (int j = 0; j < fd.d; ++j) {
            double az = abs_of(z[j]), ab = abs_of(zbar[j]);
            x = std::max({x, az * az, ab * ab, az * ab});
        }
        int margin = std::max(0, fd.fock_cutoff - H.max_degree());
        if (fock_tail_bound(x, margin) > 1e-12)
            throw TruncationInsufficient("effective_hamiltonian: cutoff " +
                                         std::to_string(fd.fock_cutoff) + " too small for |z|^2 ~ " +
                                         std::to_string(x));
    }
    check_regular(fd, zbar, z);

    std::vector<S> ket = amplitudes(fd, z);
    std::vector<S> bra = amplitudes(fd, zbar);
    const Eigen::Index dim = fam.hilbert_dim();

    S den{};
    double nb = 0.0, nk = 0.0;
    for (Eigen::Index m = 0; m < dim; ++m) {
        den = den + bra[m] * ket[m];
        nb = std::max(nb, abs_of(bra[m]));
        nk = std::max(nk, abs_of(ket[m]));
    }
    if (abs_of(den) < 1e-14 * double(dim) * nb * nk)
        throw SingularPoint("effective_hamiltonian: duplicated-space overlap {zbar*|z} vanishes");

    // generator monomial matrices are O(dim) sparse; walk the nonzeros only
    S num{};
    std::vector<S> tmp(dim);
    const bool cached = (fam == H.family());
    for (size_t k = 0; k < H.terms().size(); ++k) {
        std::vector<SparseEntry> local;
        if (!cached) local = sparse_entries(monomial_matrix(fam, H.terms()[k].ops));
        const std::vector<SparseEntry>& nz = cached ? H.term_triplets()[k] : local;
        for (Eigen::Index m = 0; m < dim; ++m) tmp[m] = S{};
        for (const auto& e : nz) tmp[e.row] = tmp[e.row] + ket[e.col] * e.val;
        S me{};
        for (Eigen::Index m = 0; m < dim; ++m) me = me + bra[m] * tmp[m];
        num = num + me * H.terms()[k].coeff(t);
    }
    return num / den;
}

} // namespace forms

/// Value, analytic gradients and Hessian blocks of the effective Hamiltonian.
EffectiveHamiltonianEval effective_hamiltonian(const Family& fam, const OperatorPolynomial& H,
                                               const PhasePoint& p, double t);

/// Value-only fast path.
cplx effective_hamiltonian_value(const Family& fam, const OperatorPolynomial& H, const PhasePoint& p,
                                 double t);

} // namespace semiprop
