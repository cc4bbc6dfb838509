// family.hpp — The three coherent-state families behind one interface.
//
// A Family bundles the phase-space dimension d, the finite Hilbert basis and
// the closed-form Kähler geometry of one of
//   * canonical coherent states (d bosonic modes, truncated Fock basis),
//   * spin coherent states (d spins J_1..J_d),
//   * SU(n) bosonic coherent states (n modes, N conserved particles, d = n-1).
//
// Geometry is evaluated on the duplicated phase space: zbar and z are
// independent complex vectors, never assumed conjugate. The templated forms
// in semiprop::forms accept dual numbers, which is how every derivative in
// the library is produced.

#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semiprop/dual.hpp"
#include "semiprop/errors.hpp"

namespace semiprop {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

enum class FamilyKind { Canonical, Spin, SuN };

/// A point (z, zbar) of the duplicated phase space. No relation between zbar
/// and conj(z) is implied or enforced.
struct PhasePoint {
    VectorXcd z;
    VectorXcd zbar;
};

/// State vector in the family's fixed occupation/weight basis.
using HilbertVector = VectorXcd;

namespace detail {
struct FamilyData {
    FamilyKind kind;
    int d = 0;              // phase-space complex dimension
    double hbar = 1.0;
    int fock_cutoff = 0;    // canonical: per-mode cutoff
    std::vector<double> spins; // spin: J_k
    int n = 0, N = 0;       // SuN

    Eigen::Index hilbert_dim = 0;
    // basis_occ[m] lists the occupation/weight tuple of basis state m;
    // basis_exp[m][j] is the power of z_j in the unnormalized amplitude and
    // basis_coeff[m] its (real, positive) combinatorial coefficient.
    std::vector<std::vector<int>> basis_occ;
    std::vector<std::vector<int>> basis_exp;
    std::vector<double> basis_coeff;
};
} // namespace detail

/// Immutable family descriptor; cheap to copy and safe to share across threads.
class Family {
  public:
    /// d bosonic modes with a per-mode Fock cutoff. Basis: occupation tuples
    /// (m_1..m_d) in lexicographic order, last mode fastest; |0,..,0> first.
    static Family canonical(int d, int fock_cutoff, double hbar = 1.0);

    /// d spins J_1..J_d (each in {1/2, 1, 3/2, ...}). Basis: tensor product
    /// with M_k ascending from -J_k, first particle slowest; the reference
    /// |-J_1,..,-J_d> is index 0. basis_occupation stores n_k = J_k + M_k.
    static Family spin(std::vector<double> J, double hbar = 1.0);

    /// n modes with N conserved bosons, d = n-1. Basis: compositions
    /// (m_1..m_n) of N in lexicographic order; the reference |0,..,0,N> is
    /// index 0 and the coherent-state powers involve modes 1..n-1 only.
    static Family sun(int n, int N, double hbar = 1.0);

    FamilyKind kind() const { return p_->kind; }
    int dim() const { return p_->d; }
    double hbar() const { return p_->hbar; }
    Eigen::Index hilbert_dim() const { return p_->hilbert_dim; }

    int fock_cutoff() const { return p_->fock_cutoff; }
    const std::vector<double>& spins() const { return p_->spins; }
    int sun_n() const { return p_->n; }
    int sun_N() const { return p_->N; }

    /// Occupation tuple of basis state m (canonical/SuN: mode occupations;
    /// spin: per-particle J_k + M_k). Basis orderings are documented in the
    /// factory functions and are fixed.
    const std::vector<int>& basis_occupation(Eigen::Index m) const { return p_->basis_occ[m]; }

    const detail::FamilyData& data() const { return *p_; }

    bool operator==(const Family& o) const;
    bool operator!=(const Family& o) const { return !(*this == o); }

    std::string describe() const;

  private:
    explicit Family(std::shared_ptr<const detail::FamilyData> p) : p_(std::move(p)) {}
    std::shared_ptr<const detail::FamilyData> p_;
};

// ---------------------------------------------------------------------------
// Templated closed forms (dual-number capable). zbar comes first everywhere,
// matching f(zbar', z) = ln{z'|z}.
// ---------------------------------------------------------------------------
namespace forms {

constexpr double kSingularTol = 1e-13;

template <class S>
void check_regular(const detail::FamilyData& f, const std::vector<S>& zbar, const std::vector<S>& z) {
    if (f.kind == FamilyKind::Spin) {
        for (int k = 0; k < f.d; ++k) {
            if (abs_of(1.0 + zbar[k] * z[k]) < kSingularTol)
                throw SingularPoint("spin family: 1 + zbar_k z_k vanishes at k=" + std::to_string(k));
        }
    } else if (f.kind == FamilyKind::SuN) {
        S s{};
        for (int k = 0; k < f.d; ++k) s = s + zbar[k] * z[k];
        if (abs_of(1.0 + s) < kSingularTol) throw SingularPoint("SU(n) family: 1 + zbar.z vanishes");
    }
}

/// Kähler potential f(zbar', z) = ln{z'|z}, analytically continued.
template <class S>
S kahler_f(const detail::FamilyData& f, const std::vector<S>& zbar, const std::vector<S>& z) {
    check_regular(f, zbar, z);
    switch (f.kind) {
    case FamilyKind::Canonical: {
        S acc{};
        for (int k = 0; k < f.d; ++k) acc = acc + zbar[k] * z[k];
        return acc;
    }
    case FamilyKind::Spin: {
        S acc{};
        for (int k = 0; k < f.d; ++k) acc = acc + (2.0 * f.spins[k]) * log(1.0 + zbar[k] * z[k]);
        return acc;
    }
    case FamilyKind::SuN: {
        S s{};
        for (int k = 0; k < f.d; ++k) s = s + zbar[k] * z[k];
        return double(f.N) * log(1.0 + s);
    }
    }
    throw Error("unreachable");
}

/// df/dz (holomorphic gradient in the ket label).
template <class S>
std::vector<S> kahler_grad_z(const detail::FamilyData& f, const std::vector<S>& zbar, const std::vector<S>& z) {
    check_regular(f, zbar, z);
    std::vector<S> g(f.d);
    switch (f.kind) {
    case FamilyKind::Canonical:
        for (int k = 0; k < f.d; ++k) g[k] = zbar[k];
        break;
    case FamilyKind::Spin:
        for (int k = 0; k < f.d; ++k) g[k] = (2.0 * f.spins[k]) * zbar[k] / (1.0 + zbar[k] * z[k]);
        break;
    case FamilyKind::SuN: {
        S s{};
        for (int k = 0; k < f.d; ++k) s = s + zbar[k] * z[k];
        for (int k = 0; k < f.d; ++k) g[k] = double(f.N) * zbar[k] / (1.0 + s);
        break;
    }
    }
    return g;
}

/// df/dzbar (holomorphic gradient in the bra label).
template <class S>
std::vector<S> kahler_grad_zbar(const detail::FamilyData& f, const std::vector<S>& zbar, const std::vector<S>& z) {
    check_regular(f, zbar, z);
    std::vector<S> g(f.d);
    switch (f.kind) {
    case FamilyKind::Canonical:
        for (int k = 0; k < f.d; ++k) g[k] = z[k];
        break;
    case FamilyKind::Spin:
        for (int k = 0; k < f.d; ++k) g[k] = (2.0 * f.spins[k]) * z[k] / (1.0 + zbar[k] * z[k]);
        break;
    case FamilyKind::SuN: {
        S s{};
        for (int k = 0; k < f.d; ++k) s = s + zbar[k] * z[k];
        for (int k = 0; k < f.d; ++k) g[k] = double(f.N) * z[k] / (1.0 + s);
        break;
    }
    }
    return g;
}

/// Metric g[j][k] = d^2 f / dz_j dzbar_k (rows pair with z, columns with zbar).
template <class S>
SMat<S> metric_at(const detail::FamilyData& f, const std::vector<S>& zbar, const std::vector<S>& z) {
    check_regular(f, zbar, z);
    SMat<S> g(f.d, f.d);
    switch (f.kind) {
    case FamilyKind::Canonical:
        for (int k = 0; k < f.d; ++k) g(k, k) = S(1.0);
        break;
    case FamilyKind::Spin:
        for (int k = 0; k < f.d; ++k) {
            S u = 1.0 + zbar[k] * z[k];
            g(k, k) = (2.0 * f.spins[k]) / (u * u);
        }
        break;
    case FamilyKind::SuN: {
        S s{};
        for (int k = 0; k < f.d; ++k) s = s + zbar[k] * z[k];
        S u = 1.0 + s;
        S u2 = u * u;
        for (int j = 0; j < f.d; ++j)
            for (int k = 0; k < f.d; ++k) {
                S num = (j == k) ? u - zbar[j] * z[k] : -zbar[j] * z[k];
                g(j, k) = double(f.N) * num / u2;
            }
        break;
    }
    }
    return g;
}

/// Inverse metric xi = g^{-1}; analytic per family (SuN uses the dyadic form).
template <class S>
SMat<S> metric_inverse_at(const detail::FamilyData& f, const std::vector<S>& zbar, const std::vector<S>& z) {
    check_regular(f, zbar, z);
    SMat<S> xi(f.d, f.d);
    switch (f.kind) {
    case FamilyKind::Canonical:
        for (int k = 0; k < f.d; ++k) xi(k, k) = S(1.0);
        break;
    case FamilyKind::Spin:
        for (int k = 0; k < f.d; ++k) {
            S u = 1.0 + zbar[k] * z[k];
            xi(k, k) = u * u / (2.0 * f.spins[k]);
        }
        break;
    case FamilyKind::SuN: {
        S s{};
        for (int k = 0; k < f.d; ++k) s = s + zbar[k] * z[k];
        S pref = (1.0 + s) / double(f.N);
        for (int j = 0; j < f.d; ++j)
            for (int k = 0; k < f.d; ++k) {
                S dy = zbar[j] * z[k];
                xi(j, k) = (j == k) ? pref * (1.0 + dy) : pref * dy;
            }
        break;
    }
    }
    return xi;
}

/// Unnormalized coherent-state amplitudes in the fixed basis.
template <class S>
std::vector<S> amplitudes(const detail::FamilyData& f, const std::vector<S>& z) {
    const int d = f.d;
    int maxocc = 0;
    for (const auto& e : f.basis_exp)
        for (int j = 0; j < d; ++j) maxocc = std::max(maxocc, e[j]);
    // power tables z_j^k
    std::vector<std::vector<S>> pw(d);
    for (int j = 0; j < d; ++j) {
        pw[j].resize(maxocc + 1);
        pw[j][0] = S(1.0);
        for (int k = 1; k <= maxocc; ++k) pw[j][k] = pw[j][k - 1] * z[j];
    }
    std::vector<S> amp(f.basis_exp.size());
    for (size_t m = 0; m < f.basis_exp.size(); ++m) {
        S a = S(f.basis_coeff[m]);
        for (int j = 0; j < d; ++j) a = a * pw[j][f.basis_exp[m][j]];
        amp[m] = a;
    }
    return amp;
}

std::vector<cplx> to_std(const VectorXcd& v);
VectorXcd to_eigen(const std::vector<cplx>& v);
MatrixXcd to_eigen(const SMat<cplx>& m);

} // namespace forms

// ---------------------------------------------------------------------------
// Plain-complex public operations
// ---------------------------------------------------------------------------

struct KahlerEval {
    cplx f;
    VectorXcd df_dzbar;
    VectorXcd df_dz;
};

/// f(zbar', z) with its exact analytic gradients. The ln branch for spin/SuN
/// is the principal value per coordinate; trajectory-continuous accumulation
/// lives in the propagator module.
KahlerEval kahler(const Family& fam, const VectorXcd& zbar_prime, const VectorXcd& z);

/// Analytic continuation of the quotient-space metric, g[j][k] = d2f/dz_j dzbar'_k.
MatrixXcd metric(const Family& fam, const VectorXcd& zbar_prime, const VectorXcd& z);

/// Closed-form inverse metric; throws SingularMetric if g is numerically singular.
MatrixXcd metric_inverse(const Family& fam, const VectorXcd& zbar_prime, const VectorXcd& z);

/// Coherent-state overlap. Unnormalized: {z'|z} = exp f(zbar', z) with
/// zbar_prime the analytic bra label. Normalized: interprets zbar_prime as
/// conj(z') for genuine labels and divides out both state norms.
cplx overlap(const Family& fam, const VectorXcd& zbar_prime, const VectorXcd& z, bool normalized);

/// Coherent state in the finite basis. Canonical families throw
/// TruncationInsufficient when the Fock tail at |z| exceeds the exactness budget.
HilbertVector state_vector(const Family& fam, const VectorXcd& z, bool normalized);

/// Density of the invariant measure against d^2z at the physical point z:
/// kappa(l) det g(z*, z) / pi^d.
double measure_weight(const Family& fam, const VectorXcd& z);

/// Exact normalization constant kappa(l) of the invariant measure.
double measure_kappa(const Family& fam);

/// Gradient pair of a scalar phase-space function, as supplied to poisson_bracket.
struct PhaseGradient {
    VectorXcd dz;
    VectorXcd dzbar;
};

/// Poisson bracket -i [ dA1/dz xi^T dA2/dzbar - dA1/dzbar xi dA2/dz ]
/// evaluated with the inverse metric at the given (possibly duplicated) point.
cplx poisson_bracket(const Family& fam, const PhaseGradient& grad1, const PhaseGradient& grad2,
                     const PhasePoint& at);

/// Smallest canonical cutoff whose Fock tail at |z| = max_abs_z stays below tol.
int canonical_cutoff_for(double max_abs_z, double tol = 1e-16);

/// Fock tail bound sum_{m>cutoff} x^m / m! <= e^x x^{c+1}/(c+1)! for x = |z|^2.
double fock_tail_bound(double x, int cutoff);

} // namespace semiprop
