// operators.hpp — Hamiltonians as normal-ordered polynomials in the family
// generators, plus their exact matrices in the finite basis.
//
// Generator alphabets:
//   canonical  a<j>, a<j>†            (also accepted: a<j>+ )
//   spin       J+<k>, J-<k>, Jz<k>
//   SU(n)      E<j><k> (single digits) or E<j>,<k>
// Mode/particle indices are 1-based in the text syntax.

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "semiprop/family.hpp"

namespace semiprop {

enum class GenKind { Create, Annihilate, JPlus, JMinus, JZ, E };

struct Generator {
    GenKind kind;
    int i = 0; // mode/particle, 0-based
    int j = 0; // E only: second index

    bool operator==(const Generator& o) const { return kind == o.kind && i == o.i && j == o.j; }
};

/// Coefficient of one term: a constant or a sampled time profile.
struct Coefficient {
    cplx value{0.0, 0.0};
    std::function<cplx(double)> fn; // when set, fn(t) wins

    Coefficient() = default;
    Coefficient(cplx c) : value(c) {}
    Coefficient(double c) : value(c, 0.0) {}
    Coefficient(std::function<cplx(double)> f) : fn(std::move(f)) {}

    cplx operator()(double t) const { return fn ? fn(t) : value; }
    bool constant() const { return !fn; }
};

struct Term {
    Coefficient coeff;
    std::vector<Generator> ops; // ordered product, leftmost acts last on kets
};

/// One nonzero of a monomial matrix; generator products are O(dim) sparse.
struct SparseEntry {
    Eigen::Index row, col;
    cplx val;
};

/// Normal-ordered polynomial in the generators of one family. Immutable after
/// build; per-monomial matrices are cached eagerly for the build family.
class OperatorPolynomial {
  public:
    const Family& family() const { return fam_; }
    const std::vector<Term>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    /// Cached monomial matrices for the build family, aligned with terms().
    const std::vector<MatrixXcd>& term_matrices() const { return mats_; }

    /// Nonzero entries of each monomial matrix, aligned with terms().
    const std::vector<std::vector<SparseEntry>>& term_triplets() const { return triplets_; }

    /// Largest monomial length, used by truncation guards.
    int max_degree() const { return max_degree_; }

    bool time_dependent() const;

  private:
    friend OperatorPolynomial build_poly(const Family&, const std::vector<Term>&);
    Family fam_;
    std::vector<Term> terms_;
    std::vector<MatrixXcd> mats_;
    std::vector<std::vector<SparseEntry>> triplets_;
    int max_degree_ = 0;
    explicit OperatorPolynomial(Family f) : fam_(std::move(f)) {}
};

/// Nonzeros of a dense matrix, column major.
std::vector<SparseEntry> sparse_entries(const MatrixXcd& m);

/// Parse one generator token for the family; throws UnknownGenerator /
/// IndexOutOfRange.
Generator parse_generator(const Family& fam, const std::string& token);

/// Build a normal-ordered polynomial from raw terms. Ordering rules:
/// canonical — creators (mode-ascending) left of annihilators; spin — per
/// particle J+ then Jz then J-; SU(n) — E factors sorted by index pair with
/// commutator corrections from the algebra.
OperatorPolynomial build_poly(const Family& fam, const std::vector<Term>& spec);

/// Convenience wrapper taking token strings and constant coefficients.
OperatorPolynomial make_poly(const Family& fam,
                             const std::vector<std::pair<cplx, std::vector<std::string>>>& spec);

/// Exact matrix of H(t) in the fixed basis of fam. Uses the cached monomial
/// matrices when fam equals the build family, otherwise rebuilds them (this is
/// how the oracle refines canonical cutoffs).
MatrixXcd matrix_representation(const Family& fam, const OperatorPolynomial& H, double t);

/// Matrix of a single ordered generator product in the basis of fam.
MatrixXcd monomial_matrix(const Family& fam, const std::vector<Generator>& ops);

/// Hermiticity check via the assembled matrix at time t.
bool is_hermitian(const Family& fam, const OperatorPolynomial& H, double t, double tol = 1e-12);

std::string to_string(const Generator& g);
std::string to_string(const OperatorPolynomial& poly);

} // namespace semiprop
