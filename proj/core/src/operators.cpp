#include "semiprop/operators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace semiprop {

namespace {

bool kind_matches_family(GenKind g, FamilyKind f) {
    switch (f) {
    case FamilyKind::Canonical: return g == GenKind::Create || g == GenKind::Annihilate;
    case FamilyKind::Spin: return g == GenKind::JPlus || g == GenKind::JMinus || g == GenKind::JZ;
    case FamilyKind::SuN: return g == GenKind::E;
    }
    return false;
}

void validate_generator(const Family& fam, const Generator& g) {
    if (!kind_matches_family(g.kind, fam.kind()))
        throw UnknownGenerator("generator " + to_string(g) + " does not belong to " + fam.describe());
    int modes = fam.kind() == FamilyKind::SuN ? fam.sun_n() : fam.dim();
    if (g.i < 0 || g.i >= modes) throw IndexOutOfRange("generator index out of range: " + to_string(g));
    if (g.kind == GenKind::E && (g.j < 0 || g.j >= modes))
        throw IndexOutOfRange("generator index out of range: " + to_string(g));
}

Coefficient scale(const Coefficient& c, cplx s) {
    if (c.constant()) return Coefficient(c.value * s);
    auto fn = c.fn;
    return Coefficient(std::function<cplx(double)>([fn, s](double t) { return s * fn(t); }));
}

struct WorkTerm {
    Coefficient coeff;
    std::vector<Generator> ops;
};

int canonical_rank(const Generator& g) { return g.kind == GenKind::Create ? 0 : 1; }
int spin_rank(const Generator& g) {
    return g.kind == GenKind::JPlus ? 0 : (g.kind == GenKind::JZ ? 1 : 2);
}

// returns true if the adjacent pair (a, b) must be acted on; fills the swap
// products: main term always (b, a); extra terms are commutator corrections.
struct SwapResult {
    bool act = false;
    std::vector<std::pair<cplx, std::vector<Generator>>> corrections; // factor, replacement ops
};

SwapResult classify_pair(FamilyKind kind, double hbar, const Generator& a, const Generator& b) {
    SwapResult r;
    switch (kind) {
    case FamilyKind::Canonical: {
        int ra = canonical_rank(a), rb = canonical_rank(b);
        if (ra > rb) {
            r.act = true; // a_i a†_j = a†_j a_i + delta_ij
            if (a.i == b.i) r.corrections.push_back({cplx(1.0), {}});
        } else if (ra == rb && a.i > b.i) {
            r.act = true; // commuting swap
        }
        return r;
    }
    case FamilyKind::Spin: {
        if (a.i != b.i) {
            if (a.i > b.i) r.act = true;
            return r;
        }
        int ra = spin_rank(a), rb = spin_rank(b);
        if (ra <= rb) return r;
        r.act = true;
        if (a.kind == GenKind::JZ && b.kind == GenKind::JPlus) {
            // Jz J+ = J+ Jz + hbar J+
            r.corrections.push_back({cplx(hbar), {Generator{GenKind::JPlus, a.i, 0}}});
        } else if (a.kind == GenKind::JMinus && b.kind == GenKind::JPlus) {
            // J- J+ = J+ J- - 2 hbar Jz
            r.corrections.push_back({cplx(-2.0 * hbar), {Generator{GenKind::JZ, a.i, 0}}});
        } else if (a.kind == GenKind::JMinus && b.kind == GenKind::JZ) {
            // J- Jz = Jz J- + hbar J-
            r.corrections.push_back({cplx(hbar), {Generator{GenKind::JMinus, a.i, 0}}});
        }
        return r;
    }
    case FamilyKind::SuN: {
        auto key = [](const Generator& g) { return std::pair<int, int>(g.i, g.j); };
        if (key(a) <= key(b)) return r;
        r.act = true;
        // E_ab E_cd = E_cd E_ab + delta_bc E_ad - delta_da E_cb
        if (a.j == b.i) r.corrections.push_back({cplx(1.0), {Generator{GenKind::E, a.i, b.j}}});
        if (b.j == a.i) r.corrections.push_back({cplx(-1.0), {Generator{GenKind::E, b.i, a.j}}});
        return r;
    }
    }
    return r;
}

bool generator_less(const Generator& a, const Generator& b) {
    if (a.kind != b.kind) return int(a.kind) < int(b.kind);
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
}

bool monomial_less(const std::vector<Generator>& a, const std::vector<Generator>& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    for (size_t k = 0; k < a.size(); ++k) {
        if (!(a[k] == b[k])) return generator_less(a[k], b[k]);
    }
    return false;
}

} // namespace

Generator parse_generator(const Family& fam, const std::string& token) {
    auto fail = [&] { throw UnknownGenerator("cannot parse generator token '" + token + "'"); };
    if (token.empty()) fail();
    Generator g;
    if (token[0] == 'a') {
        // a<j> or a<j>† / a<j>+
        size_t pos = 1, end = pos;
        while (end < token.size() && std::isdigit(static_cast<unsigned char>(token[end]))) ++end;
        if (end == pos) fail();
        g.i = std::stoi(token.substr(pos, end - pos)) - 1;
        std::string tail = token.substr(end);
        if (tail.empty()) g.kind = GenKind::Annihilate;
        else if (tail == "†" || tail == "+") g.kind = GenKind::Create;
        else fail();
    } else if (token[0] == 'J') {
        if (token.size() < 3) fail();
        char c = token[1];
        size_t pos = 2;
        if (c == '+') g.kind = GenKind::JPlus;
        else if (c == '-') g.kind = GenKind::JMinus;
        else if (c == 'z') g.kind = GenKind::JZ;
        else fail();
        g.i = std::stoi(token.substr(pos)) - 1;
    } else if (token[0] == 'E') {
        g.kind = GenKind::E;
        std::string body = token.substr(1);
        auto comma = body.find(',');
        if (comma != std::string::npos) {
            g.i = std::stoi(body.substr(0, comma)) - 1;
            g.j = std::stoi(body.substr(comma + 1)) - 1;
        } else if (body.size() == 2 && std::isdigit(static_cast<unsigned char>(body[0])) &&
                   std::isdigit(static_cast<unsigned char>(body[1]))) {
            g.i = body[0] - '0' - 1;
            g.j = body[1] - '0' - 1;
        } else {
            fail();
        }
    } else {
        fail();
    }
    validate_generator(fam, g);
    return g;
}

OperatorPolynomial build_poly(const Family& fam, const std::vector<Term>& spec) {
    for (const auto& t : spec)
        for (const auto& g : t.ops) validate_generator(fam, g);

    std::vector<WorkTerm> work;
    for (const auto& t : spec) work.push_back({t.coeff, t.ops});

    std::vector<WorkTerm> done;
    while (!work.empty()) {
        WorkTerm t = std::move(work.back());
        work.pop_back();
        bool rewritten = false;
        for (size_t k = 0; k + 1 < t.ops.size(); ++k) {
            SwapResult sr = classify_pair(fam.kind(), fam.hbar(), t.ops[k], t.ops[k + 1]);
            if (!sr.act) continue;
            for (const auto& [factor, repl] : sr.corrections) {
                WorkTerm corr;
                corr.coeff = scale(t.coeff, factor);
                corr.ops.assign(t.ops.begin(), t.ops.begin() + k);
                corr.ops.insert(corr.ops.end(), repl.begin(), repl.end());
                corr.ops.insert(corr.ops.end(), t.ops.begin() + k + 2, t.ops.end());
                work.push_back(std::move(corr));
            }
            std::swap(t.ops[k], t.ops[k + 1]);
            work.push_back(std::move(t));
            rewritten = true;
            break;
        }
        if (!rewritten) done.push_back(std::move(t));
    }

    std::stable_sort(done.begin(), done.end(),
                     [](const WorkTerm& a, const WorkTerm& b) { return monomial_less(a.ops, b.ops); });

    // merge constant coefficients of identical monomials; drop exact zeros
    OperatorPolynomial poly(fam);
    for (auto& t : done) {
        if (!poly.terms_.empty() && poly.terms_.back().ops == t.ops &&
            poly.terms_.back().coeff.constant() && t.coeff.constant()) {
            poly.terms_.back().coeff.value += t.coeff.value;
        } else {
            poly.terms_.push_back({std::move(t.coeff), std::move(t.ops)});
        }
    }
    std::erase_if(poly.terms_, [](const Term& t) {
        return t.coeff.constant() && t.coeff.value == cplx(0.0, 0.0);
    });

    for (const auto& t : poly.terms_) {
        poly.mats_.push_back(monomial_matrix(fam, t.ops));
        poly.triplets_.push_back(sparse_entries(poly.mats_.back()));
        poly.max_degree_ = std::max(poly.max_degree_, int(t.ops.size()));
    }
    return poly;
}

OperatorPolynomial make_poly(const Family& fam,
                             const std::vector<std::pair<cplx, std::vector<std::string>>>& spec) {
    std::vector<Term> terms;
    for (const auto& [c, toks] : spec) {
        Term t;
        t.coeff = Coefficient(c);
        for (const auto& tok : toks) t.ops.push_back(parse_generator(fam, tok));
        terms.push_back(std::move(t));
    }
    return build_poly(fam, terms);
}

bool OperatorPolynomial::time_dependent() const {
    for (const auto& t : terms_)
        if (!t.coeff.constant()) return true;
    return false;
}

namespace {

MatrixXcd generator_matrix(const Family& fam, const Generator& g) {
    const auto& fd = fam.data();
    const Eigen::Index dim = fd.hilbert_dim;
    MatrixXcd m = MatrixXcd::Zero(dim, dim);
    const double hbar = fd.hbar;

    // index strides for canonical/spin tensor bases
    auto strides = [&] {
        std::vector<Eigen::Index> s(fd.d, 1);
        for (int j = fd.d - 2; j >= 0; --j) {
            Eigen::Index width = fd.kind == FamilyKind::Canonical
                                     ? fd.fock_cutoff + 1
                                     : Eigen::Index(std::lround(2.0 * fd.spins[j + 1])) + 1;
            s[j] = s[j + 1] * width;
        }
        return s;
    };

    switch (fd.kind) {
    case FamilyKind::Canonical: {
        auto st = strides();
        for (Eigen::Index b = 0; b < dim; ++b) {
            const auto& occ = fd.basis_occ[b];
            int mj = occ[g.i];
            if (g.kind == GenKind::Annihilate && mj > 0)
                m(b - st[g.i], b) = std::sqrt(double(mj));
            else if (g.kind == GenKind::Create && mj < fd.fock_cutoff)
                m(b + st[g.i], b) = std::sqrt(double(mj + 1)); // truncated top row dropped
        }
        return m;
    }
    case FamilyKind::Spin: {
        auto st = strides();
        for (Eigen::Index b = 0; b < dim; ++b) {
            int n = fd.basis_occ[b][g.i]; // n = J + M
            int twoJ = int(std::lround(2.0 * fd.spins[g.i]));
            if (g.kind == GenKind::JZ) {
                m(b, b) = hbar * (double(n) - 0.5 * twoJ);
            } else if (g.kind == GenKind::JPlus && n < twoJ) {
                m(b + st[g.i], b) = hbar * std::sqrt(double(twoJ - n) * double(n + 1));
            } else if (g.kind == GenKind::JMinus && n > 0) {
                m(b - st[g.i], b) = hbar * std::sqrt(double(n) * double(twoJ - n + 1));
            }
        }
        return m;
    }
    case FamilyKind::SuN: {
        std::map<std::vector<int>, Eigen::Index> index;
        for (Eigen::Index b = 0; b < dim; ++b) index[fd.basis_occ[b]] = b;
        for (Eigen::Index b = 0; b < dim; ++b) {
            const auto& occ = fd.basis_occ[b];
            if (g.i == g.j) {
                m(b, b) = double(occ[g.i]);
            } else if (occ[g.j] > 0) {
                auto target = occ;
                target[g.j] -= 1;
                target[g.i] += 1;
                m(index.at(target), b) = std::sqrt(double(occ[g.i] + 1) * double(occ[g.j]));
            }
        }
        return m;
    }
    }
    throw Error("unreachable");
}

} // namespace

std::vector<SparseEntry> sparse_entries(const MatrixXcd& m) {
    std::vector<SparseEntry> out;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            if (m(r, c) != cplx(0.0, 0.0)) out.push_back({r, c, m(r, c)});
    return out;
}

MatrixXcd monomial_matrix(const Family& fam, const std::vector<Generator>& ops) {
    MatrixXcd m = MatrixXcd::Identity(fam.hilbert_dim(), fam.hilbert_dim());
    for (auto it = ops.rbegin(); it != ops.rend(); ++it) m = generator_matrix(fam, *it) * m;
    return m;
}

MatrixXcd matrix_representation(const Family& fam, const OperatorPolynomial& H, double t) {
    const bool cached = (fam == H.family());
    MatrixXcd m = MatrixXcd::Zero(fam.hilbert_dim(), fam.hilbert_dim());
    for (size_t k = 0; k < H.terms().size(); ++k) {
        const auto& term = H.terms()[k];
        if (cached) m += term.coeff(t) * H.term_matrices()[k];
        else m += term.coeff(t) * monomial_matrix(fam, term.ops);
    }
    return m;
}

bool is_hermitian(const Family& fam, const OperatorPolynomial& H, double t, double tol) {
    MatrixXcd m = matrix_representation(fam, H, t);
    double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

std::string to_string(const Generator& g) {
    std::ostringstream os;
    switch (g.kind) {
    case GenKind::Create: os << "a" << g.i + 1 << "+"; break;
    case GenKind::Annihilate: os << "a" << g.i + 1; break;
    case GenKind::JPlus: os << "J+" << g.i + 1; break;
    case GenKind::JMinus: os << "J-" << g.i + 1; break;
    case GenKind::JZ: os << "Jz" << g.i + 1; break;
    case GenKind::E: os << "E" << g.i + 1 << "," << g.j + 1; break;
    }
    return os.str();
}

std::string to_string(const OperatorPolynomial& poly) {
    std::ostringstream os;
    bool first = true;
    for (const auto& t : poly.terms()) {
        if (!first) os << " + ";
        first = false;
        if (t.coeff.constant()) os << "(" << t.coeff.value.real() << (t.coeff.value.imag() < 0 ? "-" : "+")
                                   << std::abs(t.coeff.value.imag()) << "i)";
        else os << "c(t)";
        for (const auto& g : t.ops) os << " " << to_string(g);
        if (t.ops.empty()) os << " 1";
    }
    if (first) os << "0";
    return os.str();
}

} // namespace semiprop
