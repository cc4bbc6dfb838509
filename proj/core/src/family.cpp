#include "semiprop/family.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace semiprop {

namespace {

bool is_half_integer_spin(double J) {
    double twoJ = 2.0 * J;
    return twoJ >= 1.0 - 1e-12 && std::abs(twoJ - std::round(twoJ)) < 1e-12;
}

double log_factorial(int n) { return std::lgamma(double(n) + 1.0); }

// sqrt(binom(n, k)) without overflow for the spin amplitudes
double sqrt_binom(int n, int k) {
    return std::exp(0.5 * (log_factorial(n) - log_factorial(k) - log_factorial(n - k)));
}

void enumerate_compositions(int n_modes, int total, std::vector<int>& cur,
                            std::vector<std::vector<int>>& out) {
    if (n_modes == 1) {
        cur.push_back(total);
        out.push_back(cur);
        cur.pop_back();
        return;
    }
    for (int m = 0; m <= total; ++m) {
        cur.push_back(m);
        enumerate_compositions(n_modes - 1, total - m, cur, out);
        cur.pop_back();
    }
}

} // namespace

Family Family::canonical(int d, int fock_cutoff, double hbar) {
    if (d < 1) throw Error("canonical family: d must be >= 1");
    if (fock_cutoff < 1) throw Error("canonical family: fock_cutoff must be >= 1");
    if (hbar <= 0.0) throw Error("hbar must be positive");
    auto p = std::make_shared<detail::FamilyData>();
    p->kind = FamilyKind::Canonical;
    p->d = d;
    p->hbar = hbar;
    p->fock_cutoff = fock_cutoff;
    // basis: occupation tuples (m_1..m_d), lexicographic, last mode fastest
    Eigen::Index dim = 1;
    for (int j = 0; j < d; ++j) {
        dim *= (fock_cutoff + 1);
        if (dim > (1 << 22)) throw Error("canonical family: basis too large");
    }
    p->hilbert_dim = dim;
    p->basis_occ.reserve(dim);
    std::vector<int> occ(d, 0);
    for (Eigen::Index m = 0; m < dim; ++m) {
        p->basis_occ.push_back(occ);
        double lc = 0.0;
        for (int j = 0; j < d; ++j) lc -= 0.5 * log_factorial(occ[j]);
        p->basis_coeff.push_back(std::exp(lc));
        for (int j = d - 1; j >= 0; --j) {
            if (++occ[j] <= fock_cutoff) break;
            occ[j] = 0;
        }
    }
    p->basis_exp = p->basis_occ;
    return Family(std::move(p));
}

Family Family::spin(std::vector<double> J, double hbar) {
    if (J.empty()) throw Error("spin family: at least one spin required");
    for (double j : J)
        if (!is_half_integer_spin(j)) throw Error("spin family: every J_k must be in {1/2, 1, 3/2, ...}");
    if (hbar <= 0.0) throw Error("hbar must be positive");
    auto p = std::make_shared<detail::FamilyData>();
    p->kind = FamilyKind::Spin;
    p->d = int(J.size());
    p->hbar = hbar;
    p->spins = std::move(J);
    Eigen::Index dim = 1;
    std::vector<int> twoJ(p->d);
    for (int k = 0; k < p->d; ++k) {
        twoJ[k] = int(std::lround(2.0 * p->spins[k]));
        dim *= (twoJ[k] + 1);
    }
    p->hilbert_dim = dim;
    // basis: tensor product with M_k ascending from -J_k; first particle slowest.
    // basis_occ stores n_k = J_k + M_k in 0..2J_k.
    std::vector<int> occ(p->d, 0);
    for (Eigen::Index m = 0; m < dim; ++m) {
        p->basis_occ.push_back(occ);
        double c = 1.0;
        for (int k = 0; k < p->d; ++k) c *= sqrt_binom(twoJ[k], occ[k]);
        p->basis_coeff.push_back(c);
        for (int k = p->d - 1; k >= 0; --k) {
            if (++occ[k] <= twoJ[k]) break;
            occ[k] = 0;
        }
    }
    p->basis_exp = p->basis_occ;
    return Family(std::move(p));
}

Family Family::sun(int n, int N, double hbar) {
    if (n < 2) throw Error("SU(n) family: n must be >= 2");
    if (N < 1) throw Error("SU(n) family: N must be >= 1");
    if (hbar <= 0.0) throw Error("hbar must be positive");
    auto p = std::make_shared<detail::FamilyData>();
    p->kind = FamilyKind::SuN;
    p->d = n - 1;
    p->hbar = hbar;
    p->n = n;
    p->N = N;
    // basis: lexicographic (m_1,...,m_n) with sum m = N; reference |0,..,0,N> first
    std::vector<int> cur;
    enumerate_compositions(n, N, cur, p->basis_occ);
    p->hilbert_dim = Eigen::Index(p->basis_occ.size());
    for (const auto& occ : p->basis_occ) {
        double lc = 0.5 * log_factorial(N);
        for (int j = 0; j < n; ++j) lc -= 0.5 * log_factorial(occ[j]);
        p->basis_coeff.push_back(std::exp(lc));
        // amplitude powers involve only the first n-1 modes
        p->basis_exp.push_back(std::vector<int>(occ.begin(), occ.begin() + (n - 1)));
    }
    return Family(std::move(p));
}

bool Family::operator==(const Family& o) const {
    const auto& a = *p_;
    const auto& b = *o.p_;
    return a.kind == b.kind && a.d == b.d && a.hbar == b.hbar && a.fock_cutoff == b.fock_cutoff &&
           a.spins == b.spins && a.n == b.n && a.N == b.N;
}

std::string Family::describe() const {
    std::ostringstream os;
    switch (kind()) {
    case FamilyKind::Canonical:
        os << "canonical(d=" << dim() << ", cutoff=" << fock_cutoff() << ")";
        break;
    case FamilyKind::Spin: {
        os << "spin(J=";
        for (size_t k = 0; k < spins().size(); ++k) os << (k ? "," : "") << spins()[k];
        os << ")";
        break;
    }
    case FamilyKind::SuN:
        os << "sun(n=" << sun_n() << ", N=" << sun_N() << ")";
        break;
    }
    return os.str();
}

namespace forms {

std::vector<cplx> to_std(const VectorXcd& v) {
    return std::vector<cplx>(v.data(), v.data() + v.size());
}

VectorXcd to_eigen(const std::vector<cplx>& v) {
    return Eigen::Map<const VectorXcd>(v.data(), Eigen::Index(v.size()));
}

MatrixXcd to_eigen(const SMat<cplx>& m) {
    MatrixXcd out(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) out(i, j) = m(i, j);
    return out;
}

} // namespace forms

KahlerEval kahler(const Family& fam, const VectorXcd& zbar_prime, const VectorXcd& z) {
    auto zb = forms::to_std(zbar_prime);
    auto zz = forms::to_std(z);
    KahlerEval out;
    out.f = forms::kahler_f(fam.data(), zb, zz);
    out.df_dz = forms::to_eigen(forms::kahler_grad_z(fam.data(), zb, zz));
    out.df_dzbar = forms::to_eigen(forms::kahler_grad_zbar(fam.data(), zb, zz));
    return out;
}

MatrixXcd metric(const Family& fam, const VectorXcd& zbar_prime, const VectorXcd& z) {
    return forms::to_eigen(forms::metric_at(fam.data(), forms::to_std(zbar_prime), forms::to_std(z)));
}

MatrixXcd metric_inverse(const Family& fam, const VectorXcd& zbar_prime, const VectorXcd& z) {
    MatrixXcd g = metric(fam, zbar_prime, z);
    Eigen::JacobiSVD<MatrixXcd> svd(g);
    double smin = svd.singularValues().minCoeff();
    double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin > 1e14)
        throw SingularMetric("metric_inverse: condition estimate exceeds 1e14 at " + fam.describe());
    return forms::to_eigen(
        forms::metric_inverse_at(fam.data(), forms::to_std(zbar_prime), forms::to_std(z)));
}

cplx overlap(const Family& fam, const VectorXcd& zbar_prime, const VectorXcd& z, bool normalized) {
    auto zb = forms::to_std(zbar_prime);
    auto zz = forms::to_std(z);
    cplx f = forms::kahler_f(fam.data(), zb, zz);
    if (!normalized) return std::exp(f);
    // genuine labels: zbar_prime = conj(z'), so the two norm factors are real
    std::vector<cplx> zp(zb.size()), zzc(zz.size());
    for (size_t k = 0; k < zb.size(); ++k) zp[k] = std::conj(zb[k]);
    for (size_t k = 0; k < zz.size(); ++k) zzc[k] = std::conj(zz[k]);
    cplx fpp = forms::kahler_f(fam.data(), zb, zp);
    cplx fzz = forms::kahler_f(fam.data(), zzc, zz);
    return std::exp(f - 0.5 * fpp - 0.5 * fzz);
}

double fock_tail_bound(double x, int cutoff) {
    // sum_{m>c} x^m/m! <= e^x x^{c+1}/(c+1)!
    double lt = x + double(cutoff + 1) * std::log(std::max(x, 1e-300)) - std::lgamma(double(cutoff) + 2.0);
    return std::exp(lt);
}

int canonical_cutoff_for(double max_abs_z, double tol) {
    double x = max_abs_z * max_abs_z;
    for (int c = 1; c < 4096; ++c)
        if (fock_tail_bound(x, c) < tol) return c;
    throw TruncationInsufficient("canonical_cutoff_for: no cutoff below 4096 satisfies the tolerance");
}

HilbertVector state_vector(const Family& fam, const VectorXcd& z, bool normalized) {
    if (fam.kind() == FamilyKind::Canonical) {
        double xmax = 0.0;
        for (Eigen::Index j = 0; j < z.size(); ++j) xmax = std::max(xmax, std::norm(z[j]));
        if (fock_tail_bound(xmax, fam.fock_cutoff()) > 1e-16)
            throw TruncationInsufficient("state_vector: Fock cutoff " + std::to_string(fam.fock_cutoff()) +
                                         " insufficient for |z|^2 = " + std::to_string(xmax));
    }
    auto amps = forms::amplitudes(fam.data(), forms::to_std(z));
    HilbertVector v = forms::to_eigen(amps);
    if (normalized) {
        VectorXcd zc = z.conjugate();
        cplx f = forms::kahler_f(fam.data(), forms::to_std(zc), forms::to_std(z));
        v *= std::exp(-0.5 * f);
    }
    return v;
}

double measure_kappa(const Family& fam) {
    switch (fam.kind()) {
    case FamilyKind::Canonical:
        return 1.0;
    case FamilyKind::Spin: {
        // prod (2J_k+1)/(2J_k), exact rational in integers
        long long num = 1, den = 1;
        for (double J : fam.spins()) {
            int twoJ = int(std::lround(2.0 * J));
            num *= (twoJ + 1);
            den *= twoJ;
            if (num > (1LL << 60) || den > (1LL << 60)) throw Error("kappa: overflow guard");
        }
        return double(num) / double(den);
    }
    case FamilyKind::SuN: {
        // (N+n-1)!/(N! N^{n-1}) = prod_{j=1}^{n-1} (N+j) / N^{n-1}
        long long num = 1, den = 1;
        for (int j = 1; j <= fam.sun_n() - 1; ++j) {
            num *= (fam.sun_N() + j);
            den *= fam.sun_N();
            if (num > (1LL << 60) || den > (1LL << 60)) throw Error("kappa: overflow guard");
        }
        return double(num) / double(den);
    }
    }
    throw Error("unreachable");
}

double measure_weight(const Family& fam, const VectorXcd& z) {
    VectorXcd zc = z.conjugate();
    MatrixXcd g = metric(fam, zc, z);
    double detg = g.partialPivLu().determinant().real();
    double w = measure_kappa(fam) * detg / std::pow(M_PI, fam.dim());
    if (!(w > 0.0)) throw SingularPoint("measure_weight: nonpositive density");
    return w;
}

cplx poisson_bracket(const Family& fam, const PhaseGradient& grad1, const PhaseGradient& grad2,
                     const PhasePoint& at) {
    MatrixXcd xi = metric_inverse(fam, at.zbar, at.z);
    cplx t1 = grad1.dz.transpose() * xi.transpose() * grad2.dzbar;
    cplx t2 = grad1.dzbar.transpose() * xi * grad2.dz;
    return cplx(0, -1) * (t1 - t2);
}

} // namespace semiprop
