// dual.hpp — Forward-mode dual numbers over complex scalars.
//
// z and zbar are treated as independent holomorphic variables throughout the
// library, so a Dual<std::complex<double>> carries an analytic directional
// derivative. Nesting (Dual<Dual<...>>) yields second and higher derivatives
// with a single code path. A small row-major matrix type is provided for
// dual-valued geometry work; plain complex paths use Eigen instead.

#pragma once

#include <cmath>
#include <complex>
#include <type_traits>
#include <vector>

namespace semiprop {

using cplx = std::complex<double>;

template <class T>
struct Dual {
    T v{}; // value
    T d{}; // tangent

    Dual() = default;
    Dual(T value, T tangent) : v(std::move(value)), d(std::move(tangent)) {}

    // promote anything the underlying scalar can absorb (double, cplx, Dual<...>)
    template <class U, class = std::enable_if_t<std::is_constructible_v<T, U> && !std::is_same_v<std::decay_t<U>, Dual<T>>>>
    Dual(const U& value) : v(value), d{} {}

    Dual& operator+=(const Dual& r) { v += r.v; d += r.d; return *this; }
    Dual& operator-=(const Dual& r) { v -= r.v; d -= r.d; return *this; }
    Dual& operator*=(const Dual& r) {
        d = d * r.v + v * r.d;
        v = v * r.v;
        return *this;
    }
    Dual& operator/=(const Dual& r) {
        d = (d * r.v - v * r.d) / (r.v * r.v);
        v = v / r.v;
        return *this;
    }
};

template <class T> struct is_dual : std::false_type {};
template <class T> struct is_dual<Dual<T>> : std::true_type {};
template <class T> inline constexpr bool is_dual_v = is_dual<std::decay_t<T>>::value;

template <class T> Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <class T> Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <class T> Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <class T> Dual<T> operator/(Dual<T> a, const Dual<T>& b) { return a /= b; }
template <class T> Dual<T> operator-(const Dual<T>& a) { return Dual<T>(-a.v, -a.d); }
template <class T> Dual<T> operator+(const Dual<T>& a) { return a; }

// mixed scalar arithmetic: the scalar rides along with a zero tangent
template <class T, class U, class = std::enable_if_t<!is_dual_v<U>>>
Dual<T> operator+(Dual<T> a, const U& b) { a.v += T(b); return a; }
template <class T, class U, class = std::enable_if_t<!is_dual_v<U>>>
Dual<T> operator+(const U& b, Dual<T> a) { a.v += T(b); return a; }
template <class T, class U, class = std::enable_if_t<!is_dual_v<U>>>
Dual<T> operator-(Dual<T> a, const U& b) { a.v -= T(b); return a; }
template <class T, class U, class = std::enable_if_t<!is_dual_v<U>>>
Dual<T> operator-(const U& b, const Dual<T>& a) { return Dual<T>(T(b) - a.v, -a.d); }
template <class T, class U, class = std::enable_if_t<!is_dual_v<U>>>
Dual<T> operator*(const Dual<T>& a, const U& b) { return Dual<T>(a.v * T(b), a.d * T(b)); }
template <class T, class U, class = std::enable_if_t<!is_dual_v<U>>>
Dual<T> operator*(const U& b, const Dual<T>& a) { return Dual<T>(T(b) * a.v, T(b) * a.d); }
template <class T, class U, class = std::enable_if_t<!is_dual_v<U>>>
Dual<T> operator/(const Dual<T>& a, const U& b) { return Dual<T>(a.v / T(b), a.d / T(b)); }
template <class T, class U, class = std::enable_if_t<!is_dual_v<U>>>
Dual<T> operator/(const U& b, const Dual<T>& a) { return Dual<T>(T(b)) / a; }

using std::exp;
using std::log;
using std::sqrt;

template <class T> Dual<T> exp(const Dual<T>& a) {
    T e = exp(a.v);
    return Dual<T>(e, a.d * e);
}
template <class T> Dual<T> log(const Dual<T>& a) {
    return Dual<T>(log(a.v), a.d / a.v);
}
template <class T> Dual<T> sqrt(const Dual<T>& a) {
    T s = sqrt(a.v);
    return Dual<T>(s, a.d / (2.0 * s));
}

// integer power by repeated squaring (exponents are small occupation numbers)
template <class S> S powi(S base, int n) {
    S out(1.0);
    while (n > 0) {
        if (n & 1) out = out * base;
        base = base * base;
        n >>= 1;
    }
    return out;
}

// full value part of a (possibly nested) dual
inline cplx value_of(const cplx& x) { return x; }
inline cplx value_of(double x) { return cplx(x); }
template <class T> cplx value_of(const Dual<T>& x) { return value_of(x.v); }

inline double abs_of(const cplx& x) { return std::abs(x); }
template <class T> double abs_of(const Dual<T>& x) { return std::abs(value_of(x)); }

// seed helpers: lift a complex vector into duals with one tangent direction set
template <class S>
std::vector<Dual<S>> lift(const std::vector<S>& x) {
    std::vector<Dual<S>> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = Dual<S>(x[i], S{});
    return out;
}

// Small dense matrix of arbitrary scalar type, row-major. Used only where the
// entries are dual numbers; everything plain-complex goes through Eigen.
template <class S>
struct SMat {
    int rows = 0, cols = 0;
    std::vector<S> a;

    SMat() = default;
    SMat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c) {}

    S& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    const S& operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
};

template <class S>
std::vector<S> matvec(const SMat<S>& m, const std::vector<S>& x) {
    std::vector<S> y(m.rows, S{});
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) y[i] = y[i] + m(i, j) * x[j];
    return y;
}

template <class S>
std::vector<S> matvec_t(const SMat<S>& m, const std::vector<S>& x) {
    std::vector<S> y(m.cols, S{});
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) y[j] = y[j] + m(i, j) * x[i];
    return y;
}

} // namespace semiprop
