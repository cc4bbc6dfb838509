#include "semiprop/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "semiprop/errors.hpp"

namespace semiprop::linalg {

namespace {

MatrixXcd denman_beavers(const MatrixXcd& a) {
    MatrixXcd y = a, z = MatrixXcd::Identity(a.rows(), a.cols());
    for (int it = 0; it < 60; ++it) {
        MatrixXcd yn = 0.5 * (y + z.inverse());
        MatrixXcd zn = 0.5 * (z + y.inverse());
        double delta = (yn - y).norm();
        y = yn;
        z = zn;
        if (delta < 1e-15 * std::max(1.0, y.norm())) break;
    }
    return y;
}

} // namespace

MatrixXcd sqrtm_principal(const MatrixXcd& a) {
    const Eigen::Index n = a.rows();
    if (n == 1) {
        cplx v = a(0, 0);
        if (v.real() <= 0.0 && std::abs(v.imag()) < 1e-300)
            throw SqrtBranchFailure("sqrtm: eigenvalue on the branch cut");
        MatrixXcd r(1, 1);
        r(0, 0) = std::sqrt(v);
        return r;
    }
    Eigen::ComplexSchur<MatrixXcd> schur(a);
    if (schur.info() != Eigen::Success) throw SqrtBranchFailure("sqrtm: Schur decomposition failed");
    const MatrixXcd& t = schur.matrixT();
    const MatrixXcd& q = schur.matrixU();
    for (Eigen::Index i = 0; i < n; ++i) {
        cplx ev = t(i, i);
        if (ev.real() <= 0.0 && std::abs(ev.imag()) <= 1e-14 * std::abs(ev.real()))
            throw SqrtBranchFailure("sqrtm: eigenvalue on the branch cut");
    }
    MatrixXcd u = MatrixXcd::Zero(n, n);
    bool degenerate = false;
    for (Eigen::Index i = 0; i < n; ++i) u(i, i) = std::sqrt(t(i, i));
    for (Eigen::Index k = 1; k < n && !degenerate; ++k) {
        for (Eigen::Index i = 0; i + k < n; ++i) {
            Eigen::Index j = i + k;
            cplx s = t(i, j);
            for (Eigen::Index m = i + 1; m < j; ++m) s -= u(i, m) * u(m, j);
            cplx den = u(i, i) + u(j, j);
            if (std::abs(den) < 1e-14 * (std::abs(u(i, i)) + std::abs(u(j, j)) + 1e-300)) {
                degenerate = true;
                break;
            }
            u(i, j) = s / den;
        }
    }
    if (degenerate) return denman_beavers(a);
    return q * u * q.adjoint();
}

MatrixXcd solve_sylvester_sym(const MatrixXcd& a, const MatrixXcd& b) {
    const Eigen::Index n = a.rows();
    if (n == 1) {
        MatrixXcd x(1, 1);
        x(0, 0) = b(0, 0) / (2.0 * a(0, 0));
        return x;
    }
    // vec(X A + A X) = (A^T kron I + I kron A) vec(X), column-major vec
    MatrixXcd k = MatrixXcd::Zero(n * n, n * n);
    MatrixXcd id = MatrixXcd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index p = 0; p < n; ++p)
                for (Eigen::Index q = 0; q < n; ++q) {
                    // row (i + n j) of vec index pairs (p + n q)
                    cplx v = a(q, j) * id(i, p) + id(j, q) * a(i, p);
                    if (v != cplx(0.0, 0.0)) k(i + n * j, p + n * q) += v;
                }
    Eigen::VectorXcd rhs(n * n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) rhs(i + n * j) = b(i, j);
    Eigen::VectorXcd xv = k.partialPivLu().solve(rhs);
    MatrixXcd x(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) x(i, j) = xv(i + n * j);
    return x;
}

MatrixXcd expm(const MatrixXcd& a) { return a.exp(); }

} // namespace semiprop::linalg
