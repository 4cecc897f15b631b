#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "nrmf/error.hpp"
#include "nrmf/tensor.hpp"

namespace nrmf {

// Eigenvalues sorted descending; eigenvector column i pairs with
// eigenvalue i. Ties keep the pre-sort (rotation) order.
struct EigResult {
    std::vector<double> eigenvalues;
    DenseMatrix eigenvectors;
};

namespace detail {

inline double off_diagonal_norm(const DenseMatrix& a) {
    double s = 0.0;
    for (int p = 0; p < a.rows(); ++p)
        for (int q = 0; q < a.cols(); ++q)
            if (p != q) s += a.at(p, q) * a.at(p, q);
    return std::sqrt(s);
}

}  // namespace detail

// Symmetric eigendecomposition by cyclic Jacobi rotations. Intended for the
// small S x S / T x T Gram matrices of kernel unfoldings, where the Gram
// side is the cheap dimension. Sweeps are capped at 100 with an
// off-diagonal stopping tolerance of 1e-12 * ||A||_F; exceeding the cap is
// a numeric error carrying the residual. `tol` bounds the eigenpair
// residual ||A v - lambda v|| / ||A|| and the negative-eigenvalue clamp:
// roundoff negatives no larger than tol * ||A||_F are set to exactly zero.
inline EigResult sym_eig(const DenseMatrix& a, double tol = 1e-10) {
    const int n = a.rows();
    if (n != a.cols()) throw_shape("sym_eig: matrix must be square");

    double max_abs = 0.0;
    for (double v : a.data()) max_abs = std::max(max_abs, std::fabs(v));
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q)
            if (std::fabs(a.at(p, q) - a.at(q, p)) > 1e-9 * std::max(max_abs, 1e-300))
                throw_shape("sym_eig: matrix is not symmetric");

    DenseMatrix b = a;
    DenseMatrix v = DenseMatrix::identity(n);
    const double frob = a.frobenius_norm();
    const double stop = 1e-12 * frob;
    constexpr int kMaxSweeps = 100;

    double off = detail::off_diagonal_norm(b);
    int sweep = 0;
    while (off > stop && frob > 0.0) {
        if (sweep++ >= kMaxSweeps)
            throw_numeric("sym_eig: no convergence after 100 sweeps, off-diagonal residual " +
                          std::to_string(off));
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = b.at(p, q);
                if (std::fabs(apq) <= stop / (n * n + 1.0)) continue;
                const double app = b.at(p, p);
                const double aqq = b.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int i = 0; i < n; ++i) {
                    const double bip = b.at(i, p);
                    const double biq = b.at(i, q);
                    b.at(i, p) = c * bip - s * biq;
                    b.at(i, q) = s * bip + c * biq;
                }
                for (int i = 0; i < n; ++i) {
                    const double bpi = b.at(p, i);
                    const double bqi = b.at(q, i);
                    b.at(p, i) = c * bpi - s * bqi;
                    b.at(q, i) = s * bpi + c * bqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = v.at(i, p);
                    const double viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
        off = detail::off_diagonal_norm(b);
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return b.at(x, x) > b.at(y, y); });

    EigResult res;
    res.eigenvalues.resize(static_cast<std::size_t>(n));
    res.eigenvectors = DenseMatrix(n, n);
    for (int c = 0; c < n; ++c) {
        const int src = order[static_cast<std::size_t>(c)];
        double lambda = b.at(src, src);
        if (lambda < 0.0 && -lambda <= tol * frob) lambda = 0.0;
        res.eigenvalues[static_cast<std::size_t>(c)] = lambda;

        // deterministic sign: largest-magnitude component positive
        int imax = 0;
        double amax = -1.0;
        for (int i = 0; i < n; ++i) {
            const double av = std::fabs(v.at(i, src));
            if (av > amax) {
                amax = av;
                imax = i;
            }
        }
        const double sign = v.at(imax, src) < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) res.eigenvectors.at(i, c) = sign * v.at(i, src);
    }
    return res;
}

// Descending eigenvalues of the mode-3 or mode-4 Gram matrix of a kernel.
// Roundoff dust smaller than 1e-12 of the leading eigenvalue (including
// negatives) is clamped to exactly zero, so exactly-low-rank kernels report
// an exactly-zero tail.
inline std::vector<double> gram_eigenvalues(const Tensor4& k, int mode) {
    const DenseMatrix g = mode_gram(k, mode);
    EigResult e = sym_eig(g);
    if (!e.eigenvalues.empty()) {
        const double lead = std::max(e.eigenvalues.front(), 0.0);
        const double dust = 1e-12 * lead;
        for (double& x : e.eigenvalues)
            if (x < dust) x = 0.0;
    }
    return e.eigenvalues;
}

}  // namespace nrmf
