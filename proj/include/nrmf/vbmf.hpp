#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nrmf/eig.hpp"
#include "nrmf/error.hpp"
#include "nrmf/nrmf.hpp"
#include "nrmf/tensor.hpp"

namespace nrmf {

// Empirical variational Bayes estimate for one observation matrix: the
// number of components whose singular values clear the EVB threshold once
// the noise variance has been fitted, plus the shrunken value estimates for
// the retained components.
struct VbmfEstimate {
    int rank = 0;
    double sigma2 = 0.0;
    std::vector<double> observed_sv;  // descending
    std::vector<double> shrunk_sv;    // one per retained component
    int rows = 0, cols = 0;           // after orientation normalization, rows <= cols
};

namespace detail {

// tau(x): positive root of t^2 - (x - 1 - alpha) t + alpha = 0.
inline double evb_tau(double x, double alpha) {
    const double b = x - (1.0 + alpha);
    return 0.5 * (b + std::sqrt(std::max(b * b - 4.0 * alpha, 0.0)));
}

// VB free energy as a function of sigma^2 over the observed spectrum.
// Components with an exactly-zero singular value enter only through the
// (L - H) log sigma^2 term.
inline double evb_free_energy(double sigma2, int rows, int cols,
                              const std::vector<double>& sv_nonzero, int n_zero,
                              double alpha, double xubar) {
    double f = 0.0;
    for (double s : sv_nonzero) {
        const double x = s * s / (cols * sigma2);
        if (x <= xubar) {
            f += x - std::log(x);
        } else {
            const double tau = evb_tau(x, alpha);
            f += x - tau + std::log((tau + 1.0) / x) + alpha * std::log(tau / alpha + 1.0);
        }
    }
    (void)rows;
    f += static_cast<double>(n_zero) * std::log(sigma2);
    return f;
}

// Golden-section minimization of the free energy on [lo, hi] in log space;
// bracketing tolerance 1e-12 relative in sigma^2.
inline double evb_minimize_interval(double lo, double hi, int rows, int cols,
                                    const std::vector<double>& sv_nonzero, int n_zero,
                                    double alpha, double xubar) {
    double a = std::log(lo), b = std::log(hi);
    const double gr = 0.6180339887498949;
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = evb_free_energy(std::exp(x1), rows, cols, sv_nonzero, n_zero, alpha, xubar);
    double f2 = evb_free_energy(std::exp(x2), rows, cols, sv_nonzero, n_zero, alpha, xubar);
    while (b - a > 1e-12) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = evb_free_energy(std::exp(x1), rows, cols, sv_nonzero, n_zero, alpha, xubar);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = evb_free_energy(std::exp(x2), rows, cols, sv_nonzero, n_zero, alpha, xubar);
        }
    }
    return std::exp(0.5 * (a + b));
}

}  // namespace detail

// Analytic empirical VBMF on a single observation matrix: fits the noise
// variance by minimizing the VB free energy over the observed singular
// spectrum, then counts the singular values above the EVB threshold
// sqrt(M sigma^2 (1+taubar)(1+alpha/taubar)), taubar = 2.5129 sqrt(alpha).
// Deterministic; the sigma^2 search runs over the finite intervals induced
// by the spectrum's threshold crossings.
inline VbmfEstimate vbmf_rank(const DenseMatrix& observation) {
    // orient so rows <= cols
    const DenseMatrix w =
        observation.rows() <= observation.cols() ? observation : observation.transposed();
    const int rows = w.rows();
    const int cols = w.cols();

    // singular values via the small-side Gram matrix
    const DenseMatrix gram = matmul_nt(w, w);
    EigResult eig = sym_eig(gram);
    std::vector<double> sv(eig.eigenvalues.size());
    for (std::size_t i = 0; i < sv.size(); ++i)
        sv[i] = std::sqrt(std::max(eig.eigenvalues[i], 0.0));

    const double s_max = sv.empty() ? 0.0 : sv[0];
    if (s_max <= 0.0) throw_degenerate("vbmf_rank: zero observation matrix");

    // numerical rank floor: roundoff dust is treated as exact zero
    std::vector<double> sv_nonzero;
    for (double s : sv)
        if (s > 1e-14 * s_max) sv_nonzero.push_back(s);
    const int n_zero = rows - static_cast<int>(sv_nonzero.size());

    const double alpha = static_cast<double>(rows) / cols;
    const double taubar = 2.5129 * std::sqrt(alpha);
    const double xubar = (1.0 + taubar) * (1.0 + alpha / taubar);

    // search bracket from the spectrum
    double sum_sq = 0.0;
    for (double s : sv) sum_sq += s * s;
    const double upper = sum_sq / (static_cast<double>(rows) * cols);
    // at most ceil(L/(1+alpha)) - 1 components can clear the threshold; the
    // spectrum past that point brackets the noise level
    int tail_start = static_cast<int>(
        std::min(std::ceil(rows / (1.0 + alpha)) - 1.0, static_cast<double>(rows)));
    tail_start = std::clamp(tail_start, 0, rows - 1);
    double tail_sq = 0.0;
    for (int i = tail_start; i < rows; ++i) tail_sq += sv[static_cast<std::size_t>(i)] * sv[static_cast<std::size_t>(i)];
    double lower = std::max(sv[static_cast<std::size_t>(tail_start)] * sv[static_cast<std::size_t>(tail_start)] / (cols * xubar),
                            tail_sq / (static_cast<double>(rows - tail_start) * cols));
    lower = std::max(lower, s_max * s_max / cols * 1e-30);  // relative floor keeps scale invariance
    lower = std::min(lower, upper);

    VbmfEstimate est;
    est.rows = rows;
    est.cols = cols;
    est.observed_sv = sv;

    if (lower >= upper) {
        est.sigma2 = upper;
    } else {
        // candidate intervals split where x_h = s_h^2/(M sigma^2) crosses xubar
        std::vector<double> knots{lower, upper};
        for (double s : sv_nonzero) {
            const double k = s * s / (cols * xubar);
            if (k > lower && k < upper) knots.push_back(k);
        }
        std::sort(knots.begin(), knots.end());
        double best_sigma2 = upper;
        double best_f = detail::evb_free_energy(upper, rows, cols, sv_nonzero, n_zero, alpha, xubar);
        for (double k : knots) {
            const double f = detail::evb_free_energy(k, rows, cols, sv_nonzero, n_zero, alpha, xubar);
            if (f < best_f) {
                best_f = f;
                best_sigma2 = k;
            }
        }
        for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
            if (knots[i + 1] <= knots[i]) continue;
            const double cand = detail::evb_minimize_interval(knots[i], knots[i + 1], rows, cols,
                                                              sv_nonzero, n_zero, alpha, xubar);
            const double f = detail::evb_free_energy(cand, rows, cols, sv_nonzero, n_zero, alpha, xubar);
            if (f < best_f) {
                best_f = f;
                best_sigma2 = cand;
            }
        }
        est.sigma2 = best_sigma2;
    }

    const double threshold = std::sqrt(static_cast<double>(cols) * est.sigma2 * xubar);
    for (double s : sv) {
        if (s <= threshold) break;
        const double a = (rows + cols) * est.sigma2 / (s * s);
        const double b = 4.0 * rows * cols * est.sigma2 * est.sigma2 / (s * s * s * s);
        const double disc = std::max((1.0 - a) * (1.0 - a) - b, 0.0);
        est.shrunk_sv.push_back(0.5 * s * (1.0 - a + std::sqrt(disc)));
    }
    est.rank = static_cast<int>(est.shrunk_sv.size());
    return est;
}

// EVB rank estimates for both channel unfoldings of a kernel, packaged like
// the energy-threshold selector's output. A zero EVB rank is clamped to 1:
// a rank-0 conv stage is not constructible.
inline RankPair vbmf_rank_pair(const Tensor4& kernel, std::string layer_id = "") {
    const VbmfEstimate m3 = vbmf_rank(matricize_mode3(kernel));
    const VbmfEstimate m4 = vbmf_rank(matricize_mode4(kernel));

    RankPair r;
    r.layer_id = std::move(layer_id);
    r.method = "vbmf";
    r.s = kernel.s();
    r.t = kernel.t();
    r.r3 = std::max(1, std::min(m3.rank, kernel.s()));
    r.r4 = std::max(1, std::min(m4.rank, kernel.t()));

    const std::vector<double> lambda = gram_eigenvalues(kernel, 3);
    const std::vector<double> xi = gram_eigenvalues(kernel, 4);
    for (double v : lambda) r.e1 += v;
    for (double v : xi) r.e2 += v;
    double cum = 0.0;
    for (int i = 0; i < r.r3; ++i) cum += lambda[static_cast<std::size_t>(i)];
    r.retained1 = r.e1 > 0.0 ? cum / r.e1 : 0.0;
    cum = 0.0;
    for (int i = 0; i < r.r4; ++i) cum += xi[static_cast<std::size_t>(i)];
    r.retained2 = r.e2 > 0.0 ? cum / r.e2 : 0.0;
    return r;
}

}  // namespace nrmf
