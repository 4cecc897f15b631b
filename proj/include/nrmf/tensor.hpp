#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "nrmf/error.hpp"

namespace nrmf {

// Row-major dense matrix of doubles.
class DenseMatrix {
  public:
    DenseMatrix() = default;
    DenseMatrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols),
          data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
        if (rows < 1 || cols < 1) throw_shape("matrix dims must be positive");
    }
    DenseMatrix(int rows, int cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows < 1 || cols < 1) throw_shape("matrix dims must be positive");
        if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
            throw_shape("matrix data length does not match rows*cols");
    }

    static DenseMatrix identity(int n) {
        DenseMatrix m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& at(int r, int c) {
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }
    double at(int r, int c) const {
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    DenseMatrix transposed() const {
        DenseMatrix t(cols_, rows_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c) t.at(c, r) = at(r, c);
        return t;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    double trace() const {
        if (rows_ != cols_) throw_shape("trace of non-square matrix");
        double s = 0.0;
        for (int i = 0; i < rows_; ++i) s += at(i, i);
        return s;
    }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C = A * B
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) throw_shape("matmul inner dims differ");
    DenseMatrix c(a.rows(), b.cols());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* cd = c.data().data();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = ad[static_cast<std::size_t>(i) * k + p];
            if (aip == 0.0) continue;
            const double* brow = bd + static_cast<std::size_t>(p) * n;
            double* crow = cd + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

// C = A * B^T
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.cols()) throw_shape("matmul_nt inner dims differ");
    DenseMatrix c(a.rows(), b.rows());
    const int m = a.rows(), k = a.cols(), n = b.rows();
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data().data() + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const double* brow = b.data().data() + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            c.at(i, j) = s;
        }
    }
    return c;
}

// C = A^T * B
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows()) throw_shape("matmul_tn inner dims differ");
    DenseMatrix c(a.cols(), b.cols());
    const int m = a.cols(), k = a.rows(), n = b.cols();
    for (int p = 0; p < k; ++p) {
        const double* arow = a.data().data() + static_cast<std::size_t>(p) * m;
        const double* brow = b.data().data() + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double aip = arow[i];
            if (aip == 0.0) continue;
            double* crow = c.data().data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

// General dense d-way tensor. Linearization is row-major: the LAST index
// varies fastest. flat(i_1..i_d) = ((i_1*n_2 + i_2)*n_3 + ...)*n_d + i_d.
// Every reshaping/unfolding in this library is defined against this order.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> dims, double fill = 0.0) : dims_(std::move(dims)) {
        std::size_t n = 1;
        for (int d : dims_) {
            if (d < 1) throw_shape("tensor dims must be positive");
            n *= static_cast<std::size_t>(d);
        }
        data_.assign(n, fill);
    }
    Tensor(std::vector<int> dims, std::vector<double> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        std::size_t n = 1;
        for (int d : dims_) {
            if (d < 1) throw_shape("tensor dims must be positive");
            n *= static_cast<std::size_t>(d);
        }
        if (n != data_.size()) throw_shape("tensor data length does not match dims");
    }

    int order() const { return static_cast<int>(dims_.size()); }
    const std::vector<int>& dims() const { return dims_; }
    int dim(int k) const { return dims_[static_cast<std::size_t>(k)]; }
    std::size_t size() const { return data_.size(); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

  private:
    std::vector<int> dims_;
    std::vector<double> data_;
};

// Element order is preserved; only the shape changes.
inline Tensor reshape(const Tensor& t, const std::vector<int>& new_dims) {
    std::size_t n = 1;
    for (int d : new_dims) {
        if (d < 1) throw_shape("reshape dims must be positive");
        n *= static_cast<std::size_t>(d);
    }
    if (n != t.size()) throw_shape("reshape element count mismatch");
    return Tensor(new_dims, t.data());
}

inline Tensor reshape(const DenseMatrix& m, const std::vector<int>& new_dims) {
    return reshape(Tensor({m.rows(), m.cols()}, m.data()), new_dims);
}

// 4-way convolution kernel [D_h x D_w x S x T]: spatial rows, spatial cols,
// input channels, output channels. Same linearization as Tensor:
// flat(i,j,a,b) = ((i*D_w + j)*S + a)*T + b.
class Tensor4 {
  public:
    Tensor4() = default;
    Tensor4(int dh, int dw, int s, int t, double fill = 0.0)
        : dh_(dh), dw_(dw), s_(s), t_(t) {
        if (dh < 1 || dw < 1 || s < 1 || t < 1) throw_shape("kernel dims must be positive");
        data_.assign(count(), fill);
    }
    Tensor4(int dh, int dw, int s, int t, std::vector<double> data)
        : dh_(dh), dw_(dw), s_(s), t_(t), data_(std::move(data)) {
        if (dh < 1 || dw < 1 || s < 1 || t < 1) throw_shape("kernel dims must be positive");
        if (data_.size() != count()) throw_shape("kernel data length does not match dims");
    }

    int dh() const { return dh_; }
    int dw() const { return dw_; }
    int s() const { return s_; }
    int t() const { return t_; }
    std::size_t count() const {
        return static_cast<std::size_t>(dh_) * dw_ * s_ * t_;
    }

    double& at(int i, int j, int a, int b) {
        return data_[flat(i, j, a, b)];
    }
    double at(int i, int j, int a, int b) const {
        return data_[flat(i, j, a, b)];
    }
    std::size_t flat(int i, int j, int a, int b) const {
        return ((static_cast<std::size_t>(i) * dw_ + j) * s_ + a) * t_ + b;
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }
    double sum_squares() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return s;
    }

    Tensor as_tensor() const { return Tensor({dh_, dw_, s_, t_}, data_); }
    static Tensor4 from_tensor(const Tensor& t) {
        if (t.order() != 4) throw_shape("expected 4-way tensor");
        return Tensor4(t.dim(0), t.dim(1), t.dim(2), t.dim(3), t.data());
    }

  private:
    int dh_ = 0, dw_ = 0, s_ = 0, t_ = 0;
    std::vector<double> data_;
};

// Mode-3 unfolding W1 [S x (T*D_h*D_w)]: row a holds every entry with input
// channel a; column index is (b*D_h + i)*D_w + j (output channel slowest).
inline DenseMatrix matricize_mode3(const Tensor4& k) {
    DenseMatrix m(k.s(), k.t() * k.dh() * k.dw());
    for (int i = 0; i < k.dh(); ++i)
        for (int j = 0; j < k.dw(); ++j)
            for (int a = 0; a < k.s(); ++a)
                for (int b = 0; b < k.t(); ++b)
                    m.at(a, (b * k.dh() + i) * k.dw() + j) = k.at(i, j, a, b);
    return m;
}

// Mode-4 unfolding W2 [T x (S*D_h*D_w)]: row b holds every entry with output
// channel b; column index is (a*D_h + i)*D_w + j (input channel slowest).
inline DenseMatrix matricize_mode4(const Tensor4& k) {
    DenseMatrix m(k.t(), k.s() * k.dh() * k.dw());
    for (int i = 0; i < k.dh(); ++i)
        for (int j = 0; j < k.dw(); ++j)
            for (int a = 0; a < k.s(); ++a)
                for (int b = 0; b < k.t(); ++b)
                    m.at(b, (a * k.dh() + i) * k.dw() + j) = k.at(i, j, a, b);
    return m;
}

inline Tensor4 dematricize_mode3(const DenseMatrix& m, int dh, int dw, int s, int t) {
    if (m.rows() != s || m.cols() != t * dh * dw)
        throw_shape("mode-3 dematricize shape mismatch");
    Tensor4 k(dh, dw, s, t);
    for (int i = 0; i < dh; ++i)
        for (int j = 0; j < dw; ++j)
            for (int a = 0; a < s; ++a)
                for (int b = 0; b < t; ++b)
                    k.at(i, j, a, b) = m.at(a, (b * dh + i) * dw + j);
    return k;
}

inline Tensor4 dematricize_mode4(const DenseMatrix& m, int dh, int dw, int s, int t) {
    if (m.rows() != t || m.cols() != s * dh * dw)
        throw_shape("mode-4 dematricize shape mismatch");
    Tensor4 k(dh, dw, s, t);
    for (int i = 0; i < dh; ++i)
        for (int j = 0; j < dw; ++j)
            for (int a = 0; a < s; ++a)
                for (int b = 0; b < t; ++b)
                    k.at(i, j, a, b) = m.at(b, (a * dh + i) * dw + j);
    return k;
}

// k-mode product g x_k u. Modes are numbered 1..d to match the usual tensor
// unfolding convention (mode 3 = input channels of a kernel, mode 4 = output
// channels). u is [J x R_k] with R_k = dim k of g; mode k of the result is J.
inline Tensor kmode_product(const Tensor& g, const DenseMatrix& u, int mode) {
    if (mode < 1 || mode > g.order()) throw_shape("mode out of range");
    const int k = mode - 1;
    const int rk = g.dim(k);
    if (u.cols() != rk) throw_shape("k-mode product dim mismatch");
    const int j_dim = u.rows();

    std::size_t outer = 1, inner = 1;
    for (int d = 0; d < k; ++d) outer *= static_cast<std::size_t>(g.dim(d));
    for (int d = k + 1; d < g.order(); ++d) inner *= static_cast<std::size_t>(g.dim(d));

    std::vector<int> out_dims = g.dims();
    out_dims[static_cast<std::size_t>(k)] = j_dim;
    Tensor out(out_dims);

    const double* gd = g.data().data();
    double* od = out.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
        const double* gblock = gd + o * static_cast<std::size_t>(rk) * inner;
        double* oblock = od + o * static_cast<std::size_t>(j_dim) * inner;
        for (int j = 0; j < j_dim; ++j) {
            double* orow = oblock + static_cast<std::size_t>(j) * inner;
            for (int r = 0; r < rk; ++r) {
                const double w = u.at(j, r);
                if (w == 0.0) continue;
                const double* grow = gblock + static_cast<std::size_t>(r) * inner;
                for (std::size_t x = 0; x < inner; ++x) orow[x] += w * grow[x];
            }
        }
    }
    return out;
}

// Sequential k-mode products over every mode; factor k must have column
// count equal to dim k of g.
inline Tensor full_multilinear(const Tensor& g, const std::vector<DenseMatrix>& factors) {
    if (static_cast<int>(factors.size()) != g.order())
        throw_shape("full multilinear product needs one factor per mode");
    Tensor out = g;
    for (int k = 0; k < g.order(); ++k)
        out = kmode_product(out, factors[static_cast<std::size_t>(k)], k + 1);
    return out;
}

// Gram matrix of the mode-3 or mode-4 unfolding (mode is 3 or 4).
inline DenseMatrix mode_gram(const Tensor4& k, int mode) {
    if (mode == 3) {
        const DenseMatrix w = matricize_mode3(k);
        return matmul_nt(w, w);
    }
    if (mode == 4) {
        const DenseMatrix w = matricize_mode4(k);
        return matmul_nt(w, w);
    }
    throw_shape("mode_gram: mode must be 3 or 4");
}

}  // namespace nrmf
