#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nrmf/error.hpp"
#include "nrmf/rng.hpp"
#include "nrmf/serialize.hpp"
#include "nrmf/tensor.hpp"

namespace nrmf {

// Batch of feature maps, [N x C x H x W], last index fastest.
struct FeatureBatch {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    FeatureBatch() = default;
    FeatureBatch(int n_, int c_, int h_, int w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t flat(int i, int ch, int y, int x) const {
        return ((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x;
    }
    double& at(int i, int ch, int y, int x) { return data[flat(i, ch, y, x)]; }
    double at(int i, int ch, int y, int x) const { return data[flat(i, ch, y, x)]; }
};

enum class LayerKind { Conv2d, Relu, MaxPool2, Flatten, Linear };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2: return "maxpool2";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Linear: return "linear";
    }
    return "?";
}

// Where a layer came from when a conv was replaced by a factorized triple.
struct Provenance {
    std::string from;    // original layer id
    int r3 = 0, r4 = 0;  // ranks the triple was built for
    std::string method;  // "nrmf" or "vbmf"
    std::string role;    // "first", "mid", "last"
};

struct Layer {
    std::string id;
    LayerKind kind = LayerKind::Relu;

    // conv2d
    Tensor4 kernel;
    int stride = 1;
    int pad = 0;

    // linear; weight is [in x out]
    DenseMatrix weight;

    std::vector<double> bias;  // conv2d and linear
    bool trainable = true;
    std::optional<Provenance> provenance;

    bool has_params() const {
        return kind == LayerKind::Conv2d || kind == LayerKind::Linear;
    }
    // membership in the regularized/compressed set: conv kernels larger than 1x1
    bool in_wcl() const {
        return kind == LayerKind::Conv2d && (kernel.dh() > 1 || kernel.dw() > 1);
    }
};

inline Layer make_conv(std::string id, int dh, int dw, int s, int t, int stride = 1,
                       int pad = 0) {
    Layer l;
    l.id = std::move(id);
    l.kind = LayerKind::Conv2d;
    l.kernel = Tensor4(dh, dw, s, t);
    l.bias.assign(static_cast<std::size_t>(t), 0.0);
    l.stride = stride;
    l.pad = pad;
    return l;
}
inline Layer make_relu(std::string id) {
    Layer l;
    l.id = std::move(id);
    l.kind = LayerKind::Relu;
    return l;
}
inline Layer make_maxpool2(std::string id) {
    Layer l;
    l.id = std::move(id);
    l.kind = LayerKind::MaxPool2;
    return l;
}
inline Layer make_flatten(std::string id) {
    Layer l;
    l.id = std::move(id);
    l.kind = LayerKind::Flatten;
    return l;
}
inline Layer make_linear(std::string id, int in, int out) {
    Layer l;
    l.id = std::move(id);
    l.kind = LayerKind::Linear;
    l.weight = DenseMatrix(in, out);
    l.bias.assign(static_cast<std::size_t>(out), 0.0);
    return l;
}

struct Network {
    int in_c = 1, in_h = 0, in_w = 0;
    int num_classes = 0;
    std::vector<Layer> layers;

    Layer& find(const std::string& id) {
        for (Layer& l : layers)
            if (l.id == id) return l;
        throw_shape("unknown layer id: " + id);
    }
    const Layer& find(const std::string& id) const {
        for (const Layer& l : layers)
            if (l.id == id) return l;
        throw_shape("unknown layer id: " + id);
    }
    std::vector<const Layer*> wcl_layers() const {
        std::vector<const Layer*> out;
        for (const Layer& l : layers)
            if (l.in_wcl()) out.push_back(&l);
        return out;
    }
};

// Kaiming-uniform fan-in init for conv and linear weights, zero biases.
inline void init_params(Network& net, std::uint64_t seed) {
    Rng rng(seed);
    for (Layer& l : net.layers) {
        if (l.kind == LayerKind::Conv2d) {
            const double fan_in = static_cast<double>(l.kernel.dh()) * l.kernel.dw() *
                                  l.kernel.s();
            const double bound = std::sqrt(6.0 / fan_in);
            for (double& v : l.kernel.data()) v = rng.uniform(-bound, bound);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        } else if (l.kind == LayerKind::Linear) {
            const double bound = std::sqrt(6.0 / l.weight.rows());
            for (double& v : l.weight.data()) v = rng.uniform(-bound, bound);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
    }
}

namespace detail {

// im2col patch matrix: row (a*Dh + i)*Dw + j, column (n*OH + oy)*OW + ox.
inline DenseMatrix im2col(const FeatureBatch& x, int dh, int dw, int stride, int pad,
                          int oh, int ow) {
    DenseMatrix p(x.c * dh * dw, x.n * oh * ow);
    for (int a = 0; a < x.c; ++a)
        for (int i = 0; i < dh; ++i)
            for (int j = 0; j < dw; ++j) {
                const int row = (a * dh + i) * dw + j;
                double* prow = p.data().data() +
                               static_cast<std::size_t>(row) * p.cols();
                for (int n = 0; n < x.n; ++n)
                    for (int oy = 0; oy < oh; ++oy) {
                        const int y = oy * stride - pad + i;
                        const std::size_t base = static_cast<std::size_t>((n * oh + oy)) * ow;
                        if (y < 0 || y >= x.h) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int xx = ox * stride - pad + j;
                            if (xx < 0 || xx >= x.w) continue;
                            prow[base + ox] = x.at(n, a, y, xx);
                        }
                    }
            }
    return p;
}

inline void col2im_accumulate(const DenseMatrix& p, FeatureBatch& dx, int dh, int dw,
                              int stride, int pad, int oh, int ow) {
    for (int a = 0; a < dx.c; ++a)
        for (int i = 0; i < dh; ++i)
            for (int j = 0; j < dw; ++j) {
                const int row = (a * dh + i) * dw + j;
                const double* prow = p.data().data() +
                                     static_cast<std::size_t>(row) * p.cols();
                for (int n = 0; n < dx.n; ++n)
                    for (int oy = 0; oy < oh; ++oy) {
                        const int y = oy * stride - pad + i;
                        if (y < 0 || y >= dx.h) continue;
                        const std::size_t base = static_cast<std::size_t>((n * oh + oy)) * ow;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int xx = ox * stride - pad + j;
                            if (xx < 0 || xx >= dx.w) continue;
                            dx.at(n, a, y, xx) += prow[base + ox];
                        }
                    }
            }
}

}  // namespace detail

// Cross-correlation with zero padding. Output channels = T; input channel
// count of `x` must equal S.
inline FeatureBatch conv2d_forward(const Tensor4& kernel, const FeatureBatch& x,
                                   int stride, int pad,
                                   const std::vector<double>* bias = nullptr) {
    if (x.c != kernel.s()) throw_shape("conv2d: input channels do not match kernel S");
    if (stride < 1) throw_shape("conv2d: stride must be >= 1");
    const int oh = (x.h + 2 * pad - kernel.dh()) / stride + 1;
    const int ow = (x.w + 2 * pad - kernel.dw()) / stride + 1;
    if (oh < 1 || ow < 1) throw_shape("conv2d: output would be empty");

    const DenseMatrix kmat = matricize_mode4(kernel);  // [T x S*Dh*Dw]
    const DenseMatrix p = detail::im2col(x, kernel.dh(), kernel.dw(), stride, pad, oh, ow);
    const DenseMatrix y = matmul(kmat, p);  // [T x N*OH*OW]

    FeatureBatch out(x.n, kernel.t(), oh, ow);
    for (int b = 0; b < kernel.t(); ++b) {
        const double add = bias ? (*bias)[static_cast<std::size_t>(b)] : 0.0;
        const double* yrow = y.data().data() + static_cast<std::size_t>(b) * y.cols();
        for (int n = 0; n < x.n; ++n)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    out.at(n, b, oy, ox) = yrow[(static_cast<std::size_t>(n) * oh + oy) * ow + ox] + add;
    }
    return out;
}

struct LayerGrads {
    Tensor4 dkernel;             // conv2d
    DenseMatrix dweight;         // linear
    std::vector<double> dbias;   // both
};

struct ForwardCache {
    std::vector<FeatureBatch> inputs;          // input to each layer
    std::vector<std::vector<int>> pool_argmax; // per layer; flat input offsets
    DenseMatrix probs;                         // softmax outputs [n x classes]
    std::vector<int> labels;
    int batch_n = 0;
};

// Mean softmax cross-entropy over the batch. Fills `cache` when given.
inline double forward(const Network& net, const FeatureBatch& input,
                      const std::vector<int>& labels, ForwardCache* cache = nullptr) {
    if (input.c != net.in_c || input.h != net.in_h || input.w != net.in_w)
        throw_shape("forward: input shape does not match network input");
    if (static_cast<int>(labels.size()) != input.n)
        throw_shape("forward: label count does not match batch");
    for (int y : labels)
        if (y < 0 || y >= net.num_classes) throw_shape("forward: label out of range");

    if (cache) {
        cache->inputs.clear();
        cache->pool_argmax.assign(net.layers.size(), {});
        cache->labels = labels;
        cache->batch_n = input.n;
    }

    FeatureBatch cur = input;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& l = net.layers[li];
        if (cache) cache->inputs.push_back(cur);
        switch (l.kind) {
            case LayerKind::Conv2d:
                cur = conv2d_forward(l.kernel, cur, l.stride, l.pad, &l.bias);
                break;
            case LayerKind::Relu: {
                for (double& v : cur.data) v = v > 0.0 ? v : 0.0;
                break;
            }
            case LayerKind::MaxPool2: {
                const int oh = cur.h / 2, ow = cur.w / 2;
                if (oh < 1 || ow < 1) throw_shape("maxpool2: input too small");
                FeatureBatch out(cur.n, cur.c, oh, ow);
                std::vector<int>* argmax = cache ? &cache->pool_argmax[li] : nullptr;
                if (argmax) argmax->assign(out.data.size(), 0);
                for (int n = 0; n < cur.n; ++n)
                    for (int ch = 0; ch < cur.c; ++ch)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox) {
                                double best = -1e300;
                                int best_idx = 0;
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx) {
                                        const int y = 2 * oy + dy, x = 2 * ox + dx;
                                        const double v = cur.at(n, ch, y, x);
                                        if (v > best) {  // ties keep first in scan order
                                            best = v;
                                            best_idx = static_cast<int>(cur.flat(n, ch, y, x));
                                        }
                                    }
                                out.at(n, ch, oy, ox) = best;
                                if (argmax)
                                    (*argmax)[out.flat(n, ch, oy, ox)] = best_idx;
                            }
                cur = std::move(out);
                break;
            }
            case LayerKind::Flatten: {
                FeatureBatch out(cur.n, cur.c * cur.h * cur.w, 1, 1);
                out.data = cur.data;  // layout already (n, c, h, w) row-major
                cur = std::move(out);
                break;
            }
            case LayerKind::Linear: {
                if (cur.h != 1 || cur.w != 1 || cur.c != l.weight.rows())
                    throw_shape("linear: input features do not match weight");
                FeatureBatch out(cur.n, l.weight.cols(), 1, 1);
                for (int n = 0; n < cur.n; ++n) {
                    for (int o = 0; o < l.weight.cols(); ++o)
                        out.at(n, o, 0, 0) = l.bias[static_cast<std::size_t>(o)];
                    for (int i = 0; i < l.weight.rows(); ++i) {
                        const double xi = cur.at(n, i, 0, 0);
                        if (xi == 0.0) continue;
                        for (int o = 0; o < l.weight.cols(); ++o)
                            out.at(n, o, 0, 0) += xi * l.weight.at(i, o);
                    }
                }
                cur = std::move(out);
                break;
            }
        }
    }

    if (cur.c != net.num_classes || cur.h != 1 || cur.w != 1)
        throw_shape("forward: network output is not [classes]");

    DenseMatrix probs(input.n, net.num_classes);
    double loss = 0.0;
    for (int n = 0; n < input.n; ++n) {
        double m = -1e300;
        for (int cidx = 0; cidx < net.num_classes; ++cidx)
            m = std::max(m, cur.at(n, cidx, 0, 0));
        double z = 0.0;
        for (int cidx = 0; cidx < net.num_classes; ++cidx)
            z += std::exp(cur.at(n, cidx, 0, 0) - m);
        for (int cidx = 0; cidx < net.num_classes; ++cidx)
            probs.at(n, cidx) = std::exp(cur.at(n, cidx, 0, 0) - m) / z;
        loss -= std::log(probs.at(n, labels[static_cast<std::size_t>(n)]));
    }
    loss /= input.n;
    if (cache) cache->probs = probs;
    return loss;
}

// Logits only, no loss head.
inline FeatureBatch forward_logits(const Network& net, const FeatureBatch& input) {
    FeatureBatch cur = input;
    for (const Layer& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Conv2d:
                cur = conv2d_forward(l.kernel, cur, l.stride, l.pad, &l.bias);
                break;
            case LayerKind::Relu:
                for (double& v : cur.data) v = v > 0.0 ? v : 0.0;
                break;
            case LayerKind::MaxPool2: {
                const int oh = cur.h / 2, ow = cur.w / 2;
                FeatureBatch out(cur.n, cur.c, oh, ow);
                for (int n = 0; n < cur.n; ++n)
                    for (int ch = 0; ch < cur.c; ++ch)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox) {
                                double best = -1e300;
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx)
                                        best = std::max(best, cur.at(n, ch, 2 * oy + dy, 2 * ox + dx));
                                out.at(n, ch, oy, ox) = best;
                            }
                cur = std::move(out);
                break;
            }
            case LayerKind::Flatten: {
                FeatureBatch out(cur.n, cur.c * cur.h * cur.w, 1, 1);
                out.data = cur.data;
                cur = std::move(out);
                break;
            }
            case LayerKind::Linear: {
                FeatureBatch out(cur.n, l.weight.cols(), 1, 1);
                for (int n = 0; n < cur.n; ++n) {
                    for (int o = 0; o < l.weight.cols(); ++o)
                        out.at(n, o, 0, 0) = l.bias[static_cast<std::size_t>(o)];
                    for (int i = 0; i < l.weight.rows(); ++i) {
                        const double xi = cur.at(n, i, 0, 0);
                        if (xi == 0.0) continue;
                        for (int o = 0; o < l.weight.cols(); ++o)
                            out.at(n, o, 0, 0) += xi * l.weight.at(i, o);
                    }
                }
                cur = std::move(out);
                break;
            }
        }
    }
    return cur;
}

// Gradients of the mean cross-entropy w.r.t. every parameter.
inline std::vector<LayerGrads> backward(const Network& net, const ForwardCache& cache) {
    if (cache.inputs.size() != net.layers.size())
        throw_shape("backward: cache does not match network");
    const int n = cache.batch_n;

    // dL/dlogits = (softmax - onehot)/n
    FeatureBatch delta(n, net.num_classes, 1, 1);
    for (int i = 0; i < n; ++i)
        for (int cidx = 0; cidx < net.num_classes; ++cidx) {
            double g = cache.probs.at(i, cidx);
            if (cidx == cache.labels[static_cast<std::size_t>(i)]) g -= 1.0;
            delta.at(i, cidx, 0, 0) = g / n;
        }

    std::vector<LayerGrads> grads(net.layers.size());
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const Layer& l = net.layers[static_cast<std::size_t>(li)];
        const FeatureBatch& x = cache.inputs[static_cast<std::size_t>(li)];
        LayerGrads& g = grads[static_cast<std::size_t>(li)];
        switch (l.kind) {
            case LayerKind::Conv2d: {
                const int oh = delta.h, ow = delta.w;
                const DenseMatrix kmat = matricize_mode4(l.kernel);
                const DenseMatrix p =
                    detail::im2col(x, l.kernel.dh(), l.kernel.dw(), l.stride, l.pad, oh, ow);
                // delta as [T x N*OH*OW]
                DenseMatrix d(l.kernel.t(), n * oh * ow);
                for (int b = 0; b < l.kernel.t(); ++b)
                    for (int i = 0; i < n; ++i)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox)
                                d.at(b, (i * oh + oy) * ow + ox) = delta.at(i, b, oy, ox);

                const DenseMatrix dkmat = matmul_nt(d, p);  // [T x S*Dh*Dw]
                g.dkernel = dematricize_mode4(dkmat, l.kernel.dh(), l.kernel.dw(),
                                              l.kernel.s(), l.kernel.t());
                g.dbias.assign(static_cast<std::size_t>(l.kernel.t()), 0.0);
                for (int b = 0; b < l.kernel.t(); ++b) {
                    double s = 0.0;
                    const double* drow = d.data().data() + static_cast<std::size_t>(b) * d.cols();
                    for (int col = 0; col < d.cols(); ++col) s += drow[col];
                    g.dbias[static_cast<std::size_t>(b)] = s;
                }

                const DenseMatrix dp = matmul_tn(kmat, d);  // [S*Dh*Dw x N*OH*OW]
                FeatureBatch dx(x.n, x.c, x.h, x.w);
                detail::col2im_accumulate(dp, dx, l.kernel.dh(), l.kernel.dw(), l.stride,
                                          l.pad, oh, ow);
                delta = std::move(dx);
                break;
            }
            case LayerKind::Relu: {
                FeatureBatch dx = delta;
                for (std::size_t i = 0; i < dx.data.size(); ++i)
                    if (x.data[i] <= 0.0) dx.data[i] = 0.0;
                delta = std::move(dx);
                break;
            }
            case LayerKind::MaxPool2: {
                FeatureBatch dx(x.n, x.c, x.h, x.w);
                const std::vector<int>& argmax = cache.pool_argmax[static_cast<std::size_t>(li)];
                for (std::size_t i = 0; i < delta.data.size(); ++i)
                    dx.data[static_cast<std::size_t>(argmax[i])] += delta.data[i];
                delta = std::move(dx);
                break;
            }
            case LayerKind::Flatten: {
                FeatureBatch dx(x.n, x.c, x.h, x.w);
                dx.data = delta.data;
                delta = std::move(dx);
                break;
            }
            case LayerKind::Linear: {
                g.dweight = DenseMatrix(l.weight.rows(), l.weight.cols());
                g.dbias.assign(static_cast<std::size_t>(l.weight.cols()), 0.0);
                FeatureBatch dx(x.n, x.c, 1, 1);
                for (int i = 0; i < n; ++i) {
                    for (int o = 0; o < l.weight.cols(); ++o) {
                        const double dout = delta.at(i, o, 0, 0);
                        g.dbias[static_cast<std::size_t>(o)] += dout;
                    }
                    for (int in = 0; in < l.weight.rows(); ++in) {
                        const double xi = x.at(i, in, 0, 0);
                        double acc = 0.0;
                        for (int o = 0; o < l.weight.cols(); ++o) {
                            const double dout = delta.at(i, o, 0, 0);
                            g.dweight.at(in, o) += xi * dout;
                            acc += l.weight.at(in, o) * dout;
                        }
                        dx.at(i, in, 0, 0) = acc;
                    }
                }
                delta = std::move(dx);
                break;
            }
        }
    }
    return grads;
}

// Per spec fields; lr at epoch e is lr * decay^floor(e / decay_every).
struct TrainConfig {
    int batch_size = 64;
    double lr = 1e-4;
    double lr_decay_factor = 0.1;
    int lr_decay_every = 5;
    int epochs = 5;
    double alpha = 1e-2;
    std::uint64_t seed = 1;
    double p = 0.95;

    void validate() const {
        if (batch_size < 1) throw_config("batch_size must be >= 1");
        if (!(lr > 0.0)) throw_config("lr must be positive");
        if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
            throw_config("lr_decay_factor must be in (0, 1]");
        if (lr_decay_every < 1) throw_config("lr_decay_every must be >= 1");
        if (epochs < 0) throw_config("epochs must be >= 0");
        if (!(alpha >= 0.0)) throw_config("alpha must be >= 0");
        if (!(p > 0.0 && p <= 1.0)) throw_config("p must be in (0, 1]");
    }
};

inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.lr * std::pow(cfg.lr_decay_factor, static_cast<double>(epoch / cfg.lr_decay_every));
}

// Plain gradient descent: w -= lr(epoch) * g. Frozen layers are skipped.
inline void sgd_step(Network& net, const std::vector<LayerGrads>& grads,
                     const TrainConfig& cfg, int epoch) {
    if (grads.size() != net.layers.size())
        throw_shape("sgd_step: gradients do not match network");
    const double lr = lr_at_epoch(cfg, epoch);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        Layer& l = net.layers[li];
        if (!l.trainable) continue;
        const LayerGrads& g = grads[li];
        if (l.kind == LayerKind::Conv2d) {
            for (std::size_t i = 0; i < l.kernel.data().size(); ++i)
                l.kernel.data()[i] -= lr * g.dkernel.data()[i];
            for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= lr * g.dbias[i];
        } else if (l.kind == LayerKind::Linear) {
            for (std::size_t i = 0; i < l.weight.data().size(); ++i)
                l.weight.data()[i] -= lr * g.dweight.data()[i];
            for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= lr * g.dbias[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: a text manifest (layer kinds, dims, stride/pad, provenance)
// terminated by "end", followed by parameter blobs in manifest order
// (kernel/weight then bias for each parameterized layer).
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& path, const Network& net) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_io("cannot open for writing: " + path);
    os << "NRMF-CKPT 1\n";
    os << "input " << net.in_c << ' ' << net.in_h << ' ' << net.in_w << '\n';
    os << "classes " << net.num_classes << '\n';
    os << "layers " << net.layers.size() << '\n';
    for (const Layer& l : net.layers) {
        os << "layer " << l.id << ' ' << layer_kind_name(l.kind);
        if (l.kind == LayerKind::Conv2d)
            os << ' ' << l.kernel.dh() << ' ' << l.kernel.dw() << ' ' << l.kernel.s() << ' '
               << l.kernel.t() << " stride " << l.stride << " pad " << l.pad;
        else if (l.kind == LayerKind::Linear)
            os << ' ' << l.weight.rows() << ' ' << l.weight.cols();
        if (!l.trainable) os << " frozen";
        if (l.provenance)
            os << " from " << l.provenance->from << " r3 " << l.provenance->r3 << " r4 "
               << l.provenance->r4 << " method " << l.provenance->method << " role "
               << l.provenance->role;
        os << '\n';
    }
    os << "end\n";
    for (const Layer& l : net.layers) {
        if (l.kind == LayerKind::Conv2d) {
            write_tensor_blob(os, l.kernel);
            write_vector_blob(os, l.bias);
        } else if (l.kind == LayerKind::Linear) {
            write_matrix_blob(os, l.weight);
            write_vector_blob(os, l.bias);
        }
    }
    if (!os) throw_io("write failed: " + path);
}

inline Network load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_io("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "NRMF-CKPT 1")
        throw_format("checkpoint: bad header");

    Network net;
    std::size_t declared = 0;
    while (std::getline(is, line)) {
        if (line == "end") break;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "input") {
            ls >> net.in_c >> net.in_h >> net.in_w;
        } else if (tag == "classes") {
            ls >> net.num_classes;
        } else if (tag == "layers") {
            ls >> declared;
        } else if (tag == "layer") {
            std::string id, kind;
            ls >> id >> kind;
            Layer l;
            if (kind == "conv2d") {
                int dh, dw, s, t;
                ls >> dh >> dw >> s >> t;
                if (!ls) throw_format("checkpoint: bad conv dims for " + id);
                l = make_conv(id, dh, dw, s, t);
            } else if (kind == "linear") {
                int in, out;
                ls >> in >> out;
                if (!ls) throw_format("checkpoint: bad linear dims for " + id);
                l = make_linear(id, in, out);
            } else if (kind == "relu") {
                l = make_relu(id);
            } else if (kind == "maxpool2") {
                l = make_maxpool2(id);
            } else if (kind == "flatten") {
                l = make_flatten(id);
            } else {
                throw_format("checkpoint: unknown layer kind " + kind);
            }
            std::string key;
            Provenance prov;
            bool has_prov = false;
            while (ls >> key) {
                if (key == "stride") ls >> l.stride;
                else if (key == "pad") ls >> l.pad;
                else if (key == "frozen") l.trainable = false;
                else if (key == "from") { ls >> prov.from; has_prov = true; }
                else if (key == "r3") ls >> prov.r3;
                else if (key == "r4") ls >> prov.r4;
                else if (key == "method") ls >> prov.method;
                else if (key == "role") ls >> prov.role;
                else throw_format("checkpoint: unknown layer attribute " + key);
            }
            if (has_prov) l.provenance = prov;
            net.layers.push_back(std::move(l));
        } else if (!tag.empty()) {
            throw_format("checkpoint: unknown manifest line: " + line);
        }
    }
    if (line != "end") throw_format("checkpoint: manifest not terminated");
    if (declared != net.layers.size()) throw_format("checkpoint: layer count mismatch");

    for (Layer& l : net.layers) {
        if (l.kind == LayerKind::Conv2d) {
            Tensor4 k = read_tensor_blob(is);
            if (k.dh() != l.kernel.dh() || k.dw() != l.kernel.dw() || k.s() != l.kernel.s() ||
                k.t() != l.kernel.t())
                throw_format("checkpoint: kernel blob does not match manifest for " + l.id);
            l.kernel = std::move(k);
            l.bias = read_vector_blob(is);
            if (l.bias.size() != static_cast<std::size_t>(l.kernel.t()))
                throw_format("checkpoint: bias blob does not match kernel for " + l.id);
        } else if (l.kind == LayerKind::Linear) {
            DenseMatrix w = read_matrix_blob(is);
            if (w.rows() != l.weight.rows() || w.cols() != l.weight.cols())
                throw_format("checkpoint: weight blob does not match manifest for " + l.id);
            l.weight = std::move(w);
            l.bias = read_vector_blob(is);
            if (l.bias.size() != static_cast<std::size_t>(l.weight.cols()))
                throw_format("checkpoint: bias blob does not match weight for " + l.id);
        }
    }
    return net;
}

}  // namespace nrmf
