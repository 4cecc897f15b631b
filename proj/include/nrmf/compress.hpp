#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "nrmf/error.hpp"
#include "nrmf/nn.hpp"
#include "nrmf/nrmf.hpp"
#include "nrmf/tensor.hpp"
#include "nrmf/tucker.hpp"

namespace nrmf {

// A conv layer factorized into three sequential convs:
//   first [1 x 1 x S x R3]  holds U3^T (channel reduce),
//   mid   [Dh x Dw x R3 x R4] holds the core (spatial work),
//   last  [1 x 1 x R4 x T]  holds U4 (channel expand) and carries the bias.
// Spatial stride and padding live on the middle stage; the 1x1 stages are
// stride 1, pad 0.
struct FactorizedConv {
    Tensor4 first;
    Tensor4 mid;
    Tensor4 last;
    std::vector<double> bias;
    int stride = 1;
    int pad = 0;

    int s() const { return first.s(); }
    int r3() const { return first.t(); }
    int r4() const { return last.s(); }
    int t() const { return last.t(); }
    int dh() const { return mid.dh(); }
    int dw() const { return mid.dw(); }
};

inline FactorizedConv factorize_layer(const Tensor4& kernel, int r3, int r4, int stride = 1,
                                      int pad = 0, const std::vector<double>* bias = nullptr) {
    const Tucker2Factors f = tucker2_decompose(kernel, r3, r4);
    FactorizedConv out;
    out.first = Tensor4(1, 1, kernel.s(), r3);
    for (int a = 0; a < kernel.s(); ++a)
        for (int r = 0; r < r3; ++r) out.first.at(0, 0, a, r) = f.u3.at(a, r);
    out.mid = f.core;
    out.last = Tensor4(1, 1, r4, kernel.t());
    for (int q = 0; q < r4; ++q)
        for (int b = 0; b < kernel.t(); ++b) out.last.at(0, 0, q, b) = f.u4.at(b, q);
    out.stride = stride;
    out.pad = pad;
    out.bias = bias ? *bias : std::vector<double>(static_cast<std::size_t>(kernel.t()), 0.0);
    return out;
}

inline FactorizedConv factorize_layer(const Tensor4& kernel, const RankPair& ranks,
                                      int stride = 1, int pad = 0,
                                      const std::vector<double>* bias = nullptr) {
    return factorize_layer(kernel, ranks.r3, ranks.r4, stride, pad, bias);
}

// Weight counts (biases excluded; they are reported separately).
inline std::int64_t count_params(int dh, int dw, int s, int t) {
    return static_cast<std::int64_t>(dh) * dw * s * t;
}

inline std::int64_t count_params(int d, int s, int t, int r3, int r4) {
    return static_cast<std::int64_t>(s) * r3 +
           static_cast<std::int64_t>(d) * d * r3 * r4 +
           static_cast<std::int64_t>(r4) * t;
}

inline std::int64_t count_params(const FactorizedConv& f) {
    return static_cast<std::int64_t>(f.first.count()) +
           static_cast<std::int64_t>(f.mid.count()) +
           static_cast<std::int64_t>(f.last.count());
}

// Parameter counts rendered the way the comparison tables print them:
// two decimals with a K or M suffix.
inline std::string format_param_count(std::int64_t n) {
    char buf[32];
    if (n >= 1000000)
        std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(n) / 1e6);
    else if (n >= 1000)
        std::snprintf(buf, sizeof buf, "%.2fK", static_cast<double>(n) / 1e3);
    else
        std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(n));
    return buf;
}

inline std::string format_ratio(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", ratio);
    return buf;
}

namespace detail {

// Pad with zero channels or drop trailing channels along input (mode 3) or
// output (mode 4) of a kernel; the overlapping block is copied bit-exactly.
inline Tensor4 resize_channels(const Tensor4& k, int new_s, int new_t) {
    Tensor4 out(k.dh(), k.dw(), new_s, new_t);
    const int cs = std::min(new_s, k.s());
    const int ct = std::min(new_t, k.t());
    for (int i = 0; i < k.dh(); ++i)
        for (int j = 0; j < k.dw(); ++j)
            for (int a = 0; a < cs; ++a)
                for (int b = 0; b < ct; ++b) out.at(i, j, a, b) = k.at(i, j, a, b);
    return out;
}

}  // namespace detail

// Re-rank an existing factorized triple without re-decomposing: channels are
// zero-padded when a rank grows and trailing channels are dropped when it
// shrinks (factor columns are stored in descending eigenvalue order, so the
// trailing ones carry the least energy). The middle stage is resized on its
// input channels for r3 and its output channels for r4.
inline FactorizedConv rank_swap(const FactorizedConv& f, int new_r3, int new_r4) {
    if (new_r3 < 1 || new_r3 > f.s()) throw_shape("rank_swap: r3 out of range");
    if (new_r4 < 1 || new_r4 > f.t()) throw_shape("rank_swap: r4 out of range");
    FactorizedConv out;
    out.first = detail::resize_channels(f.first, f.s(), new_r3);
    out.mid = detail::resize_channels(f.mid, new_r3, new_r4);
    out.last = detail::resize_channels(f.last, new_r4, f.t());
    out.bias = f.bias;
    out.stride = f.stride;
    out.pad = f.pad;
    return out;
}

inline FactorizedConv rank_swap(const FactorizedConv& f, const RankPair& ranks) {
    return rank_swap(f, ranks.r3, ranks.r4);
}

struct CompressionReport {
    struct Row {
        std::string layer_id;
        std::int64_t original_params = 0;
        std::int64_t compressed_params = 0;
        double ratio = 0.0;
    };
    std::vector<Row> rows;
    std::int64_t total_original = 0;
    std::int64_t total_compressed = 0;

    double total_ratio() const {
        return total_compressed > 0
                   ? static_cast<double>(total_original) / static_cast<double>(total_compressed)
                   : 0.0;
    }
};

enum class CompressSource { FreshDecompose, RankSwap };

namespace detail {

inline std::vector<Layer> factorized_to_layers(const std::string& id, const FactorizedConv& f,
                                               const std::string& method) {
    Provenance base;
    base.from = id;
    base.r3 = f.r3();
    base.r4 = f.r4();
    base.method = method;

    Layer a = make_conv(id + ":u3", 1, 1, f.s(), f.r3(), 1, 0);
    a.kernel = f.first;
    base.role = "first";
    a.provenance = base;

    Layer b = make_conv(id + ":core", f.dh(), f.dw(), f.r3(), f.r4(), f.stride, f.pad);
    b.kernel = f.mid;
    base.role = "mid";
    b.provenance = base;

    Layer c = make_conv(id + ":u4", 1, 1, f.r4(), f.t(), 1, 0);
    c.kernel = f.last;
    c.bias = f.bias;
    base.role = "last";
    c.provenance = base;

    return {std::move(a), std::move(b), std::move(c)};
}

// Reassemble a FactorizedConv from three consecutive provenance-tagged layers.
inline FactorizedConv layers_to_factorized(const Layer& a, const Layer& b, const Layer& c) {
    FactorizedConv f;
    f.first = a.kernel;
    f.mid = b.kernel;
    f.last = c.kernel;
    f.bias = c.bias;
    f.stride = b.stride;
    f.pad = b.pad;
    return f;
}

}  // namespace detail

// Replaces every >1x1 conv covered by the rank table with its factorized
// triple (FreshDecompose), or re-ranks existing triples in place (RankSwap).
// Layers outside the table's scope (1x1 convs, linear, activations) pass
// through untouched. Every >1x1 conv (or existing triple) must have a rank
// entry.
inline Network compress_network(const Network& net,
                                const std::map<std::string, RankPair>& rank_table,
                                CompressSource source,
                                CompressionReport* report = nullptr) {
    Network out;
    out.in_c = net.in_c;
    out.in_h = net.in_h;
    out.in_w = net.in_w;
    out.num_classes = net.num_classes;
    CompressionReport rep;

    if (source == CompressSource::FreshDecompose) {
        for (const Layer& l : net.layers) {
            if (!l.in_wcl()) {
                if (l.provenance)
                    throw_shape("compress_network: input already factorized: " + l.id);
                out.layers.push_back(l);
                continue;
            }
            auto it = rank_table.find(l.id);
            if (it == rank_table.end())
                throw_shape("compress_network: no rank entry for layer " + l.id);
            const RankPair& rp = it->second;
            FactorizedConv f = factorize_layer(l.kernel, rp, l.stride, l.pad, &l.bias);
            for (Layer& nl : detail::factorized_to_layers(l.id, f, rp.method))
                out.layers.push_back(std::move(nl));

            CompressionReport::Row row;
            row.layer_id = l.id;
            row.original_params =
                count_params(l.kernel.dh(), l.kernel.dw(), l.kernel.s(), l.kernel.t());
            row.compressed_params = count_params(f);
            row.ratio = static_cast<double>(row.original_params) / row.compressed_params;
            rep.rows.push_back(row);
        }
    } else {
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            const Layer& l = net.layers[i];
            if (!l.provenance || l.provenance->role != "first") {
                if (l.in_wcl() && !l.provenance)
                    throw_shape("compress_network: rank-swap needs a factorized input: " + l.id);
                if (!l.provenance) out.layers.push_back(l);
                continue;
            }
            if (i + 2 >= net.layers.size())
                throw_format("compress_network: truncated factorized triple at " + l.id);
            const Layer& mid = net.layers[i + 1];
            const Layer& last = net.layers[i + 2];
            if (!mid.provenance || mid.provenance->role != "mid" || !last.provenance ||
                last.provenance->role != "last" || mid.provenance->from != l.provenance->from ||
                last.provenance->from != l.provenance->from)
                throw_format("compress_network: malformed factorized triple at " + l.id);

            const std::string& orig_id = l.provenance->from;
            auto it = rank_table.find(orig_id);
            if (it == rank_table.end())
                throw_shape("compress_network: no rank entry for layer " + orig_id);
            const RankPair& rp = it->second;

            FactorizedConv f = detail::layers_to_factorized(l, mid, last);
            const std::int64_t before = count_params(f);
            FactorizedConv swapped = rank_swap(f, rp);
            for (Layer& nl : detail::factorized_to_layers(orig_id, swapped, rp.method))
                out.layers.push_back(std::move(nl));

            CompressionReport::Row row;
            row.layer_id = orig_id;
            row.original_params = before;
            row.compressed_params = count_params(swapped);
            row.ratio = static_cast<double>(row.original_params) / row.compressed_params;
            rep.rows.push_back(row);
        }
    }

    for (const CompressionReport::Row& r : rep.rows) {
        rep.total_original += r.original_params;
        rep.total_compressed += r.compressed_params;
    }
    if (report) *report = rep;
    return out;
}

// Weight-parameter total over all conv layers (the compressed surface).
inline std::int64_t conv_param_total(const Network& net) {
    std::int64_t total = 0;
    for (const Layer& l : net.layers)
        if (l.kind == LayerKind::Conv2d)
            total += static_cast<std::int64_t>(l.kernel.count());
    return total;
}

// CSV: per-layer rows plus a `total` row; exact integers, ratio as a double.
inline void write_compression_csv(const std::string& path, const CompressionReport& rep) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_io("cannot open for writing: " + path);
    os << "layer,original_params,compressed_params,ratio\n";
    for (const CompressionReport::Row& r : rep.rows)
        os << r.layer_id << ',' << r.original_params << ',' << r.compressed_params << ','
           << format_ratio(r.ratio) << '\n';
    os << "total," << rep.total_original << ',' << rep.total_compressed << ','
       << format_ratio(rep.total_ratio()) << '\n';
    if (!os) throw_io("write failed: " + path);
}

}  // namespace nrmf
