#pragma once

#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "nrmf/eig.hpp"
#include "nrmf/error.hpp"
#include "nrmf/nn.hpp"
#include "nrmf/rng.hpp"
#include "nrmf/tensor.hpp"

namespace nrmf {

// Trace regularizer over the >1x1 conv kernels:
//   L_n = (1/2M) * sum_m [tr(W1 W1^T) + tr(W2 W2^T)]
// Both Gram traces equal the sum of squared kernel entries, so this is
// computed directly from the entries without forming Gram matrices.
inline double nuclear_loss(const std::vector<const Tensor4*>& kernels) {
    if (kernels.empty()) throw_shape("nuclear_loss: empty kernel list");
    double total = 0.0;
    for (const Tensor4* k : kernels) total += k->sum_squares();
    return total / static_cast<double>(kernels.size());
}

// d L_n / d W_m = (2/M) W_m, element-wise.
inline std::vector<Tensor4> nuclear_loss_grad(const std::vector<const Tensor4*>& kernels) {
    if (kernels.empty()) throw_shape("nuclear_loss_grad: empty kernel list");
    const double scale = 2.0 / static_cast<double>(kernels.size());
    std::vector<Tensor4> grads;
    grads.reserve(kernels.size());
    for (const Tensor4* k : kernels) {
        Tensor4 g = *k;
        for (double& v : g.data()) v *= scale;
        grads.push_back(std::move(g));
    }
    return grads;
}

// Ranks chosen for one conv layer, with the eigenvalue-energy evidence.
struct RankPair {
    std::string layer_id;
    int s = 0, t = 0;
    int r3 = 0, r4 = 0;
    double e1 = 0.0, e2 = 0.0;              // total Gram eigenvalue sums
    double retained1 = 0.0, retained2 = 0.0;  // cumulative fraction at r3/r4
    std::string method = "nrmf";
};

namespace detail {

// Minimal count whose cumulative sum reaches p * total. The comparison is
// cum >= p * total with cum and total accumulated in the same order, so
// p = 1 always terminates at the last nonzero eigenvalue.
inline int minimal_energy_rank(const std::vector<double>& desc, double p, double total,
                               double* retained) {
    double cum = 0.0;
    for (std::size_t i = 0; i < desc.size(); ++i) {
        cum += desc[i];
        if (cum >= p * total) {
            *retained = cum / total;
            return static_cast<int>(i) + 1;
        }
    }
    *retained = 1.0;
    return static_cast<int>(desc.size());
}

}  // namespace detail

// Energy-threshold rank selection: the smallest r3 (resp. r4) whose leading
// mode-3 (mode-4) Gram eigenvalues retain at least fraction p of the total.
inline RankPair select_ranks(const Tensor4& kernel, double p, std::string layer_id = "") {
    if (!(p > 0.0 && p <= 1.0)) throw_config("select_ranks: p must be in (0, 1]");
    const std::vector<double> lambda = gram_eigenvalues(kernel, 3);
    const std::vector<double> xi = gram_eigenvalues(kernel, 4);
    const double e1 = std::accumulate(lambda.begin(), lambda.end(), 0.0);
    const double e2 = std::accumulate(xi.begin(), xi.end(), 0.0);
    if (e1 <= 0.0 || e2 <= 0.0)
        throw_degenerate("select_ranks: zero kernel has no defined ranks");

    RankPair r;
    r.layer_id = std::move(layer_id);
    r.s = kernel.s();
    r.t = kernel.t();
    r.e1 = e1;
    r.e2 = e2;
    r.r3 = detail::minimal_energy_rank(lambda, p, e1, &r.retained1);
    r.r4 = detail::minimal_energy_rank(xi, p, e2, &r.retained2);
    return r;
}

// Per-epoch sorted Gram eigenvalues of one monitored layer, both modes.
struct SvTrajectory {
    struct Record {
        int epoch = 0;
        std::vector<double> lambda;  // mode-3 Gram eigenvalues, descending
        std::vector<double> xi;      // mode-4 Gram eigenvalues, descending
    };
    std::string layer_id;
    std::vector<Record> records;
};

// Appends the current spectra of every monitored layer. Pure read of the
// weights; the layer ids must exist and be conv layers.
inline void log_epoch_svs(const Network& net, int epoch,
                          std::vector<SvTrajectory>& trajectories) {
    for (SvTrajectory& traj : trajectories) {
        const Layer& l = net.find(traj.layer_id);
        if (l.kind != LayerKind::Conv2d)
            throw_shape("log_epoch_svs: layer is not a conv layer: " + traj.layer_id);
        SvTrajectory::Record rec;
        rec.epoch = epoch;
        rec.lambda = gram_eigenvalues(l.kernel, 3);
        rec.xi = gram_eigenvalues(l.kernel, 4);
        traj.records.push_back(std::move(rec));
    }
}

// Supplies training examples by index; implementations normalize into the
// batch buffer.
class BatchSource {
  public:
    virtual ~BatchSource() = default;
    virtual int size() const = 0;
    virtual void fill(const std::vector<int>& indices, FeatureBatch& x,
                      std::vector<int>& y) const = 0;
};

struct TrainResult {
    Network net;
    std::vector<SvTrajectory> trajectories;
    std::vector<RankPair> ranks;
    std::vector<double> epoch_loss;  // mean objective (data loss + alpha*L_n) per epoch
};

// Trains for cfg.epochs epochs minimizing mean cross-entropy + alpha * L_n,
// logging the spectra of the monitored layers once before training and once
// after every epoch, then selects ranks for every >1x1 conv layer with
// threshold cfg.p. An empty `monitored` list means all >1x1 conv layers.
inline TrainResult train_nrmf(const Network& initial, const TrainConfig& cfg,
                              const BatchSource& data,
                              std::vector<std::string> monitored = {}) {
    cfg.validate();
    if (data.size() < 1) throw_config("train_nrmf: empty dataset");

    TrainResult out;
    out.net = initial;

    std::vector<const Layer*> wcl = out.net.wcl_layers();
    if (monitored.empty())
        for (const Layer* l : wcl) monitored.push_back(l->id);
    for (const std::string& id : monitored) {
        SvTrajectory t;
        t.layer_id = id;
        out.trajectories.push_back(std::move(t));
    }
    const double m_count = static_cast<double>(wcl.size());

    log_epoch_svs(out.net, 0, out.trajectories);

    Rng rng(cfg.seed);
    std::vector<int> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);

    FeatureBatch x;
    std::vector<int> y;
    ForwardCache cache;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::vector<int> idx(order.begin() + start, order.begin() + stop);
            data.fill(idx, x, y);
            double loss = forward(out.net, x, y, &cache);
            std::vector<LayerGrads> grads = backward(out.net, cache);

            if (cfg.alpha > 0.0 && !wcl.empty()) {
                const double scale = cfg.alpha * 2.0 / m_count;
                double reg = 0.0;
                for (std::size_t li = 0; li < out.net.layers.size(); ++li) {
                    const Layer& l = out.net.layers[li];
                    if (!l.in_wcl()) continue;
                    reg += l.kernel.sum_squares();
                    Tensor4& dk = grads[li].dkernel;
                    const std::vector<double>& w = l.kernel.data();
                    for (std::size_t i = 0; i < w.size(); ++i) dk.data()[i] += scale * w[i];
                }
                loss += cfg.alpha * reg / m_count;
            }

            sgd_step(out.net, grads, cfg, epoch);
            loss_sum += loss;
            ++batches;
        }
        out.epoch_loss.push_back(loss_sum / std::max(batches, 1));
        log_epoch_svs(out.net, epoch + 1, out.trajectories);
    }

    for (const Layer* l : wcl)
        out.ranks.push_back(select_ranks(l->kernel, cfg.p, l->id));
    return out;
}

// ---------------------------------------------------------------------------
// CSV output. Doubles are printed with %.17g so identical runs are
// byte-identical and values round-trip exactly.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Columns: epoch, mode, index, eigenvalue. Mode is 3 (input channels) or 4
// (output channels); index is 1-based within the sorted spectrum.
inline void write_trajectory_csv(const std::string& path, const SvTrajectory& traj) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_io("cannot open for writing: " + path);
    os << "epoch,mode,index,eigenvalue\n";
    for (const SvTrajectory::Record& rec : traj.records) {
        for (std::size_t i = 0; i < rec.lambda.size(); ++i)
            os << rec.epoch << ",3," << (i + 1) << ',' << format_double(rec.lambda[i]) << '\n';
        for (std::size_t i = 0; i < rec.xi.size(); ++i)
            os << rec.epoch << ",4," << (i + 1) << ',' << format_double(rec.xi[i]) << '\n';
    }
    if (!os) throw_io("write failed: " + path);
}

inline void write_rank_csv(const std::string& path, const std::vector<RankPair>& ranks) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_io("cannot open for writing: " + path);
    os << "layer,S,T,r3,r4,e1,e2,retained1,retained2,method\n";
    for (const RankPair& r : ranks)
        os << r.layer_id << ',' << r.s << ',' << r.t << ',' << r.r3 << ',' << r.r4 << ','
           << format_double(r.e1) << ',' << format_double(r.e2) << ','
           << format_double(r.retained1) << ',' << format_double(r.retained2) << ','
           << r.method << '\n';
    if (!os) throw_io("write failed: " + path);
}

inline std::vector<RankPair> read_rank_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw_io("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line.rfind("layer,", 0) != 0)
        throw_format("rank csv: bad header");
    std::vector<RankPair> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        RankPair r;
        std::vector<std::string> f;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                f.push_back(cur);
                cur.clear();
            } else
                cur.push_back(ch);
        }
        f.push_back(cur);
        if (f.size() != 10) throw_format("rank csv: bad row: " + line);
        r.layer_id = f[0];
        r.s = std::stoi(f[1]);
        r.t = std::stoi(f[2]);
        r.r3 = std::stoi(f[3]);
        r.r4 = std::stoi(f[4]);
        r.e1 = std::stod(f[5]);
        r.e2 = std::stod(f[6]);
        r.retained1 = std::stod(f[7]);
        r.retained2 = std::stod(f[8]);
        r.method = f[9];
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace nrmf
