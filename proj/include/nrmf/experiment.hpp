#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "nrmf/compress.hpp"
#include "nrmf/dataset.hpp"
#include "nrmf/error.hpp"
#include "nrmf/nn.hpp"
#include "nrmf/nrmf.hpp"
#include "nrmf/vbmf.hpp"

namespace nrmf {

// Full description of one experiment run. Mirrors the config-file keys;
// TrainConfig fields keep their own names.
struct ExperimentSpec {
    TrainConfig train;
    std::string method = "nrmf";  // rank selection for compress: nrmf | vbmf
    int fine_tune_epochs = 3;
    int train_samples = 5000;
    int test_samples = 1000;
    std::string model = "desk";  // desk | paper
    std::string data_dir;        // empty: $NRMF_DATA_DIR, else synthetic
    std::string out_dir = "out";
    std::vector<std::string> monitored;  // empty: the inserted conv layer

    void validate() const {
        train.validate();
        if (fine_tune_epochs < 0) throw_config("fine_tune_epochs must be >= 0");
        if (train_samples < 1 || test_samples < 1)
            throw_config("sample counts must be >= 1");
        if (model != "desk" && model != "paper")
            throw_config("model must be desk or paper");
        if (method != "nrmf" && method != "vbmf")
            throw_config("method must be nrmf or vbmf");
    }
};

// Flat "key value" (or "key=value") lines; '#' starts a comment.
inline ExperimentSpec parse_config_text(std::istream& is) {
    ExperimentSpec spec;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        for (char& c : line)
            if (c == '=') c = ' ';
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        std::string value;
        std::getline(ls, value);
        const std::size_t start = value.find_first_not_of(" \t");
        value = start == std::string::npos ? "" : value.substr(start);
        const std::size_t stop = value.find_last_not_of(" \t\r");
        if (stop != std::string::npos) value.resize(stop + 1);
        if (value.empty())
            throw_config("config line " + std::to_string(lineno) + ": missing value for " + key);

        try {
            if (key == "batch_size") spec.train.batch_size = std::stoi(value);
            else if (key == "lr") spec.train.lr = std::stod(value);
            else if (key == "lr_decay_factor") spec.train.lr_decay_factor = std::stod(value);
            else if (key == "lr_decay_every") spec.train.lr_decay_every = std::stoi(value);
            else if (key == "epochs") spec.train.epochs = std::stoi(value);
            else if (key == "alpha") spec.train.alpha = std::stod(value);
            else if (key == "seed") spec.train.seed = std::stoull(value);
            else if (key == "p") spec.train.p = std::stod(value);
            else if (key == "method") spec.method = value;
            else if (key == "fine_tune_epochs") spec.fine_tune_epochs = std::stoi(value);
            else if (key == "train_samples") spec.train_samples = std::stoi(value);
            else if (key == "test_samples") spec.test_samples = std::stoi(value);
            else if (key == "model") spec.model = value;
            else if (key == "data_dir") spec.data_dir = value;
            else if (key == "out_dir") spec.out_dir = value;
            else if (key == "monitored") {
                spec.monitored.clear();
                std::istringstream ms(value);
                std::string id;
                while (std::getline(ms, id, ',')) spec.monitored.push_back(id);
            } else {
                throw_config("config line " + std::to_string(lineno) + ": unknown key " + key);
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            throw_config("config line " + std::to_string(lineno) + ": bad value for " + key);
        }
    }
    return spec;
}

inline ExperimentSpec parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw_io("cannot open config: " + path);
    return parse_config_text(is);
}

// LeNet-5 style network with an extra monitored conv inserted before the
// classifier head. The desk recipe scales the inserted layer down to
// 3x3x16x32; the paper recipe keeps the full 3x3x128x256.
inline Network build_model(const std::string& recipe, std::uint64_t seed, int classes = 10) {
    Network net;
    net.in_c = 1;
    net.in_h = 28;
    net.in_w = 28;
    net.num_classes = classes;
    if (recipe == "desk") {
        net.layers.push_back(make_conv("conv1", 5, 5, 1, 6, 1, 2));    // 28x28x6
        net.layers.push_back(make_relu("relu1"));
        net.layers.push_back(make_maxpool2("pool1"));                  // 14x14x6
        net.layers.push_back(make_conv("conv2", 5, 5, 6, 16, 1, 0));   // 10x10x16
        net.layers.push_back(make_relu("relu2"));
        net.layers.push_back(make_maxpool2("pool2"));                  // 5x5x16
        net.layers.push_back(make_conv("conv3", 3, 3, 16, 32, 1, 1));  // inserted, 5x5x32
        net.layers.push_back(make_relu("relu3"));
        net.layers.push_back(make_flatten("flat"));
        net.layers.push_back(make_linear("fc1", 800, 64));
        net.layers.push_back(make_relu("relu4"));
        net.layers.push_back(make_linear("fc2", 64, classes));
    } else if (recipe == "paper") {
        net.layers.push_back(make_conv("conv1", 5, 5, 1, 32, 1, 2));
        net.layers.push_back(make_relu("relu1"));
        net.layers.push_back(make_maxpool2("pool1"));
        net.layers.push_back(make_conv("conv2", 5, 5, 32, 128, 1, 0));
        net.layers.push_back(make_relu("relu2"));
        net.layers.push_back(make_maxpool2("pool2"));
        net.layers.push_back(make_conv("conv3", 3, 3, 128, 256, 1, 1));
        net.layers.push_back(make_relu("relu3"));
        net.layers.push_back(make_flatten("flat"));
        net.layers.push_back(make_linear("fc1", 6400, 512));
        net.layers.push_back(make_relu("relu4"));
        net.layers.push_back(make_linear("fc2", 512, classes));
    } else {
        throw_config("unknown model recipe: " + recipe);
    }
    init_params(net, seed);
    return net;
}

inline std::string default_monitored_layer() { return "conv3"; }

// Train/test pair. Files under data_dir (or $NRMF_DATA_DIR) win; otherwise
// a seeded synthetic digit corpus of the requested size is generated.
struct DataPair {
    Dataset train;
    Dataset test;
    bool synthetic = false;
};

inline DataPair load_data(const ExperimentSpec& spec) {
    std::string dir = spec.data_dir;
    if (dir.empty()) {
        const char* env = std::getenv("NRMF_DATA_DIR");
        if (env && *env) dir = env;
    }
    DataPair out;
    if (!dir.empty()) {
        const std::string ti = dir + "/train-images-idx3-ubyte";
        const std::string tl = dir + "/train-labels-idx1-ubyte";
        const std::string vi = dir + "/t10k-images-idx3-ubyte";
        const std::string vl = dir + "/t10k-labels-idx1-ubyte";
        out.train = subsample(load_idx_dataset(ti, tl), spec.train_samples, spec.train.seed);
        out.test = subsample(load_idx_dataset(vi, vl), spec.test_samples, spec.train.seed + 1);
        return out;
    }
    out.synthetic = true;
    out.train = make_synthetic_digits(spec.train_samples, spec.train.seed * 2654435761u + 1);
    out.test = make_synthetic_digits(spec.test_samples, spec.train.seed * 2654435761u + 2);
    return out;
}

namespace detail {

inline void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw_io("cannot create directory: " + path);
}

inline double record_energy(const SvTrajectory::Record& rec, int mode) {
    const std::vector<double>& v = mode == 3 ? rec.lambda : rec.xi;
    return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace detail

// One arm of the regularizer experiment: energy sums per epoch per mode.
struct SvArmSummary {
    std::string layer_id;
    std::vector<double> energy3;  // index = epoch
    std::vector<double> energy4;
};

struct SvExperimentResult {
    TrainResult regularized;
    TrainResult plain;
    std::vector<SvArmSummary> reg_summaries;
    std::vector<SvArmSummary> plain_summaries;
};

inline SvArmSummary summarize_trajectory(const SvTrajectory& t) {
    SvArmSummary s;
    s.layer_id = t.layer_id;
    for (const SvTrajectory::Record& rec : t.records) {
        s.energy3.push_back(detail::record_energy(rec, 3));
        s.energy4.push_back(detail::record_energy(rec, 4));
    }
    return s;
}

// Trains the same initialization twice under the same seed, with the
// configured alpha and with alpha = 0, and writes both trajectory CSV sets
// plus an energy-trend summary.
inline SvExperimentResult run_sv_experiment(const ExperimentSpec& spec) {
    spec.validate();
    DataPair data = load_data(spec);
    DatasetBatchSource src(data.train);

    Network initial = build_model(spec.model, spec.train.seed, data.train.num_classes);
    std::vector<std::string> monitored = spec.monitored;
    if (monitored.empty()) monitored.push_back(default_monitored_layer());

    SvExperimentResult result;
    result.regularized = train_nrmf(initial, spec.train, src, monitored);
    TrainConfig plain_cfg = spec.train;
    plain_cfg.alpha = 0.0;
    result.plain = train_nrmf(initial, plain_cfg, src, monitored);

    const std::string traj_dir = spec.out_dir + "/trajectories";
    detail::ensure_dir(traj_dir);
    for (const SvTrajectory& t : result.regularized.trajectories) {
        write_trajectory_csv(traj_dir + "/" + t.layer_id + "_reg.csv", t);
        result.reg_summaries.push_back(summarize_trajectory(t));
    }
    for (const SvTrajectory& t : result.plain.trajectories) {
        write_trajectory_csv(traj_dir + "/" + t.layer_id + "_noreg.csv", t);
        result.plain_summaries.push_back(summarize_trajectory(t));
    }

    std::ofstream os(spec.out_dir + "/sv_summary.csv", std::ios::binary);
    if (!os) throw_io("cannot open for writing: " + spec.out_dir + "/sv_summary.csv");
    os << "layer,arm,mode,energy_epoch0,energy_final,monotone_after_epoch1\n";
    auto emit = [&os](const SvArmSummary& s, const std::string& arm, int mode) {
        const std::vector<double>& e = mode == 3 ? s.energy3 : s.energy4;
        bool monotone = true;
        for (std::size_t i = 2; i < e.size(); ++i)
            if (e[i] > e[i - 1]) monotone = false;
        os << s.layer_id << ',' << arm << ',' << mode << ',' << format_double(e.front()) << ','
           << format_double(e.back()) << ',' << (monotone ? 1 : 0) << '\n';
    };
    for (const SvArmSummary& s : result.reg_summaries) {
        emit(s, "reg", 3);
        emit(s, "reg", 4);
    }
    for (const SvArmSummary& s : result.plain_summaries) {
        emit(s, "noreg", 3);
        emit(s, "noreg", 4);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Four rank/initialization combinations: {vbmf, nrmf} ranks applied to the
// {vbmf, nrmf} initialization models, fresh factorization on the matching
// pairs and rank swapping on the crossed pairs, each fine-tuned and scored.
// ---------------------------------------------------------------------------

struct FourPathRow {
    std::string path;          // a, b, c, d
    std::string ranks_method;  // vbmf | nrmf
    std::string init_method;   // vbmf | nrmf
    std::int64_t conv_params = 0;
    double accuracy = 0.0;
};

struct FourPathResult {
    std::vector<FourPathRow> rows;
    double baseline_accuracy = 0.0;
    std::int64_t baseline_conv_params = 0;
    std::vector<RankPair> vbmf_ranks;
    std::vector<RankPair> nrmf_ranks;
};

namespace detail {

inline std::map<std::string, RankPair> to_table(const std::vector<RankPair>& ranks) {
    std::map<std::string, RankPair> t;
    for (const RankPair& r : ranks) t[r.layer_id] = r;
    return t;
}

}  // namespace detail

inline FourPathResult run_four_paths(const ExperimentSpec& spec) {
    spec.validate();
    DataPair data = load_data(spec);
    DatasetBatchSource src(data.train);

    Network initial = build_model(spec.model, spec.train.seed, data.train.num_classes);

    // normal and regularized pretraining from the same initialization
    TrainConfig plain_cfg = spec.train;
    plain_cfg.alpha = 0.0;
    TrainResult base = train_nrmf(initial, plain_cfg, src, {default_monitored_layer()});
    TrainResult reg = train_nrmf(initial, spec.train, src, {default_monitored_layer()});

    FourPathResult result;
    result.baseline_accuracy = evaluate_accuracy(base.net, data.test);
    result.baseline_conv_params = conv_param_total(base.net);

    for (const Layer* l : base.net.wcl_layers())
        result.vbmf_ranks.push_back(vbmf_rank_pair(l->kernel, l->id));
    for (const Layer* l : reg.net.wcl_layers())
        result.nrmf_ranks.push_back(select_ranks(l->kernel, spec.train.p, l->id));

    const std::map<std::string, RankPair> vbmf_table = detail::to_table(result.vbmf_ranks);
    const std::map<std::string, RankPair> nrmf_table = detail::to_table(result.nrmf_ranks);

    const Network vbmf_init = compress_network(base.net, vbmf_table, CompressSource::FreshDecompose);
    const Network nrmf_init = compress_network(reg.net, nrmf_table, CompressSource::FreshDecompose);

    struct PathSpec {
        const char* tag;
        const char* ranks_method;
        const char* init_method;
        const Network* start;
        const std::map<std::string, RankPair>* swap_to;  // null: use start as-is
    };
    const PathSpec paths[4] = {
        {"a", "vbmf", "vbmf", &vbmf_init, nullptr},
        {"b", "nrmf", "vbmf", &vbmf_init, &nrmf_table},
        {"c", "vbmf", "nrmf", &nrmf_init, &vbmf_table},
        {"d", "nrmf", "nrmf", &nrmf_init, nullptr},
    };

    TrainConfig ft_cfg = spec.train;
    ft_cfg.alpha = 0.0;
    ft_cfg.epochs = spec.fine_tune_epochs;
    for (const PathSpec& ps : paths) {
        Network net = ps.swap_to
                          ? compress_network(*ps.start, *ps.swap_to, CompressSource::RankSwap)
                          : *ps.start;
        if (ft_cfg.epochs > 0) {
            TrainResult ft = train_nrmf(net, ft_cfg, src, {});
            net = std::move(ft.net);
        }
        FourPathRow row;
        row.path = ps.tag;
        row.ranks_method = ps.ranks_method;
        row.init_method = ps.init_method;
        row.conv_params = conv_param_total(net);
        row.accuracy = evaluate_accuracy(net, data.test);
        result.rows.push_back(std::move(row));
    }
    return result;
}

inline void write_four_path_report(const std::string& out_dir, const FourPathResult& r) {
    detail::ensure_dir(out_dir);
    {
        std::ofstream os(out_dir + "/report.csv", std::ios::binary);
        if (!os) throw_io("cannot open for writing: " + out_dir + "/report.csv");
        os << "path,ranks,init,conv_params,accuracy\n";
        for (const FourPathRow& row : r.rows)
            os << row.path << ',' << row.ranks_method << ',' << row.init_method << ','
               << row.conv_params << ',' << format_double(row.accuracy) << '\n';
    }
    {
        std::ofstream os(out_dir + "/baseline.csv", std::ios::binary);
        if (!os) throw_io("cannot open for writing: " + out_dir + "/baseline.csv");
        os << "conv_params,accuracy\n";
        os << r.baseline_conv_params << ',' << format_double(r.baseline_accuracy) << '\n';
    }
    const std::string rank_dir = out_dir + "/ranks";
    detail::ensure_dir(rank_dir);
    write_rank_csv(rank_dir + "/vbmf.csv", r.vbmf_ranks);
    write_rank_csv(rank_dir + "/nrmf.csv", r.nrmf_ranks);
}

// Per-layer parameter report for an already-compressed (or dense) network:
// factorized triples report against their provenance dims, dense >1x1 convs
// report themselves uncompressed.
inline CompressionReport report_from_network(const Network& net) {
    CompressionReport rep;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        if (l.provenance && l.provenance->role == "first") {
            if (i + 2 >= net.layers.size())
                throw_format("report: truncated factorized triple at " + l.id);
            const Layer& mid = net.layers[i + 1];
            const Layer& last = net.layers[i + 2];
            CompressionReport::Row row;
            row.layer_id = l.provenance->from;
            row.original_params = count_params(mid.kernel.dh(), mid.kernel.dw(),
                                               l.kernel.s(), last.kernel.t());
            row.compressed_params = static_cast<std::int64_t>(l.kernel.count()) +
                                    static_cast<std::int64_t>(mid.kernel.count()) +
                                    static_cast<std::int64_t>(last.kernel.count());
            row.ratio = static_cast<double>(row.original_params) / row.compressed_params;
            rep.rows.push_back(row);
        } else if (l.in_wcl() && !l.provenance) {
            CompressionReport::Row row;
            row.layer_id = l.id;
            row.original_params =
                count_params(l.kernel.dh(), l.kernel.dw(), l.kernel.s(), l.kernel.t());
            row.compressed_params = row.original_params;
            row.ratio = 1.0;
            rep.rows.push_back(row);
        }
    }
    for (const CompressionReport::Row& r : rep.rows) {
        rep.total_original += r.original_params;
        rep.total_compressed += r.compressed_params;
    }
    return rep;
}

}  // namespace nrmf
