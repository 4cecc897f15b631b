// Command-line driver: training with the trace regularizer, rank selection,
// Tucker-2 factorization of conv layers, fine-tuning, and the two built-in
// experiments (regularizer SV trend, four rank/init combinations).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nrmf/compress.hpp"
#include "nrmf/dataset.hpp"
#include "nrmf/error.hpp"
#include "nrmf/experiment.hpp"
#include "nrmf/nn.hpp"
#include "nrmf/nrmf.hpp"
#include "nrmf/serialize.hpp"
#include "nrmf/vbmf.hpp"

namespace {

struct CommonOpts {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<double> p;
    std::string out_dir;
    std::string data_dir;
    std::string method;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "flat key-value config file");
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--alpha", o.alpha, "regularizer scaling coefficient");
    cmd->add_option("--p", o.p, "energy threshold in (0,1]");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
    cmd->add_option("--data-dir", o.data_dir, "IDX dataset directory");
    cmd->add_option("--method", o.method, "rank selection method")
        ->check(CLI::IsMember({"nrmf", "vbmf"}));
}

nrmf::ExperimentSpec resolve_spec(const CommonOpts& o) {
    nrmf::ExperimentSpec spec;
    if (!o.config.empty()) spec = nrmf::parse_config_file(o.config);
    if (o.seed) spec.train.seed = *o.seed;
    if (o.alpha) spec.train.alpha = *o.alpha;
    if (o.p) spec.train.p = *o.p;
    if (!o.out_dir.empty()) spec.out_dir = o.out_dir;
    if (!o.data_dir.empty()) spec.data_dir = o.data_dir;
    if (!o.method.empty()) spec.method = o.method;
    spec.validate();
    return spec;
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) nrmf::throw_io("cannot create directory: " + path);
}

int cmd_train(const CommonOpts& o) {
    nrmf::ExperimentSpec spec = resolve_spec(o);
    nrmf::DataPair data = nrmf::load_data(spec);
    nrmf::DatasetBatchSource src(data.train);
    nrmf::Network net = nrmf::build_model(spec.model, spec.train.seed, data.train.num_classes);

    std::vector<std::string> monitored = spec.monitored;
    if (monitored.empty() && spec.train.alpha > 0.0)
        monitored.push_back(nrmf::default_monitored_layer());
    nrmf::TrainResult result = nrmf::train_nrmf(net, spec.train, src, monitored);

    ensure_dir(spec.out_dir + "/checkpoints");
    ensure_dir(spec.out_dir + "/trajectories");
    ensure_dir(spec.out_dir + "/ranks");
    nrmf::save_checkpoint(spec.out_dir + "/checkpoints/trained.ckpt", result.net);
    for (const nrmf::SvTrajectory& t : result.trajectories)
        nrmf::write_trajectory_csv(spec.out_dir + "/trajectories/" + t.layer_id + ".csv", t);
    nrmf::write_rank_csv(spec.out_dir + "/ranks/nrmf.csv", result.ranks);

    const double acc = nrmf::evaluate_accuracy(result.net, data.test);
    std::cout << "trained " << spec.train.epochs << " epochs, test accuracy "
              << nrmf::format_double(acc) << "\n";
    return 0;
}

int cmd_select_ranks(const CommonOpts& o, const std::string& ckpt) {
    nrmf::ExperimentSpec spec = resolve_spec(o);
    nrmf::Network net = nrmf::load_checkpoint(ckpt);
    std::vector<nrmf::RankPair> ranks;
    for (const nrmf::Layer* l : net.wcl_layers()) {
        if (spec.method == "vbmf")
            ranks.push_back(nrmf::vbmf_rank_pair(l->kernel, l->id));
        else
            ranks.push_back(nrmf::select_ranks(l->kernel, spec.train.p, l->id));
    }
    ensure_dir(spec.out_dir + "/ranks");
    const std::string path = spec.out_dir + "/ranks/" + spec.method + ".csv";
    nrmf::write_rank_csv(path, ranks);
    std::cout << "wrote " << ranks.size() << " rank rows to " << path << "\n";
    return 0;
}

int cmd_compress(const CommonOpts& o, const std::string& ckpt, const std::string& ranks_csv,
                 const std::string& source) {
    nrmf::ExperimentSpec spec = resolve_spec(o);
    nrmf::Network net = nrmf::load_checkpoint(ckpt);
    std::map<std::string, nrmf::RankPair> table;
    for (const nrmf::RankPair& r : nrmf::read_rank_csv(ranks_csv)) table[r.layer_id] = r;

    nrmf::CompressionReport report;
    const nrmf::CompressSource src = source == "swap" ? nrmf::CompressSource::RankSwap
                                                      : nrmf::CompressSource::FreshDecompose;
    nrmf::Network compressed = nrmf::compress_network(net, table, src, &report);

    ensure_dir(spec.out_dir + "/checkpoints");
    nrmf::save_checkpoint(spec.out_dir + "/checkpoints/compressed.ckpt", compressed);
    nrmf::write_compression_csv(spec.out_dir + "/report.csv", report);
    std::cout << "compressed " << report.rows.size() << " layers, " << report.total_original
              << " -> " << report.total_compressed << " params (x"
              << nrmf::format_ratio(report.total_ratio()) << ")\n";
    return 0;
}

int cmd_fine_tune(const CommonOpts& o, const std::string& ckpt) {
    nrmf::ExperimentSpec spec = resolve_spec(o);
    nrmf::DataPair data = nrmf::load_data(spec);
    nrmf::DatasetBatchSource src(data.train);
    nrmf::Network net = nrmf::load_checkpoint(ckpt);

    const double before = nrmf::evaluate_accuracy(net, data.test);
    nrmf::TrainConfig cfg = spec.train;
    cfg.alpha = 0.0;
    cfg.epochs = spec.fine_tune_epochs;
    nrmf::TrainResult result = nrmf::train_nrmf(net, cfg, src, {});
    const double after = nrmf::evaluate_accuracy(result.net, data.test);

    ensure_dir(spec.out_dir + "/checkpoints");
    nrmf::save_checkpoint(spec.out_dir + "/checkpoints/finetuned.ckpt", result.net);
    std::ofstream os(spec.out_dir + "/finetune.csv", std::ios::binary);
    if (!os) nrmf::throw_io("cannot open for writing: " + spec.out_dir + "/finetune.csv");
    os << "accuracy_before,accuracy_after,epochs\n";
    os << nrmf::format_double(before) << ',' << nrmf::format_double(after) << ','
       << cfg.epochs << '\n';
    std::cout << "fine-tuned " << cfg.epochs << " epochs, accuracy "
              << nrmf::format_double(before) << " -> " << nrmf::format_double(after) << "\n";
    return 0;
}

int cmd_sv_experiment(const CommonOpts& o) {
    nrmf::ExperimentSpec spec = resolve_spec(o);
    nrmf::SvExperimentResult result = nrmf::run_sv_experiment(spec);
    for (const nrmf::SvArmSummary& s : result.reg_summaries)
        std::cout << s.layer_id << " reg arm: mode-3 energy " << nrmf::format_double(s.energy3.front())
                  << " -> " << nrmf::format_double(s.energy3.back()) << "\n";
    for (const nrmf::SvArmSummary& s : result.plain_summaries)
        std::cout << s.layer_id << " noreg arm: mode-3 energy "
                  << nrmf::format_double(s.energy3.front()) << " -> "
                  << nrmf::format_double(s.energy3.back()) << "\n";
    std::cout << "wrote " << spec.out_dir << "/sv_summary.csv\n";
    return 0;
}

int cmd_four_paths(const CommonOpts& o) {
    nrmf::ExperimentSpec spec = resolve_spec(o);
    nrmf::FourPathResult result = nrmf::run_four_paths(spec);
    nrmf::write_four_path_report(spec.out_dir, result);
    std::cout << "baseline: " << result.baseline_conv_params << " conv params, accuracy "
              << nrmf::format_double(result.baseline_accuracy) << "\n";
    for (const nrmf::FourPathRow& row : result.rows)
        std::cout << "path " << row.path << " (" << row.ranks_method << " ranks, "
                  << row.init_method << " init): " << row.conv_params << " conv params, accuracy "
                  << nrmf::format_double(row.accuracy) << "\n";
    return 0;
}

int cmd_report(const CommonOpts& o, const std::string& ckpt) {
    nrmf::ExperimentSpec spec = resolve_spec(o);
    nrmf::Network net = nrmf::load_checkpoint(ckpt);
    nrmf::CompressionReport rep = nrmf::report_from_network(net);
    ensure_dir(spec.out_dir);
    nrmf::write_compression_csv(spec.out_dir + "/report.csv", rep);
    for (const nrmf::CompressionReport::Row& r : rep.rows)
        std::cout << r.layer_id << ": " << nrmf::format_param_count(r.original_params) << " -> "
                  << nrmf::format_param_count(r.compressed_params) << " (x"
                  << nrmf::format_ratio(r.ratio) << ")\n";
    std::cout << "total: " << rep.total_original << " -> " << rep.total_compressed << "\n";
    return 0;
}

int cmd_make_data(const CommonOpts& o, int train_n, int test_n) {
    nrmf::ExperimentSpec spec = resolve_spec(o);
    ensure_dir(spec.out_dir);
    nrmf::Dataset train = nrmf::make_synthetic_digits(train_n, spec.train.seed * 2654435761u + 1);
    nrmf::Dataset test = nrmf::make_synthetic_digits(test_n, spec.train.seed * 2654435761u + 2);
    nrmf::save_dataset_idx(train, spec.out_dir + "/train-images-idx3-ubyte",
                           spec.out_dir + "/train-labels-idx1-ubyte");
    nrmf::save_dataset_idx(test, spec.out_dir + "/t10k-images-idx3-ubyte",
                           spec.out_dir + "/t10k-labels-idx1-ubyte");
    std::cout << "wrote " << train_n << " train / " << test_n << " test images to "
              << spec.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tucker-2 rank finding and conv-layer factorization"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string ckpt, ranks_csv, source = "fresh";
    int train_n = 5000, test_n = 1000;

    CLI::App* train = app.add_subcommand("train", "train a model (regularized when alpha > 0)");
    add_common(train, opts);

    CLI::App* select = app.add_subcommand("select-ranks", "rank selection on a checkpoint");
    add_common(select, opts);
    select->add_option("--ckpt", ckpt, "checkpoint file")->required();

    CLI::App* compress = app.add_subcommand("compress", "factorize conv layers per a rank table");
    add_common(compress, opts);
    compress->add_option("--ckpt", ckpt, "checkpoint file")->required();
    compress->add_option("--ranks", ranks_csv, "rank table CSV")->required();
    compress->add_option("--source", source, "fresh decomposition or rank swap")
        ->check(CLI::IsMember({"fresh", "swap"}));

    CLI::App* finetune = app.add_subcommand("fine-tune", "fine-tune a (compressed) checkpoint");
    add_common(finetune, opts);
    finetune->add_option("--ckpt", ckpt, "checkpoint file")->required();

    CLI::App* svexp = app.add_subcommand("sv-experiment",
                                         "train with and without the regularizer, log spectra");
    add_common(svexp, opts);

    CLI::App* fourp = app.add_subcommand("four-paths",
                                         "all four rank/initialization combinations");
    add_common(fourp, opts);

    CLI::App* report = app.add_subcommand("report", "parameter report for a checkpoint");
    add_common(report, opts);
    report->add_option("--ckpt", ckpt, "checkpoint file")->required();

    CLI::App* makedata = app.add_subcommand("make-data", "write a synthetic IDX digit corpus");
    add_common(makedata, opts);
    makedata->add_option("--train-samples", train_n, "training image count");
    makedata->add_option("--test-samples", test_n, "test image count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(opts);
        if (select->parsed()) return cmd_select_ranks(opts, ckpt);
        if (compress->parsed()) return cmd_compress(opts, ckpt, ranks_csv, source);
        if (finetune->parsed()) return cmd_fine_tune(opts, ckpt);
        if (svexp->parsed()) return cmd_sv_experiment(opts);
        if (fourp->parsed()) return cmd_four_paths(opts);
        if (report->parsed()) return cmd_report(opts, ckpt);
        if (makedata->parsed()) return cmd_make_data(opts, train_n, test_n);
    } catch (const nrmf::Error& e) {
        std::cerr << "nrmf-error: " << e.class_name() << ": " << e.what() << std::endl;
        return e.error_class() == nrmf::ErrorClass::Config ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "nrmf-error: internal: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
