#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "nrmf/compress.hpp"
#include "nrmf/dataset.hpp"
#include "oracles.hpp"

using nrmf::FactorizedConv;
using nrmf::FeatureBatch;
using nrmf::Network;
using nrmf::RankPair;
using nrmf::Tensor4;

namespace {

FeatureBatch run_factorized(const FactorizedConv& f, const FeatureBatch& x) {
    FeatureBatch a = nrmf::conv2d_forward(f.first, x, 1, 0);
    FeatureBatch b = nrmf::conv2d_forward(f.mid, a, f.stride, f.pad);
    return nrmf::conv2d_forward(f.last, b, 1, 0, &f.bias);
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::fabs(a[i] - b[i]));
        den = std::max(den, std::fabs(b[i]));
    }
    return den > 0.0 ? num / den : num;
}

RankPair make_ranks(const std::string& id, int s, int t, int r3, int r4,
                    const std::string& method = "nrmf") {
    RankPair r;
    r.layer_id = id;
    r.s = s;
    r.t = t;
    r.r3 = r3;
    r.r4 = r4;
    r.method = method;
    return r;
}

}  // namespace

// ============================================================================
// parameter arithmetic (the published layer-wise table)
// ============================================================================

TEST(CountParams, LayerwiseTableRows) {
    // dense rows
    EXPECT_EQ(nrmf::count_params(3, 3, 256, 256), 589824);   // 589.82K
    EXPECT_EQ(nrmf::count_params(3, 3, 256, 512), 1179648);  // 1.18M
    EXPECT_EQ(nrmf::count_params(3, 3, 512, 512), 2359296);  // 2.36M

    struct Row {
        int s, t, r3, r4;
        std::int64_t params;
        double ratio;
    };
    const Row rows[] = {
        // conv1 VBMF / NRMF
        {256, 256, 168, 176, 354176, 1.67},
        {256, 256, 144, 141, 255696, 2.31},
        // conv2
        {256, 512, 194, 275, 670614, 1.76},
        {256, 512, 222, 299, 807322, 1.46},
        // conv3
        {512, 512, 332, 328, 1317984, 1.79},
        {512, 512, 292, 212, 815184, 2.89},
        // conv4
        {512, 512, 348, 342, 1424424, 1.66},
        {512, 512, 160, 69, 216608, 10.89},
        // conv5
        {512, 512, 382, 392, 1743984, 1.35},
        {512, 512, 31, 39, 46721, 50.50},
    };
    for (const Row& row : rows) {
        const std::int64_t dense = nrmf::count_params(3, 3, row.s, row.t);
        const std::int64_t got = nrmf::count_params(3, row.s, row.t, row.r3, row.r4);
        EXPECT_EQ(got, row.params);
        EXPECT_NEAR(static_cast<double>(dense) / got, row.ratio, 0.005);
    }
}

TEST(CountParams, DisplayFormatting) {
    EXPECT_EQ(nrmf::format_param_count(46721), "46.72K");
    EXPECT_EQ(nrmf::format_param_count(255696), "255.70K");
    EXPECT_EQ(nrmf::format_param_count(216608), "216.61K");
    EXPECT_EQ(nrmf::format_param_count(589824), "589.82K");
    EXPECT_EQ(nrmf::format_param_count(1317984), "1.32M");
    EXPECT_EQ(nrmf::format_param_count(2359296), "2.36M");
    EXPECT_EQ(nrmf::format_param_count(812), "812");
    EXPECT_EQ(nrmf::format_ratio(50.497588), "50.50");
}

TEST(CountParams, FactorizedConvCounts) {
    nrmf::Rng rng(3);
    Tensor4 k = oracle::random_kernel(3, 3, 8, 10, rng);
    FactorizedConv f = nrmf::factorize_layer(k, 4, 5);
    EXPECT_EQ(nrmf::count_params(f), 8 * 4 + 9 * 4 * 5 + 5 * 10);
    EXPECT_EQ(nrmf::count_params(f), nrmf::count_params(3, 8, 10, 4, 5));
}

TEST(CountParams, RatioMonotoneInRanks) {
    const std::int64_t dense = nrmf::count_params(3, 3, 32, 48);
    std::int64_t prev = 0;
    for (int r = 1; r <= 32; ++r) {
        const std::int64_t c = nrmf::count_params(3, 32, 48, r, r);
        EXPECT_GT(c, prev);  // compressed grows, so ratio dense/c shrinks
        prev = c;
    }
}

// ============================================================================
// factorize_layer
// ============================================================================

TEST(FactorizeLayer, FullRankMatchesDenseConv) {
    nrmf::Rng rng(5);
    Tensor4 k = oracle::random_kernel(3, 3, 6, 8, rng);
    std::vector<double> bias(8);
    for (double& v : bias) v = rng.normal();
    FactorizedConv f = nrmf::factorize_layer(k, 6, 8, 1, 1, &bias);

    FeatureBatch x(2, 6, 7, 7);
    for (double& v : x.data) v = rng.normal();
    FeatureBatch dense = nrmf::conv2d_forward(k, x, 1, 1, &bias);
    FeatureBatch fact = run_factorized(f, x);
    ASSERT_EQ(fact.data.size(), dense.data.size());
    EXPECT_LT(max_rel_diff(fact.data, dense.data), 1e-8);
}

TEST(FactorizeLayer, PlantedRankExact) {
    nrmf::Rng rng(7);
    Tensor4 k = oracle::planted_kernel(3, 3, 6, 8, 2, 3, rng);
    FactorizedConv f = nrmf::factorize_layer(k, 2, 3);
    FeatureBatch x(1, 6, 5, 5);
    for (double& v : x.data) v = rng.normal();
    FeatureBatch dense = nrmf::conv2d_forward(k, x, 1, 0);
    FeatureBatch fact = run_factorized(f, x);
    EXPECT_LT(max_rel_diff(fact.data, dense.data), 1e-8);
}

// Truncated pipeline output must match dense conv with the truncated
// reconstruction, not with the original kernel.
TEST(FactorizeLayer, TruncatedMatchesReconstruction) {
    nrmf::Rng rng(9);
    Tensor4 k = oracle::random_kernel(3, 3, 6, 8, rng);
    FactorizedConv f = nrmf::factorize_layer(k, 3, 4);
    Tensor4 rec = nrmf::tucker2_reconstruct(nrmf::tucker2_decompose(k, 3, 4));

    FeatureBatch x(2, 6, 6, 6);
    for (double& v : x.data) v = rng.normal();
    FeatureBatch dense = nrmf::conv2d_forward(rec, x, 1, 0);
    FeatureBatch fact = run_factorized(f, x);
    EXPECT_LT(max_rel_diff(fact.data, dense.data), 1e-10);
}

TEST(FactorizeLayer, StridePadLiveOnMiddleStage) {
    nrmf::Rng rng(11);
    Tensor4 k = oracle::random_kernel(3, 3, 4, 5, rng);
    std::vector<double> bias(5, 0.25);
    FactorizedConv f = nrmf::factorize_layer(k, 4, 5, 2, 1, &bias);
    EXPECT_EQ(f.stride, 2);
    EXPECT_EQ(f.pad, 1);

    FeatureBatch x(1, 4, 9, 9);
    for (double& v : x.data) v = rng.normal();
    FeatureBatch dense = nrmf::conv2d_forward(k, x, 2, 1, &bias);
    FeatureBatch fact = run_factorized(f, x);
    ASSERT_EQ(fact.h, dense.h);
    EXPECT_LT(max_rel_diff(fact.data, dense.data), 1e-8);
}

TEST(FactorizeLayer, RankBoundsChecked) {
    Tensor4 k(3, 3, 4, 4, 1.0);
    EXPECT_THROW(nrmf::factorize_layer(k, 5, 2), nrmf::Error);
    EXPECT_THROW(nrmf::factorize_layer(k, 2, 0), nrmf::Error);
}

// ============================================================================
// rank_swap
// ============================================================================

TEST(RankSwap, SameRanksIdentical) {
    nrmf::Rng rng(13);
    Tensor4 k = oracle::random_kernel(3, 3, 6, 8, rng);
    FactorizedConv f = nrmf::factorize_layer(k, 3, 4);
    FactorizedConv g = nrmf::rank_swap(f, 3, 4);
    EXPECT_EQ(g.first.data(), f.first.data());
    EXPECT_EQ(g.mid.data(), f.mid.data());
    EXPECT_EQ(g.last.data(), f.last.data());
}

// The worked re-ranking: [1,1,128,100],[3,3,100,120],[1,1,120,256] taken to
// ranks (110, 90) becomes [1,1,128,110],[3,3,110,90],[1,1,90,256].
TEST(RankSwap, WorkedStageShapes) {
    nrmf::Rng rng(15);
    Tensor4 k = oracle::random_kernel(3, 3, 128, 256, rng);
    FactorizedConv f = nrmf::factorize_layer(k, 100, 120);
    FactorizedConv g = nrmf::rank_swap(f, 110, 90);
    EXPECT_EQ(g.first.dh(), 1);
    EXPECT_EQ(g.first.s(), 128);
    EXPECT_EQ(g.first.t(), 110);
    EXPECT_EQ(g.mid.dh(), 3);
    EXPECT_EQ(g.mid.s(), 110);
    EXPECT_EQ(g.mid.t(), 90);
    EXPECT_EQ(g.last.s(), 90);
    EXPECT_EQ(g.last.t(), 256);

    // overlap preserved bit-exactly, padding exactly zero
    for (int a = 0; a < 128; ++a)
        for (int r = 0; r < 110; ++r)
            EXPECT_EQ(g.first.at(0, 0, a, r), r < 100 ? f.first.at(0, 0, a, r) : 0.0);
    for (int q = 0; q < 90; ++q)
        for (int b = 0; b < 256; ++b) EXPECT_EQ(g.last.at(0, 0, q, b), f.last.at(0, 0, q, b));
}

TEST(RankSwap, PadThenTruncateRoundTrip) {
    nrmf::Rng rng(17);
    Tensor4 k = oracle::random_kernel(3, 3, 8, 9, rng);
    FactorizedConv f = nrmf::factorize_layer(k, 4, 5);
    FactorizedConv padded = nrmf::rank_swap(f, 7, 5);
    FactorizedConv back = nrmf::rank_swap(padded, 4, 5);
    EXPECT_EQ(back.first.data(), f.first.data());
    EXPECT_EQ(back.mid.data(), f.mid.data());
    EXPECT_EQ(back.last.data(), f.last.data());
}

TEST(RankSwap, BoundsChecked) {
    nrmf::Rng rng(19);
    Tensor4 k = oracle::random_kernel(3, 3, 6, 8, rng);
    FactorizedConv f = nrmf::factorize_layer(k, 3, 4);
    EXPECT_THROW(nrmf::rank_swap(f, 7, 4), nrmf::Error);  // above S
    EXPECT_THROW(nrmf::rank_swap(f, 3, 0), nrmf::Error);
}

// ============================================================================
// compress_network
// ============================================================================

namespace {

Network tiny_conv_net(std::uint64_t seed) {
    Network net;
    net.in_c = 1;
    net.in_h = 10;
    net.in_w = 10;
    net.num_classes = 4;
    net.layers.push_back(nrmf::make_conv("c1", 3, 3, 1, 6, 1, 1));
    net.layers.push_back(nrmf::make_relu("r1"));
    net.layers.push_back(nrmf::make_conv("c2", 3, 3, 6, 8, 1, 1));
    net.layers.push_back(nrmf::make_relu("r2"));
    net.layers.push_back(nrmf::make_conv("proj", 1, 1, 8, 8, 1, 0));  // 1x1: untouched
    net.layers.push_back(nrmf::make_flatten("f"));
    net.layers.push_back(nrmf::make_linear("fc", 800, 4));
    nrmf::init_params(net, seed);
    return net;
}

}  // namespace

TEST(CompressNetwork, FullRankTableKeepsFunction) {
    Network net = tiny_conv_net(21);
    std::map<std::string, RankPair> table;
    table["c1"] = make_ranks("c1", 1, 6, 1, 6);
    table["c2"] = make_ranks("c2", 6, 8, 6, 8);

    nrmf::CompressionReport report;
    Network compressed = nrmf::compress_network(net, table, nrmf::CompressSource::FreshDecompose,
                                                &report);
    // conv triples + untouched layers
    ASSERT_EQ(compressed.layers.size(), net.layers.size() + 4);
    EXPECT_EQ(compressed.layers[0].id, "c1:u3");
    EXPECT_TRUE(compressed.layers[0].provenance.has_value());

    nrmf::Rng rng(22);
    FeatureBatch x(3, 1, 10, 10);
    for (double& v : x.data) v = rng.normal();
    FeatureBatch a = nrmf::forward_logits(net, x);
    FeatureBatch b = nrmf::forward_logits(compressed, x);
    EXPECT_LT(max_rel_diff(b.data, a.data), 1e-6);
}

TEST(CompressNetwork, TruncatedShrinksParams) {
    Network net = tiny_conv_net(23);
    std::map<std::string, RankPair> table;
    table["c1"] = make_ranks("c1", 1, 6, 1, 3);
    table["c2"] = make_ranks("c2", 6, 8, 3, 4);

    nrmf::CompressionReport report;
    Network compressed = nrmf::compress_network(net, table, nrmf::CompressSource::FreshDecompose,
                                                &report);
    EXPECT_LT(report.total_compressed, report.total_original);
    EXPECT_EQ(report.rows.size(), 2u);
    std::int64_t sum_orig = 0, sum_comp = 0;
    for (const auto& row : report.rows) {
        sum_orig += row.original_params;
        sum_comp += row.compressed_params;
    }
    EXPECT_EQ(sum_orig, report.total_original);
    EXPECT_EQ(sum_comp, report.total_compressed);
}

TEST(CompressNetwork, MissingRankEntryThrows) {
    Network net = tiny_conv_net(25);
    std::map<std::string, RankPair> table;
    table["c1"] = make_ranks("c1", 1, 6, 1, 3);
    EXPECT_THROW(
        nrmf::compress_network(net, table, nrmf::CompressSource::FreshDecompose, nullptr),
        nrmf::Error);
}

TEST(CompressNetwork, RankSwapRewritesTriples) {
    Network net = tiny_conv_net(27);
    std::map<std::string, RankPair> fresh_table;
    fresh_table["c1"] = make_ranks("c1", 1, 6, 1, 4, "vbmf");
    fresh_table["c2"] = make_ranks("c2", 6, 8, 4, 5, "vbmf");
    Network factorized =
        nrmf::compress_network(net, fresh_table, nrmf::CompressSource::FreshDecompose);

    std::map<std::string, RankPair> swap_table;
    swap_table["c1"] = make_ranks("c1", 1, 6, 1, 2);
    swap_table["c2"] = make_ranks("c2", 6, 8, 5, 3);
    nrmf::CompressionReport report;
    Network swapped =
        nrmf::compress_network(factorized, swap_table, nrmf::CompressSource::RankSwap, &report);

    const nrmf::Layer& mid = swapped.find("c2:core");
    EXPECT_EQ(mid.kernel.s(), 5);
    EXPECT_EQ(mid.kernel.t(), 3);
    ASSERT_TRUE(mid.provenance.has_value());
    EXPECT_EQ(mid.provenance->r3, 5);
    // overlap of the swapped first stage matches the original factor
    const nrmf::Layer& first_old = factorized.find("c2:u3");
    const nrmf::Layer& first_new = swapped.find("c2:u3");
    for (int a = 0; a < 6; ++a)
        for (int r = 0; r < 4; ++r)
            EXPECT_EQ(first_new.kernel.at(0, 0, a, r), first_old.kernel.at(0, 0, a, r));
}

TEST(CompressNetwork, RankSwapOnDenseInputThrows) {
    Network net = tiny_conv_net(29);
    std::map<std::string, RankPair> table;
    table["c1"] = make_ranks("c1", 1, 6, 1, 3);
    table["c2"] = make_ranks("c2", 6, 8, 3, 3);
    EXPECT_THROW(nrmf::compress_network(net, table, nrmf::CompressSource::RankSwap, nullptr),
                 nrmf::Error);
}

TEST(CompressNetwork, CompressedNetworkTrainsAndSaves) {
    Network net = tiny_conv_net(31);
    std::map<std::string, RankPair> table;
    table["c1"] = make_ranks("c1", 1, 6, 1, 4);
    table["c2"] = make_ranks("c2", 6, 8, 4, 4);
    Network compressed = nrmf::compress_network(net, table, nrmf::CompressSource::FreshDecompose);

    // forward/backward still compose
    nrmf::Rng rng(32);
    FeatureBatch x(2, 1, 10, 10);
    for (double& v : x.data) v = rng.normal();
    nrmf::ForwardCache cache;
    const double loss = nrmf::forward(compressed, x, {0, 2}, &cache);
    EXPECT_TRUE(std::isfinite(loss));
    std::vector<nrmf::LayerGrads> grads = nrmf::backward(compressed, cache);
    EXPECT_EQ(grads.size(), compressed.layers.size());
}
