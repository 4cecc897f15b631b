#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nrmf/nn.hpp"
#include "nrmf/serialize.hpp"
#include "oracles.hpp"

using nrmf::Tensor4;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(TensorBlob, RoundTripBitExact) {
    nrmf::Rng rng(1);
    Tensor4 t = oracle::random_kernel(3, 3, 4, 5, rng);
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    nrmf::write_tensor_blob(ss, t);
    Tensor4 back = nrmf::read_tensor_blob(ss);
    EXPECT_EQ(back.data(), t.data());
    EXPECT_EQ(back.dh(), 3);
    EXPECT_EQ(back.t(), 5);
}

TEST(TensorBlob, HeaderLayout) {
    Tensor4 t(1, 1, 1, 2, {1.5, -2.0});
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    nrmf::write_tensor_blob(ss, t);
    const std::string bytes = ss.str();
    ASSERT_EQ(bytes.size(), 4u + 4u + 16u + 16u);  // magic, version, dims, payload
    EXPECT_EQ(bytes.substr(0, 4), "NRMF");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);  // version LE
    EXPECT_EQ(static_cast<unsigned char>(bytes[20]), 2);  // T dim LE
}

TEST(TensorBlob, BadMagicThrows) {
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    ss << "XXXXgarbage";
    EXPECT_THROW(nrmf::read_tensor_blob(ss), nrmf::Error);
}

TEST(TensorBlob, TruncationThrows) {
    nrmf::Rng rng(2);
    Tensor4 t = oracle::random_kernel(2, 2, 2, 2, rng);
    std::stringstream full(std::ios::in | std::ios::out | std::ios::binary);
    nrmf::write_tensor_blob(full, t);
    const std::string bytes = full.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 7),
                          std::ios::in | std::ios::binary);
    EXPECT_THROW(nrmf::read_tensor_blob(cut), nrmf::Error);
}

TEST(Checkpoint, RoundTripNetwork) {
    nrmf::Network net;
    net.in_c = 1;
    net.in_h = 8;
    net.in_w = 8;
    net.num_classes = 3;
    net.layers.push_back(nrmf::make_conv("c1", 3, 3, 1, 4, 1, 1));
    net.layers.push_back(nrmf::make_relu("r1"));
    net.layers.push_back(nrmf::make_maxpool2("p1"));
    net.layers.push_back(nrmf::make_flatten("f"));
    net.layers.push_back(nrmf::make_linear("fc", 64, 3));
    nrmf::init_params(net, 99);
    net.layers[0].provenance = nrmf::Provenance{"orig", 2, 3, "nrmf", "mid"};
    net.layers[4].trainable = false;

    const std::string path = temp_path("nrmf_ckpt_test.ckpt");
    nrmf::save_checkpoint(path, net);
    nrmf::Network back = nrmf::load_checkpoint(path);

    ASSERT_EQ(back.layers.size(), net.layers.size());
    EXPECT_EQ(back.in_h, 8);
    EXPECT_EQ(back.num_classes, 3);
    EXPECT_EQ(back.layers[0].kernel.data(), net.layers[0].kernel.data());
    EXPECT_EQ(back.layers[0].bias, net.layers[0].bias);
    EXPECT_EQ(back.layers[4].weight.data(), net.layers[4].weight.data());
    EXPECT_FALSE(back.layers[4].trainable);
    ASSERT_TRUE(back.layers[0].provenance.has_value());
    EXPECT_EQ(back.layers[0].provenance->from, "orig");
    EXPECT_EQ(back.layers[0].provenance->r3, 2);
    EXPECT_EQ(back.layers[0].provenance->role, "mid");
    std::remove(path.c_str());
}

TEST(Checkpoint, MalformedManifestThrows) {
    const std::string path = temp_path("nrmf_ckpt_bad.ckpt");
    {
        std::ofstream os(path, std::ios::binary);
        os << "NRMF-CKPT 1\nlayers 1\nlayer c1 warp 3 3 1 4\nend\n";
    }
    EXPECT_THROW(nrmf::load_checkpoint(path), nrmf::Error);
    std::remove(path.c_str());
}
