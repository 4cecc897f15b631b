#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "nrmf/error.hpp"

namespace nrmf {

// IDX containers as used by the MNIST distribution: big-endian u32 magic
// (0x00000803 for u8 images with 3 dims, 0x00000801 for u8 labels with 1
// dim), big-endian u32 dimension sizes, then raw bytes row-major.
struct IdxImages {
    int count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols
};

namespace detail {

inline std::uint32_t get_u32_be(std::istream& is, const std::string& what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw_format("idx: truncated " + what);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline void put_u32_be(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>((v >> 24) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>(v & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline IdxImages load_idx_images(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_io("cannot open: " + path);
    const std::uint32_t magic = detail::get_u32_be(is, "image magic");
    if (magic != 0x00000803u)
        throw_format("idx: bad image magic in " + path);
    IdxImages out;
    out.count = static_cast<int>(detail::get_u32_be(is, "image count"));
    out.rows = static_cast<int>(detail::get_u32_be(is, "image rows"));
    out.cols = static_cast<int>(detail::get_u32_be(is, "image cols"));
    if (out.count < 0 || out.rows < 1 || out.cols < 1)
        throw_format("idx: invalid image header in " + path);
    const std::size_t n = static_cast<std::size_t>(out.count) * out.rows * out.cols;
    out.pixels.resize(n);
    is.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw_format("idx: truncated image payload in " + path);
    return out;
}

inline std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_io("cannot open: " + path);
    const std::uint32_t magic = detail::get_u32_be(is, "label magic");
    if (magic != 0x00000801u)
        throw_format("idx: bad label magic in " + path);
    const int count = static_cast<int>(detail::get_u32_be(is, "label count"));
    if (count < 0) throw_format("idx: invalid label header in " + path);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(count));
    is.read(reinterpret_cast<char*>(labels.data()), count);
    if (is.gcount() != count) throw_format("idx: truncated label payload in " + path);
    return labels;
}

inline void save_idx_images(const std::string& path, const IdxImages& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_io("cannot open for writing: " + path);
    detail::put_u32_be(os, 0x00000803u);
    detail::put_u32_be(os, static_cast<std::uint32_t>(img.count));
    detail::put_u32_be(os, static_cast<std::uint32_t>(img.rows));
    detail::put_u32_be(os, static_cast<std::uint32_t>(img.cols));
    os.write(reinterpret_cast<const char*>(img.pixels.data()),
             static_cast<std::streamsize>(img.pixels.size()));
    if (!os) throw_io("write failed: " + path);
}

inline void save_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_io("cannot open for writing: " + path);
    detail::put_u32_be(os, 0x00000801u);
    detail::put_u32_be(os, static_cast<std::uint32_t>(labels.size()));
    os.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
    if (!os) throw_io("write failed: " + path);
}

}  // namespace nrmf
