#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "nrmf/error.hpp"
#include "nrmf/tensor.hpp"

namespace nrmf {

// Kernel blob format: ASCII magic "NRMF", then version u32, then the four
// dims (D_h, D_w, S, T) as u32, all little-endian, followed by
// D_h*D_w*S*T doubles (IEEE-754 binary64, little-endian) in the tensor
// linearization order (last index fastest). Vectors and matrices reuse the
// same container with leading dims of 1: a length-n vector is (1,1,1,n), an
// r x c matrix is (1,1,r,c).
inline constexpr std::uint32_t kBlobVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw_format("tensor blob truncated in header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw_format("tensor blob truncated in payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

inline void write_tensor_blob(std::ostream& os, const Tensor4& t) {
    os.write("NRMF", 4);
    detail::put_u32(os, kBlobVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(t.dh()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.dw()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.s()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.t()));
    for (double v : t.data()) detail::put_f64(os, v);
}

inline Tensor4 read_tensor_blob(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NRMF", 4) != 0)
        throw_format("tensor blob: bad magic");
    const std::uint32_t version = detail::get_u32(is);
    if (version != kBlobVersion)
        throw_format("tensor blob: unsupported version " + std::to_string(version));
    const int dh = static_cast<int>(detail::get_u32(is));
    const int dw = static_cast<int>(detail::get_u32(is));
    const int s = static_cast<int>(detail::get_u32(is));
    const int t = static_cast<int>(detail::get_u32(is));
    if (dh < 1 || dw < 1 || s < 1 || t < 1) throw_format("tensor blob: invalid dims");
    Tensor4 out(dh, dw, s, t);
    for (double& v : out.data()) v = detail::get_f64(is);
    return out;
}

inline void write_vector_blob(std::ostream& os, const std::vector<double>& v) {
    write_tensor_blob(os, Tensor4(1, 1, 1, static_cast<int>(v.size()), v));
}

inline std::vector<double> read_vector_blob(std::istream& is) {
    const Tensor4 t = read_tensor_blob(is);
    if (t.dh() != 1 || t.dw() != 1 || t.s() != 1)
        throw_format("expected a vector blob");
    return t.data();
}

inline void write_matrix_blob(std::ostream& os, const DenseMatrix& m) {
    write_tensor_blob(os, Tensor4(1, 1, m.rows(), m.cols(), m.data()));
}

inline DenseMatrix read_matrix_blob(std::istream& is) {
    const Tensor4 t = read_tensor_blob(is);
    if (t.dh() != 1 || t.dw() != 1) throw_format("expected a matrix blob");
    return DenseMatrix(t.s(), t.t(), t.data());
}

inline void save_tensor_file(const std::string& path, const Tensor4& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_io("cannot open for writing: " + path);
    write_tensor_blob(os, t);
    if (!os) throw_io("write failed: " + path);
}

inline Tensor4 load_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_io("cannot open: " + path);
    return read_tensor_blob(is);
}

}  // namespace nrmf
