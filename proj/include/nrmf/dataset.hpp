#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "nrmf/error.hpp"
#include "nrmf/idx.hpp"
#include "nrmf/nn.hpp"
#include "nrmf/nrmf.hpp"
#include "nrmf/rng.hpp"

namespace nrmf {

// Grayscale image classification set. Pixels stay u8; normalization
// ((v/255 - mean) / std) happens when a batch is materialized.
struct Dataset {
    int image_h = 0, image_w = 0;
    int num_classes = 10;
    std::vector<std::uint8_t> pixels;  // count * h * w
    std::vector<std::uint8_t> labels;

    int count() const { return static_cast<int>(labels.size()); }
};

inline constexpr double kPixelMean = 0.1307;
inline constexpr double kPixelStd = 0.3081;

// Loads an images/labels file pair; the counts must agree.
inline Dataset load_idx_dataset(const std::string& images_path,
                                const std::string& labels_path) {
    IdxImages img = load_idx_images(images_path);
    std::vector<std::uint8_t> labels = load_idx_labels(labels_path);
    if (static_cast<int>(labels.size()) != img.count)
        throw_format("dataset: image count " + std::to_string(img.count) +
                     " does not match label count " + std::to_string(labels.size()));
    Dataset d;
    d.image_h = img.rows;
    d.image_w = img.cols;
    d.pixels = std::move(img.pixels);
    d.labels = std::move(labels);
    int max_label = 0;
    for (std::uint8_t l : d.labels) max_label = std::max<int>(max_label, l);
    d.num_classes = std::max(10, max_label + 1);
    return d;
}

// Seeded subsample without replacement, original relative order discarded.
inline Dataset subsample(const Dataset& d, int n, std::uint64_t seed) {
    if (n >= d.count()) return d;
    std::vector<int> idx(static_cast<std::size_t>(d.count()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(static_cast<std::size_t>(n));

    Dataset out;
    out.image_h = d.image_h;
    out.image_w = d.image_w;
    out.num_classes = d.num_classes;
    const std::size_t px = static_cast<std::size_t>(d.image_h) * d.image_w;
    out.pixels.reserve(px * static_cast<std::size_t>(n));
    out.labels.reserve(static_cast<std::size_t>(n));
    for (int i : idx) {
        const std::uint8_t* src = d.pixels.data() + static_cast<std::size_t>(i) * px;
        out.pixels.insert(out.pixels.end(), src, src + px);
        out.labels.push_back(d.labels[static_cast<std::size_t>(i)]);
    }
    return out;
}

// BatchSource over a Dataset, applying the fixed normalization constants.
class DatasetBatchSource : public BatchSource {
  public:
    explicit DatasetBatchSource(const Dataset& d) : d_(&d) {}

    int size() const override { return d_->count(); }

    void fill(const std::vector<int>& indices, FeatureBatch& x,
              std::vector<int>& y) const override {
        const int n = static_cast<int>(indices.size());
        if (x.n != n || x.c != 1 || x.h != d_->image_h || x.w != d_->image_w)
            x = FeatureBatch(n, 1, d_->image_h, d_->image_w);
        y.resize(static_cast<std::size_t>(n));
        const std::size_t px = static_cast<std::size_t>(d_->image_h) * d_->image_w;
        for (int i = 0; i < n; ++i) {
            const int src = indices[static_cast<std::size_t>(i)];
            if (src < 0 || src >= d_->count()) throw_shape("batch index out of range");
            const std::uint8_t* p = d_->pixels.data() + static_cast<std::size_t>(src) * px;
            double* out = x.data.data() + static_cast<std::size_t>(i) * px;
            for (std::size_t k = 0; k < px; ++k)
                out[k] = (static_cast<double>(p[k]) / 255.0 - kPixelMean) / kPixelStd;
            y[static_cast<std::size_t>(i)] = d_->labels[static_cast<std::size_t>(src)];
        }
    }

  private:
    const Dataset* d_;
};

// Top-1 accuracy over a dataset, evaluated in fixed-size batches.
inline double evaluate_accuracy(const Network& net, const Dataset& d, int batch_size = 256) {
    DatasetBatchSource src(d);
    FeatureBatch x;
    std::vector<int> y;
    int correct = 0;
    std::vector<int> idx;
    for (int start = 0; start < d.count(); start += batch_size) {
        const int stop = std::min(d.count(), start + batch_size);
        idx.resize(static_cast<std::size_t>(stop - start));
        std::iota(idx.begin(), idx.end(), start);
        src.fill(idx, x, y);
        const FeatureBatch logits = forward_logits(net, x);
        for (int i = 0; i < x.n; ++i) {
            int best = 0;
            for (int c = 1; c < logits.c; ++c)
                if (logits.at(i, c, 0, 0) > logits.at(i, best, 0, 0)) best = c;
            if (best == y[static_cast<std::size_t>(i)]) ++correct;
        }
    }
    return d.count() > 0 ? static_cast<double>(correct) / d.count() : 0.0;
}

// ---------------------------------------------------------------------------
// Synthetic digit set. Ten 7x5 glyph bitmaps are scaled, shifted and
// corrupted with noise into 28x28 frames. Used where no real IDX corpus is
// installed; same file format, same loader path.
// ---------------------------------------------------------------------------

namespace detail {

inline const std::array<std::array<const char*, 7>, 10>& digit_glyphs() {
    static const std::array<std::array<const char*, 7>, 10> g = {{
        {"#####", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"},  // 0
        {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},  // 1
        {"#####", "....#", "....#", "#####", "#....", "#....", "#####"},  // 2
        {"#####", "....#", "....#", ".####", "....#", "....#", "#####"},  // 3
        {"#...#", "#...#", "#...#", "#####", "....#", "....#", "....#"},  // 4
        {"#####", "#....", "#....", "#####", "....#", "....#", "#####"},  // 5
        {"#####", "#....", "#....", "#####", "#...#", "#...#", "#####"},  // 6
        {"#####", "....#", "...#.", "..#..", "..#..", ".#...", ".#..."},  // 7
        {"#####", "#...#", "#...#", "#####", "#...#", "#...#", "#####"},  // 8
        {"#####", "#...#", "#...#", "#####", "....#", "....#", "#####"},  // 9
    }};
    return g;
}

}  // namespace detail

inline Dataset make_synthetic_digits(int count, std::uint64_t seed) {
    if (count < 1) throw_config("synthetic dataset needs count >= 1");
    Dataset d;
    d.image_h = 28;
    d.image_w = 28;
    d.num_classes = 10;
    d.pixels.assign(static_cast<std::size_t>(count) * 28 * 28, 0);
    d.labels.resize(static_cast<std::size_t>(count));

    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        const int digit = static_cast<int>(rng.uniform_int(0, 9));
        d.labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(digit);
        const auto& glyph = detail::digit_glyphs()[static_cast<std::size_t>(digit)];

        const int scale = static_cast<int>(rng.uniform_int(2, 3));  // glyph 10x14 or 15x21
        const int gw = 5 * scale, gh = 7 * scale;
        const int offy = static_cast<int>(rng.uniform_int(0, 28 - gh));
        const int offx = static_cast<int>(rng.uniform_int(0, 28 - gw));
        const double fg = rng.uniform(160.0, 255.0);

        std::uint8_t* img = d.pixels.data() + static_cast<std::size_t>(i) * 28 * 28;
        for (int y = 0; y < gh; ++y)
            for (int x = 0; x < gw; ++x)
                if (glyph[static_cast<std::size_t>(y / scale)][x / scale] == '#')
                    img[(offy + y) * 28 + offx + x] = static_cast<std::uint8_t>(fg);
        for (int k = 0; k < 28 * 28; ++k) {
            const double noisy = img[k] + rng.normal(0.0, 12.0);
            img[k] = static_cast<std::uint8_t>(std::clamp(noisy, 0.0, 255.0));
        }
    }
    return d;
}

inline void save_dataset_idx(const Dataset& d, const std::string& images_path,
                             const std::string& labels_path) {
    IdxImages img;
    img.count = d.count();
    img.rows = d.image_h;
    img.cols = d.image_w;
    img.pixels = d.pixels;
    save_idx_images(images_path, img);
    save_idx_labels(labels_path, d.labels);
}

}  // namespace nrmf
