#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fr/mat.hpp"

namespace fr {

struct Shape3 {
    std::size_t c = 1, h = 1, w = 1;
    std::size_t count() const { return c * h * w; }
    bool operator==(const Shape3&) const = default;
};

// Labeled dataset with features normalized to [0,1]. Rows of `features` are
// flattened samples (channel-major for images).
struct Dataset {
    Mat features;  // N x shape.count()
    Shape3 shape;
    std::vector<int> labels;
    int num_classes = 0;
    std::string name;

    std::size_t size() const { return features.rows(); }
};

// IDX image/label pair (the de-facto MNIST container). Pixels are scaled by
// 1/255. Throws IoError with distinct messages for bad magic, truncation,
// and image/label count mismatch.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path);

// CSV with a header row; the column named "label" holds class indices, all
// other columns are numeric features.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& ds, const std::string& path);

// Gaussian clusters centered on a circle.
Dataset gen_blobs(std::size_t n_per_class, int num_classes, double noise,
                  std::uint64_t seed);
// Interleaved spiral arms.
Dataset gen_spirals(std::size_t n_per_class, int num_classes, double noise,
                    std::uint64_t seed);
// 28x28 single-channel digit glyphs (classes 0..9) with random shift and
// pixel noise; an offline stand-in for handwritten-digit data.
Dataset gen_digits(std::size_t n_per_class, int num_classes, double noise,
                   std::uint64_t seed);

Dataset gen_synthetic(const std::string& kind, std::size_t n_per_class,
                      int num_classes, double noise, std::uint64_t seed);

// Rows [0, n) kept / rows [n, N) split off, preserving order.
Dataset take_rows(const Dataset& ds, std::size_t begin, std::size_t end);

// Epoch batching: a (seed, epoch)-derived permutation chunked into
// batch_size groups; the last partial batch is kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed,
                                                    std::size_t epoch);

Mat gather_rows(const Mat& m, const std::vector<std::size_t>& idx);
std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<std::size_t>& idx);

Mat one_hot(const std::vector<int>& labels, int num_classes);

}  // namespace fr
