#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fr/linalg.hpp"
#include "fr/mat.hpp"

namespace fr {

enum class Activation { linear, relu };

// Fully-connected layer. The bias is folded in as an extra input row fed by
// a constant-one feature, so weights are (d_in + 1) x d_out.
struct DenseLayer {
    Mat weights;
    Activation activation = Activation::relu;
    double dropout_rate = 0.0;

    std::size_t d_in() const { return weights.rows() - 1; }
    std::size_t d_out() const { return weights.cols(); }
};

// Applies the layer to inputs that already carry the constant-one column
// (N x d_in+1). Activation is applied unless `linear_only`.
Mat dense_forward(const DenseLayer& layer, const Mat& h_aug, bool linear_only = false);

// Appends the constant-one bias column.
Mat augment_ones(const Mat& h);

struct LayerRetrainStats {
    double residual_before = 0.0;
    double residual_after = 0.0;
    double eta_norm = 0.0;
    std::size_t batches = 0;
};

struct RetrainReport {
    std::vector<LayerRetrainStats> layers;  // ordered first..last dense layer
    double duration_ms = 0.0;
    std::size_t peak_bytes = 0;

    std::string to_json() const;
};

// targets - logits on the linear (pre-softmax) head. Target rows must be
// one-hot.
Mat output_residual(const Mat& logits, const Mat& targets);

// Maps a layer's residual to the previous layer through the ridge-form MP
// inverse of the downstream weights, clamped at zero. The bias coordinate is
// dropped: a constant input has no upstream residual.
//   e_prev = max(0, e_next * pinv(a_next)^T)[:, :d_in]
Mat pull_back_residual(const Mat& e_next, const Mat& a_next, double reg_c);

// Pull-based stream of aligned (features, residual) batches. Returns false
// when exhausted. The factory must yield a fresh replay of the same batches
// each time it is called.
using BatchStream = std::function<bool(Mat& h, Mat& e)>;
using BatchStreamFactory = std::function<BatchStream()>;

struct RetrainOptions {
    double reg_c = 1.0;
    double mu = 1.0;
    // rows of eta to zero out (dropout operator); empty mask keeps all rows
    std::vector<std::uint8_t> drop_row;
};

// Streams batches through the RLS recursion and blends the resulting
// correction into the weights: w <- w + mu * F(eta_M). The stream is pulled
// twice: once for the solve and the pre-update residual norm, once for the
// post-update norm.
LayerRetrainStats retrain_layer(DenseLayer& layer, const BatchStreamFactory& stream,
                                const RetrainOptions& opts);

// Supplies the captured input features of one dense layer, chunk by chunk in
// sample order. `sink` receives each chunk together with its starting row.
using FeatureSource = std::function<void(
    std::size_t layer_index,
    const std::function<void(const Mat& h_aug, std::size_t row_offset)>& sink)>;

struct StackRetrainConfig {
    std::vector<double> reg_c;  // one per dense layer; single value broadcasts
    double mu = 1.0;
    std::uint64_t seed = 0;
    bool apply_dropout_mask = true;
};

double reg_c_for_layer(const StackRetrainConfig& cfg, std::size_t layer,
                       std::size_t n_layers);

// Refines every dense layer from last to first: the output residual feeds
// the last layer's RLS solve, then is pulled back through each updated layer
// on the way down. Feature chunks must be replayable and aligned with the
// row order of `targets` (one-hot, N x classes).
RetrainReport retrain_dense_stack(std::vector<DenseLayer>& layers,
                                  const FeatureSource& features,
                                  const Mat& targets,
                                  const StackRetrainConfig& cfg);

}  // namespace fr
