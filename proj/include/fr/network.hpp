#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fr/data.hpp"
#include "fr/mat.hpp"
#include "fr/retrain.hpp"
#include "fr/scheduler.hpp"

namespace fr {

struct ConvLayer {
    std::size_t in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
    std::vector<double> kernels;  // out_ch x in_ch x k x k
    std::vector<double> bias;     // out_ch

    Shape3 out_shape(const Shape3& in) const;
    std::size_t kernel_count() const { return out_ch * in_ch * ksize * ksize; }
    // multiply-accumulates for one sample's forward pass
    double forward_macs(const Shape3& in) const;
};

struct PoolLayer {
    std::size_t size = 1, stride = 1;  // size 1 means no pooling
    Shape3 out_shape(const Shape3& in) const;
};

// Small feed-forward net: [conv + relu + pool]* then flatten then dense
// stack (relu hidden layers, linear head).
struct Net {
    std::string arch;
    Shape3 input;
    std::vector<ConvLayer> conv;
    std::vector<PoolLayer> pools;  // aligned with conv
    std::vector<DenseLayer> dense;

    std::size_t conv_count() const { return conv.size(); }
    std::size_t num_classes() const { return dense.back().d_out(); }
    Shape3 conv_output_shape() const;
};

// arch: "mlp" (hidden 256/128, conv-free) or "cnn-s" (3 conv blocks
// 8/16/32 channels with 2x pooling, dense 128 -> classes). Kaiming-uniform
// fan-in init from `seed`.
Net make_net(const std::string& arch, const Shape3& input, std::size_t classes,
             std::uint64_t seed, double dense_dropout = 0.0);

enum class Mode { train, eval };

// Per-dense-layer input features (augmented with the constant-one column),
// filled when requested by forward().
struct ForwardCapture {
    std::vector<Mat> dense_inputs;
};

// batch is N x input.count(). Train mode applies dropout on hidden dense
// activations (masks derived from dropout_seed); eval mode is deterministic.
Mat forward(const Net& net, const Mat& batch, Mode mode,
            std::uint64_t dropout_seed = 0, ForwardCapture* capture = nullptr);

double accuracy(const Net& net, const Dataset& ds);

struct LrMilestone {
    double fraction;
    double lr;
};

struct SgdConfig {
    std::vector<LrMilestone> lr_milestones{{0.0, 0.01}};
    double momentum = 0.0;
    std::size_t mini_batch = 32;
    std::uint64_t seed = 0;
    std::size_t total_epochs = 1;
};

double lr_at(const SgdConfig& cfg, std::size_t epoch);

// Momentum velocity buffers; zero-initialized lazily on first use.
struct SgdState {
    std::vector<std::vector<double>> conv_kernel_vel;
    std::vector<std::vector<double>> conv_bias_vel;
    std::vector<Mat> dense_vel;
};

struct ParamGradients {
    std::vector<std::vector<double>> conv_kernels;  // empty slot = frozen
    std::vector<std::vector<double>> conv_bias;
    std::vector<Mat> dense;
};

// Softmax cross-entropy loss (mean over the batch) and its gradients for
// the parameter groups selected by `plan` (frozen conv layers get empty
// gradient slots). backward_flops, when non-null, accumulates the analytic
// FLOP estimate of the backward work actually performed; correct, when
// non-null, accumulates the batch's argmax hits.
double loss_and_gradients(const Net& net, const Mat& batch,
                          const std::vector<int>& labels, const FreezePlan& plan,
                          Mode mode, std::uint64_t dropout_seed,
                          ParamGradients* grads, double* backward_flops,
                          std::size_t* correct = nullptr);

struct EpochStats {
    double avg_loss = 0.0;
    double train_accuracy = 0.0;
    std::size_t steps = 0;
    double wall_ms = 0.0;
    double backward_flops = 0.0;
};

// One SGD pass over the data: gradients are computed and applied only for
// conv layers in plan.active_layers plus all dense layers. Throws
// DivergenceError when the loss goes non-finite.
EpochStats sgd_epoch(Net& net, const Dataset& data, const SgdConfig& cfg,
                     const FreezePlan& plan, std::size_t epoch, SgdState& state);

struct RetrainRunConfig {
    bool enabled = true;
    std::vector<double> reg_c{4.0};
    double mu = 1.0;
    std::size_t mp_batch = 1024;
    bool apply_dropout_mask = true;
};

struct GeneralEpochReport {
    std::size_t epoch = 0;
    double rate = 1.0;
    std::size_t l_a = 0;
    EpochStats step1;
    RetrainReport step2;
    bool retrained = false;
    double eval_accuracy = -1.0;  // -1 when no eval set attached
};

// One general epoch: Step 1 SGD under a freeze plan drawn from
// (seed, epoch), then, when enabled, Step 2 dense-stack retraining on
// features captured in an eval-mode pass over the training set.
GeneralEpochReport general_epoch(Net& net, const Dataset& train,
                                 const Dataset* eval_set, const SgdConfig& sgd,
                                 const RateSchedule& ra_schedule,
                                 const RetrainRunConfig& retrain,
                                 std::size_t epoch, SgdState& state);

// Analytic FLOP estimate of one full (unfrozen) backward pass over n samples.
double full_backward_flops(const Net& net, std::size_t n_samples);

}  // namespace fr
