#include "fr/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

namespace fr {

Shape3 ConvLayer::out_shape(const Shape3& in) const {
    if (in.c != in_ch) throw DimensionError("conv: channel count mismatch");
    if (in.h + 2 * pad < ksize || in.w + 2 * pad < ksize)
        throw DimensionError("conv: kernel larger than padded input");
    return {out_ch, (in.h + 2 * pad - ksize) / stride + 1,
            (in.w + 2 * pad - ksize) / stride + 1};
}

double ConvLayer::forward_macs(const Shape3& in) const {
    const Shape3 o = out_shape(in);
    return static_cast<double>(o.h * o.w * out_ch) *
           static_cast<double>(in_ch * ksize * ksize);
}

Shape3 PoolLayer::out_shape(const Shape3& in) const {
    if (size <= 1) return in;
    return {in.c, in.h / size, in.w / size};
}

Shape3 Net::conv_output_shape() const {
    Shape3 s = input;
    for (std::size_t i = 0; i < conv.size(); ++i)
        s = pools[i].out_shape(conv[i].out_shape(s));
    return s;
}

namespace {

std::mt19937_64 mixed_rng(std::uint64_t seed, std::uint32_t a, std::uint32_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32), a, b};
    return std::mt19937_64(seq);
}

void kaiming_fill(std::span<double> w, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w) v = dist(rng);
}

DenseLayer make_dense(std::size_t d_in, std::size_t d_out, Activation act,
                      double dropout, std::mt19937_64& rng) {
    DenseLayer layer;
    layer.weights = Mat(d_in + 1, d_out);
    layer.activation = act;
    layer.dropout_rate = dropout;
    kaiming_fill(layer.weights.data().subspan(0, d_in * d_out), d_in, rng);
    // bias row stays zero
    return layer;
}

ConvLayer make_conv(std::size_t in_ch, std::size_t out_ch, std::mt19937_64& rng) {
    ConvLayer c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.kernels.resize(c.kernel_count());
    c.bias.assign(out_ch, 0.0);
    kaiming_fill(c.kernels, in_ch * c.ksize * c.ksize, rng);
    return c;
}

}  // namespace

Net make_net(const std::string& arch, const Shape3& input, std::size_t classes,
             std::uint64_t seed, double dense_dropout) {
    if (classes < 2) throw ConfigError("make_net: need at least 2 classes");
    auto rng = mixed_rng(seed, 0x696e6974u);

    Net net;
    net.arch = arch;
    net.input = input;
    if (arch == "mlp") {
        const std::size_t d0 = input.count();
        const std::size_t h1 = d0 >= 256 ? 256 : std::max<std::size_t>(32, d0 * 4);
        const std::size_t h2 = d0 >= 256 ? 128 : std::max<std::size_t>(16, d0 * 2);
        net.dense.push_back(make_dense(d0, h1, Activation::relu, dense_dropout, rng));
        net.dense.push_back(make_dense(h1, h2, Activation::relu, dense_dropout, rng));
        net.dense.push_back(make_dense(h2, classes, Activation::linear, 0.0, rng));
    } else if (arch == "cnn-s") {
        std::size_t ch = input.c;
        for (std::size_t out : {std::size_t(8), std::size_t(16), std::size_t(32)}) {
            net.conv.push_back(make_conv(ch, out, rng));
            net.pools.push_back({2, 2});
            ch = out;
        }
        const std::size_t flat = net.conv_output_shape().count();
        net.dense.push_back(make_dense(flat, 128, Activation::relu, dense_dropout, rng));
        net.dense.push_back(make_dense(128, classes, Activation::linear, 0.0, rng));
    } else {
        throw ConfigError("unknown architecture: " + arch);
    }
    return net;
}

namespace {

// (n, oy, ox)-major patch matrix for one conv layer over a whole batch
Mat im2col(const Mat& act, const Shape3& in, const ConvLayer& c, const Shape3& out) {
    const std::size_t patch = c.in_ch * c.ksize * c.ksize;
    Mat cols(act.rows() * out.h * out.w, patch);
    for (std::size_t n = 0; n < act.rows(); ++n) {
        const double* src = act.row(n).data();
        for (std::size_t oy = 0; oy < out.h; ++oy)
            for (std::size_t ox = 0; ox < out.w; ++ox) {
                double* dst = cols.row((n * out.h + oy) * out.w + ox).data();
                std::size_t t = 0;
                for (std::size_t ci = 0; ci < c.in_ch; ++ci) {
                    const double* plane = src + ci * in.h * in.w;
                    for (std::size_t ky = 0; ky < c.ksize; ++ky) {
                        const long iy = static_cast<long>(oy * c.stride + ky) -
                                        static_cast<long>(c.pad);
                        for (std::size_t kx = 0; kx < c.ksize; ++kx, ++t) {
                            const long ix = static_cast<long>(ox * c.stride + kx) -
                                            static_cast<long>(c.pad);
                            dst[t] = (iy < 0 || ix < 0 || iy >= long(in.h) ||
                                      ix >= long(in.w))
                                         ? 0.0
                                         : plane[iy * long(in.w) + ix];
                        }
                    }
                }
            }
    }
    return cols;
}

// scatter-add of patch gradients back to image layout
Mat col2im(const Mat& dcols, std::size_t n_samples, const Shape3& in,
           const ConvLayer& c, const Shape3& out) {
    Mat dx(n_samples, in.count());
    for (std::size_t n = 0; n < n_samples; ++n) {
        double* dst = dx.row(n).data();
        for (std::size_t oy = 0; oy < out.h; ++oy)
            for (std::size_t ox = 0; ox < out.w; ++ox) {
                const double* src = dcols.row((n * out.h + oy) * out.w + ox).data();
                std::size_t t = 0;
                for (std::size_t ci = 0; ci < c.in_ch; ++ci) {
                    double* plane = dst + ci * in.h * in.w;
                    for (std::size_t ky = 0; ky < c.ksize; ++ky) {
                        const long iy = static_cast<long>(oy * c.stride + ky) -
                                        static_cast<long>(c.pad);
                        for (std::size_t kx = 0; kx < c.ksize; ++kx, ++t) {
                            const long ix = static_cast<long>(ox * c.stride + kx) -
                                            static_cast<long>(c.pad);
                            if (iy < 0 || ix < 0 || iy >= long(in.h) || ix >= long(in.w))
                                continue;
                            plane[iy * long(in.w) + ix] += src[t];
                        }
                    }
                }
            }
    }
    return dx;
}

struct ConvCache {
    Shape3 in_shape, conv_shape, out_shape;
    Mat cols;      // im2col of the layer input
    Mat pre_pool;  // post-relu activations, N x conv_shape.count()
    std::vector<std::uint32_t> argmax;  // pool winners, per output cell
};

struct DenseCache {
    Mat input_aug;
    Mat pre_act;
    std::vector<std::uint8_t> dropout_mask;  // empty when unused
    double dropout_scale = 1.0;
};

struct FwdCaches {
    std::vector<ConvCache> conv;
    std::vector<DenseCache> dense;
    Mat logits;
};

// mat (n*oh*ow) x ch -> activation layout n x (ch*oh*ow)
Mat to_act_layout(const Mat& m, std::size_t n, const Shape3& s) {
    Mat act(n, s.count());
    for (std::size_t i = 0; i < n; ++i) {
        double* dst = act.row(i).data();
        for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x < s.w; ++x) {
                const double* src = m.row((i * s.h + y) * s.w + x).data();
                for (std::size_t c = 0; c < s.c; ++c)
                    dst[c * s.h * s.w + y * s.w + x] = src[c];
            }
    }
    return act;
}

Mat to_mat_layout(const Mat& act, const Shape3& s) {
    Mat m(act.rows() * s.h * s.w, s.c);
    for (std::size_t i = 0; i < act.rows(); ++i) {
        const double* src = act.row(i).data();
        for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x < s.w; ++x) {
                double* dst = m.row((i * s.h + y) * s.w + x).data();
                for (std::size_t c = 0; c < s.c; ++c)
                    dst[c] = src[c * s.h * s.w + y * s.w + x];
            }
    }
    return m;
}

Mat forward_impl(const Net& net, const Mat& batch, Mode mode,
                 std::uint64_t dropout_seed, FwdCaches* caches,
                 ForwardCapture* capture) {
    if (batch.cols() != net.input.count())
        throw DimensionError("forward: batch width " + std::to_string(batch.cols()) +
                             " != input size " + std::to_string(net.input.count()));
    if (caches) {
        caches->conv.resize(net.conv.size());
        caches->dense.resize(net.dense.size());
    }

    Mat act = batch;
    Shape3 shape = net.input;
    for (std::size_t i = 0; i < net.conv.size(); ++i) {
        const ConvLayer& c = net.conv[i];
        const Shape3 conv_shape = c.out_shape(shape);
        Mat cols = im2col(act, shape, c, conv_shape);
        Mat kmat(c.out_ch, c.in_ch * c.ksize * c.ksize,
                 std::vector<double>(c.kernels));
        Mat ymat = matmul_nt(cols, kmat);
        for (std::size_t r = 0; r < ymat.rows(); ++r) {
            double* row = ymat.row(r).data();
            for (std::size_t ch = 0; ch < c.out_ch; ++ch) {
                double v = row[ch] + c.bias[ch];
                row[ch] = v < 0.0 ? 0.0 : v;  // relu
            }
        }
        Mat pre_pool = to_act_layout(ymat, act.rows(), conv_shape);

        const PoolLayer& p = net.pools[i];
        const Shape3 out_shape = p.out_shape(conv_shape);
        Mat pooled;
        std::vector<std::uint32_t> argmax;
        if (p.size <= 1) {
            pooled = pre_pool;
        } else {
            pooled = Mat(act.rows(), out_shape.count());
            argmax.resize(act.rows() * out_shape.count());
            for (std::size_t n = 0; n < act.rows(); ++n) {
                const double* src = pre_pool.row(n).data();
                double* dst = pooled.row(n).data();
                for (std::size_t ch = 0; ch < out_shape.c; ++ch)
                    for (std::size_t y = 0; y < out_shape.h; ++y)
                        for (std::size_t x = 0; x < out_shape.w; ++x) {
                            double best = -std::numeric_limits<double>::infinity();
                            std::uint32_t best_idx = 0;
                            for (std::size_t py = 0; py < p.size; ++py)
                                for (std::size_t px = 0; px < p.size; ++px) {
                                    const std::size_t iy = y * p.stride + py;
                                    const std::size_t ix = x * p.stride + px;
                                    const std::size_t idx =
                                        ch * conv_shape.h * conv_shape.w +
                                        iy * conv_shape.w + ix;
                                    if (src[idx] > best) {
                                        best = src[idx];
                                        best_idx = static_cast<std::uint32_t>(idx);
                                    }
                                }
                            const std::size_t o = ch * out_shape.h * out_shape.w +
                                                  y * out_shape.w + x;
                            dst[o] = best;
                            argmax[n * out_shape.count() + o] = best_idx;
                        }
            }
        }
        if (caches) {
            ConvCache& cc = caches->conv[i];
            cc.in_shape = shape;
            cc.conv_shape = conv_shape;
            cc.out_shape = out_shape;
            cc.cols = std::move(cols);
            cc.pre_pool = std::move(pre_pool);
            cc.argmax = std::move(argmax);
        }
        act = std::move(pooled);
        shape = out_shape;
    }

    // dense stack
    for (std::size_t i = 0; i < net.dense.size(); ++i) {
        const DenseLayer& layer = net.dense[i];
        Mat h_aug = augment_ones(act);
        if (capture) capture->dense_inputs.push_back(h_aug);
        Mat z = matmul(h_aug, layer.weights);
        Mat out = z;
        std::vector<std::uint8_t> mask;
        double scale = 1.0;
        if (layer.activation == Activation::relu) {
            for (double& v : out.data())
                if (v < 0.0) v = 0.0;
            if (mode == Mode::train && layer.dropout_rate > 0.0) {
                auto rng = mixed_rng(dropout_seed, 0x64726f70u,
                                     static_cast<std::uint32_t>(i));
                std::bernoulli_distribution drop(layer.dropout_rate);
                scale = 1.0 / (1.0 - layer.dropout_rate);
                mask.resize(out.size());
                for (std::size_t t = 0; t < out.size(); ++t) {
                    mask[t] = drop(rng) ? 1 : 0;
                    out.data()[t] = mask[t] ? 0.0 : out.data()[t] * scale;
                }
            }
        }
        if (caches) {
            DenseCache& dc = caches->dense[i];
            dc.input_aug = std::move(h_aug);
            dc.pre_act = std::move(z);
            dc.dropout_mask = std::move(mask);
            dc.dropout_scale = scale;
        }
        act = std::move(out);
    }
    if (caches) caches->logits = act;
    return act;
}

}  // namespace

Mat forward(const Net& net, const Mat& batch, Mode mode,
            std::uint64_t dropout_seed, ForwardCapture* capture) {
    return forward_impl(net, batch, mode, dropout_seed, nullptr, capture);
}

double accuracy(const Net& net, const Dataset& ds) {
    constexpr std::size_t kChunk = 512;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < ds.size(); start += kChunk) {
        const std::size_t stop = std::min(start + kChunk, ds.size());
        std::vector<std::size_t> idx(stop - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        Mat logits = forward(net, gather_rows(ds.features, idx), Mode::eval);
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            const auto row = logits.row(i);
            const std::size_t arg =
                std::max_element(row.begin(), row.end()) - row.begin();
            if (static_cast<int>(arg) == ds.labels[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double lr_at(const SgdConfig& cfg, std::size_t epoch) {
    if (cfg.lr_milestones.empty()) throw ConfigError("empty learning-rate schedule");
    double lr = cfg.lr_milestones.front().lr;
    for (const auto& m : cfg.lr_milestones)
        if (m.fraction * static_cast<double>(cfg.total_epochs) <=
            static_cast<double>(epoch))
            lr = m.lr;
    return lr;
}

double loss_and_gradients(const Net& net, const Mat& batch,
                          const std::vector<int>& labels, const FreezePlan& plan,
                          Mode mode, std::uint64_t dropout_seed,
                          ParamGradients* grads, double* backward_flops,
                          std::size_t* correct) {
    if (batch.rows() != labels.size())
        throw DimensionError("loss_and_gradients: label count mismatch");
    const std::size_t n = batch.rows();
    const double inv_n = 1.0 / static_cast<double>(n);

    FwdCaches caches;
    forward_impl(net, batch, mode, dropout_seed, &caches, nullptr);

    // softmax cross-entropy; dlogits = (softmax - onehot) / N
    const Mat& logits = caches.logits;
    Mat dlogits(logits.rows(), logits.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = logits.row(i);
        const double m = *std::max_element(row.begin(), row.end());
        double denom = 0.0;
        for (double v : row) denom += std::exp(v - m);
        const int label = labels[i];
        loss -= (row[static_cast<std::size_t>(label)] - m - std::log(denom)) * inv_n;
        if (correct) {
            const std::size_t arg =
                std::max_element(row.begin(), row.end()) - row.begin();
            if (static_cast<int>(arg) == label) ++*correct;
        }
        auto drow = dlogits.row(i);
        for (std::size_t j = 0; j < row.size(); ++j)
            drow[j] = std::exp(row[j] - m) / denom * inv_n;
        drow[static_cast<std::size_t>(label)] -= inv_n;
    }

    if (!grads) return loss;
    grads->conv_kernels.assign(net.conv.size(), {});
    grads->conv_bias.assign(net.conv.size(), {});
    grads->dense.assign(net.dense.size(), Mat());

    double flops = 0.0;

    // dense backward, last to first
    Mat d = std::move(dlogits);  // dZ of the current layer
    for (std::size_t ri = 0; ri < net.dense.size(); ++ri) {
        const std::size_t i = net.dense.size() - 1 - ri;
        const DenseLayer& layer = net.dense[i];
        const DenseCache& dc = caches.dense[i];

        grads->dense[i] = matmul_tn(dc.input_aug, d);
        flops += 2.0 * static_cast<double>(n) *
                 static_cast<double>(layer.weights.rows() * layer.weights.cols());

        const bool need_dx = i > 0 || !net.conv.empty();
        if (!need_dx) break;

        Mat dh_aug = matmul_nt(d, layer.weights);
        flops += 2.0 * static_cast<double>(n) *
                 static_cast<double>(layer.weights.rows() * layer.weights.cols());
        Mat dh(n, layer.d_in());
        for (std::size_t r = 0; r < n; ++r) {
            const auto src = dh_aug.row(r);
            auto dst = dh.row(r);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j];
        }
        if (i > 0) {
            const DenseCache& prev = caches.dense[i - 1];
            if (!prev.dropout_mask.empty())
                for (std::size_t t = 0; t < dh.size(); ++t)
                    dh.data()[t] = prev.dropout_mask[t]
                                       ? 0.0
                                       : dh.data()[t] * prev.dropout_scale;
            if (net.dense[i - 1].activation == Activation::relu)
                for (std::size_t t = 0; t < dh.size(); ++t)
                    if (prev.pre_act.data()[t] <= 0.0) dh.data()[t] = 0.0;
        }
        d = std::move(dh);
    }

    // conv backward; stop once no active layer remains at or below this depth
    if (!net.conv.empty()) {
        std::size_t lowest_active = net.conv.size();  // sentinel: none
        if (!plan.active_layers.empty()) lowest_active = plan.active_layers.front();

        for (std::size_t ri = 0; ri < net.conv.size(); ++ri) {
            const std::size_t i = net.conv.size() - 1 - ri;
            if (lowest_active > i) break;  // nothing below needs gradients

            const ConvLayer& c = net.conv[i];
            const ConvCache& cc = caches.conv[i];
            const PoolLayer& p = net.pools[i];

            // unpool
            Mat d_pre_pool;
            if (p.size <= 1) {
                d_pre_pool = std::move(d);
            } else {
                d_pre_pool = Mat(n, cc.conv_shape.count());
                for (std::size_t s = 0; s < n; ++s) {
                    const double* src = d.row(s).data();
                    double* dst = d_pre_pool.row(s).data();
                    for (std::size_t o = 0; o < cc.out_shape.count(); ++o)
                        dst[cc.argmax[s * cc.out_shape.count() + o]] += src[o];
                }
            }
            // relu mask (pre_pool holds post-relu values)
            for (std::size_t t = 0; t < d_pre_pool.size(); ++t)
                if (cc.pre_pool.data()[t] <= 0.0) d_pre_pool.data()[t] = 0.0;

            Mat dymat = to_mat_layout(d_pre_pool, cc.conv_shape);
            const double macs = static_cast<double>(n) * c.forward_macs(cc.in_shape);

            if (plan.is_active(i)) {
                Mat dk = matmul_tn(dymat, cc.cols);  // out_ch x patch
                grads->conv_kernels[i].assign(dk.data().begin(), dk.data().end());
                grads->conv_bias[i].assign(c.out_ch, 0.0);
                for (std::size_t r = 0; r < dymat.rows(); ++r) {
                    const double* row = dymat.row(r).data();
                    for (std::size_t ch = 0; ch < c.out_ch; ++ch)
                        grads->conv_bias[i][ch] += row[ch];
                }
                flops += 2.0 * macs;
            }

            const bool need_dx = lowest_active < i;
            if (!need_dx) break;
            Mat kmat(c.out_ch, c.in_ch * c.ksize * c.ksize,
                     std::vector<double>(c.kernels));
            Mat dcols = matmul(dymat, kmat);
            d = col2im(dcols, n, cc.in_shape, c, cc.conv_shape);
            flops += 2.0 * macs;
        }
    }

    if (backward_flops) *backward_flops += flops;
    return loss;
}

double full_backward_flops(const Net& net, std::size_t n_samples) {
    double flops = 0.0;
    Shape3 shape = net.input;
    for (std::size_t i = 0; i < net.conv.size(); ++i) {
        const double macs =
            static_cast<double>(n_samples) * net.conv[i].forward_macs(shape);
        flops += 2.0 * macs;             // weight gradients
        if (i > 0) flops += 2.0 * macs;  // input gradients (first layer skips)
        shape = net.pools[i].out_shape(net.conv[i].out_shape(shape));
    }
    for (std::size_t i = 0; i < net.dense.size(); ++i) {
        const double wsize = static_cast<double>(net.dense[i].weights.rows() *
                                                 net.dense[i].weights.cols());
        flops += 2.0 * static_cast<double>(n_samples) * wsize;  // dW
        const bool need_dx = i > 0 || !net.conv.empty();
        if (need_dx) flops += 2.0 * static_cast<double>(n_samples) * wsize;
    }
    return flops;
}

namespace {

void ensure_state(const Net& net, SgdState& state) {
    if (state.dense_vel.size() == net.dense.size()) return;
    state.conv_kernel_vel.clear();
    state.conv_bias_vel.clear();
    state.dense_vel.clear();
    for (const auto& c : net.conv) {
        state.conv_kernel_vel.emplace_back(c.kernel_count(), 0.0);
        state.conv_bias_vel.emplace_back(c.out_ch, 0.0);
    }
    for (const auto& l : net.dense)
        state.dense_vel.emplace_back(l.weights.rows(), l.weights.cols());
}

}  // namespace

EpochStats sgd_epoch(Net& net, const Dataset& data, const SgdConfig& cfg,
                     const FreezePlan& plan, std::size_t epoch, SgdState& state) {
    if (plan.l_a + plan.l_i != net.conv_count())
        throw DimensionError("sgd_epoch: freeze plan does not cover the conv stack");
    ensure_state(net, state);

    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(cfg, epoch);
    EpochStats stats;
    double loss_sum = 0.0;
    std::size_t correct = 0;

    const auto batches = batch_indices(data.size(), cfg.mini_batch, cfg.seed, epoch);
    ParamGradients grads;
    for (std::size_t step = 0; step < batches.size(); ++step) {
        const auto& idx = batches[step];
        Mat batch = gather_rows(data.features, idx);
        std::vector<int> labels = gather_labels(data.labels, idx);

        const std::uint64_t drop_seed =
            cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 32) ^ step;
        const double loss =
            loss_and_gradients(net, batch, labels, plan, Mode::train, drop_seed,
                               &grads, &stats.backward_flops, &correct);
        if (!std::isfinite(loss))
            throw DivergenceError("training diverged at epoch " +
                                  std::to_string(epoch) + " step " +
                                  std::to_string(step));
        loss_sum += loss * static_cast<double>(idx.size());

        for (std::size_t i = 0; i < net.conv.size(); ++i) {
            if (grads.conv_kernels[i].empty()) continue;
            auto& kv = state.conv_kernel_vel[i];
            auto& bv = state.conv_bias_vel[i];
            for (std::size_t t = 0; t < kv.size(); ++t) {
                kv[t] = cfg.momentum * kv[t] - lr * grads.conv_kernels[i][t];
                net.conv[i].kernels[t] += kv[t];
            }
            for (std::size_t t = 0; t < bv.size(); ++t) {
                bv[t] = cfg.momentum * bv[t] - lr * grads.conv_bias[i][t];
                net.conv[i].bias[t] += bv[t];
            }
        }
        for (std::size_t i = 0; i < net.dense.size(); ++i) {
            Mat& vel = state.dense_vel[i];
            Mat& w = net.dense[i].weights;
            const Mat& g = grads.dense[i];
            for (std::size_t t = 0; t < w.size(); ++t) {
                vel.data()[t] = cfg.momentum * vel.data()[t] - lr * g.data()[t];
                w.data()[t] += vel.data()[t];
            }
        }
        stats.steps += 1;
    }

    stats.avg_loss = loss_sum / static_cast<double>(data.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    stats.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    return stats;
}

GeneralEpochReport general_epoch(Net& net, const Dataset& train,
                                 const Dataset* eval_set, const SgdConfig& sgd,
                                 const RateSchedule& ra_schedule,
                                 const RetrainRunConfig& retrain,
                                 std::size_t epoch, SgdState& state) {
    GeneralEpochReport report;
    report.epoch = epoch;
    report.rate = rate_at(ra_schedule, epoch);
    const FreezePlan plan = plan_epoch(net.conv_count(), report.rate, sgd.seed, epoch);
    report.l_a = plan.l_a;

    report.step1 = sgd_epoch(net, train, sgd, plan, epoch, state);

    if (retrain.enabled) {
        // feature capture: eval-mode pass over the training set in sample
        // order, chunked by the MP-inverse batch size
        const std::size_t chunk = std::max<std::size_t>(1, retrain.mp_batch);
        std::vector<std::vector<Mat>> captured(net.dense.size());
        std::vector<std::size_t> offsets;
        for (std::size_t start = 0; start < train.size(); start += chunk) {
            const std::size_t stop = std::min(start + chunk, train.size());
            std::vector<std::size_t> idx(stop - start);
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
            ForwardCapture cap;
            forward(net, gather_rows(train.features, idx), Mode::eval, 0, &cap);
            for (std::size_t li = 0; li < net.dense.size(); ++li)
                captured[li].push_back(std::move(cap.dense_inputs[li]));
            offsets.push_back(start);
        }

        FeatureSource source = [&](std::size_t li,
                                   const std::function<void(const Mat&, std::size_t)>&
                                       sink) {
            for (std::size_t k = 0; k < captured[li].size(); ++k)
                sink(captured[li][k], offsets[k]);
        };

        StackRetrainConfig scfg;
        scfg.reg_c = retrain.reg_c;
        scfg.mu = retrain.mu;
        scfg.seed = sgd.seed ^ ((0x5245u + static_cast<std::uint64_t>(epoch)) << 16);
        scfg.apply_dropout_mask = retrain.apply_dropout_mask;

        const Mat targets = one_hot(train.labels, train.num_classes);
        report.step2 = retrain_dense_stack(net.dense, source, targets, scfg);
        report.retrained = true;
    }

    if (eval_set) report.eval_accuracy = accuracy(net, *eval_set);
    return report;
}

}  // namespace fr
