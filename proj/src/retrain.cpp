#include "fr/retrain.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <utility>

#include "json.hpp"

namespace fr {

Mat augment_ones(const Mat& h) {
    Mat out(h.rows(), h.cols() + 1);
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const auto src = h.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < h.cols(); ++j) dst[j] = src[j];
        dst[h.cols()] = 1.0;
    }
    return out;
}

Mat dense_forward(const DenseLayer& layer, const Mat& h_aug, bool linear_only) {
    if (h_aug.cols() != layer.weights.rows())
        throw DimensionError("dense_forward: feature width mismatch");
    Mat out = matmul(h_aug, layer.weights);
    if (!linear_only && layer.activation == Activation::relu)
        for (double& v : out.data())
            if (v < 0.0) v = 0.0;
    return out;
}

Mat output_residual(const Mat& logits, const Mat& targets) {
    if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
        throw DimensionError("output_residual: shape mismatch");
    for (std::size_t i = 0; i < targets.rows(); ++i) {
        double sum = 0.0;
        bool ok = true;
        for (double v : targets.row(i)) {
            if (v != 0.0 && v != 1.0) ok = false;
            sum += v;
        }
        if (!ok || sum != 1.0)
            throw DomainError("output_residual: target row " + std::to_string(i) +
                              " is not one-hot");
    }
    return sub(targets, logits);
}

Mat pull_back_residual(const Mat& e_next, const Mat& a_next, double reg_c) {
    if (a_next.rows() < 2)
        throw DimensionError("pull_back_residual: weights have no input rows");
    if (e_next.cols() != a_next.cols())
        throw DimensionError("pull_back_residual: residual width " +
                             std::to_string(e_next.cols()) + " != layer output width " +
                             std::to_string(a_next.cols()));
    if (!(reg_c > 0.0)) throw DomainError("pull_back_residual: C must be > 0");
    check_finite(e_next, "e_next");
    check_finite(a_next, "a_next");

    // P = (a^T a + I/C)^{-1} a^T, the ridge-form MP inverse of a_next.
    Mat gram = matmul_tn(a_next, a_next);
    const double lambda = 1.0 / reg_c;
    for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) += lambda;
    const LuFactor f = lu_factor(gram);

    // e_next * P = (a * gram^{-1} * e_next^T)^T, using that gram is symmetric
    Mat solved = lu_solve(f, transpose(e_next));      // d_out x N
    Mat pulled = transpose(matmul(a_next, solved));   // N x (d_in+1)

    const std::size_t d_in = a_next.rows() - 1;
    Mat out(e_next.rows(), d_in);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        const auto src = pulled.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < d_in; ++j) dst[j] = src[j] < 0.0 ? 0.0 : src[j];
    }
    return out;
}

namespace {

Mat masked_eta(const Mat& eta, const std::vector<std::uint8_t>& drop_row) {
    if (drop_row.empty()) return eta;
    if (drop_row.size() != eta.rows())
        throw DimensionError("retrain_layer: dropout mask length mismatch");
    Mat out = eta;
    for (std::size_t i = 0; i < eta.rows(); ++i)
        if (drop_row[i])
            for (double& v : out.row(i)) v = 0.0;
    return out;
}

}  // namespace

LayerRetrainStats retrain_layer(DenseLayer& layer, const BatchStreamFactory& stream,
                                const RetrainOptions& opts) {
    if (!(opts.mu > 0.0) || opts.mu > 1.0)
        throw DomainError("retrain_layer: mu must be in (0,1]");

    LayerRetrainStats stats;
    RlsState st;
    double before_sq = 0.0;
    bool first = true;

    {
        BatchStream pull = stream();
        Mat h, e;
        while (pull(h, e)) {
            if (h.cols() != layer.weights.rows())
                throw DimensionError("retrain_layer: feature width " +
                                     std::to_string(h.cols()) + " != weight rows " +
                                     std::to_string(layer.weights.rows()));
            double acc = 0.0;
            for (double v : e.data()) acc += v * v;
            before_sq += acc;
            if (first) {
                st = rls_init(h, e, opts.reg_c);
                first = false;
            } else {
                rls_update(st, h, e);
            }
            stats.batches += 1;
        }
    }
    if (first) throw DimensionError("retrain_layer: empty batch stream");

    const Mat eta = masked_eta(st.eta, opts.drop_row);
    stats.eta_norm = frobenius_norm(eta);
    stats.residual_before = std::sqrt(before_sq);

    double after_sq = 0.0;
    {
        BatchStream pull = stream();
        Mat h, e;
        while (pull(h, e)) {
            Mat fit = matmul(h, eta);
            for (std::size_t i = 0; i < fit.size(); ++i) {
                const double r = e.data()[i] - opts.mu * fit.data()[i];
                after_sq += r * r;
            }
        }
    }
    stats.residual_after = std::sqrt(after_sq);

    add_scaled_inplace(layer.weights, eta, opts.mu);
    check_finite(layer.weights, "retrained weights");
    return stats;
}

double reg_c_for_layer(const StackRetrainConfig& cfg, std::size_t layer,
                       std::size_t n_layers) {
    if (cfg.reg_c.empty()) throw ConfigError("retraining C list is empty");
    if (cfg.reg_c.size() == 1) return cfg.reg_c.front();
    if (cfg.reg_c.size() != n_layers)
        throw ConfigError("retraining C list has " + std::to_string(cfg.reg_c.size()) +
                          " entries for " + std::to_string(n_layers) + " dense layers");
    return cfg.reg_c[layer];
}

RetrainReport retrain_dense_stack(std::vector<DenseLayer>& layers,
                                  const FeatureSource& features,
                                  const Mat& targets,
                                  const StackRetrainConfig& cfg) {
    if (layers.empty()) throw DimensionError("retrain_dense_stack: no dense layers");
    if (layers.back().activation != Activation::linear)
        throw DomainError("retrain_dense_stack: output layer must be linear");

    const auto t0 = std::chrono::steady_clock::now();
    RetrainReport report;
    report.layers.resize(layers.size());

    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                      static_cast<std::uint32_t>(cfg.seed >> 32), 0x7261646fu};
    std::mt19937_64 dropout_rng(seq);

    // Residual chunks for the layer currently being retrained. Initialized
    // from the output residual on the last layer, then pulled back through
    // each freshly updated layer.
    std::vector<Mat> residual_chunks;

    memtrack::reset();

    for (std::size_t rev = 0; rev < layers.size(); ++rev) {
        const std::size_t li = layers.size() - 1 - rev;
        DenseLayer& layer = layers[li];

        // gather this layer's feature chunks (replay source)
        std::vector<Mat> feature_chunks;
        std::size_t total_rows = 0;
        features(li, [&](const Mat& h, std::size_t row_offset) {
            if (row_offset != total_rows)
                throw DimensionError("retrain_dense_stack: feature chunks out of order");
            total_rows += h.rows();
            feature_chunks.push_back(h);
        });
        if (total_rows != targets.rows())
            throw DimensionError("retrain_dense_stack: feature rows != target rows");

        if (rev == 0) {
            // e^n chunk-by-chunk from the linear head on captured features
            residual_chunks.clear();
            std::size_t off = 0;
            for (const Mat& h : feature_chunks) {
                Mat logits = matmul(h, layer.weights);
                Mat tgt(h.rows(), targets.cols());
                for (std::size_t i = 0; i < h.rows(); ++i)
                    for (std::size_t j = 0; j < targets.cols(); ++j)
                        tgt(i, j) = targets(off + i, j);
                residual_chunks.push_back(output_residual(logits, tgt));
                off += h.rows();
            }
        }
        if (residual_chunks.size() != feature_chunks.size())
            throw DimensionError("retrain_dense_stack: chunk counts diverged");

        RetrainOptions opts;
        opts.reg_c = reg_c_for_layer(cfg, li, layers.size());
        opts.mu = cfg.mu;
        if (cfg.apply_dropout_mask && layer.dropout_rate > 0.0) {
            std::bernoulli_distribution drop(layer.dropout_rate);
            opts.drop_row.resize(layer.weights.rows());
            for (auto& b : opts.drop_row) b = drop(dropout_rng) ? 1 : 0;
        }

        auto factory = [&]() -> BatchStream {
            auto idx = std::make_shared<std::size_t>(0);
            return [&, idx](Mat& h, Mat& e) {
                if (*idx >= feature_chunks.size()) return false;
                h = feature_chunks[*idx];
                e = residual_chunks[*idx];
                ++*idx;
                return true;
            };
        };
        report.layers[li] = retrain_layer(layer, factory, opts);

        // pull the residual down to the next-earlier layer through the
        // updated weights
        if (li > 0) {
            for (Mat& e : residual_chunks)
                e = pull_back_residual(e, layer.weights, opts.reg_c);
        }
    }

    report.peak_bytes = memtrack::peak_delta();
    report.duration_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    return report;
}

std::string RetrainReport::to_json() const {
    nlohmann::json j;
    j["duration_ms"] = duration_ms;
    j["peak_bytes"] = peak_bytes;
    j["layers"] = nlohmann::json::array();
    for (const auto& s : layers) {
        j["layers"].push_back({{"residual_before", s.residual_before},
                               {"residual_after", s.residual_after},
                               {"batches", s.batches},
                               {"eta_norm", s.eta_norm}});
    }
    return j.dump(2);
}

}  // namespace fr
