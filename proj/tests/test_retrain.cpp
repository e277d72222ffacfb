#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>
#include <random>

#include "fr/retrain.hpp"

using namespace fr;

namespace {

Mat seeded_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed,
                   double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Mat m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

Mat one_hot_rows(const std::vector<int>& labels, std::size_t classes) {
    Mat t(labels.size(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i)
        t(i, static_cast<std::size_t>(labels[i])) = 1.0;
    return t;
}

Mat take_row_block(const Mat& m, std::size_t start, std::size_t count) {
    Mat out(count, m.cols());
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(start + i, j);
    return out;
}

BatchStreamFactory chunked(const Mat& h, const Mat& e, std::size_t chunk) {
    return [&h, &e, chunk]() -> BatchStream {
        auto pos = std::make_shared<std::size_t>(0);
        return [&h, &e, chunk, pos](Mat& ho, Mat& eo) {
            if (*pos >= h.rows()) return false;
            const std::size_t rows = std::min(chunk, h.rows() - *pos);
            ho = take_row_block(h, *pos, rows);
            eo = take_row_block(e, *pos, rows);
            *pos += rows;
            return true;
        };
    };
}

FeatureSource single_layer_source(const Mat& h_aug, std::size_t chunk) {
    return [&h_aug, chunk](std::size_t,
                           const std::function<void(const Mat&, std::size_t)>& sink) {
        std::size_t pos = 0;
        while (pos < h_aug.rows()) {
            const std::size_t rows = std::min(chunk, h_aug.rows() - pos);
            sink(take_row_block(h_aug, pos, rows), pos);
            pos += rows;
        }
    };
}

}  // namespace

TEST_CASE("output_residual: trivial cases") {
    const Mat targets = one_hot_rows({0, 2, 1}, 3);
    CHECK(frobenius_norm(output_residual(targets, targets)) == 0.0);

    const Mat zero(3, 3);
    CHECK(max_abs_diff(output_residual(zero, targets), targets) == 0.0);
}

TEST_CASE("output_residual: matches a scalar loop on a seeded case") {
    const Mat logits = seeded_uniform(8, 3, 7);
    const Mat targets = one_hot_rows({0, 1, 2, 0, 1, 2, 0, 1}, 3);
    const Mat r = output_residual(logits, targets);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(r(i, j) == targets(i, j) - logits(i, j));
}

TEST_CASE("output_residual: rejects non-one-hot targets and bad shapes") {
    Mat bad(2, 3);
    bad(0, 0) = 0.5;
    bad(0, 1) = 0.5;
    bad(1, 2) = 1.0;
    CHECK_THROWS_AS(output_residual(Mat(2, 3), bad), DomainError);
    CHECK_THROWS_AS(output_residual(Mat(2, 2), one_hot_rows({0, 1}, 3)),
                    DimensionError);
}

TEST_CASE("pull_back_residual: zero residual maps to zero") {
    const Mat a = seeded_uniform(6, 4, 5);
    const Mat out = pull_back_residual(Mat(9, 4), a, 4.0);
    CHECK(out.rows() == 9);
    CHECK(out.cols() == 5);
    CHECK(frobenius_norm(out) == 0.0);
}

TEST_CASE("pull_back_residual: orthonormal columns with huge C act like a^T") {
    // weights 5x4 with orthonormal columns (built from identity blocks),
    // plus a zero bias row making 6x4 total
    Mat a(6, 4);
    for (std::size_t j = 0; j < 4; ++j) a(j, j) = 1.0;
    const Mat e = seeded_uniform(7, 4, 9);

    const Mat out = pull_back_residual(e, a, 1e12);
    // pinv ~ a^T, so expected = max(0, e * a), bias row dropped
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            const double lin = j < 4 ? e(i, j) : 0.0;
            CHECK(out(i, j) == doctest::Approx(std::max(0.0, lin)).epsilon(1e-9));
        }
}

TEST_CASE("pull_back_residual: matches the explicit dense oracle") {
    const Mat e = seeded_uniform(6, 4, 21);
    const Mat a = seeded_uniform(6, 4, 22);  // 5 inputs + bias row
    const double c = 4.0;

    // oracle: form P = (a^T a + I/C)^{-1} a^T explicitly, clamp, drop bias
    Mat gram = matmul_tn(a, a);
    for (std::size_t i = 0; i < 4; ++i) gram(i, i) += 1.0 / c;
    const Mat p = matmul(direct_inverse(gram), transpose(a));  // 4 x 6
    const Mat full = matmul_nt(e, transpose(p));               // 6 x 6

    const Mat out = pull_back_residual(e, a, c);
    REQUIRE(out.cols() == 5);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(out(i, j) == doctest::Approx(std::max(0.0, full(i, j))).epsilon(1e-10));
            CHECK(out(i, j) >= 0.0);
        }
}

TEST_CASE("retrain_layer: zero residual leaves weights untouched") {
    DenseLayer layer{seeded_uniform(5, 3, 31), Activation::linear, 0.0};
    const Mat w_before = layer.weights;
    const Mat h = seeded_uniform(12, 5, 32);
    const Mat e(12, 3);

    const LayerRetrainStats stats = retrain_layer(layer, chunked(h, e, 4), {4.0, 1.0, {}});
    CHECK(max_abs_diff(layer.weights, w_before) == 0.0);
    CHECK(stats.eta_norm == 0.0);
    CHECK(stats.batches == 3);
}

TEST_CASE("retrain_layer: single batch equals the ridge path") {
    DenseLayer layer{Mat(5, 3), Activation::linear, 0.0};
    const Mat h = seeded_uniform(10, 5, 41);
    const Mat e = seeded_uniform(10, 3, 42);

    retrain_layer(layer, chunked(h, e, 100), {2.0, 1.0, {}});
    CHECK(rel_frobenius_diff(layer.weights, ridge_solve(h, e, 2.0)) < 1e-12);
}

TEST_CASE("retrain_layer: batching invariance") {
    const Mat h = seeded_uniform(30, 6, 51);
    const Mat e = seeded_uniform(30, 2, 52);

    DenseLayer one{seeded_uniform(6, 2, 53), Activation::linear, 0.0};
    DenseLayer many = one;
    retrain_layer(one, chunked(h, e, 30), {4.0, 1.0, {}});
    retrain_layer(many, chunked(h, e, 7), {4.0, 1.0, {}});
    CHECK(rel_frobenius_diff(many.weights, one.weights) < 1e-8);
}

TEST_CASE("retrain_layer: mu scales the correction linearly") {
    const Mat h = seeded_uniform(20, 4, 61);
    const Mat e = seeded_uniform(20, 2, 62);
    const Mat w0 = seeded_uniform(4, 2, 63);

    DenseLayer full{w0, Activation::linear, 0.0};
    DenseLayer half{w0, Activation::linear, 0.0};
    retrain_layer(full, chunked(h, e, 5), {4.0, 1.0, {}});
    retrain_layer(half, chunked(h, e, 5), {4.0, 0.5, {}});

    const Mat full_delta = sub(full.weights, w0);
    const Mat half_delta = sub(half.weights, w0);
    Mat scaled = full_delta;
    scale_inplace(scaled, 0.5);
    CHECK(max_abs_diff(half_delta, scaled) < 1e-14);
}

TEST_CASE("retrain_layer: dropout mask zeroes the chosen eta rows") {
    const Mat h = seeded_uniform(20, 4, 71);
    const Mat e = seeded_uniform(20, 2, 72);
    const Mat w0 = seeded_uniform(4, 2, 73);

    DenseLayer masked{w0, Activation::linear, 0.0};
    retrain_layer(masked, chunked(h, e, 5), {4.0, 1.0, {1, 0, 1, 0}});

    // masked rows must be unchanged
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(masked.weights(0, j) == w0(0, j));
        CHECK(masked.weights(2, j) == w0(2, j));
        CHECK(masked.weights(1, j) != w0(1, j));
    }
}

TEST_CASE("retrain_layer: residual reduction at mu = 1") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        DenseLayer layer{seeded_uniform(6, 3, seed * 3), Activation::linear, 0.0};
        const Mat h = seeded_uniform(25, 6, seed * 3 + 1);
        const Mat t = one_hot_rows(
            [&] {
                std::vector<int> l(25);
                for (std::size_t i = 0; i < 25; ++i) l[i] = int((seed + i) % 3);
                return l;
            }(),
            3);
        const Mat e = sub(t, matmul(h, layer.weights));
        const LayerRetrainStats s = retrain_layer(layer, chunked(h, e, 8), {4.0, 1.0, {}});
        CHECK(s.residual_after <= s.residual_before + 1e-12);
    }
}

TEST_CASE("retrain_layer: empty stream is rejected") {
    DenseLayer layer{Mat(3, 2), Activation::linear, 0.0};
    auto empty = []() -> BatchStream { return [](Mat&, Mat&) { return false; }; };
    CHECK_THROWS_AS(retrain_layer(layer, empty, {1.0, 1.0, {}}), DimensionError);
}

TEST_CASE("retrain_dense_stack: perfect single-layer fit") {
    // features = I (augmented), targets = I, huge C, mu = 1
    std::vector<DenseLayer> layers{{Mat(4, 3), Activation::linear, 0.0}};
    const Mat h_aug = augment_ones(Mat::identity(3));
    const Mat targets = Mat::identity(3);

    StackRetrainConfig cfg;
    cfg.reg_c = {1e12};
    retrain_dense_stack(layers, single_layer_source(h_aug, 10), targets, cfg);

    const Mat fit = matmul(h_aug, layers[0].weights);
    CHECK(max_abs_diff(fit, targets) < 1e-6);
}

TEST_CASE("retrain_dense_stack: zero output residual changes nothing") {
    // arrange a 2-layer stack whose logits already equal the one-hot targets;
    // the hidden width exceeds the sample count so an exact fit exists
    const Mat x = seeded_uniform(10, 4, 81, 0.0, 1.0);
    std::vector<DenseLayer> layers{
        {seeded_uniform(5, 12, 82), Activation::relu, 0.0},
        {Mat(13, 2), Activation::linear, 0.0}};

    const Mat h0 = augment_ones(x);
    const Mat h1 = augment_ones(dense_forward(layers[0], h0));
    // choose last-layer weights via exact fit on targets
    std::vector<int> labels(10);
    for (std::size_t i = 0; i < 10; ++i) labels[i] = int(i % 2);
    const Mat targets = one_hot_rows(labels, 2);
    layers[1].weights = ridge_solve(h1, targets, 1e12);
    const Mat logits = matmul(h1, layers[1].weights);
    REQUIRE(frobenius_norm(sub(targets, logits)) < 1e-5);

    // residual is ~0; weights should barely move
    std::vector<DenseLayer> before = layers;
    FeatureSource src = [&](std::size_t li,
                            const std::function<void(const Mat&, std::size_t)>& sink) {
        sink(li == 0 ? h0 : h1, 0);
    };
    StackRetrainConfig cfg;
    cfg.reg_c = {4.0, 4.0};
    retrain_dense_stack(layers, src, targets, cfg);
    CHECK(max_abs_diff(layers[1].weights, before[1].weights) < 1e-4);
    CHECK(max_abs_diff(layers[0].weights, before[0].weights) < 1e-4);
}

namespace {

// straight-line implementation of the two-procedure refinement without
// batching, used as the oracle for the stack test
void oracle_stack_update(std::vector<Mat>& weights, const std::vector<Mat>& feats,
                         const Mat& targets, double c, double mu) {
    const std::size_t n = weights.size();
    Mat e = sub(targets, matmul(feats[n - 1], weights[n - 1]));
    for (std::size_t rev = 0; rev < n; ++rev) {
        const std::size_t i = n - 1 - rev;
        Mat gram = matmul_tn(feats[i], feats[i]);
        for (std::size_t k = 0; k < gram.rows(); ++k) gram(k, k) += 1.0 / c;
        Mat eta = matmul(direct_inverse(gram), matmul_tn(feats[i], e));
        add_scaled_inplace(weights[i], eta, mu);
        if (i > 0) {
            Mat agram = matmul_tn(weights[i], weights[i]);
            for (std::size_t k = 0; k < agram.rows(); ++k) agram(k, k) += 1.0 / c;
            const Mat p = matmul(direct_inverse(agram), transpose(weights[i]));
            const Mat full = matmul(e, p);
            Mat clipped(full.rows(), full.cols() - 1);
            for (std::size_t r = 0; r < full.rows(); ++r)
                for (std::size_t col = 0; col + 1 < full.cols(); ++col)
                    clipped(r, col) = std::max(0.0, full(r, col));
            e = std::move(clipped);
        }
    }
}

}  // namespace

TEST_CASE("retrain_dense_stack: 2-layer stack matches the unbatched oracle") {
    const std::size_t n = 40;
    const Mat x = seeded_uniform(n, 8, 91, 0.0, 1.0);
    std::vector<DenseLayer> layers{
        {seeded_uniform(9, 5, 92), Activation::relu, 0.0},
        {seeded_uniform(6, 3, 93), Activation::linear, 0.0}};
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = int(i % 3);
    const Mat targets = one_hot_rows(labels, 3);

    const Mat h0 = augment_ones(x);
    const Mat h1 = augment_ones(dense_forward(layers[0], h0));
    FeatureSource src = [&](std::size_t li,
                            const std::function<void(const Mat&, std::size_t)>& sink) {
        const Mat& h = li == 0 ? h0 : h1;
        for (std::size_t pos = 0; pos < h.rows(); pos += 10)
            sink(take_row_block(h, pos, std::min<std::size_t>(10, h.rows() - pos)),
                 pos);
    };

    std::vector<Mat> oracle_w{layers[0].weights, layers[1].weights};
    oracle_stack_update(oracle_w, {h0, h1}, targets, 4.0, 1.0);

    StackRetrainConfig cfg;
    cfg.reg_c = {4.0};
    RetrainReport rep = retrain_dense_stack(layers, src, targets, cfg);

    CHECK(rel_frobenius_diff(layers[1].weights, oracle_w[1]) < 1e-8);
    CHECK(rel_frobenius_diff(layers[0].weights, oracle_w[0]) < 1e-8);
    CHECK(rep.layers[1].residual_after <= rep.layers[1].residual_before + 1e-12);
    CHECK(rep.layers[1].batches == 4);
}

TEST_CASE("retrain_dense_stack: invariant to the MP batch size") {
    const Mat x = seeded_uniform(24, 5, 95, 0.0, 1.0);
    std::vector<int> labels(24);
    for (std::size_t i = 0; i < 24; ++i) labels[i] = int(i % 2);
    const Mat targets = one_hot_rows(labels, 2);

    auto run = [&](std::size_t chunk) {
        std::vector<DenseLayer> layers{
            {seeded_uniform(6, 4, 96), Activation::relu, 0.0},
            {seeded_uniform(5, 2, 97), Activation::linear, 0.0}};
        const Mat h0 = augment_ones(x);
        const Mat h1 = augment_ones(dense_forward(layers[0], h0));
        FeatureSource src = [&](std::size_t li,
                                const std::function<void(const Mat&, std::size_t)>&
                                    sink) {
            const Mat& h = li == 0 ? h0 : h1;
            for (std::size_t pos = 0; pos < h.rows(); pos += chunk)
                sink(take_row_block(h, pos,
                                    std::min<std::size_t>(chunk, h.rows() - pos)),
                     pos);
        };
        StackRetrainConfig cfg;
        cfg.reg_c = {4.0};
        retrain_dense_stack(layers, src, targets, cfg);
        return layers;
    };

    const auto a = run(24);
    const auto b = run(5);
    CHECK(rel_frobenius_diff(b[0].weights, a[0].weights) < 1e-8);
    CHECK(rel_frobenius_diff(b[1].weights, a[1].weights) < 1e-8);
}

TEST_CASE("retrain_dense_stack: idempotence bound at mu = 1") {
    const Mat x = seeded_uniform(30, 6, 98, 0.0, 1.0);
    std::vector<int> labels(30);
    for (std::size_t i = 0; i < 30; ++i) labels[i] = int(i % 3);
    const Mat targets = one_hot_rows(labels, 3);

    std::vector<DenseLayer> layers{{seeded_uniform(7, 3, 99), Activation::linear, 0.0}};
    const Mat h0 = augment_ones(x);
    FeatureSource src = single_layer_source(h0, 8);

    StackRetrainConfig cfg;
    cfg.reg_c = {4.0};
    const RetrainReport first = retrain_dense_stack(layers, src, targets, cfg);
    const RetrainReport second = retrain_dense_stack(layers, src, targets, cfg);
    CHECK(second.layers.back().residual_after <=
          first.layers.back().residual_after + 1e-12);
}

TEST_CASE("retrain report serializes to the documented JSON shape") {
    RetrainReport rep;
    rep.layers.push_back({2.0, 1.5, 0.7, 3});
    rep.duration_ms = 12.0;
    rep.peak_bytes = 1024;
    const std::string j = rep.to_json();
    CHECK(j.find("\"residual_before\"") != std::string::npos);
    CHECK(j.find("\"residual_after\"") != std::string::npos);
    CHECK(j.find("\"batches\"") != std::string::npos);
    CHECK(j.find("\"eta_norm\"") != std::string::npos);
    CHECK(j.find("\"peak_bytes\"") != std::string::npos);
}
