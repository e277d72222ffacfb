#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "fr/data.hpp"
#include "fr/errors.hpp"
#include "fr/linalg.hpp"

using namespace fr;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/fr_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

void write_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

// handcrafted 2-image 2x2 IDX pair
void write_fixture(const std::string& img_path, const std::string& lbl_path,
                   std::uint32_t img_count = 2, std::uint32_t lbl_count = 2,
                   bool truncate_pixels = false, std::uint32_t img_magic = 0x803,
                   std::uint32_t lbl_magic = 0x801) {
    std::ofstream img(img_path, std::ios::binary);
    write_be32(img, img_magic);
    write_be32(img, img_count);
    write_be32(img, 2);
    write_be32(img, 2);
    const unsigned char pixels[8] = {0, 64, 128, 255, 10, 20, 30, 40};
    img.write(reinterpret_cast<const char*>(pixels),
              truncate_pixels ? 5 : 4 * img_count);
    img.close();

    std::ofstream lbl(lbl_path, std::ios::binary);
    write_be32(lbl, lbl_magic);
    write_be32(lbl, lbl_count);
    const unsigned char labels[2] = {3, 7};
    lbl.write(reinterpret_cast<const char*>(labels), lbl_count);
}

}  // namespace

TEST_CASE("load_idx: handcrafted fixture round-trips") {
    TempFile img("f1.idx"), lbl("f1l.idx");
    write_fixture(img.path, lbl.path);
    const Dataset ds = load_idx(img.path, lbl.path);
    CHECK(ds.size() == 2);
    CHECK(ds.shape == Shape3{1, 2, 2});
    CHECK(ds.labels == std::vector<int>{3, 7});
    CHECK(ds.num_classes == 8);
    CHECK(ds.features(0, 0) == 0.0);
    CHECK(ds.features(0, 3) == 1.0);  // byte 255 -> exactly 1.0
    CHECK(ds.features(0, 1) == doctest::Approx(64.0 / 255.0));
}

TEST_CASE("load_idx: distinct errors for magic, truncation, count mismatch") {
    TempFile img("f2.idx"), lbl("f2l.idx");

    write_fixture(img.path, lbl.path, 2, 2, false, 0x999);
    CHECK_THROWS_WITH_AS(load_idx(img.path, lbl.path),
                         doctest::Contains("magic"), IoError);

    write_fixture(img.path, lbl.path, 2, 2, true);
    CHECK_THROWS_WITH_AS(load_idx(img.path, lbl.path),
                         doctest::Contains("truncated"), IoError);

    write_fixture(img.path, lbl.path, 2, 1);
    CHECK_THROWS_WITH_AS(load_idx(img.path, lbl.path),
                         doctest::Contains("mismatch"), IoError);

    CHECK_THROWS_AS(load_idx("/tmp/fr_test_does_not_exist.idx", lbl.path), IoError);
}

TEST_CASE("save_idx/load_idx round-trip of a synthetic digit set") {
    const Dataset ds = gen_digits(3, 10, 0.05, 9);
    TempFile img("f3.idx"), lbl("f3l.idx");
    save_idx(ds, img.path, lbl.path);
    const Dataset back = load_idx(img.path, lbl.path);
    REQUIRE(back.size() == ds.size());
    CHECK(back.shape == ds.shape);
    CHECK(back.labels == ds.labels);
    // written bytes quantize to 1/255 steps
    CHECK(max_abs_diff(back.features, ds.features) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("csv: save and load round-trip") {
    const Dataset ds = gen_blobs(5, 3, 0.1, 13);
    TempFile csv("f4.csv");
    save_csv(ds, csv.path);
    const Dataset back = load_csv(csv.path);
    REQUIRE(back.size() == ds.size());
    CHECK(back.labels == ds.labels);
    CHECK(back.num_classes == 3);
    CHECK(max_abs_diff(back.features, ds.features) < 1e-9);
    CHECK_THROWS_AS(load_csv("/tmp/fr_test_missing.csv"), IoError);
}

TEST_CASE("gen_blobs: zero noise collapses each class to its center") {
    const Dataset ds = gen_blobs(4, 3, 0.0, 5);
    for (int cls = 0; cls < 3; ++cls) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.labels[i] == cls) rows.push_back(i);
        REQUIRE(rows.size() == 4);
        for (std::size_t r : rows)
            for (std::size_t j = 0; j < ds.features.cols(); ++j)
                CHECK(ds.features(r, j) == ds.features(rows[0], j));
    }
}

TEST_CASE("synthetic generators are deterministic and bounded") {
    for (const char* kind : {"blobs", "spirals", "digits"}) {
        const Dataset a = gen_synthetic(kind, 6, 3, 0.1, 77);
        const Dataset b = gen_synthetic(kind, 6, 3, 0.1, 77);
        CHECK(max_abs_diff(a.features, b.features) == 0.0);
        CHECK(a.labels == b.labels);
        // every class is actually represented
        for (int cls = 0; cls < 3; ++cls)
            CHECK(std::count(a.labels.begin(), a.labels.end(), cls) == 6);
        for (double v : a.features.data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_THROWS_AS(gen_synthetic("moons", 6, 3, 0.1, 77), ConfigError);
}

TEST_CASE("gen_blobs: linearly separable enough for a ridge classifier") {
    const Dataset ds = gen_blobs(50, 3, 0.1, 21);
    // one-shot ridge classifier on raw features as the oracle
    Mat h(ds.size(), 3);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        h(i, 0) = ds.features(i, 0);
        h(i, 1) = ds.features(i, 1);
        h(i, 2) = 1.0;
    }
    const Mat w = ridge_solve(h, one_hot(ds.labels, 3), 100.0);
    const Mat scores = matmul(h, w);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = scores.row(i);
        const std::size_t arg =
            std::max_element(row.begin(), row.end()) - row.begin();
        if (int(arg) == ds.labels[i]) ++hits;
    }
    CHECK(double(hits) / double(ds.size()) > 0.95);
}

TEST_CASE("take_rows keeps order and metadata") {
    const Dataset ds = gen_blobs(4, 3, 0.1, 3);
    const Dataset head = take_rows(ds, 0, 5);
    CHECK(head.size() == 5);
    CHECK(head.labels[4] == ds.labels[4]);
    CHECK(head.features(4, 0) == ds.features(4, 0));
    CHECK(head.num_classes == ds.num_classes);
}

TEST_CASE("batch_indices: oversized batch yields one batch with all rows") {
    const auto batches = batch_indices(7, 100, 1, 0);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].size() == 7);
}

TEST_CASE("batch_indices: deterministic in (seed, epoch)") {
    CHECK(batch_indices(50, 8, 9, 2) == batch_indices(50, 8, 9, 2));
    CHECK(batch_indices(50, 8, 9, 2) != batch_indices(50, 8, 9, 3));
}

TEST_CASE("batch_indices: union of batches is the row set exactly once") {
    const auto batches = batch_indices(53, 8, 5, 1);
    CHECK(batches.size() == 7);  // 6 full + 1 partial of 5
    CHECK(batches.back().size() == 5);
    std::vector<std::size_t> all;
    for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == 53);
    for (std::size_t i = 0; i < 53; ++i) CHECK(all[i] == i);
}

TEST_CASE("gather and one_hot helpers") {
    const Dataset ds = gen_blobs(3, 2, 0.1, 31);
    const std::vector<std::size_t> idx{3, 0, 5};
    const Mat rows = gather_rows(ds.features, idx);
    CHECK(rows.rows() == 3);
    CHECK(rows(1, 0) == ds.features(0, 0));
    const std::vector<int> labels = gather_labels(ds.labels, idx);
    CHECK(labels[0] == ds.labels[3]);

    const Mat t = one_hot({1, 0}, 3);
    CHECK(t(0, 1) == 1.0);
    CHECK(t(0, 0) == 0.0);
    CHECK(t(1, 0) == 1.0);
}
