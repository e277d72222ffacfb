#include "fr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace fr {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw IoError("truncated IDX file: " + path);
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint32_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32), salt};
    return std::mt19937_64(seq);
}

void finalize(Dataset& ds) {
    for (int l : ds.labels)
        if (l < 0 || l >= ds.num_classes)
            throw DomainError("dataset label out of range");
    check_finite(ds.features, "dataset features");
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open " + images_path);
    if (read_be32(img, images_path) != kIdxImagesMagic)
        throw IoError("bad IDX image magic in " + images_path);
    const std::uint32_t n = read_be32(img, images_path);
    const std::uint32_t h = read_be32(img, images_path);
    const std::uint32_t w = read_be32(img, images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open " + labels_path);
    if (read_be32(lab, labels_path) != kIdxLabelsMagic)
        throw IoError("bad IDX label magic in " + labels_path);
    const std::uint32_t nl = read_be32(lab, labels_path);
    if (n != nl)
        throw IoError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(nl) + " labels");
    if (n == 0) throw IoError("empty IDX pair: " + images_path);

    Dataset ds;
    ds.shape = {1, h, w};
    ds.features = Mat(n, ds.shape.count());
    std::vector<unsigned char> rowbuf(h * w);
    for (std::uint32_t i = 0; i < n; ++i) {
        img.read(reinterpret_cast<char*>(rowbuf.data()),
                 static_cast<std::streamsize>(rowbuf.size()));
        if (!img) throw IoError("truncated IDX file: " + images_path);
        auto dst = ds.features.row(i);
        for (std::size_t j = 0; j < rowbuf.size(); ++j)
            dst[j] = static_cast<double>(rowbuf[j]) / 255.0;
    }
    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        char b;
        lab.read(&b, 1);
        if (!lab) throw IoError("truncated IDX file: " + labels_path);
        ds.labels[i] = static_cast<unsigned char>(b);
    }
    ds.num_classes = 1 + *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.name = images_path;
    finalize(ds);
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path) {
    if (ds.shape.c != 1) throw IoError("save_idx supports single-channel data only");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot write " + images_path);
    write_be32(img, kIdxImagesMagic);
    write_be32(img, static_cast<std::uint32_t>(ds.size()));
    write_be32(img, static_cast<std::uint32_t>(ds.shape.h));
    write_be32(img, static_cast<std::uint32_t>(ds.shape.w));
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (double v : ds.features.row(i)) {
            const double clamped = std::clamp(v, 0.0, 1.0);
            const unsigned char b =
                static_cast<unsigned char>(std::lround(clamped * 255.0));
            img.write(reinterpret_cast<const char*>(&b), 1);
        }

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot write " + labels_path);
    write_be32(lab, kIdxLabelsMagic);
    write_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (int l : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(l);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV: " + path);

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    std::ptrdiff_t label_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == "label") label_col = static_cast<std::ptrdiff_t>(i);
    if (label_col < 0) throw IoError("CSV has no 'label' column: " + path);

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (static_cast<std::ptrdiff_t>(col) == label_col)
                labels.push_back(std::stoi(cell));
            else
                values.push_back(std::stod(cell));
            ++col;
        }
        if (col != header.size())
            throw IoError("CSV row width mismatch at line " + std::to_string(n + 2));
        ++n;
    }
    if (n == 0) throw IoError("CSV has no data rows: " + path);

    Dataset ds;
    const std::size_t d = header.size() - 1;
    ds.shape = {1, 1, d};
    ds.features = Mat(n, d, std::move(values));
    ds.labels = std::move(labels);
    ds.num_classes = 1 + *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.name = path;
    finalize(ds);
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "label";
    for (std::size_t j = 0; j < ds.features.cols(); ++j) out << ",f" << j;
    out << "\n";
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (double v : ds.features.row(i)) {
            std::snprintf(buf, sizeof(buf), "%.9g", v);
            out << ',' << buf;
        }
        out << "\n";
    }
}

Dataset gen_blobs(std::size_t n_per_class, int num_classes, double noise,
                  std::uint64_t seed) {
    if (n_per_class == 0 || num_classes < 1 || noise < 0.0)
        throw DomainError("gen_blobs: bad arguments");
    auto rng = seeded_rng(seed, 0x626c6f62u);
    std::normal_distribution<double> jitter(0.0, 1.0);

    const std::size_t n = n_per_class * static_cast<std::size_t>(num_classes);
    Dataset ds;
    ds.shape = {1, 1, 2};
    ds.features = Mat(n, 2);
    ds.labels.resize(n);
    std::size_t row = 0;
    for (int cls = 0; cls < num_classes; ++cls) {
        const double angle = 2.0 * std::numbers::pi * cls / num_classes;
        const double cx = 0.5 + 0.35 * std::cos(angle);
        const double cy = 0.5 + 0.35 * std::sin(angle);
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            ds.features(row, 0) = std::clamp(cx + noise * jitter(rng), 0.0, 1.0);
            ds.features(row, 1) = std::clamp(cy + noise * jitter(rng), 0.0, 1.0);
            ds.labels[row] = cls;
        }
    }
    ds.num_classes = num_classes;
    ds.name = "blobs";
    finalize(ds);
    return ds;
}

Dataset gen_spirals(std::size_t n_per_class, int num_classes, double noise,
                    std::uint64_t seed) {
    if (n_per_class == 0 || num_classes < 1 || noise < 0.0)
        throw DomainError("gen_spirals: bad arguments");
    auto rng = seeded_rng(seed, 0x73706972u);
    std::normal_distribution<double> jitter(0.0, 1.0);

    const std::size_t n = n_per_class * static_cast<std::size_t>(num_classes);
    Dataset ds;
    ds.shape = {1, 1, 2};
    ds.features = Mat(n, 2);
    ds.labels.resize(n);
    std::size_t row = 0;
    for (int cls = 0; cls < num_classes; ++cls) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            const double t = static_cast<double>(i) / n_per_class;
            const double r = 0.05 + 0.42 * t;
            const double angle = 2.0 * std::numbers::pi *
                                 (static_cast<double>(cls) / num_classes + 1.75 * t);
            const double x = 0.5 + r * std::cos(angle) + noise * jitter(rng);
            const double y = 0.5 + r * std::sin(angle) + noise * jitter(rng);
            ds.features(row, 0) = std::clamp(x, 0.0, 1.0);
            ds.features(row, 1) = std::clamp(y, 0.0, 1.0);
            ds.labels[row] = cls;
        }
    }
    ds.num_classes = num_classes;
    ds.name = "spirals";
    finalize(ds);
    return ds;
}

namespace {

// Seven-segment stroke table. Segments: 0 top, 1 top-right, 2 bottom-right,
// 3 bottom, 4 bottom-left, 5 top-left, 6 middle.
constexpr std::uint8_t kDigitSegments[10] = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111};

struct Segment {
    double x0, y0, x1, y1;
};

constexpr Segment kSegmentGeometry[7] = {
    {0.1, 0.0, 0.9, 0.0},  // top
    {1.0, 0.1, 1.0, 0.9},  // top-right
    {1.0, 1.1, 1.0, 1.9},  // bottom-right
    {0.1, 2.0, 0.9, 2.0},  // bottom
    {0.0, 1.1, 0.0, 1.9},  // bottom-left
    {0.0, 0.1, 0.0, 0.9},  // top-left
    {0.1, 1.0, 0.9, 1.0},  // middle
};

}  // namespace

Dataset gen_digits(std::size_t n_per_class, int num_classes, double noise,
                   std::uint64_t seed) {
    if (n_per_class == 0 || num_classes < 1 || num_classes > 10 || noise < 0.0)
        throw DomainError("gen_digits: bad arguments (classes must be 1..10)");
    auto rng = seeded_rng(seed, 0x64696769u);
    std::uniform_real_distribution<double> shift(-3.0, 3.0);
    std::uniform_real_distribution<double> scale(0.85, 1.1);
    std::normal_distribution<double> pixel_noise(0.0, 1.0);

    constexpr std::size_t kSide = 28;
    const std::size_t n = n_per_class * static_cast<std::size_t>(num_classes);
    Dataset ds;
    ds.shape = {1, kSide, kSide};
    ds.features = Mat(n, kSide * kSide);
    ds.labels.resize(n);

    std::size_t row = 0;
    for (int cls = 0; cls < num_classes; ++cls) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            ds.labels[row] = cls;
            const double dx = 10.0 + shift(rng);
            const double dy = 5.0 + shift(rng);
            const double sx = 8.0 * scale(rng);
            const double sy = 9.0 * scale(rng);
            auto px = ds.features.row(row);
            for (int seg = 0; seg < 7; ++seg) {
                if (!(kDigitSegments[cls] >> seg & 1)) continue;
                const Segment& g = kSegmentGeometry[seg];
                for (int t = 0; t <= 24; ++t) {
                    const double f = t / 24.0;
                    const double x = dx + sx * (g.x0 + f * (g.x1 - g.x0));
                    const double y = dy + sy * (g.y0 + f * (g.y1 - g.y0));
                    for (int oy = -1; oy <= 1; ++oy)
                        for (int ox = -1; ox <= 1; ++ox) {
                            const long ix = std::lround(x) + ox;
                            const long iy = std::lround(y) + oy;
                            if (ix < 0 || iy < 0 || ix >= long(kSide) || iy >= long(kSide))
                                continue;
                            const double d2 = (x - double(ix)) * (x - double(ix)) +
                                              (y - double(iy)) * (y - double(iy));
                            const double v = std::exp(-d2 / 0.9);
                            double& cell = px[std::size_t(iy) * kSide + std::size_t(ix)];
                            cell = std::max(cell, v);
                        }
                }
            }
            if (noise > 0.0)
                for (std::size_t j = 0; j < px.size(); ++j)
                    px[j] = std::clamp(px[j] + noise * pixel_noise(rng), 0.0, 1.0);
        }
    }
    ds.num_classes = num_classes;
    ds.name = "digits";
    finalize(ds);
    return ds;
}

Dataset gen_synthetic(const std::string& kind, std::size_t n_per_class,
                      int num_classes, double noise, std::uint64_t seed) {
    if (kind == "blobs") return gen_blobs(n_per_class, num_classes, noise, seed);
    if (kind == "spirals") return gen_spirals(n_per_class, num_classes, noise, seed);
    if (kind == "digits") return gen_digits(n_per_class, num_classes, noise, seed);
    throw ConfigError("unknown synthetic dataset kind: " + kind);
}

Dataset take_rows(const Dataset& ds, std::size_t begin, std::size_t end) {
    if (begin >= end || end > ds.size())
        throw DomainError("take_rows: bad range");
    Dataset out;
    out.shape = ds.shape;
    out.num_classes = ds.num_classes;
    out.name = ds.name;
    out.features = Mat(end - begin, ds.features.cols());
    out.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      ds.labels.begin() + static_cast<std::ptrdiff_t>(end));
    for (std::size_t i = begin; i < end; ++i) {
        auto src = ds.features.row(i);
        auto dst = out.features.row(i - begin);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed,
                                                    std::size_t epoch) {
    if (batch_size == 0) throw DomainError("batch_indices: batch_size must be >= 1");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    auto rng = seeded_rng(seed, 0x62617463u + static_cast<std::uint32_t>(epoch));
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(start + batch_size, n);
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

Mat gather_rows(const Mat& m, const std::vector<std::size_t>& idx) {
    Mat out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = m.row(idx[i]);
        auto dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<std::size_t>& idx) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
    return out;
}

Mat one_hot(const std::vector<int>& labels, int num_classes) {
    Mat out(labels.size(), static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw DomainError("one_hot: label out of range");
        out(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

}  // namespace fr
