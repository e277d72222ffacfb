#include "fr/mat.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace fr {

namespace memtrack {

namespace {
std::size_t g_current = 0;
std::size_t g_peak = 0;
std::size_t g_baseline = 0;
}  // namespace

void on_alloc(std::size_t bytes) {
    g_current += bytes;
    g_peak = std::max(g_peak, g_current);
}

void on_free(std::size_t bytes) { g_current -= bytes; }

std::size_t current() { return g_current; }

void reset() {
    g_baseline = g_current;
    g_peak = g_current;
}

std::size_t peak_delta() { return g_peak - g_baseline; }

}  // namespace memtrack

Mat::Mat(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    memtrack::on_alloc(data_.size() * sizeof(double));
}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols)
        throw DimensionError("Mat: data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    memtrack::on_alloc(data_.size() * sizeof(double));
}

Mat::~Mat() { memtrack::on_free(data_.size() * sizeof(double)); }

Mat::Mat(const Mat& other)
    : rows_(other.rows_), cols_(other.cols_), data_(other.data_) {
    memtrack::on_alloc(data_.size() * sizeof(double));
}

Mat::Mat(Mat&& other) noexcept
    : rows_(other.rows_), cols_(other.cols_), data_(std::move(other.data_)) {
    other.rows_ = other.cols_ = 0;
    other.data_.clear();
}

Mat& Mat::operator=(const Mat& other) {
    if (this == &other) return *this;
    memtrack::on_free(data_.size() * sizeof(double));
    rows_ = other.rows_;
    cols_ = other.cols_;
    data_ = other.data_;
    memtrack::on_alloc(data_.size() * sizeof(double));
    return *this;
}

Mat& Mat::operator=(Mat&& other) noexcept {
    if (this == &other) return *this;
    memtrack::on_free(data_.size() * sizeof(double));
    rows_ = other.rows_;
    cols_ = other.cols_;
    data_ = std::move(other.data_);
    other.rows_ = other.cols_ = 0;
    other.data_.clear();
    return *this;
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Mat::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

void check_finite(const Mat& m, const char* what) {
    if (!m.all_finite())
        throw NonFiniteError(std::string(what) + " contains non-finite entries");
}

namespace {
void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}
}  // namespace

Mat matmul(const Mat& a, const Mat& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions disagree");
    Mat out(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* orow = out.row(i).data();
        const double* arow = a.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
    require(a.rows() == b.rows(), "matmul_tn: row counts disagree");
    Mat out(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* arow = a.row(r).data();
        const double* brow = b.row(r).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = out.row(i).data();
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
    require(a.cols() == b.cols(), "matmul_nt: column counts disagree");
    Mat out(a.rows(), b.rows());
    const std::size_t k = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i).data();
        double* orow = out.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j).data();
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
            orow[j] = acc;
        }
    }
    return out;
}

Mat transpose(const Mat& a) {
    Mat out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Mat add(const Mat& a, const Mat& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    Mat out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

Mat sub(const Mat& a, const Mat& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
    Mat out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    return out;
}

void add_scaled_inplace(Mat& a, const Mat& b, double s) {
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            "add_scaled_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += s * b.data()[i];
}

void scale_inplace(Mat& a, double s) {
    for (double& v : a.data()) v *= s;
}

double frobenius_norm(const Mat& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    return std::sqrt(acc);
}

double max_abs_diff(const Mat& a, const Mat& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

double rel_frobenius_diff(const Mat& a, const Mat& b, double floor) {
    return frobenius_norm(sub(a, b)) / std::max(frobenius_norm(b), floor);
}

}  // namespace fr
