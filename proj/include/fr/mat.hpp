#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fr/errors.hpp"

namespace fr {

// Accounting of live Mat buffer bytes. Used to report the peak transient
// matrix footprint of a solver window: call reset(), run the solver, read
// peak_delta(). Allocations alive before reset() do not count toward the
// window's peak.
namespace memtrack {
void on_alloc(std::size_t bytes);
void on_free(std::size_t bytes);
std::size_t current();
void reset();
std::size_t peak_delta();
}  // namespace memtrack

// Dense row-major matrix of doubles. Samples are rows, features are columns.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols);  // zero-initialized
    Mat(std::size_t rows, std::size_t cols, std::vector<double> values);
    ~Mat();

    Mat(const Mat& other);
    Mat(Mat&& other) noexcept;
    Mat& operator=(const Mat& other);
    Mat& operator=(Mat&& other) noexcept;

    static Mat identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Throws NonFiniteError if m contains NaN/Inf; `what` names the offender.
void check_finite(const Mat& m, const char* what);

Mat matmul(const Mat& a, const Mat& b);     // a * b
Mat matmul_tn(const Mat& a, const Mat& b);  // a^T * b
Mat matmul_nt(const Mat& a, const Mat& b);  // a * b^T
Mat transpose(const Mat& a);

Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
void add_scaled_inplace(Mat& a, const Mat& b, double s);  // a += s*b
void scale_inplace(Mat& a, double s);

double frobenius_norm(const Mat& a);
double max_abs_diff(const Mat& a, const Mat& b);
// ||a - b||_F / max(||b||_F, floor); floor guards the zero-reference case.
double rel_frobenius_diff(const Mat& a, const Mat& b, double floor = 1e-300);

}  // namespace fr
