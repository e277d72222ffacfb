#include "fr/linalg.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <utility>

namespace fr {

LuFactor lu_factor(Mat a) {
    if (a.rows() != a.cols()) throw DimensionError("lu_factor: matrix not square");
    check_finite(a, "lu_factor input");
    const std::size_t n = a.rows();
    std::vector<int> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::fabs(a(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double v = std::fabs(a(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best == 0.0)
            throw SingularError("lu_factor: singular at column " + std::to_string(k));
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(perm[k], perm[piv]);
        }
        const double d = a(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double l = a(i, k) / d;
            a(i, k) = l;
            if (l == 0.0) continue;
            const double* urow = a.row(k).data();
            double* irow = a.row(i).data();
            for (std::size_t j = k + 1; j < n; ++j) irow[j] -= l * urow[j];
        }
    }
    return {std::move(a), std::move(perm)};
}

Mat lu_solve(const LuFactor& f, const Mat& b) {
    const std::size_t n = f.lu.rows();
    if (b.rows() != n) throw DimensionError("lu_solve: rhs row count mismatch");
    const std::size_t m = b.cols();

    Mat x(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = b.row(static_cast<std::size_t>(f.perm[i])).data();
        double* dst = x.row(i).data();
        std::memcpy(dst, src, m * sizeof(double));
    }
    // forward: L y = P b
    for (std::size_t i = 1; i < n; ++i) {
        double* xi = x.row(i).data();
        const double* lrow = f.lu.row(i).data();
        for (std::size_t k = 0; k < i; ++k) {
            const double l = lrow[k];
            if (l == 0.0) continue;
            const double* xk = x.row(k).data();
            for (std::size_t j = 0; j < m; ++j) xi[j] -= l * xk[j];
        }
    }
    // backward: U x = y
    for (std::size_t ii = n; ii-- > 0;) {
        double* xi = x.row(ii).data();
        const double* urow = f.lu.row(ii).data();
        for (std::size_t k = ii + 1; k < n; ++k) {
            const double u = urow[k];
            if (u == 0.0) continue;
            const double* xk = x.row(k).data();
            for (std::size_t j = 0; j < m; ++j) xi[j] -= u * xk[j];
        }
        const double d = urow[ii];
        for (std::size_t j = 0; j < m; ++j) xi[j] /= d;
    }
    return x;
}

double lu_condition_estimate(const LuFactor& f) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (std::size_t i = 0; i < f.lu.rows(); ++i) {
        const double v = std::fabs(f.lu(i, i));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

Mat direct_inverse(const Mat& m) {
    const LuFactor f = lu_factor(m);
    return lu_solve(f, Mat::identity(m.rows()));
}

namespace {

void validate_ridge_inputs(const Mat& h, const Mat& e, double reg_c,
                           const char* who) {
    if (h.rows() != e.rows())
        throw DimensionError(std::string(who) + ": H has " +
                             std::to_string(h.rows()) + " rows but e has " +
                             std::to_string(e.rows()));
    if (h.rows() == 0) throw DimensionError(std::string(who) + ": empty input");
    if (!(reg_c > 0.0))
        throw DomainError(std::string(who) + ": regularization C must be > 0");
    check_finite(h, "H");
    check_finite(e, "e");
}

Mat ridge_gram(const Mat& h, double reg_c) {
    Mat gram = matmul_tn(h, h);
    const double lambda = 1.0 / reg_c;
    for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) += lambda;
    return gram;
}

void symmetrize(Mat& a) {
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            const double v = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = v;
            a(j, i) = v;
        }
}

}  // namespace

Mat ridge_solve(const Mat& h, const Mat& e, double reg_c) {
    validate_ridge_inputs(h, e, reg_c, "ridge_solve");
    const LuFactor f = lu_factor(ridge_gram(h, reg_c));
    Mat eta = lu_solve(f, matmul_tn(h, e));
    check_finite(eta, "ridge_solve result");
    return eta;
}

RlsState rls_init(const Mat& h1, const Mat& e1, double reg_c) {
    validate_ridge_inputs(h1, e1, reg_c, "rls_init");
    RlsState st;
    st.d = h1.cols();
    st.c = e1.cols();
    st.reg_c = reg_c;
    st.batches_seen = 1;
    st.r_inv = direct_inverse(ridge_gram(h1, reg_c));
    symmetrize(st.r_inv);
    st.eta = matmul(st.r_inv, matmul_tn(h1, e1));
    check_finite(st.eta, "rls_init eta");
    return st;
}

void rls_update(RlsState& state, const Mat& hp, const Mat& ep) {
    if (hp.cols() != state.d)
        throw DimensionError("rls_update: feature width " + std::to_string(hp.cols()) +
                             " != state dimension " + std::to_string(state.d));
    if (ep.cols() != state.c)
        throw DimensionError("rls_update: output width mismatch");
    if (hp.rows() != ep.rows() || hp.rows() == 0)
        throw DimensionError("rls_update: batch row counts disagree or empty");
    check_finite(hp, "H_p");
    check_finite(ep, "e_p");

    const std::size_t b = hp.rows();

    // U = R_{p-1}^{-1} H_p^T  (d x b); S = I_b + H_p U
    Mat u = matmul_nt(state.r_inv, hp);
    Mat s = matmul(hp, u);
    for (std::size_t i = 0; i < b; ++i) s(i, i) += 1.0;

    const LuFactor sf = lu_factor(std::move(s));
    if (lu_condition_estimate(sf) > kMaxInnerCondition)
        throw SingularError(
            "rls_update: inner SMW system is near-singular; use a smaller "
            "batch or a stronger regularizer (smaller C)");

    // R_p^{-1} = R_{p-1}^{-1} - U S^{-1} U^T
    Mat x = lu_solve(sf, transpose(u));  // b x d
    Mat r_new = state.r_inv;
    for (std::size_t i = 0; i < state.d; ++i) {
        double* rrow = r_new.row(i).data();
        const double* urow = u.row(i).data();
        for (std::size_t k = 0; k < b; ++k) {
            const double uv = urow[k];
            if (uv == 0.0) continue;
            const double* xrow = x.row(k).data();
            for (std::size_t j = 0; j < state.d; ++j) rrow[j] -= uv * xrow[j];
        }
    }
    symmetrize(r_new);

    // eta_p = K_p eta_{p-1} + R_p^{-1} H_p^T e_p,
    // with K_p eta = eta - U S^{-1} (H_p eta).
    Mat k_eta = state.eta;
    {
        Mat h_eta = matmul(hp, state.eta);        // b x c
        Mat correction = lu_solve(sf, h_eta);     // b x c
        Mat delta = matmul(u, correction);        // d x c
        for (std::size_t i = 0; i < k_eta.size(); ++i)
            k_eta.data()[i] -= delta.data()[i];
    }
    Mat eta_new = add(k_eta, matmul(r_new, matmul_tn(hp, ep)));
    check_finite(r_new, "rls_update r_inv");
    check_finite(eta_new, "rls_update eta");

    state.r_inv = std::move(r_new);
    state.eta = std::move(eta_new);
    state.batches_seen += 1;
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void put_f64_block(std::ostream& out, const Mat& m) {
    for (double d : m.data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        put_u64(out, bits);
    }
}

void get_f64_block(std::istream& in, Mat& m) {
    for (double& d : m.data()) {
        const std::uint64_t bits = get_u64(in);
        std::memcpy(&d, &bits, 8);
    }
}

}  // namespace

void dump_rls_state(const RlsState& state, std::ostream& out) {
    put_u64(out, state.d);
    put_u64(out, state.c);
    put_u64(out, state.batches_seen);
    put_f64_block(out, state.r_inv);
    put_f64_block(out, state.eta);
}

RlsState load_rls_state(std::istream& in) {
    RlsState st;
    st.d = get_u64(in);
    st.c = get_u64(in);
    st.batches_seen = get_u64(in);
    st.r_inv = Mat(st.d, st.d);
    st.eta = Mat(st.d, st.c);
    get_f64_block(in, st.r_inv);
    get_f64_block(in, st.eta);
    if (!in) throw IoError("load_rls_state: truncated stream");
    return st;
}

}  // namespace fr
