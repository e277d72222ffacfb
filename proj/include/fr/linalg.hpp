#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fr/mat.hpp"

namespace fr {

// Relative tolerance used by the solver's own consistency checks and by the
// oracle-equivalence tests; chosen for 64-bit floats at feature widths up
// to ~1024.
inline constexpr double kSolverRelTol = 1e-8;

// Condition-number estimate above which the SMW inner system is rejected.
inline constexpr double kMaxInnerCondition = 1e12;

// LU factorization with partial pivoting.
struct LuFactor {
    Mat lu;                 // packed L (unit diagonal) and U
    std::vector<int> perm;  // row permutation
};

LuFactor lu_factor(Mat a);                         // throws SingularError
Mat lu_solve(const LuFactor& f, const Mat& b);     // solves A x = b column-wise
double lu_condition_estimate(const LuFactor& f);   // max|U_ii| / min|U_ii|

// Inverse via pivoted LU. Throws SingularError when m is singular to
// working precision.
Mat direct_inverse(const Mat& m);

// One-shot ridge solution: argmin ||e - H eta||_F^2 + (1/reg_c) ||eta||_F^2,
// i.e. (H^T H + I/C)^{-1} H^T e. Larger reg_c means weaker regularization.
Mat ridge_solve(const Mat& h, const Mat& e, double reg_c);

// Incremental recursive-least-squares state. r_inv tracks the inverse of the
// accumulated Gram matrix (I/C + sum_i H_i^T H_i); eta tracks the ridge
// solution over all batches seen so far.
struct RlsState {
    Mat r_inv;  // d x d, symmetric
    Mat eta;    // d x c
    std::size_t d = 0;
    std::size_t c = 0;
    std::size_t batches_seen = 0;
    double reg_c = 0.0;
};

RlsState rls_init(const Mat& h1, const Mat& e1, double reg_c);

// Folds one more batch into the state via the Sherman-Morrison-Woodbury
// identity. The inner system is b x b (b = hp.rows()); the d x d Gram
// matrix is never re-inverted. r_inv is re-symmetrized after the update.
void rls_update(RlsState& state, const Mat& hp, const Mat& ep);

// Flat binary debug dump: d, c, batches_seen as 64-bit LE integers, then
// r_inv and eta row-major as 64-bit LE floats.
void dump_rls_state(const RlsState& state, std::ostream& out);
RlsState load_rls_state(std::istream& in);

}  // namespace fr
