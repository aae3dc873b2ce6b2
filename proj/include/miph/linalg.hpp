#pragma once

// Dense kernels shared by every other module: matrix exponential, Van Loan
// block integrals, Kronecker product/sum and linear solves.

#include <Eigen/Dense>

namespace miph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct LinalgTolerances {
  // solve() reports a singular matrix when the reciprocal condition estimate
  // falls below this value.
  double singularRcond = 1e-15;
  // Number of long-double residual refinement sweeps after the LU solve.
  int refinementSteps = 2;
};

/// exp(m * scale) by scaling and squaring with a diagonal Pade approximant
/// (degree 3, 5, 7, 9 or 13 chosen from the 1-norm).
Matrix expm(const Matrix& m, double scale = 1.0);

struct BlockIntegralResult {
  Matrix left;        // exp(t x)
  Matrix upperRight;  // int_0^x exp(t (x - s)) c exp(t s) ds
};

/// Upper-right block of exp([[t, c], [0, t]] x).
BlockIntegralResult vanLoanIntegral(const Matrix& t, const Matrix& c, double x);

Matrix kroneckerProduct(const Matrix& a, const Matrix& b);

/// a (+) b = a (x) I + I (x) b. Under column-stacking vec,
/// (a (+) b) vec(V) = vec(b V + V a^T).
Matrix kroneckerSum(const Matrix& a, const Matrix& b);

/// Solves a x = b. Throws SingularMatrixError when `a` is singular to
/// tolerance and DimensionError on shape mismatch.
Matrix solve(const Matrix& a, const Matrix& b, const LinalgTolerances& tol = {});
Vector solve(const Matrix& a, const Vector& b, const LinalgTolerances& tol = {});

bool allFinite(const Matrix& m);

}  // namespace miph
