#include "miph/linalg.hpp"

#include <cmath>
#include <sstream>

#include "miph/error.hpp"

namespace miph {

namespace {

double norm1(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

// Pade numerator/denominator pieces: exp(A) ~ (V - U)^{-1} (V + U).
void padeLowOrder(const Matrix& a, const double* b, int degree, Matrix& u, Matrix& v) {
  const Eigen::Index n = a.rows();
  const Matrix id = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  Matrix oddPart = b[1] * id;
  Matrix evenPart = b[0] * id;
  Matrix power = id;
  for (int k = 2; k <= degree; k += 2) {
    power = power * a2;
    oddPart += b[k + 1] * power;
    evenPart += b[k] * power;
  }
  u = a * oddPart;
  v = evenPart;
}

void pade13(const Matrix& a, Matrix& u, Matrix& v) {
  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,       1323241920.0,
                                 40840800.0,          960960.0,            16380.0,
                                 182.0,               1.0};
  const Eigen::Index n = a.rows();
  const Matrix id = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix inner = b[13] * a6 + b[11] * a4 + b[9] * a2;
  u = a * (a6 * inner + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  const Matrix innerEven = b[12] * a6 + b[10] * a4 + b[8] * a2;
  v = a6 * innerEven + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
}

Matrix padeQuotient(const Matrix& u, const Matrix& v) {
  return (v - u).partialPivLu().solve(v + u);
}

}  // namespace

bool allFinite(const Matrix& m) { return m.allFinite(); }

Matrix expm(const Matrix& m, double scale) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << "expm: matrix must be square, got " << m.rows() << "x" << m.cols();
    throw DimensionError(os.str());
  }
  if (!std::isfinite(scale) || scale < 0.0) throw InputError("expm: scale must be finite and >= 0");
  if (!m.allFinite()) throw InputError("expm: non-finite matrix entry");

  const Eigen::Index n = m.rows();
  if (n == 0) return Matrix(0, 0);
  if (scale == 0.0) return Matrix::Identity(n, n);

  Matrix a = m * scale;
  if (!a.allFinite()) throw NumericalError("expm: m * scale overflows");
  const double norm = norm1(a);
  if (norm == 0.0) return Matrix::Identity(n, n);

  static constexpr double b3[] = {120.0, 60.0, 12.0, 1.0};
  static constexpr double b5[] = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
  static constexpr double b7[] = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                  25200.0,    1512.0,    56.0,      1.0};
  static constexpr double b9[] = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                                  30270240.0,    2162160.0,    110880.0,     3960.0,
                                  90.0,          1.0};
  // Backward-error bounds for each degree (Higham 2005).
  static constexpr double theta3 = 1.495585217958292e-2;
  static constexpr double theta5 = 2.539398330063230e-1;
  static constexpr double theta7 = 9.504178996162932e-1;
  static constexpr double theta9 = 2.097847961257068e0;
  static constexpr double theta13 = 5.371920351148152e0;

  Matrix u, v;
  if (norm <= theta3) {
    padeLowOrder(a, b3, 3, u, v);
    return padeQuotient(u, v);
  }
  if (norm <= theta5) {
    padeLowOrder(a, b5, 5, u, v);
    return padeQuotient(u, v);
  }
  if (norm <= theta7) {
    padeLowOrder(a, b7, 7, u, v);
    return padeQuotient(u, v);
  }
  if (norm <= theta9) {
    padeLowOrder(a, b9, 9, u, v);
    return padeQuotient(u, v);
  }

  int squarings = 0;
  if (norm > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm / theta13)));
  a = std::ldexp(1.0, -squarings) * a;
  pade13(a, u, v);
  Matrix result = padeQuotient(u, v);
  for (int k = 0; k < squarings; ++k) result = result * result;
  return result;
}

BlockIntegralResult vanLoanIntegral(const Matrix& t, const Matrix& c, double x) {
  if (t.rows() != t.cols() || c.rows() != c.cols() || t.rows() != c.rows()) {
    std::ostringstream os;
    os << "vanLoanIntegral: expected two square matrices of equal size, got " << t.rows() << "x"
       << t.cols() << " and " << c.rows() << "x" << c.cols();
    throw DimensionError(os.str());
  }
  const Eigen::Index p = t.rows();
  Matrix block = Matrix::Zero(2 * p, 2 * p);
  block.topLeftCorner(p, p) = t;
  block.topRightCorner(p, p) = c;
  block.bottomRightCorner(p, p) = t;
  const Matrix e = expm(block, x);
  return {e.topLeftCorner(p, p), e.topRightCorner(p, p)};
}

Matrix kroneckerProduct(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Matrix kroneckerSum(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols())
    throw DimensionError("kroneckerSum: both operands must be square");
  const Matrix ia = Matrix::Identity(a.rows(), a.rows());
  const Matrix ib = Matrix::Identity(b.rows(), b.rows());
  return kroneckerProduct(a, ib) + kroneckerProduct(ia, b);
}

Matrix solve(const Matrix& a, const Matrix& b, const LinalgTolerances& tol) {
  if (a.rows() != a.cols()) throw DimensionError("solve: coefficient matrix must be square");
  if (a.rows() != b.rows()) {
    std::ostringstream os;
    os << "solve: " << a.rows() << "x" << a.cols() << " system with " << b.rows()
       << "-row right-hand side";
    throw DimensionError(os.str());
  }
  if (!a.allFinite() || !b.allFinite()) throw InputError("solve: non-finite input");
  if (a.rows() == 0) return Matrix(0, b.cols());

  const Eigen::PartialPivLU<Matrix> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond >= tol.singularRcond)) {
    std::ostringstream os;
    os << "solve: matrix is singular to working precision (rcond " << rcond << ")";
    throw SingularMatrixError(os.str());
  }
  Matrix x = lu.solve(b);

  using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const LongMatrix al = a.cast<long double>();
  const LongMatrix bl = b.cast<long double>();
  for (int step = 0; step < tol.refinementSteps; ++step) {
    const LongMatrix residual = bl - al * x.cast<long double>();
    const Matrix r = residual.cast<double>();
    if (r.cwiseAbs().maxCoeff() == 0.0) break;
    x += lu.solve(r);
  }
  if (!x.allFinite()) throw SingularMatrixError("solve: solution is not finite");
  return x;
}

Vector solve(const Matrix& a, const Vector& b, const LinalgTolerances& tol) {
  const Matrix bm = b;
  return solve(a, bm, tol).col(0);
}

}  // namespace miph
