#include "miph/model.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "miph/error.hpp"

namespace miph {

// ---------------------------------------------------------------------------
// InitialVector / covariate design / regression coefficients

InitialVector::InitialVector(Vector probs) : probs_(std::move(probs)) {
  checkProbabilityVector(probs_, static_cast<std::size_t>(probs_.size()));
}

InitialVector InitialVector::normalized(Vector weights) {
  if (weights.size() == 0 || !weights.allFinite() || (weights.array() < 0.0).any())
    throw InputError("InitialVector::normalized: weights must be finite and non-negative");
  const double total = weights.sum();
  if (!(total > 0.0)) throw InputError("InitialVector::normalized: weights sum to zero");
  weights /= total;
  return InitialVector(std::move(weights));
}

InitialVector InitialVector::uniform(std::size_t p) {
  return InitialVector(Vector::Constant(static_cast<Eigen::Index>(p), 1.0 / double(p)));
}

std::size_t designWidth(CovariateDesign design) {
  switch (design) {
    case CovariateDesign::Intercept:
      return 1;
    case CovariateDesign::Ages:
      return 3;
    case CovariateDesign::Couple:
      return 4;
  }
  return 1;
}

RowVector designRow(CovariateDesign design, double age1, double age2) {
  RowVector row(static_cast<Eigen::Index>(designWidth(design)));
  row(0) = 1.0;
  if (design == CovariateDesign::Intercept) return row;
  row(1) = age1;
  row(2) = age2;
  if (design == CovariateDesign::Couple) row(3) = age1 * age2;
  return row;
}

const char* designName(CovariateDesign design) {
  switch (design) {
    case CovariateDesign::Intercept:
      return "intercept";
    case CovariateDesign::Ages:
      return "ages";
    case CovariateDesign::Couple:
      return "couple";
  }
  return "intercept";
}

CovariateDesign designFromName(const std::string& name) {
  if (name == "intercept") return CovariateDesign::Intercept;
  if (name == "ages") return CovariateDesign::Ages;
  if (name == "couple") return CovariateDesign::Couple;
  throw InputError("unknown covariate design '" + name + "'");
}

RegressionCoefficients::RegressionCoefficients(Matrix gamma) : gamma_(std::move(gamma)) {
  if (gamma_.rows() == 0 || gamma_.cols() == 0)
    throw DimensionError("RegressionCoefficients: empty coefficient matrix");
  if (!gamma_.allFinite()) throw InputError("RegressionCoefficients: non-finite coefficient");
  if (gamma_.row(0).cwiseAbs().maxCoeff() != 0.0)
    throw InputError("RegressionCoefficients: reference row (state 1) must be zero");
}

RegressionCoefficients RegressionCoefficients::zeros(std::size_t p, std::size_t g) {
  return RegressionCoefficients(
      Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(g)));
}

Vector RegressionCoefficients::probabilities(const RowVector& covariates) const {
  if (covariates.size() != gamma_.cols()) {
    std::ostringstream os;
    os << "covariate row has " << covariates.size() << " entries, coefficients expect "
       << gamma_.cols();
    throw DimensionError(os.str());
  }
  Vector eta = gamma_ * covariates.transpose();
  eta.array() -= eta.maxCoeff();
  Vector probs = eta.array().exp();
  probs /= probs.sum();
  return probs;
}

InitialVector RegressionCoefficients::initialVector(const RowVector& covariates) const {
  Vector probs = probabilities(covariates);
  // Re-normalize so the sum is 1 to the last bit the division allows.
  probs /= probs.sum();
  return InitialVector(std::move(probs));
}

// ---------------------------------------------------------------------------
// MIPHModel

MIPHModel::MIPHModel(std::vector<Margin> margins, Initial initial, CovariateDesign design)
    : margins_(std::move(margins)), initial_(std::move(initial)), design_(design) {
  if (margins_.empty()) throw DimensionError("MIPHModel: at least one margin required");
  p_ = margins_.front().sub.dim();
  for (const Margin& m : margins_)
    if (m.sub.dim() != p_) throw DimensionError("MIPHModel: margins differ in state count");
  if (const auto* reg = std::get_if<RegressionCoefficients>(&initial_)) {
    if (reg->states() != p_) throw DimensionError("MIPHModel: gamma row count differs from p");
    if (reg->width() != designWidth(design_))
      throw DimensionError("MIPHModel: gamma column count does not match the covariate design");
  } else {
    if (std::get<InitialVector>(initial_).size() != p_)
      throw DimensionError("MIPHModel: initial vector length differs from p");
  }
}

InitialVector MIPHModel::initialFor(const RowVector& covariates) const {
  if (const auto* reg = std::get_if<RegressionCoefficients>(&initial_))
    return reg->initialVector(covariates);
  return std::get<InitialVector>(initial_);
}

InitialVector MIPHModel::initialForAges(double age1, double age2) const {
  return initialFor(designRow(design_, age1, age2));
}

MIPHModel MIPHModel::withoutMargin(std::size_t l, InitialVector initial) const {
  if (l >= margins_.size()) throw InputError("withoutMargin: margin index out of range");
  if (margins_.size() < 2) throw DimensionError("withoutMargin: model has a single margin");
  std::vector<Margin> rest;
  rest.reserve(margins_.size() - 1);
  for (std::size_t i = 0; i < margins_.size(); ++i)
    if (i != l) rest.push_back(margins_[i]);
  return MIPHModel(std::move(rest), std::move(initial), CovariateDesign::Intercept);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

// Adaptive Gauss-Kronrod with global error control: the interval with the
// largest error estimate is bisected until the summed estimate meets the
// goal. Local goals would stall in the far tail, where values sit at the
// rounding floor.
template <class F>
double globalAdaptive(F f, double a, double b, double relTol, unsigned maxIntervals, double* error) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  struct Piece {
    double lo, hi, value, err;
    bool operator<(const Piece& o) const { return err < o.err; }
  };
  auto make = [&](double lo, double hi) {
    Piece p{lo, hi, 0.0, 0.0};
    p.value = GK::integrate(f, lo, hi, 0, 0.0, &p.err);
    return p;
  };
  std::priority_queue<Piece> pieces;
  Piece first = make(a, b);
  double total = first.value, totalErr = first.err;
  pieces.push(first);
  while (totalErr > relTol * std::abs(total) && pieces.size() < maxIntervals) {
    const Piece worst = pieces.top();
    pieces.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    const Piece left = make(worst.lo, mid), right = make(mid, worst.hi);
    total += left.value + right.value - worst.value;
    totalErr += left.err + right.err - worst.err;
    pieces.push(left);
    pieces.push(right);
  }
  // Re-sum to shed the drift of the running updates.
  total = totalErr = 0.0;
  for (; !pieces.empty(); pieces.pop()) {
    total += pieces.top().value;
    totalErr += pieces.top().err;
  }
  *error = totalErr;
  return total;
}

void checkPoint(const MIPHModel& model, const InitialVector& pi, const Vector& y) {
  if (static_cast<std::size_t>(y.size()) != model.dims()) {
    std::ostringstream os;
    os << "evaluation point has " << y.size() << " coordinates, model has " << model.dims()
       << " margins";
    throw DimensionError(os.str());
  }
  if (pi.size() != model.states()) throw DimensionError("initial vector length differs from p");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!(y(i) >= 0.0)) throw InputError("evaluation point must be non-negative");
}

void checkMargin(const MIPHModel& model, std::size_t i) {
  if (i >= model.dims()) throw InputError("margin index out of range");
}

// Survival vector exp(T g^{-1}(y)) e and density vector
// exp(T g^{-1}(y)) t lambda(y) for one margin.
StateFunctions transformedStateFunctions(const Margin& m, double y) {
  const double x = m.transform.inverse(y);
  StateFunctions sf = stateFunctions(m.sub, x);
  if (sf.density.cwiseAbs().maxCoeff() > 0.0) sf.density *= m.transform.intensity(y);
  return sf;
}

// (-(T (+) T))^{-1} (e (x) t) reshaped so that entry (i, j) is
// P(path started in j is absorbed before an independent path started in i).
Matrix pairwiseOrdering(const SubIntensity& sub) {
  const auto p = static_cast<Eigen::Index>(sub.dim());
  const Matrix lhs = -kroneckerSum(sub.matrix(), sub.matrix());
  const Matrix rhs = kroneckerProduct(Matrix(Vector::Ones(p)), Matrix(sub.exitRates()));
  const Vector v = solve(lhs, Vector(rhs.col(0)));
  Matrix out(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) out(i, j) = v(i * p + j);
  return out;
}

}  // namespace

double jointDensity(const MIPHModel& model, const InitialVector& pi, const Vector& y) {
  checkPoint(model, pi, y);
  Vector prod = pi.probs();
  for (std::size_t i = 0; i < model.dims(); ++i)
    prod.array() *= transformedStateFunctions(model.margin(i), y(Eigen::Index(i))).density.array();
  return std::max(0.0, prod.sum());
}

double jointSurvival(const MIPHModel& model, const InitialVector& pi, const Vector& y) {
  checkPoint(model, pi, y);
  Vector prod = pi.probs();
  for (std::size_t i = 0; i < model.dims(); ++i)
    prod.array() *= transformedStateFunctions(model.margin(i), y(Eigen::Index(i))).survival.array();
  return std::clamp(prod.sum(), 0.0, 1.0);
}

double jointCdf(const MIPHModel& model, const InitialVector& pi, const Vector& y) {
  checkPoint(model, pi, y);
  Vector prod = pi.probs();
  for (std::size_t i = 0; i < model.dims(); ++i) {
    const Vector s = transformedStateFunctions(model.margin(i), y(Eigen::Index(i))).survival;
    prod.array() *= (1.0 - s.array());
  }
  return std::clamp(prod.sum(), 0.0, 1.0);
}

double marginalSurvival(const MIPHModel& model, const InitialVector& pi, std::size_t i,
                        double y) {
  checkMargin(model, i);
  const Margin& m = model.margin(i);
  return iphSurvival(m.sub, pi.probs(), m.transform, y);
}

double marginalDensity(const MIPHModel& model, const InitialVector& pi, std::size_t i,
                       double y) {
  checkMargin(model, i);
  const Margin& m = model.margin(i);
  return iphDensity(m.sub, pi.probs(), m.transform, y);
}

ConditionedModel conditionOnSurvival(const MIPHModel& model, const InitialVector& pi,
                                     std::size_t l, double yl) {
  checkMargin(model, l);
  if (model.dims() < 2) throw DimensionError("conditionOnSurvival: model needs d >= 2");
  if (!(yl >= 0.0)) throw InputError("conditionOnSurvival: negative threshold");
  const Vector s = transformedStateFunctions(model.margin(l), yl).survival;
  const Vector weights = pi.probs().cwiseProduct(s);
  const double total = weights.sum();
  if (!(total > kUnderflowFloor)) {
    std::ostringstream os;
    os << "conditionOnSurvival: survival of margin " << l << " at " << yl << " underflows";
    throw NumericalError(os.str());
  }
  InitialVector nu = InitialVector::normalized(weights);
  return {model.withoutMargin(l, nu), nu};
}

ConditionedModel conditionOnValue(const MIPHModel& model, const InitialVector& pi, std::size_t l,
                                  double yl) {
  checkMargin(model, l);
  if (model.dims() < 2) throw DimensionError("conditionOnValue: model needs d >= 2");
  if (!(yl >= 0.0)) throw InputError("conditionOnValue: negative conditioning value");
  const Vector f = transformedStateFunctions(model.margin(l), yl).density;
  const Vector weights = pi.probs().cwiseProduct(f);
  const double total = weights.sum();
  if (!(total > kUnderflowFloor)) {
    std::ostringstream os;
    os << "conditionOnValue: marginal density of margin " << l << " at " << yl << " is zero";
    throw NumericalError(os.str());
  }
  InitialVector alpha = InitialVector::normalized(weights);
  return {model.withoutMargin(l, alpha), alpha};
}

double kendallTau(const MIPHModel& model, const InitialVector& pi, std::size_t k,
                  std::size_t l) {
  checkMargin(model, k);
  checkMargin(model, l);
  if (pi.size() != model.states()) throw DimensionError("initial vector length differs from p");
  const Matrix ak = pairwiseOrdering(model.margin(k).sub);
  const Matrix al = pairwiseOrdering(model.margin(l).sub);
  const Vector& w = pi.probs();
  const Matrix weights = w * w.transpose();
  const double tau = 4.0 * (weights.array() * ak.array() * al.array()).sum() - 1.0;
  return std::clamp(tau, -1.0, 1.0);
}

double spearmanRho(const MIPHModel& model, const InitialVector& pi, std::size_t k,
                   std::size_t l) {
  checkMargin(model, k);
  checkMargin(model, l);
  if (pi.size() != model.states()) throw DimensionError("initial vector length differs from p");
  const Vector& w = pi.probs();
  // Entry j: P(path from j absorbed before a path started from pi).
  const RowVector bk = w.transpose() * pairwiseOrdering(model.margin(k).sub);
  const RowVector bl = w.transpose() * pairwiseOrdering(model.margin(l).sub);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) acc += w(j) * (1.0 - bk(j)) * (1.0 - bl(j));
  return std::clamp(12.0 * acc - 3.0, -1.0, 1.0);
}

double psi1(const MIPHModel& model, const InitialVector& pi, double y1, double y2) {
  if (model.dims() != 2) throw DimensionError("psi1: bivariate model required");
  const double s1 = marginalSurvival(model, pi, 0, y1);
  const double s2 = marginalSurvival(model, pi, 1, y2);
  if (!(s1 > kUnderflowFloor) || !(s2 > kUnderflowFloor))
    throw NumericalError("psi1: marginal survival underflows");
  Vector y(2);
  y << y1, y2;
  checkPoint(model, pi, y);
  Vector prod = pi.probs();
  for (std::size_t i = 0; i < 2; ++i)
    prod.array() *= transformedStateFunctions(model.margin(i), y(Eigen::Index(i))).survival.array();
  return prod.sum() / (s1 * s2);
}

double crossRatio(const MIPHModel& model, const InitialVector& pi, double y1, double y2) {
  if (model.dims() != 2) throw DimensionError("crossRatio: bivariate model required");
  Vector y(2);
  y << y1, y2;
  checkPoint(model, pi, y);
  const StateFunctions a = transformedStateFunctions(model.margin(0), y1);
  const StateFunctions b = transformedStateFunctions(model.margin(1), y2);
  const Vector& w = pi.probs();
  const double surv = w.dot(a.survival.cwiseProduct(b.survival));
  const double mixed = w.dot(a.density.cwiseProduct(b.density));
  // -dS/dy1 and -dS/dy2; the signs cancel in the ratio.
  const double d1 = w.dot(a.density.cwiseProduct(b.survival));
  const double d2 = w.dot(a.survival.cwiseProduct(b.density));
  if (!(d1 > kUnderflowFloor) || !(d2 > kUnderflowFloor) || !(surv > kUnderflowFloor)) {
    std::ostringstream os;
    os << "crossRatio: derivative or survival underflows at (" << y1 << ", " << y2 << ")";
    throw NumericalError(os.str());
  }
  return surv * mixed / (d1 * d2);
}

double conditionalExpectation(const MIPHModel& model, const InitialVector& pi, std::size_t i,
                              std::optional<SurvivalCondition> condition,
                              const QuadratureConfig& cfg) {
  checkMargin(model, i);
  if (pi.size() != model.states()) throw DimensionError("initial vector length differs from p");
  InitialVector start = pi;
  if (condition) {
    if (condition->margin == i) throw InputError("conditionalExpectation: conditioning on itself");
    start = conditionOnSurvival(model, pi, condition->margin, condition->threshold).initial;
  }
  const Margin& m = model.margin(i);
  auto survival = [&](double y) {
    return std::clamp(start.probs().dot(transformedStateFunctions(m, y).survival), 0.0, 1.0);
  };

  // Bracket the support: double the horizon until survival is negligible.
  double upper = 1e-3;
  int doublings = 0;
  while (survival(upper) >= cfg.truncation) {
    upper *= 2.0;
    if (++doublings > 200 || !std::isfinite(upper))
      throw NumericalError("conditionalExpectation: survival does not decay");
  }

  double totalError = 0.0;
  const double total =
      globalAdaptive(survival, 0.0, upper, cfg.relativeTolerance, cfg.maxIntervals, &totalError);
  if (!std::isfinite(total) || totalError > cfg.relativeTolerance * std::abs(total)) {
    std::ostringstream os;
    os << "conditionalExpectation: quadrature did not converge (estimate " << total
       << ", error " << totalError << ")";
    throw NumericalError(os.str());
  }
  return total;
}

double psi2(const MIPHModel& model, const InitialVector& pi, std::size_t target,
            std::size_t given, double y, const QuadratureConfig& cfg) {
  const double base = conditionalExpectation(model, pi, target, std::nullopt, cfg);
  if (!(base > kUnderflowFloor)) throw NumericalError("psi2: unconditional mean underflows");
  if (y == 0.0) return 1.0;
  const double cond = conditionalExpectation(model, pi, target, SurvivalCondition{given, y}, cfg);
  return cond / base;
}

Matrix sampleJoint(const MIPHModel& model, const InitialVector& pi, Rng& rng, std::size_t n) {
  if (pi.size() != model.states()) throw DimensionError("initial vector length differs from p");
  const std::size_t d = model.dims();
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t start = sampleIndex(pi.probs(), rng);
    for (std::size_t i = 0; i < d; ++i) {
      const Margin& m = model.margin(i);
      out(Eigen::Index(r), Eigen::Index(i)) = m.transform.forward(samplePath(m.sub, start, rng));
    }
  }
  return out;
}

}  // namespace miph
