#pragma once

// Multivariate inhomogeneous phase-type (mIPH) model: d margins sharing one
// start state, each with its own sub-intensity matrix and Gompertz transform.

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "miph/linalg.hpp"
#include "miph/phase_type.hpp"

namespace miph {

/// Probability vector of the shared start state.
class InitialVector {
 public:
  explicit InitialVector(Vector probs);
  /// Rescales non-negative weights to sum to one.
  static InitialVector normalized(Vector weights);
  static InitialVector uniform(std::size_t p);

  const Vector& probs() const { return probs_; }
  std::size_t size() const { return static_cast<std::size_t>(probs_.size()); }
  double operator[](std::size_t k) const { return probs_(static_cast<Eigen::Index>(k)); }

 private:
  Vector probs_;
};

/// How a covariate row is built from the two entry ages (already divided by
/// the time scale).
enum class CovariateDesign {
  Intercept,  // (1)
  Ages,       // (1, a1, a2)
  Couple,     // (1, a1, a2, a1 * a2)
};

std::size_t designWidth(CovariateDesign design);
RowVector designRow(CovariateDesign design, double age1, double age2);
const char* designName(CovariateDesign design);
CovariateDesign designFromName(const std::string& name);

/// Multinomial-logistic coefficients, one row per state. Row 0 is the
/// reference state and stays zero.
class RegressionCoefficients {
 public:
  explicit RegressionCoefficients(Matrix gamma);
  static RegressionCoefficients zeros(std::size_t p, std::size_t g);

  const Matrix& gamma() const { return gamma_; }
  std::size_t states() const { return static_cast<std::size_t>(gamma_.rows()); }
  std::size_t width() const { return static_cast<std::size_t>(gamma_.cols()); }

  /// Softmax of gamma * a with max subtraction.
  Vector probabilities(const RowVector& covariates) const;
  InitialVector initialVector(const RowVector& covariates) const;

 private:
  Matrix gamma_;
};

struct Margin {
  SubIntensity sub;
  GompertzTransform transform;
};

class MIPHModel {
 public:
  using Initial = std::variant<RegressionCoefficients, InitialVector>;

  MIPHModel(std::vector<Margin> margins, Initial initial,
            CovariateDesign design = CovariateDesign::Intercept);

  std::size_t states() const { return p_; }
  std::size_t dims() const { return margins_.size(); }
  const Margin& margin(std::size_t i) const { return margins_.at(i); }
  const std::vector<Margin>& margins() const { return margins_; }
  const Initial& initial() const { return initial_; }
  CovariateDesign design() const { return design_; }
  bool hasRegression() const { return std::holds_alternative<RegressionCoefficients>(initial_); }

  /// Start-state distribution for one covariate row (ignored when the model
  /// carries a fixed initial vector).
  InitialVector initialFor(const RowVector& covariates) const;
  /// Same, from entry ages in model time units.
  InitialVector initialForAges(double age1, double age2) const;

  /// Copy with margin `l` removed and a fixed initial vector.
  MIPHModel withoutMargin(std::size_t l, InitialVector initial) const;

 private:
  std::size_t p_ = 0;
  std::vector<Margin> margins_;
  Initial initial_;
  CovariateDesign design_;
};

/// Smallest survival/density value treated as non-zero in ratios.
inline constexpr double kUnderflowFloor = 1e-300;

double jointDensity(const MIPHModel& model, const InitialVector& pi, const Vector& y);
double jointSurvival(const MIPHModel& model, const InitialVector& pi, const Vector& y);
double jointCdf(const MIPHModel& model, const InitialVector& pi, const Vector& y);

double marginalSurvival(const MIPHModel& model, const InitialVector& pi, std::size_t i, double y);
double marginalDensity(const MIPHModel& model, const InitialVector& pi, std::size_t i, double y);

struct ConditionedModel {
  MIPHModel model;
  InitialVector initial;
};

/// Law of the remaining margins given Y_l >= y_l.
ConditionedModel conditionOnSurvival(const MIPHModel& model, const InitialVector& pi,
                                     std::size_t l, double yl);
/// Law of the remaining margins given Y_l = y_l.
ConditionedModel conditionOnValue(const MIPHModel& model, const InitialVector& pi, std::size_t l,
                                  double yl);

/// Closed-form Kendall's tau and Spearman's rho of margins k and l. Both are
/// computed on the untransformed PH representation; the monotone time
/// transforms leave the copula unchanged.
double kendallTau(const MIPHModel& model, const InitialVector& pi, std::size_t k, std::size_t l);
double spearmanRho(const MIPHModel& model, const InitialVector& pi, std::size_t k,
                   std::size_t l);

/// S(y1, y2) / (S1(y1) S2(y2)) for a bivariate model.
double psi1(const MIPHModel& model, const InitialVector& pi, double y1, double y2);

struct QuadratureConfig {
  double relativeTolerance = 1e-7;
  // Integration stops where the survival drops below this level.
  double truncation = 1e-12;
  unsigned maxIntervals = 2000;
};

/// E(Y_target | Y_given >= y) / E(Y_target).
double psi2(const MIPHModel& model, const InitialVector& pi, std::size_t target,
            std::size_t given, double y, const QuadratureConfig& cfg = {});

/// Cross-ratio S * d2S/dy1dy2 / (dS/dy1 * dS/dy2) with analytic derivatives.
double crossRatio(const MIPHModel& model, const InitialVector& pi, double y1, double y2);
inline double crossRatio(const MIPHModel& model, const InitialVector& pi, double u) {
  return crossRatio(model, pi, u, u);
}

struct SurvivalCondition {
  std::size_t margin;
  double threshold;
};

/// E(Y_i | Y_l >= y_l) (or E(Y_i) without a condition), by adaptive
/// quadrature of the conditional survival function.
double conditionalExpectation(const MIPHModel& model, const InitialVector& pi, std::size_t i,
                              std::optional<SurvivalCondition> condition = std::nullopt,
                              const QuadratureConfig& cfg = {});

/// n x d lifetimes: shared start state drawn from pi, independent paths per
/// margin, each mapped through its time transform.
Matrix sampleJoint(const MIPHModel& model, const InitialVector& pi, Rng& rng, std::size_t n);

}  // namespace miph
