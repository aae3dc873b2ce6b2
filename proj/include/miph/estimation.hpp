#pragma once

// ERMI fitting: transform, E-step under right-censoring, multinomial
// regression for the initial vectors, closed-form M-step and the Gompertz
// parameter search.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "miph/linalg.hpp"
#include "miph/model.hpp"
#include "miph/phase_type.hpp"

namespace miph {

using IndicatorMatrix = Eigen::MatrixXi;

/// Right-censored multivariate sample in model time units.
struct ObservationSet {
  Matrix y;                  // n x d absorption times
  IndicatorMatrix delta;     // n x d, 1 = observed, 0 = right-censored
  Matrix covariates;         // n x g design matrix, first column 1
  CovariateDesign design = CovariateDesign::Intercept;
  Matrix ages;               // n x 2 entry ages (model units); empty when unknown

  std::size_t rows() const { return static_cast<std::size_t>(y.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(y.cols()); }
  std::size_t width() const { return static_cast<std::size_t>(covariates.cols()); }

  /// Throws InputError naming the first offending row.
  void validate(bool allowEmpty = false) const;
};

struct SufficientStats {
  Matrix b;                     // n x p, E[B_k^(m)]
  Matrix z;                     // d x p, E[Z_k^(i)]
  std::vector<Matrix> nTrans;   // d matrices p x p, E[N_ks^(i)] (zero diagonal)
  Matrix nExit;                 // d x p, E[N_k^(i)]
};

struct EStepResult {
  SufficientStats stats;
  // Rows whose likelihood fell under the 1e-300 floor and were left out.
  std::vector<std::size_t> excludedRows;
};

/// x[m, i] = g_i^{-1}(y[m, i]); NumericalError names the overflowing entry.
Matrix transformData(const Matrix& y, const std::vector<double>& betas);

EStepResult eStep(const Matrix& x, const IndicatorMatrix& delta, const Matrix& perObsPi,
                  const std::vector<SubIntensity>& subs, unsigned threads = 1);

struct RStepConfig {
  double gradientTolerance = 1e-8;
  double coefficientCap = 1e3;
  int maxIterations = 100;
};

struct RStepResult {
  RegressionCoefficients gamma;
  Matrix perObsPi;  // n x p
  bool hitCap = false;
  bool converged = false;
  int iterations = 0;
  double gradientNorm = 0.0;
};

/// Maximizes sum_m sum_k w[m,k] log softmax(gamma a_m)_k by damped Newton.
RStepResult rStep(const Matrix& weights, const Matrix& covariates,
                  const RegressionCoefficients& gammaInit, const RStepConfig& cfg = {});

struct MStepConfig {
  // Diagonal assigned to states with no occupation time or no outflow.
  double diagonalFloor = 1e-8;
};

struct MStepResult {
  std::vector<SubIntensity> subs;
  std::vector<std::string> warnings;
};

MStepResult mStep(const SufficientStats& stats, Structure structure,
                  const MStepConfig& cfg = {});

enum class IStepMode { Joint, Coordinate };

struct IStepConfig {
  IStepMode mode = IStepMode::Joint;
  double logBetaMin = -5.0;
  double logBetaMax = 7.0;
  double initialStep = 0.1;
  double xTolerance = 1e-7;
  int maxEvaluations = 400;
  unsigned threads = 1;
};

struct IStepResult {
  std::vector<double> betas;
  double logLik = 0.0;
  bool improved = false;
  int evaluations = 0;
};

/// Nelder-Mead over log(beta); returns betasInit unchanged unless the
/// observed log-likelihood improves.
IStepResult iStep(const ObservationSet& obs, const Matrix& perObsPi,
                  const std::vector<SubIntensity>& subs, const std::vector<double>& betasInit,
                  const IStepConfig& cfg = {});

/// Censoring-adjusted log-likelihood; -inf when some row has zero likelihood.
double logLikelihood(const ObservationSet& obs, const Matrix& perObsPi,
                     const std::vector<SubIntensity>& subs, const std::vector<double>& betas,
                     unsigned threads = 1);

/// Per-row initial vectors implied by a model for the observation covariates.
Matrix perObservationInitial(const MIPHModel& model, const ObservationSet& obs);

/// Observed log-likelihood; NumericalError names the first row with zero
/// likelihood.
double observedLogLik(const ObservationSet& obs, const MIPHModel& model, unsigned threads = 1);

struct FitConfig {
  std::size_t p = 3;
  Structure structure = Structure::Coxian;
  std::size_t maxIterations = 1000;
  // Stop when successive log-likelihoods differ by less than this. Unset
  // means 1e-7 * n; a value <= 0 runs all maxIterations.
  std::optional<double> logLikTolerance;
  std::uint64_t seed = 1;
  std::vector<double> initialBetas;  // empty: 1.0 per margin
  bool freezeBetas = false;
  std::size_t iStepEvery = 1;
  IStepConfig iStep;
  RStepConfig rStep;
  MStepConfig mStep;
  unsigned threads = 1;
};

struct FitReport {
  MIPHModel model;
  std::vector<double> logLikTrace;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

FitReport fit(const ObservationSet& obs, const FitConfig& config);

}  // namespace miph
