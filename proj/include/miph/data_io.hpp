#pragma once

// Joint-lifetime CSV ingestion, model JSON serialization, the Beran
// conditional Kaplan-Meier estimator and synthetic couple generation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "miph/estimation.hpp"
#include "miph/model.hpp"

namespace miph {

/// Times and ages in the CSV are in years; the library works in years / 100.
inline constexpr double kTimeScale = 100.0;

/// Reads columns time1,time2,delta1,delta2,age1,age2 (any order, extra
/// columns ignored). InputError carries the 1-based file line.
ObservationSet readCsv(std::istream& in, CovariateDesign design = CovariateDesign::Couple);
ObservationSet loadCsv(const std::string& path, CovariateDesign design = CovariateDesign::Couple);

/// Writes the same schema, converting back to years, at 15 significant digits.
void writeCsv(std::ostream& out, const ObservationSet& obs);
void saveCsv(const std::string& path, const ObservationSet& obs);

std::string modelToJson(const MIPHModel& model);
MIPHModel modelFromJson(const std::string& text);
MIPHModel loadModel(const std::string& path);
void saveModel(const std::string& path, const MIPHModel& model);

struct BeranConfig {
  double bandwidth = 0.001;
  unsigned threads = 1;
};

/// Conditional Kaplan-Meier distribution function F(t | a) for one margin.
/// `covariates` holds the kernel coordinates per row (n x k) and `query` the
/// target point (length k). NumericalError when every kernel weight underflows.
double beranEstimator(const Vector& times, const Eigen::VectorXi& deltas, const Matrix& covariates,
                      const Vector& query, double bandwidth, double t);

/// F(t | a) at each grid point, sharing one sort and one set of weights.
Vector beranCurve(const Vector& times, const Eigen::VectorXi& deltas, const Matrix& covariates,
                  const Vector& query, const Vector& grid, const BeranConfig& cfg = {});

/// Entry ages (model units) for one synthetic couple.
using CovariateSampler = std::function<std::pair<double, double>(Rng&)>;

/// Draws n couples from `model`, censoring each margin with an independent
/// exponential time whose rate is tuned to the requested censored fraction.
ObservationSet generateSynthetic(const MIPHModel& model, const CovariateSampler& sampler,
                                 double censoringRate, std::size_t n, std::uint64_t seed);

/// Exponential rate c with mean(1 - exp(-c y)) = target over the given times.
double calibrateCensoringRate(const Vector& lifetimes, double target);

}  // namespace miph
