#pragma once

// Univariate phase-type (PH) and inhomogeneous phase-type (IPH) laws.

#include <cstddef>
#include <random>

#include "miph/linalg.hpp"

namespace miph {

using Rng = std::mt19937_64;

/// Transient block T of a Markov jump generator together with its exit-rate
/// vector t = -T e.
class SubIntensity {
 public:
  /// Validates the sign pattern of `t`; exit rates within 1e-12 below zero are
  /// snapped to zero.
  explicit SubIntensity(Matrix t);

  std::size_t dim() const { return static_cast<std::size_t>(t_.rows()); }
  const Matrix& matrix() const { return t_; }
  const Vector& exitRates() const { return exit_; }

  /// Coxian-structured sub-intensity from forward rates (length p-1) and
  /// exit rates (length p).
  static SubIntensity coxian(const Vector& forward, const Vector& exits);

 private:
  Matrix t_;
  Vector exit_;
};

enum class Structure { Coxian, General };

/// True when transition k -> s (0-based, s != k) is admissible.
bool admissibleTransition(Structure structure, std::size_t k, std::size_t s);

/// Matrix-Gompertz time transform y = g(x) = log(beta x + 1) / beta.
class GompertzTransform {
 public:
  explicit GompertzTransform(double beta);

  double beta() const { return beta_; }

  /// g^{-1}(y) = (e^{beta y} - 1) / beta. Returns +inf on overflow.
  double inverse(double y) const;
  /// g(x) = log(beta x + 1) / beta.
  double forward(double x) const;
  /// lambda(y) = d/dy g^{-1}(y) = e^{beta y}.
  double intensity(double y) const;

 private:
  double beta_;
};

/// Validates a probability vector (entries >= 0, sum 1 within 1e-12).
void checkProbabilityVector(const Vector& pi, std::size_t p);

// pi exp(T x) t for x >= 0; x = +inf gives 0.
double phDensity(const SubIntensity& sub, const Vector& pi, double x);
double phSurvival(const SubIntensity& sub, const Vector& pi, double x);

double iphDensity(const SubIntensity& sub, const Vector& pi, const GompertzTransform& g, double y);
double iphSurvival(const SubIntensity& sub, const Vector& pi, const GompertzTransform& g,
                   double y);

/// Per-start-state survival exp(T x) e and density exp(T x) t.
/// x = +inf yields zero vectors.
struct StateFunctions {
  Vector survival;
  Vector density;
};
StateFunctions stateFunctions(const SubIntensity& sub, double x);

/// Absorption time of the jump chain started in `startState` (0-based).
double samplePath(const SubIntensity& sub, std::size_t startState, Rng& rng);

/// Draws an index from a probability vector.
std::size_t sampleIndex(const Vector& probs, Rng& rng);

/// Mean absorption time from each start state, (-T)^{-1} e.
Vector meanAbsorptionTimes(const SubIntensity& sub);

}  // namespace miph
