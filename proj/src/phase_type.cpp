#include "miph/phase_type.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "miph/error.hpp"

namespace miph {

SubIntensity::SubIntensity(Matrix t) : t_(std::move(t)) {
  if (t_.rows() != t_.cols() || t_.rows() == 0)
    throw DimensionError("SubIntensity: matrix must be square and non-empty");
  if (!t_.allFinite()) throw InputError("SubIntensity: non-finite entry");
  const Eigen::Index p = t_.rows();
  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index s = 0; s < p; ++s) {
      if (s == k) continue;
      if (t_(k, s) < 0.0) {
        std::ostringstream os;
        os << "SubIntensity: negative off-diagonal rate at (" << k << "," << s << ")";
        throw InputError(os.str());
      }
    }
    if (!(t_(k, k) < 0.0)) {
      std::ostringstream os;
      os << "SubIntensity: diagonal entry " << k << " must be negative";
      throw InputError(os.str());
    }
  }
  exit_ = -(t_ * Vector::Ones(p));
  for (Eigen::Index k = 0; k < p; ++k) {
    const double slack = 1e-12 * std::max(1.0, std::abs(t_(k, k)));
    if (exit_(k) < -slack) {
      std::ostringstream os;
      os << "SubIntensity: row " << k << " sums to a positive value (exit rate " << exit_(k)
         << ")";
      throw InputError(os.str());
    }
    if (exit_(k) < 0.0) exit_(k) = 0.0;
  }
}

SubIntensity SubIntensity::coxian(const Vector& forward, const Vector& exits) {
  const Eigen::Index p = exits.size();
  if (p == 0 || forward.size() != p - 1)
    throw DimensionError("SubIntensity::coxian: need p exit rates and p-1 forward rates");
  Matrix t = Matrix::Zero(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double fwd = k + 1 < p ? forward(k) : 0.0;
    if (k + 1 < p) t(k, k + 1) = fwd;
    t(k, k) = -(fwd + exits(k));
  }
  return SubIntensity(std::move(t));
}

bool admissibleTransition(Structure structure, std::size_t k, std::size_t s) {
  if (k == s) return false;
  if (structure == Structure::Coxian) return s == k + 1;
  return true;
}

GompertzTransform::GompertzTransform(double beta) : beta_(beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    std::ostringstream os;
    os << "GompertzTransform: beta must be positive and finite, got " << beta;
    throw InputError(os.str());
  }
}

double GompertzTransform::inverse(double y) const {
  if (!(y >= 0.0)) throw InputError("GompertzTransform::inverse: negative time");
  return std::expm1(beta_ * y) / beta_;
}

double GompertzTransform::forward(double x) const {
  if (!(x >= 0.0)) throw InputError("GompertzTransform::forward: negative time");
  return std::log1p(beta_ * x) / beta_;
}

double GompertzTransform::intensity(double y) const { return std::exp(beta_ * y); }

void checkProbabilityVector(const Vector& pi, std::size_t p) {
  if (static_cast<std::size_t>(pi.size()) != p) {
    std::ostringstream os;
    os << "initial vector has length " << pi.size() << ", expected " << p;
    throw DimensionError(os.str());
  }
  if (!pi.allFinite() || (pi.array() < 0.0).any())
    throw InputError("initial vector entries must be finite and non-negative");
  if (std::abs(pi.sum() - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "initial vector must sum to 1 (sum " << pi.sum() << ")";
    throw InputError(os.str());
  }
}

StateFunctions stateFunctions(const SubIntensity& sub, double x) {
  const auto p = static_cast<Eigen::Index>(sub.dim());
  if (std::isinf(x) && x > 0) return {Vector::Zero(p), Vector::Zero(p)};
  if (!(x >= 0.0)) throw InputError("negative absorption time");
  const Matrix e = expm(sub.matrix(), x);
  return {e * Vector::Ones(p), e * sub.exitRates()};
}

double phDensity(const SubIntensity& sub, const Vector& pi, double x) {
  checkProbabilityVector(pi, sub.dim());
  return std::max(0.0, pi.dot(stateFunctions(sub, x).density));
}

double phSurvival(const SubIntensity& sub, const Vector& pi, double x) {
  checkProbabilityVector(pi, sub.dim());
  return std::clamp(pi.dot(stateFunctions(sub, x).survival), 0.0, 1.0);
}

double iphDensity(const SubIntensity& sub, const Vector& pi, const GompertzTransform& g,
                  double y) {
  const double x = g.inverse(y);
  const double f = phDensity(sub, pi, x);
  return f == 0.0 ? 0.0 : f * g.intensity(y);
}

double iphSurvival(const SubIntensity& sub, const Vector& pi, const GompertzTransform& g,
                   double y) {
  return phSurvival(sub, pi, g.inverse(y));
}

double samplePath(const SubIntensity& sub, std::size_t startState, Rng& rng) {
  const Matrix& t = sub.matrix();
  const std::size_t p = sub.dim();
  if (startState >= p) throw InputError("samplePath: start state out of range");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double elapsed = 0.0;
  std::size_t state = startState;
  for (;;) {
    const auto k = static_cast<Eigen::Index>(state);
    const double rate = -t(k, k);
    std::exponential_distribution<double> hold(rate);
    elapsed += hold(rng);
    double u = unif(rng) * rate;
    std::size_t next = p;  // p = absorbing
    for (std::size_t s = 0; s < p; ++s) {
      if (s == state) continue;
      const double r = t(k, static_cast<Eigen::Index>(s));
      if (u < r) {
        next = s;
        break;
      }
      u -= r;
    }
    if (next == p) return elapsed;
    state = next;
  }
}

std::size_t sampleIndex(const Vector& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  std::size_t last = 0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (probs(k) <= 0.0) continue;
    last = static_cast<std::size_t>(k);
    if (u < probs(k)) return last;
    u -= probs(k);
  }
  return last;
}

Vector meanAbsorptionTimes(const SubIntensity& sub) {
  const auto p = static_cast<Eigen::Index>(sub.dim());
  return solve(-sub.matrix(), Vector(Vector::Ones(p)));
}

}  // namespace miph
