// Weighted multinomial-logistic regression for the start-state probabilities.

#include <cmath>
#include <limits>
#include <sstream>

#include "miph/error.hpp"
#include "miph/estimation.hpp"

namespace miph {

namespace {

struct Evaluation {
  double objective = 0.0;
  Vector gradient;  // (p-1) * g, state-major
  Matrix probs;     // n x p
};

// Objective, gradient and fitted probabilities for free coefficients `theta`
// (rows 2..p of gamma).
Evaluation evaluate(const Matrix& weights, const Matrix& a, const Matrix& gamma, bool withGradient) {
  const Eigen::Index n = a.rows();
  const Eigen::Index p = gamma.rows();
  const Eigen::Index g = a.cols();
  Evaluation ev;
  ev.probs.resize(n, p);
  if (withGradient) ev.gradient = Vector::Zero((p - 1) * g);
  for (Eigen::Index m = 0; m < n; ++m) {
    Vector eta = gamma * a.row(m).transpose();
    const double top = eta.maxCoeff();
    eta.array() -= top;
    const Vector ex = eta.array().exp();
    const double norm = ex.sum();
    const double logNorm = std::log(norm);
    const Vector probs = ex / norm;
    ev.probs.row(m) = probs.transpose();
    const double total = weights.row(m).sum();
    for (Eigen::Index k = 0; k < p; ++k) {
      const double w = weights(m, k);
      if (w != 0.0) ev.objective += w * (eta(k) - logNorm);
    }
    if (withGradient) {
      for (Eigen::Index k = 1; k < p; ++k) {
        const double resid = weights(m, k) - total * probs(k);
        ev.gradient.segment((k - 1) * g, g) += resid * a.row(m).transpose();
      }
    }
  }
  return ev;
}

Matrix negativeHessian(const Matrix& weights, const Matrix& a, const Matrix& probs) {
  const Eigen::Index n = a.rows();
  const Eigen::Index p = probs.cols();
  const Eigen::Index g = a.cols();
  const Eigen::Index q = (p - 1) * g;
  Matrix h = Matrix::Zero(q, q);
  for (Eigen::Index m = 0; m < n; ++m) {
    const double total = weights.row(m).sum();
    if (total == 0.0) continue;
    const Matrix outer = a.row(m).transpose() * a.row(m);
    for (Eigen::Index k = 1; k < p; ++k) {
      for (Eigen::Index l = 1; l < p; ++l) {
        const double c = total * ((k == l ? probs(m, k) : 0.0) - probs(m, k) * probs(m, l));
        if (c != 0.0) h.block((k - 1) * g, (l - 1) * g, g, g) += c * outer;
      }
    }
  }
  return h;
}

Vector newtonDirection(const Matrix& h, const Vector& gradient) {
  const Eigen::Index q = h.rows();
  double ridge = 0.0;
  const double scale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
  for (int attempt = 0; attempt < 12; ++attempt) {
    const Matrix shifted = h + ridge * Matrix::Identity(q, q);
    Eigen::LDLT<Matrix> ldlt(shifted);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      const Vector dir = ldlt.solve(gradient);
      if (dir.allFinite() && dir.dot(gradient) > 0.0) return dir;
    }
    ridge = ridge == 0.0 ? 1e-12 * scale : ridge * 100.0;
  }
  return gradient;
}

void setFree(Matrix& gamma, const Vector& theta) {
  const Eigen::Index g = gamma.cols();
  for (Eigen::Index k = 1; k < gamma.rows(); ++k)
    gamma.row(k) = theta.segment((k - 1) * g, g).transpose();
}

Vector getFree(const Matrix& gamma) {
  const Eigen::Index g = gamma.cols();
  Vector theta((gamma.rows() - 1) * g);
  for (Eigen::Index k = 1; k < gamma.rows(); ++k)
    theta.segment((k - 1) * g, g) = gamma.row(k).transpose();
  return theta;
}

}  // namespace

RStepResult rStep(const Matrix& weights, const Matrix& covariates,
                  const RegressionCoefficients& gammaInit, const RStepConfig& cfg) {
  const Eigen::Index n = weights.rows();
  const Eigen::Index p = weights.cols();
  const Eigen::Index g = covariates.cols();
  if (covariates.rows() != n) throw DimensionError("rStep: weights and covariates differ in rows");
  if (static_cast<Eigen::Index>(gammaInit.states()) != p ||
      static_cast<Eigen::Index>(gammaInit.width()) != g)
    throw DimensionError("rStep: initial coefficients have the wrong shape");
  if (!weights.allFinite() || (weights.array() < 0.0).any())
    throw InputError("rStep: weights must be finite and non-negative");

  Matrix gamma = gammaInit.gamma();
  if (p == 1) {
    RStepResult out{RegressionCoefficients(gamma), Matrix::Ones(n, 1), false, true, 0, 0.0};
    return out;
  }

  Evaluation current = evaluate(weights, covariates, gamma, true);
  RStepResult out{RegressionCoefficients(gamma), current.probs, false, false, 0, 0.0};
  Vector theta = getFree(gamma);

  for (int iter = 0; iter < cfg.maxIterations; ++iter) {
    out.iterations = iter + 1;
    const double gradNorm = current.gradient.cwiseAbs().maxCoeff();
    const Matrix h = negativeHessian(weights, covariates, current.probs);
    const Vector dir = newtonDirection(h, current.gradient);
    const double stepNorm = dir.cwiseAbs().maxCoeff();

    if (gradNorm <= cfg.gradientTolerance) {
      if (stepNorm <= 1e-6 * (1.0 + theta.cwiseAbs().maxCoeff())) {
        out.converged = true;
        break;
      }
      // Flat direction with a large Newton step: the optimum lies at infinity
      // (a state that no observation supports). Walk to the coefficient cap.
      const double room = cfg.coefficientCap - theta.cwiseAbs().maxCoeff();
      if (room > 0.0) {
        Vector trial = theta + (room / stepNorm) * dir;
        trial = trial.cwiseMax(-cfg.coefficientCap).cwiseMin(cfg.coefficientCap);
        Matrix trialGamma = gamma;
        setFree(trialGamma, trial);
        Evaluation ev = evaluate(weights, covariates, trialGamma, true);
        if (ev.objective >= current.objective) {
          theta = trial;
          gamma = trialGamma;
          current = std::move(ev);
        }
      }
      out.hitCap = true;
      out.converged = true;
      break;
    }

    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      Vector trial = theta + t * dir;
      Matrix trialGamma = gamma;
      setFree(trialGamma, trial);
      Evaluation ev = evaluate(weights, covariates, trialGamma, true);
      if (std::isfinite(ev.objective) && ev.objective >= current.objective) {
        theta = trial;
        gamma = trialGamma;
        current = std::move(ev);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No ascent possible at working precision.
      out.converged = gradNorm <= std::sqrt(cfg.gradientTolerance);
      break;
    }
    if (theta.cwiseAbs().maxCoeff() > cfg.coefficientCap) {
      theta = theta.cwiseMax(-cfg.coefficientCap).cwiseMin(cfg.coefficientCap);
      setFree(gamma, theta);
      current = evaluate(weights, covariates, gamma, true);
      out.hitCap = true;
      break;
    }
  }

  out.gradientNorm = current.gradient.cwiseAbs().maxCoeff();
  if (out.gradientNorm <= cfg.gradientTolerance) out.converged = true;
  out.gamma = RegressionCoefficients(gamma);
  out.perObsPi = current.probs;
  return out;
}

}  // namespace miph
