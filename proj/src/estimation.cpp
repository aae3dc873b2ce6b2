#include "miph/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <limits>
#include <sstream>

#include "miph/error.hpp"
#include "nelder_mead.hpp"
#include "parallel.hpp"

namespace miph {

namespace {

constexpr double kRowFloor = 1e-300;
// Rows are reduced in fixed-size blocks, in block order, so sums do not
// depend on the thread count.
constexpr std::size_t kBlockRows = 64;

// exp(T x) t and exp(T x) e through one eigendecomposition of T, for the
// many likelihood evaluations of the beta search where T is fixed. Only
// built when the eigenvector basis is well conditioned.
class SpectralMargin {
 public:
  static std::optional<SpectralMargin> build(const SubIntensity& sub) {
    Eigen::EigenSolver<Matrix> es(sub.matrix());
    if (es.info() != Eigen::Success) return std::nullopt;
    const Eigen::MatrixXcd v = es.eigenvectors();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(v);
    const auto sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 0.0) || sv(0) / sv(sv.size() - 1) > kMaxCondition) return std::nullopt;
    SpectralMargin out;
    out.lambda_ = es.eigenvalues();
    out.v_ = v;
    const Eigen::MatrixXcd vinv = v.inverse();
    out.cExit_ = vinv * sub.exitRates().cast<std::complex<double>>();
    out.cOnes_ = vinv * Eigen::VectorXcd::Ones(v.rows());
    return out;
  }

  // Writes exp(T x) t (observed) or exp(T x) e (censored) into `out`.
  void factor(double x, bool observed, Vector& out) const {
    const Eigen::VectorXcd& c = observed ? cExit_ : cOnes_;
    Eigen::VectorXcd w(c.size());
    for (Eigen::Index j = 0; j < c.size(); ++j) w(j) = std::exp(lambda_(j) * x) * c(j);
    out = (v_ * w).real().cwiseMax(0.0);
  }

 private:
  static constexpr double kMaxCondition = 1e6;
  Eigen::VectorXcd lambda_;
  Eigen::MatrixXcd v_;
  Eigen::VectorXcd cExit_, cOnes_;
};

// Log-likelihood with spectral factors; same conventions as logLikelihood.
double spectralLogLikelihood(const ObservationSet& obs, const Matrix& perObsPi,
                             const std::vector<SpectralMargin>& margins,
                             const std::vector<double>& betas, unsigned threads) {
  const std::size_t n = obs.rows();
  const std::size_t d = obs.dims();
  std::vector<GompertzTransform> transforms;
  for (double b : betas) transforms.emplace_back(b);
  std::vector<double> rows(n);
  detail::parallelFor(n, threads, [&](std::size_t begin, std::size_t end) {
    Vector f;
    for (std::size_t mu = begin; mu < end; ++mu) {
      const auto m = static_cast<Eigen::Index>(mu);
      Vector joint = perObsPi.row(m).transpose();
      double logLambda = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double yv = obs.y(m, ii);
        const double xv = transforms[i].inverse(yv);
        if (!std::isfinite(xv)) {
          joint.setZero();
          break;
        }
        const bool observed = obs.delta(m, ii) == 1;
        margins[i].factor(xv, observed, f);
        joint.array() *= f.array();
        if (observed) logLambda += betas[i] * yv;
      }
      const double lik = joint.sum();
      rows[mu] = lik > 0.0 ? std::log(lik) + logLambda : -std::numeric_limits<double>::infinity();
    }
  });
  double total = 0.0;
  for (double v : rows) total += v;
  return total;
}

}  // namespace

void ObservationSet::validate(bool allowEmpty) const {
  const auto n = y.rows();
  if (n == 0 && !allowEmpty) throw InputError("observation set is empty");
  if (y.cols() == 0) throw DimensionError("observation set has no margins");
  if (delta.rows() != n || delta.cols() != y.cols())
    throw DimensionError("censoring indicators do not match the time matrix");
  if (covariates.rows() != n || covariates.cols() == 0)
    throw DimensionError("covariate matrix does not match the time matrix");
  if (static_cast<std::size_t>(covariates.cols()) != designWidth(design))
    throw DimensionError("covariate matrix width does not match its design");
  if (ages.size() != 0 && (ages.rows() != n || ages.cols() != 2))
    throw DimensionError("age matrix must be n x 2");
  for (Eigen::Index m = 0; m < n; ++m) {
    for (Eigen::Index i = 0; i < y.cols(); ++i) {
      if (!std::isfinite(y(m, i)) || y(m, i) < 0.0) {
        std::ostringstream os;
        os << "row " << m << ": time " << i << " must be finite and non-negative";
        throw InputError(os.str());
      }
      if (delta(m, i) != 0 && delta(m, i) != 1) {
        std::ostringstream os;
        os << "row " << m << ": censoring indicator must be 0 or 1";
        throw InputError(os.str());
      }
    }
    if (!covariates.row(m).allFinite()) {
      std::ostringstream os;
      os << "row " << m << ": non-finite covariate";
      throw InputError(os.str());
    }
  }
}

Matrix transformData(const Matrix& y, const std::vector<double>& betas) {
  if (betas.size() != static_cast<std::size_t>(y.cols()))
    throw DimensionError("transformData: one beta per margin required");
  std::vector<GompertzTransform> transforms;
  transforms.reserve(betas.size());
  for (double b : betas) transforms.emplace_back(b);
  Matrix x(y.rows(), y.cols());
  for (Eigen::Index m = 0; m < y.rows(); ++m) {
    for (Eigen::Index i = 0; i < y.cols(); ++i) {
      const double v = transforms[static_cast<std::size_t>(i)].inverse(y(m, i));
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "transformData: g^{-1} overflows at row " << m << ", margin " << i
           << " (beta " << betas[static_cast<std::size_t>(i)] << ", y " << y(m, i) << ")";
        throw NumericalError(os.str());
      }
      x(m, i) = v;
    }
  }
  return x;
}

EStepResult eStep(const Matrix& x, const IndicatorMatrix& delta, const Matrix& perObsPi,
                  const std::vector<SubIntensity>& subs, unsigned threads) {
  const auto n = static_cast<std::size_t>(x.rows());
  const std::size_t d = subs.size();
  if (d == 0 || static_cast<std::size_t>(x.cols()) != d)
    throw DimensionError("eStep: one sub-intensity per margin required");
  const auto p = static_cast<Eigen::Index>(subs.front().dim());
  for (const auto& s : subs)
    if (static_cast<Eigen::Index>(s.dim()) != p)
      throw DimensionError("eStep: margins differ in state count");
  if (delta.rows() != x.rows() || delta.cols() != x.cols())
    throw DimensionError("eStep: indicator matrix shape differs from data");
  if (perObsPi.rows() != x.rows() || perObsPi.cols() != p)
    throw DimensionError("eStep: initial-vector matrix must be n x p");

  struct Partial {
    Matrix z;
    std::vector<Matrix> nTrans;
    Matrix nExit;
    std::vector<std::size_t> excluded;
  };
  const std::size_t blocks = (n + kBlockRows - 1) / kBlockRows;
  std::vector<Partial> partials(blocks);
  Matrix b = Matrix::Zero(x.rows(), p);
  const Vector ones = Vector::Ones(p);

  detail::parallelFor(blocks, threads, [&](std::size_t blockBegin, std::size_t blockEnd) {
    std::vector<Matrix> expT(d);
    Matrix factors(p, static_cast<Eigen::Index>(d));
    for (std::size_t blk = blockBegin; blk < blockEnd; ++blk) {
      Partial& part = partials[blk];
      part.z = Matrix::Zero(static_cast<Eigen::Index>(d), p);
      part.nTrans.assign(d, Matrix::Zero(p, p));
      part.nExit = Matrix::Zero(static_cast<Eigen::Index>(d), p);
      const std::size_t rowEnd = std::min(n, (blk + 1) * kBlockRows);
      for (std::size_t mu = blk * kBlockRows; mu < rowEnd; ++mu) {
        const auto m = static_cast<Eigen::Index>(mu);
        for (std::size_t i = 0; i < d; ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          expT[i] = expm(subs[i].matrix(), x(m, ii));
          factors.col(ii) = delta(m, ii) == 1 ? Vector(expT[i] * subs[i].exitRates())
                                               : Vector(expT[i] * ones);
        }
        const Vector pi = perObsPi.row(m).transpose();
        Vector joint = pi;
        for (std::size_t i = 0; i < d; ++i) joint.array() *= factors.col(Eigen::Index(i)).array();
        const double denom = joint.sum();
        if (!(denom >= kRowFloor) || !std::isfinite(denom)) {
          part.excluded.push_back(mu);
          continue;
        }
        b.row(m) = (double(d) / denom) * joint.transpose();

        for (std::size_t i = 0; i < d; ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          const SubIntensity& sub = subs[i];
          // a_j = pi_j prod_{l != i} factor_lj / denom
          Vector a = pi / denom;
          for (std::size_t l = 0; l < d; ++l)
            if (l != i) a.array() *= factors.col(Eigen::Index(l)).array();
          const bool observed = delta(m, ii) == 1;
          const Vector& lead = observed ? sub.exitRates() : ones;
          const Matrix c = lead * a.transpose();
          const Matrix u = vanLoanIntegral(sub.matrix(), c, x(m, ii)).upperRight;
          part.z.row(ii) += u.diagonal().transpose();
          const Matrix& t = sub.matrix();
          for (Eigen::Index k = 0; k < p; ++k)
            for (Eigen::Index s = 0; s < p; ++s)
              if (s != k && t(k, s) != 0.0) part.nTrans[i](k, s) += t(k, s) * u(s, k);
          if (observed) {
            const RowVector reach = a.transpose() * expT[i];
            part.nExit.row(ii) += reach.cwiseProduct(sub.exitRates().transpose());
          }
        }
      }
    }
  });

  EStepResult out;
  out.stats.b = std::move(b);
  out.stats.z = Matrix::Zero(static_cast<Eigen::Index>(d), p);
  out.stats.nTrans.assign(d, Matrix::Zero(p, p));
  out.stats.nExit = Matrix::Zero(static_cast<Eigen::Index>(d), p);
  for (const Partial& part : partials) {
    out.stats.z += part.z;
    out.stats.nExit += part.nExit;
    for (std::size_t i = 0; i < d; ++i) out.stats.nTrans[i] += part.nTrans[i];
    out.excludedRows.insert(out.excludedRows.end(), part.excluded.begin(), part.excluded.end());
  }
  if (n > 0 && out.excludedRows.size() == n)
    throw NumericalError("eStep: every observation has zero likelihood");
  return out;
}

MStepResult mStep(const SufficientStats& stats, Structure structure, const MStepConfig& cfg) {
  const auto d = static_cast<std::size_t>(stats.z.rows());
  const Eigen::Index p = stats.z.cols();
  if (stats.nTrans.size() != d || stats.nExit.rows() != stats.z.rows() || stats.nExit.cols() != p)
    throw DimensionError("mStep: inconsistent sufficient statistics");
  MStepResult out;
  for (std::size_t i = 0; i < d; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    Matrix t = Matrix::Zero(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
      const double occupancy = stats.z(ii, k);
      double outflow = 0.0;
      if (occupancy > kRowFloor && std::isfinite(occupancy)) {
        for (Eigen::Index s = 0; s < p; ++s) {
          if (!admissibleTransition(structure, std::size_t(k), std::size_t(s))) continue;
          const double rate = std::max(0.0, stats.nTrans[i](k, s)) / occupancy;
          t(k, s) = rate;
          outflow += rate;
        }
        outflow += std::max(0.0, stats.nExit(ii, k)) / occupancy;
      } else {
        std::ostringstream os;
        os << "margin " << i << ", state " << k << ": no expected occupation time; rates zeroed";
        out.warnings.push_back(os.str());
      }
      if (!(outflow > 0.0)) outflow = cfg.diagonalFloor;
      t(k, k) = -outflow;
    }
    out.subs.emplace_back(std::move(t));
  }
  return out;
}

double logLikelihood(const ObservationSet& obs, const Matrix& perObsPi,
                     const std::vector<SubIntensity>& subs, const std::vector<double>& betas,
                     unsigned threads) {
  const std::size_t n = obs.rows();
  const std::size_t d = obs.dims();
  if (subs.size() != d || betas.size() != d)
    throw DimensionError("logLikelihood: one sub-intensity and beta per margin required");
  const auto p = static_cast<Eigen::Index>(subs.front().dim());
  if (perObsPi.rows() != obs.y.rows() || perObsPi.cols() != p)
    throw DimensionError("logLikelihood: initial-vector matrix must be n x p");
  std::vector<GompertzTransform> transforms;
  for (double b : betas) transforms.emplace_back(b);

  std::vector<double> rows(n);
  const Vector ones = Vector::Ones(p);
  detail::parallelFor(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t mu = begin; mu < end; ++mu) {
      const auto m = static_cast<Eigen::Index>(mu);
      Vector joint = perObsPi.row(m).transpose();
      double logLambda = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double yv = obs.y(m, ii);
        const double xv = transforms[i].inverse(yv);
        if (!std::isfinite(xv)) {
          joint.setZero();
          break;
        }
        const Matrix e = expm(subs[i].matrix(), xv);
        if (obs.delta(m, ii) == 1) {
          joint.array() *= (e * subs[i].exitRates()).array();
          logLambda += betas[i] * yv;
        } else {
          joint.array() *= (e * ones).array();
        }
      }
      const double lik = joint.sum();
      rows[mu] = lik > 0.0 ? std::log(lik) + logLambda : -std::numeric_limits<double>::infinity();
    }
  });
  double total = 0.0;
  for (double v : rows) total += v;
  return total;
}

Matrix perObservationInitial(const MIPHModel& model, const ObservationSet& obs) {
  const auto p = static_cast<Eigen::Index>(model.states());
  Matrix pi(obs.y.rows(), p);
  if (!model.hasRegression()) {
    const Vector fixed = std::get<InitialVector>(model.initial()).probs();
    for (Eigen::Index m = 0; m < pi.rows(); ++m) pi.row(m) = fixed.transpose();
    return pi;
  }
  const auto& reg = std::get<RegressionCoefficients>(model.initial());
  if (reg.width() != obs.width())
    throw DimensionError("model covariate design does not match the observation set");
  for (Eigen::Index m = 0; m < pi.rows(); ++m)
    pi.row(m) = reg.probabilities(obs.covariates.row(m)).transpose();
  return pi;
}

double observedLogLik(const ObservationSet& obs, const MIPHModel& model, unsigned threads) {
  obs.validate();
  if (obs.dims() != model.dims())
    throw DimensionError("observedLogLik: model and data differ in margin count");
  const Matrix pi = perObservationInitial(model, obs);
  std::vector<SubIntensity> subs;
  std::vector<double> betas;
  for (const Margin& m : model.margins()) {
    subs.push_back(m.sub);
    betas.push_back(m.transform.beta());
  }
  const double total = logLikelihood(obs, pi, subs, betas, threads);
  if (!std::isfinite(total)) {
    // Locate the offending row for the diagnostic.
    for (std::size_t mu = 0; mu < obs.rows(); ++mu) {
      ObservationSet one;
      const auto m = static_cast<Eigen::Index>(mu);
      one.y = obs.y.row(m);
      one.delta = obs.delta.row(m);
      one.covariates = obs.covariates.row(m);
      one.design = obs.design;
      const Matrix onePi = pi.row(m);
      if (!std::isfinite(logLikelihood(one, onePi, subs, betas, 1))) {
        std::ostringstream os;
        os << "observedLogLik: row " << mu << " has zero likelihood under the model";
        throw NumericalError(os.str());
      }
    }
    throw NumericalError("observedLogLik: non-finite log-likelihood");
  }
  return total;
}

IStepResult iStep(const ObservationSet& obs, const Matrix& perObsPi,
                  const std::vector<SubIntensity>& subs, const std::vector<double>& betasInit,
                  const IStepConfig& cfg) {
  const std::size_t d = obs.dims();
  if (betasInit.size() != d) throw DimensionError("iStep: one beta per margin required");
  for (double b : betasInit)
    if (!(b > 0.0)) throw InputError("iStep: initial betas must be positive");

  auto clampLog = [&](double v) { return std::clamp(v, cfg.logBetaMin, cfg.logBetaMax); };
  auto toBetas = [&](const std::vector<double>& logBeta) {
    std::vector<double> betas(d);
    for (std::size_t i = 0; i < d; ++i) betas[i] = std::exp(clampLog(logBeta[i]));
    return betas;
  };
  auto exact = [&](const std::vector<double>& logBeta) {
    return logLikelihood(obs, perObsPi, subs, toBetas(logBeta), cfg.threads);
  };

  // The search runs on spectral factors when every margin admits them; the
  // start and the final candidate are always scored exactly.
  std::vector<SpectralMargin> spectral;
  for (const SubIntensity& sub : subs) {
    auto sm = SpectralMargin::build(sub);
    if (!sm) {
      spectral.clear();
      break;
    }
    spectral.push_back(std::move(*sm));
  }
  auto objective = [&](const std::vector<double>& logBeta) {
    if (spectral.size() != d) return exact(logBeta);
    return spectralLogLikelihood(obs, perObsPi, spectral, toBetas(logBeta), cfg.threads);
  };

  std::vector<double> current(d);
  for (std::size_t i = 0; i < d; ++i) current[i] = std::log(betasInit[i]);
  IStepResult out;
  const double startValue = exact(current);
  out.evaluations = 1;

  std::vector<double> best = current;
  double bestValue = spectral.size() == d ? objective(current) : startValue;
  auto run = [&](const std::vector<std::size_t>& coords) {
    Vector start(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t c = 0; c < coords.size(); ++c) start(Eigen::Index(c)) = best[coords[c]];
    auto sub = [&](const Vector& v) {
      std::vector<double> trial = best;
      for (std::size_t c = 0; c < coords.size(); ++c) trial[coords[c]] = clampLog(v(Eigen::Index(c)));
      return objective(trial);
    };
    const auto res = detail::nelderMeadMaximize(sub, start, cfg.initialStep, cfg.xTolerance,
                                                cfg.maxEvaluations);
    out.evaluations += res.evaluations;
    if (res.value > bestValue) {
      bestValue = res.value;
      for (std::size_t c = 0; c < coords.size(); ++c) best[coords[c]] = clampLog(res.x(Eigen::Index(c)));
    }
  };

  if (cfg.mode == IStepMode::Joint) {
    std::vector<std::size_t> all(d);
    for (std::size_t i = 0; i < d; ++i) all[i] = i;
    run(all);
  } else {
    for (std::size_t i = 0; i < d; ++i) run({i});
  }

  if (!std::isfinite(bestValue) && !std::isfinite(startValue))
    throw NumericalError("iStep: log-likelihood is not finite at any probed beta");
  const double finalValue = best == current ? startValue : exact(best);
  out.improved = finalValue > startValue;
  if (out.improved) {
    out.betas = toBetas(best);
    out.logLik = finalValue;
  } else {
    out.betas = betasInit;
    out.logLik = startValue;
  }
  return out;
}

}  // namespace miph
