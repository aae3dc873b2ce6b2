// ERMI driver: transform, E, R, M and I steps repeated until the observed
// log-likelihood settles.

#include <cmath>
#include <random>
#include <sstream>

#include "miph/error.hpp"
#include "miph/estimation.hpp"

namespace miph {

namespace {

std::vector<SubIntensity> initialSubIntensities(const Matrix& x, const IndicatorMatrix& delta,
                                                std::size_t p, Structure structure, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.1, 2.0);
  const auto pp = static_cast<Eigen::Index>(p);
  const std::size_t reference = (p + 1) / 2 - 1;
  std::vector<SubIntensity> subs;
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    double sum = 0.0, sumAll = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index m = 0; m < x.rows(); ++m) {
      sumAll += x(m, i);
      if (delta(m, i) == 1) {
        sum += x(m, i);
        ++count;
      }
    }
    double target = count > 0 ? sum / double(count) : sumAll / double(x.rows());
    if (!(target > 0.0) || !std::isfinite(target)) target = 1.0;

    Matrix t = Matrix::Zero(pp, pp);
    for (Eigen::Index k = 0; k < pp; ++k) {
      double out = 0.0;
      for (Eigen::Index s = 0; s < pp; ++s) {
        if (!admissibleTransition(structure, std::size_t(k), std::size_t(s))) continue;
        t(k, s) = unif(rng);
        out += t(k, s);
      }
      out += unif(rng);  // exit rate
      t(k, k) = -out;
    }
    const double mean = meanAbsorptionTimes(SubIntensity(t))(Eigen::Index(reference));
    t *= mean / target;
    subs.emplace_back(std::move(t));
  }
  return subs;
}

MIPHModel assemble(const std::vector<SubIntensity>& subs, const std::vector<double>& betas,
                   const RegressionCoefficients& gamma, const Matrix& weights,
                   CovariateDesign design) {
  std::vector<Margin> margins;
  for (std::size_t i = 0; i < subs.size(); ++i)
    margins.push_back(Margin{subs[i], GompertzTransform(betas[i])});
  if (design == CovariateDesign::Intercept) {
    // Closed form: the weighted share of each start state.
    Vector share = weights.colwise().sum().transpose();
    if (!(share.sum() > 0.0)) share = Vector::Ones(share.size());
    return MIPHModel(std::move(margins), InitialVector::normalized(share), design);
  }
  return MIPHModel(std::move(margins), gamma, design);
}

}  // namespace

FitReport fit(const ObservationSet& obs, const FitConfig& config) {
  obs.validate();
  if (config.p < 1) throw InputError("fit: p must be at least 1");
  if (config.iStepEvery < 1) throw InputError("fit: iStepEvery must be at least 1");
  const std::size_t n = obs.rows();
  const std::size_t d = obs.dims();
  const auto p = static_cast<Eigen::Index>(config.p);
  const double tolerance = config.logLikTolerance.value_or(1e-7 * double(n));

  std::vector<double> betas = config.initialBetas;
  if (betas.empty()) betas.assign(d, 1.0);
  if (betas.size() != d) throw DimensionError("fit: one initial beta per margin required");
  for (double b : betas)
    if (!(b > 0.0) || !std::isfinite(b)) throw InputError("fit: initial betas must be positive");

  Rng rng(config.seed);
  std::vector<SubIntensity> subs =
      initialSubIntensities(transformData(obs.y, betas), obs.delta, config.p, config.structure, rng);
  RegressionCoefficients gamma = RegressionCoefficients::zeros(config.p, obs.width());
  Matrix perObsPi = Matrix::Constant(obs.y.rows(), p, 1.0 / double(p));
  Matrix weights = Matrix::Constant(obs.y.rows(), p, 1.0);

  FitReport report{assemble(subs, betas, gamma, weights, obs.design), {}, 0, false, {}};
  bool capWarned = false;
  double previous = -std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < config.maxIterations; ++iter) {
    auto tag = [&](const std::string& what) {
      std::ostringstream os;
      os << "iteration " << iter + 1 << ": " << what;
      return os.str();
    };
    try {
      const Matrix x = transformData(obs.y, betas);
      EStepResult e = eStep(x, obs.delta, perObsPi, subs, config.threads);
      if (!e.excludedRows.empty()) {
        std::ostringstream os;
        os << e.excludedRows.size() << " rows at the likelihood floor excluded";
        report.warnings.push_back(tag(os.str()));
      }
      weights = e.stats.b;

      if (obs.design == CovariateDesign::Intercept) {
        Vector share = weights.colwise().sum().transpose();
        share /= share.sum();
        for (Eigen::Index m = 0; m < perObsPi.rows(); ++m) perObsPi.row(m) = share.transpose();
      } else {
        RStepResult r = rStep(weights, obs.covariates, gamma, config.rStep);
        if (r.hitCap && !capWarned) {
          report.warnings.push_back(tag("regression coefficients reached the cap"));
          capWarned = true;
        }
        gamma = r.gamma;
        perObsPi = r.perObsPi;
      }

      MStepResult mres = mStep(e.stats, config.structure, config.mStep);
      for (const auto& w : mres.warnings) report.warnings.push_back(tag(w));
      subs = std::move(mres.subs);

      double ll;
      if (!config.freezeBetas && (iter + 1) % config.iStepEvery == 0) {
        IStepConfig icfg = config.iStep;
        icfg.threads = config.threads;
        IStepResult ires = iStep(obs, perObsPi, subs, betas, icfg);
        betas = ires.betas;
        ll = ires.logLik;
      } else {
        ll = logLikelihood(obs, perObsPi, subs, betas, config.threads);
      }
      if (!std::isfinite(ll)) throw NumericalError("observed log-likelihood is not finite");

      report.logLikTrace.push_back(ll);
      report.iterations = iter + 1;
      if (tolerance > 0.0 && std::abs(ll - previous) < tolerance) {
        report.converged = true;
        break;
      }
      previous = ll;
    } catch (const NumericalError& err) {
      throw NumericalError(tag(err.what()));
    } catch (const InputError& err) {
      throw InputError(tag(err.what()));
    }
  }

  report.model = assemble(subs, betas, gamma, weights, obs.design);
  return report;
}

}  // namespace miph
