// extern "C" surface over the C++ core. Exceptions never cross this boundary;
// each entry point maps them to a status code and a per-thread message.

#include "miph/miph.h"

#include <cmath>
#include <exception>
#include <limits>
#include <new>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "miph/data_io.hpp"
#include "miph/error.hpp"
#include "miph/estimation.hpp"
#include "miph/model.hpp"

struct miph_model {
  miph::MIPHModel model;
};

struct miph_data {
  miph::ObservationSet obs;
};

struct miph_fit_report {
  miph::FitReport report;
};

namespace {

thread_local std::string lastError;

template <class Body>
miph_status guarded(Body&& body) {
  try {
    body();
    lastError.clear();
    return MIPH_OK;
  } catch (const miph::InputError& e) {
    lastError = e.what();
    return MIPH_ERR_INPUT;
  } catch (const miph::NumericalError& e) {
    lastError = e.what();
    return MIPH_ERR_NUMERICAL;
  } catch (const std::bad_alloc&) {
    lastError = "out of memory";
    return MIPH_ERR_INTERNAL;
  } catch (const std::exception& e) {
    lastError = e.what();
    return MIPH_ERR_INTERNAL;
  } catch (...) {
    lastError = "unknown error";
    return MIPH_ERR_INTERNAL;
  }
}

void require(const void* ptr, const char* what) {
  if (ptr == nullptr) throw miph::InputError(std::string(what) + " must not be NULL");
}

miph::CovariateDesign toDesign(miph_design design) {
  switch (design) {
    case MIPH_DESIGN_INTERCEPT:
      return miph::CovariateDesign::Intercept;
    case MIPH_DESIGN_AGES:
      return miph::CovariateDesign::Ages;
    case MIPH_DESIGN_COUPLE:
      return miph::CovariateDesign::Couple;
  }
  throw miph::InputError("unknown covariate design");
}

miph::InitialVector initialVector(const miph_model* model, const double* pi) {
  require(model, "model");
  require(pi, "initial vector");
  const auto p = static_cast<Eigen::Index>(model->model.states());
  return miph::InitialVector(Eigen::Map<const miph::Vector>(pi, p));
}

miph::Vector point(const miph_model* model, const double* y) {
  require(y, "point");
  return Eigen::Map<const miph::Vector>(y, static_cast<Eigen::Index>(model->model.dims()));
}

}  // namespace

extern "C" {

const char* miph_last_error(void) { return lastError.c_str(); }

miph_status miph_data_load_csv(const char* path, miph_design design, miph_data** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output handle");
    *out = nullptr;
    *out = new miph_data{miph::loadCsv(path, toDesign(design))};
  });
}

miph_status miph_data_save_csv(const miph_data* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    miph::saveCsv(path, data->obs);
  });
}

void miph_data_free(miph_data* data) { delete data; }

size_t miph_data_rows(const miph_data* data) { return data ? data->obs.rows() : 0; }

miph_status miph_data_row(const miph_data* data, size_t m, double times[2], int deltas[2],
                          double ages[2]) {
  return guarded([&] {
    require(data, "data");
    if (m >= data->obs.rows()) throw miph::InputError("row index out of range");
    const auto r = static_cast<Eigen::Index>(m);
    for (Eigen::Index i = 0; i < 2; ++i) {
      if (times) times[i] = data->obs.y(r, i);
      if (deltas) deltas[i] = data->obs.delta(r, i);
      if (ages) ages[i] = data->obs.ages.size() ? data->obs.ages(r, i) : 0.0;
    }
  });
}

miph_status miph_model_create(size_t p, size_t d, const double* t_matrices, const double* betas,
                              miph_design design, const double* gamma, const double* pi,
                              miph_model** out) {
  return guarded([&] {
    require(t_matrices, "sub-intensity matrices");
    require(betas, "betas");
    require(out, "output handle");
    *out = nullptr;
    if (p == 0 || d == 0) throw miph::InputError("p and d must be positive");
    const auto pp = static_cast<Eigen::Index>(p);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    std::vector<miph::Margin> margins;
    for (size_t i = 0; i < d; ++i) {
      miph::Matrix t = Eigen::Map<const RowMajor>(t_matrices + i * p * p, pp, pp);
      margins.push_back(miph::Margin{miph::SubIntensity(t), miph::GompertzTransform(betas[i])});
    }
    const miph::CovariateDesign des = toDesign(design);
    if (gamma != nullptr) {
      const auto g = static_cast<Eigen::Index>(miph::designWidth(des));
      miph::Matrix gm = Eigen::Map<const RowMajor>(gamma, pp, g);
      *out = new miph_model{miph::MIPHModel(std::move(margins), miph::RegressionCoefficients(gm), des)};
    } else {
      require(pi, "initial vector");
      miph::InitialVector iv(Eigen::Map<const miph::Vector>(pi, pp));
      *out = new miph_model{miph::MIPHModel(std::move(margins), iv, des)};
    }
  });
}

miph_status miph_model_load_json(const char* path, miph_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output handle");
    *out = nullptr;
    *out = new miph_model{miph::loadModel(path)};
  });
}

miph_status miph_model_save_json(const miph_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    miph::saveModel(path, model->model);
  });
}

void miph_model_free(miph_model* model) { delete model; }

size_t miph_model_states(const miph_model* model) { return model ? model->model.states() : 0; }

size_t miph_model_margins(const miph_model* model) { return model ? model->model.dims() : 0; }

double miph_model_beta(const miph_model* model, size_t margin) {
  if (!model || margin >= model->model.dims()) return std::numeric_limits<double>::quiet_NaN();
  return model->model.margin(margin).transform.beta();
}

miph_status miph_model_initial_vector(const miph_model* model, double age1_years,
                                      double age2_years, double* pi_out) {
  return guarded([&] {
    require(model, "model");
    require(pi_out, "output vector");
    const miph::InitialVector pi = model->model.initialForAges(age1_years / miph::kTimeScale,
                                                               age2_years / miph::kTimeScale);
    for (size_t k = 0; k < pi.size(); ++k) pi_out[k] = pi[k];
  });
}

miph_status miph_joint_density(const miph_model* model, const double* pi, const double* y,
                               double* out) {
  return guarded([&] {
    require(out, "output");
    const auto iv = initialVector(model, pi);
    *out = miph::jointDensity(model->model, iv, point(model, y));
  });
}

miph_status miph_joint_survival(const miph_model* model, const double* pi, const double* y,
                                double* out) {
  return guarded([&] {
    require(out, "output");
    const auto iv = initialVector(model, pi);
    *out = miph::jointSurvival(model->model, iv, point(model, y));
  });
}

miph_status miph_joint_cdf(const miph_model* model, const double* pi, const double* y,
                           double* out) {
  return guarded([&] {
    require(out, "output");
    const auto iv = initialVector(model, pi);
    *out = miph::jointCdf(model->model, iv, point(model, y));
  });
}

miph_status miph_kendall_tau(const miph_model* model, const double* pi, size_t k, size_t l,
                             double* out) {
  return guarded([&] {
    require(out, "output");
    *out = miph::kendallTau(model->model, initialVector(model, pi), k, l);
  });
}

miph_status miph_spearman_rho(const miph_model* model, const double* pi, size_t k, size_t l,
                              double* out) {
  return guarded([&] {
    require(out, "output");
    *out = miph::spearmanRho(model->model, initialVector(model, pi), k, l);
  });
}

miph_status miph_psi1(const miph_model* model, const double* pi, double y1, double y2,
                      double* out) {
  return guarded([&] {
    require(out, "output");
    *out = miph::psi1(model->model, initialVector(model, pi), y1, y2);
  });
}

miph_status miph_psi2(const miph_model* model, const double* pi, size_t target, size_t given,
                      double y, double* out) {
  return guarded([&] {
    require(out, "output");
    *out = miph::psi2(model->model, initialVector(model, pi), target, given, y);
  });
}

miph_status miph_cross_ratio(const miph_model* model, const double* pi, double y1, double y2,
                             double* out) {
  return guarded([&] {
    require(out, "output");
    *out = miph::crossRatio(model->model, initialVector(model, pi), y1, y2);
  });
}

miph_status miph_conditional_expectation(const miph_model* model, const double* pi, size_t i,
                                         long given, double threshold, double* out) {
  return guarded([&] {
    require(out, "output");
    std::optional<miph::SurvivalCondition> cond;
    if (given >= 0) cond = miph::SurvivalCondition{static_cast<std::size_t>(given), threshold};
    *out = miph::conditionalExpectation(model->model, initialVector(model, pi), i, cond);
  });
}

miph_status miph_simulate(const miph_model* model, const double* ages_years, size_t n_ages,
                          size_t n, double censoring_rate, uint64_t seed, miph_data** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "output handle");
    *out = nullptr;
    if (n_ages == 0 || ages_years == nullptr) throw miph::InputError("at least one age pair is required");
    miph::CovariateSampler sampler = [&](miph::Rng& rng) {
      std::uniform_int_distribution<size_t> pick(0, n_ages - 1);
      const size_t r = n_ages == 1 ? 0 : pick(rng);
      return std::make_pair(ages_years[2 * r] / miph::kTimeScale,
                            ages_years[2 * r + 1] / miph::kTimeScale);
    };
    *out = new miph_data{miph::generateSynthetic(model->model, sampler, censoring_rate, n, seed)};
  });
}

void miph_fit_options_default(miph_fit_options* options) {
  if (!options) return;
  options->p = 3;
  options->structure = MIPH_STRUCTURE_COXIAN;
  options->max_iterations = 1000;
  options->loglik_tolerance = std::numeric_limits<double>::quiet_NaN();
  options->seed = 1;
  options->initial_beta = 1.0;
  options->freeze_betas = 0;
  options->istep_every = 1;
  options->istep_coordinate = 0;
  options->threads = 1;
}

miph_status miph_fit(const miph_data* data, const miph_fit_options* options,
                     miph_fit_report** out) {
  return guarded([&] {
    require(data, "data");
    require(options, "options");
    require(out, "output handle");
    *out = nullptr;
    miph::FitConfig cfg;
    cfg.p = options->p;
    cfg.structure = options->structure == MIPH_STRUCTURE_GENERAL ? miph::Structure::General
                                                                  : miph::Structure::Coxian;
    cfg.maxIterations = options->max_iterations;
    if (!std::isnan(options->loglik_tolerance)) cfg.logLikTolerance = options->loglik_tolerance;
    cfg.seed = options->seed;
    cfg.initialBetas.assign(data->obs.dims(), options->initial_beta);
    cfg.freezeBetas = options->freeze_betas != 0;
    cfg.iStepEvery = options->istep_every;
    cfg.iStep.mode = options->istep_coordinate ? miph::IStepMode::Coordinate : miph::IStepMode::Joint;
    cfg.threads = options->threads == 0 ? 1 : options->threads;
    *out = new miph_fit_report{miph::fit(data->obs, cfg)};
  });
}

void miph_fit_report_free(miph_fit_report* report) { delete report; }

size_t miph_fit_report_iterations(const miph_fit_report* report) {
  return report ? report->report.iterations : 0;
}

int miph_fit_report_converged(const miph_fit_report* report) {
  return report && report->report.converged ? 1 : 0;
}

double miph_fit_report_loglik(const miph_fit_report* report, size_t iteration) {
  if (!report || iteration >= report->report.logLikTrace.size())
    return std::numeric_limits<double>::quiet_NaN();
  return report->report.logLikTrace[iteration];
}

size_t miph_fit_report_warning_count(const miph_fit_report* report) {
  return report ? report->report.warnings.size() : 0;
}

const char* miph_fit_report_warning(const miph_fit_report* report, size_t index) {
  if (!report || index >= report->report.warnings.size()) return nullptr;
  return report->report.warnings[index].c_str();
}

miph_status miph_fit_report_model(const miph_fit_report* report, miph_model** out) {
  return guarded([&] {
    require(report, "report");
    require(out, "output handle");
    *out = new miph_model{report->report.model};
  });
}

miph_status miph_observed_loglik(const miph_model* model, const miph_data* data, unsigned threads,
                                 double* out) {
  return guarded([&] {
    require(model, "model");
    require(data, "data");
    require(out, "output");
    *out = miph::observedLogLik(data->obs, model->model, threads == 0 ? 1 : threads);
  });
}

miph_status miph_beran_curve(const miph_data* data, size_t margin, double age1_years,
                             double age2_years, double bandwidth, const double* grid,
                             size_t n_grid, unsigned threads, double* survival_out) {
  return guarded([&] {
    require(data, "data");
    require(grid, "grid");
    require(survival_out, "output");
    const auto& obs = data->obs;
    if (margin >= obs.dims()) throw miph::InputError("margin index out of range");
    if (obs.ages.rows() != obs.y.rows()) throw miph::InputError("data set carries no entry ages");
    miph::Vector query(2);
    query << age1_years / miph::kTimeScale, age2_years / miph::kTimeScale;
    miph::BeranConfig cfg;
    cfg.bandwidth = bandwidth;
    cfg.threads = threads == 0 ? 1 : threads;
    const auto m = static_cast<Eigen::Index>(margin);
    const miph::Vector cdf =
        miph::beranCurve(obs.y.col(m), obs.delta.col(m), obs.ages, query,
                         Eigen::Map<const miph::Vector>(grid, static_cast<Eigen::Index>(n_grid)), cfg);
    for (size_t q = 0; q < n_grid; ++q) survival_out[q] = 1.0 - cdf(static_cast<Eigen::Index>(q));
  });
}

}  // extern "C"
