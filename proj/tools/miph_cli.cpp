// Command-line front end: fit, eval, measures, simulate, beran.
// Talks to the library only through the C interface.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "miph/miph.h"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr double kTimeScale = 100.0;

struct Failure {
  int code;
  std::string message;
};

void check(miph_status status) {
  if (status == MIPH_OK) return;
  const int code = status == MIPH_ERR_INPUT ? kExitInput : kExitNumerical;
  throw Failure{code, miph_last_error()};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
};
using ModelHandle = Handle<miph_model, miph_model_free>;
using DataHandle = Handle<miph_data, miph_data_free>;
using ReportHandle = Handle<miph_fit_report, miph_fit_report_free>;

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

std::vector<double> parsePair(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw Failure{kExitInput, std::string(what) + ": '" + text + "' is not a number pair"};
    }
  }
  if (out.size() != 2) throw Failure{kExitInput, std::string(what) + " expects two comma-separated values"};
  return out;
}

// "lo:hi:n" -> n evenly spaced points.
std::vector<double> parseGrid(const std::string& text) {
  double lo = 0.0, hi = 0.0;
  int n = 0;
  char c1 = 0, c2 = 0;
  std::stringstream ss(text);
  if (!(ss >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1 || hi < lo)
    throw Failure{kExitInput, "grid '" + text + "' must look like lo:hi:n with lo <= hi, n >= 1"};
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out[std::size_t(k)] = n == 1 ? lo : lo + (hi - lo) * k / (n - 1);
  return out;
}

void warnAges(double a1, double a2) {
  for (double a : {a1, a2})
    if (a / kTimeScale < 0.0 || a / kTimeScale > 1.5)
      std::cerr << "warning: age " << a << " lies outside the fitted range [0, 150] years; "
                << "the regression is extrapolated\n";
}

// Writes to the named file, or stdout when the name is empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Failure{kExitInput, "cannot write '" + path + "'"};
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::vector<double> initialFor(const miph_model* model, double a1, double a2) {
  std::vector<double> pi(miph_model_states(model));
  check(miph_model_initial_vector(model, a1, a2, pi.data()));
  return pi;
}

struct FitArgs {
  std::string data, output = "model.json", trace, design = "couple", structure = "coxian";
  std::size_t p = 3, iterations = 1000, iStepEvery = 1;
  double tolerance = std::numeric_limits<double>::quiet_NaN();
  double beta0 = 1.0;
  bool freeze = false, coordinate = false;
};

int runFit(const FitArgs& a, std::uint64_t seed, unsigned threads) {
  miph_design design = MIPH_DESIGN_COUPLE;
  if (a.design == "intercept") design = MIPH_DESIGN_INTERCEPT;
  else if (a.design == "ages") design = MIPH_DESIGN_AGES;
  DataHandle data;
  check(miph_data_load_csv(a.data.c_str(), design, &data.ptr));

  miph_fit_options opt;
  miph_fit_options_default(&opt);
  opt.p = a.p;
  opt.structure = a.structure == "general" ? MIPH_STRUCTURE_GENERAL : MIPH_STRUCTURE_COXIAN;
  opt.max_iterations = a.iterations;
  opt.loglik_tolerance = a.tolerance;
  opt.seed = seed;
  opt.initial_beta = a.beta0;
  opt.freeze_betas = a.freeze;
  opt.istep_every = a.iStepEvery;
  opt.istep_coordinate = a.coordinate;
  opt.threads = threads;
  ReportHandle report;
  check(miph_fit(data.ptr, &opt, &report.ptr));
  ModelHandle model;
  check(miph_fit_report_model(report.ptr, &model.ptr));
  check(miph_model_save_json(model.ptr, a.output.c_str()));

  const std::size_t iters = miph_fit_report_iterations(report.ptr);
  if (!a.trace.empty()) {
    Output trace(a.trace);
    trace.stream() << "iteration,loglik\n";
    for (std::size_t k = 0; k < iters; ++k)
      trace.stream() << k + 1 << ',' << number(miph_fit_report_loglik(report.ptr, k)) << '\n';
  }
  for (std::size_t w = 0; w < miph_fit_report_warning_count(report.ptr); ++w)
    std::cerr << "warning: " << miph_fit_report_warning(report.ptr, w) << '\n';

  std::cout << "p," << miph_model_states(model.ptr) << '\n';
  for (std::size_t i = 0; i < miph_model_margins(model.ptr); ++i)
    std::cout << "beta" << i + 1 << ',' << number(miph_model_beta(model.ptr, i)) << '\n';
  std::cout << "iterations," << iters << '\n';
  std::cout << "converged," << miph_fit_report_converged(report.ptr) << '\n';
  std::cout << "loglik," << (iters ? number(miph_fit_report_loglik(report.ptr, iters - 1)) : "nan")
            << '\n';
  return 0;
}

struct EvalArgs {
  std::string model, ages = "63,63", grid, output;
  std::vector<std::string> points;
  bool years = false;
};

int runEval(const EvalArgs& a) {
  ModelHandle model;
  check(miph_model_load_json(a.model.c_str(), &model.ptr));
  if (miph_model_margins(model.ptr) != 2) throw Failure{kExitInput, "eval expects a bivariate model"};
  const auto ages = parsePair(a.ages, "--ages");
  warnAges(ages[0], ages[1]);
  const auto pi = initialFor(model.ptr, ages[0], ages[1]);
  const double unit = a.years ? kTimeScale : 1.0;

  std::vector<std::vector<double>> pts;
  for (const auto& s : a.points) pts.push_back(parsePair(s, "--point"));
  if (!a.grid.empty()) {
    const auto g = parseGrid(a.grid);
    for (double y1 : g)
      for (double y2 : g) pts.push_back({y1, y2});
  }
  if (pts.empty()) throw Failure{kExitInput, "eval needs --point or --grid"};

  Output out(a.output);
  out.stream() << "y1,y2,density,survival,cdf\n";
  for (const auto& pt : pts) {
    const double y[2] = {pt[0] / unit, pt[1] / unit};
    double f = 0.0, s = 0.0, c = 0.0;
    check(miph_joint_density(model.ptr, pi.data(), y, &f));
    check(miph_joint_survival(model.ptr, pi.data(), y, &s));
    check(miph_joint_cdf(model.ptr, pi.data(), y, &c));
    // Density per model time unit; convert to per year alongside the time axis.
    if (a.years) f /= unit * unit;
    out.stream() << number(pt[0]) << ',' << number(pt[1]) << ',' << number(f) << ',' << number(s)
                 << ',' << number(c) << '\n';
  }
  return 0;
}

struct MeasuresArgs {
  std::string model, ages = "63,63", grid = "0.01:0.30:30", crGrid = "0:29:30", output;
};

int runMeasures(const MeasuresArgs& a) {
  ModelHandle model;
  check(miph_model_load_json(a.model.c_str(), &model.ptr));
  if (miph_model_margins(model.ptr) != 2)
    throw Failure{kExitInput, "measures expects a bivariate model"};
  const auto ages = parsePair(a.ages, "--ages");
  warnAges(ages[0], ages[1]);
  const auto pi = initialFor(model.ptr, ages[0], ages[1]);

  double tau = 0.0, rho = 0.0;
  check(miph_kendall_tau(model.ptr, pi.data(), 0, 1, &tau));
  check(miph_spearman_rho(model.ptr, pi.data(), 0, 1, &rho));
  std::cout << "kendall_tau," << number(tau) << '\n';
  std::cout << "spearman_rho," << number(rho) << '\n';

  Output out(a.output);
  auto& os = out.stream();
  os << "curve,x1,x2,value\n";
  const auto grid = parseGrid(a.grid);
  for (double y1 : grid)
    for (double y2 : grid) {
      double v = 0.0;
      check(miph_psi1(model.ptr, pi.data(), y1, y2, &v));
      os << "psi1," << number(y1) << ',' << number(y2) << ',' << number(v) << '\n';
    }
  for (std::size_t target : {std::size_t{0}, std::size_t{1}}) {
    const std::string name = target == 0 ? "psi2_1" : "psi2_2";
    for (double y : grid) {
      double v = 0.0;
      check(miph_psi2(model.ptr, pi.data(), target, 1 - target, y, &v));
      os << name << ',' << number(y) << ",," << number(v) << '\n';
    }
  }
  // Cross-ratio grid is given in years (u * 100).
  for (double u : parseGrid(a.crGrid)) {
    double v = 0.0;
    check(miph_cross_ratio(model.ptr, pi.data(), u / kTimeScale, u / kTimeScale, &v));
    os << "cross_ratio," << number(u) << ',' << number(u) << ',' << number(v) << '\n';
  }
  return 0;
}

struct SimulateArgs {
  std::string model, agesCsv, output;
  std::vector<std::string> ages;
  std::size_t n = 1000;
  double censoring = 0.0;
};

int runSimulate(const SimulateArgs& a, std::uint64_t seed) {
  ModelHandle model;
  check(miph_model_load_json(a.model.c_str(), &model.ptr));
  std::vector<double> ages;
  for (const auto& s : a.ages) {
    const auto pr = parsePair(s, "--ages");
    ages.insert(ages.end(), pr.begin(), pr.end());
  }
  if (!a.agesCsv.empty()) {
    DataHandle src;
    check(miph_data_load_csv(a.agesCsv.c_str(), MIPH_DESIGN_INTERCEPT, &src.ptr));
    for (std::size_t m = 0; m < miph_data_rows(src.ptr); ++m) {
      double ag[2];
      check(miph_data_row(src.ptr, m, nullptr, nullptr, ag));
      ages.push_back(ag[0] * kTimeScale);
      ages.push_back(ag[1] * kTimeScale);
    }
  }
  if (ages.empty()) ages = {63.0, 63.0};
  for (std::size_t k = 0; k < ages.size(); k += 2) warnAges(ages[k], ages[k + 1]);

  DataHandle data;
  check(miph_simulate(model.ptr, ages.data(), ages.size() / 2, a.n, a.censoring, seed, &data.ptr));
  if (a.output.empty()) throw Failure{kExitInput, "simulate needs --output"};
  check(miph_data_save_csv(data.ptr, a.output.c_str()));
  return 0;
}

struct BeranArgs {
  std::string data, ages = "63,63", grid = "0:0.40:41", output;
  double bandwidth = 0.001;
  bool unscaled = false, years = false;
};

int runBeran(const BeranArgs& a, unsigned threads) {
  DataHandle data;
  check(miph_data_load_csv(a.data.c_str(), MIPH_DESIGN_INTERCEPT, &data.ptr));
  const auto ages = parsePair(a.ages, "--ages");
  const double band = a.unscaled ? a.bandwidth / kTimeScale : a.bandwidth;
  const double unit = a.years ? kTimeScale : 1.0;
  const auto grid = parseGrid(a.grid);
  std::vector<double> scaled(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) scaled[k] = grid[k] / unit;

  std::vector<double> s1(grid.size()), s2(grid.size());
  check(miph_beran_curve(data.ptr, 0, ages[0], ages[1], band, scaled.data(), scaled.size(),
                         threads, s1.data()));
  check(miph_beran_curve(data.ptr, 1, ages[0], ages[1], band, scaled.data(), scaled.size(),
                         threads, s2.data()));
  Output out(a.output);
  out.stream() << "t,survival1,survival2\n";
  for (std::size_t k = 0; k < grid.size(); ++k)
    out.stream() << number(grid[k]) << ',' << number(s1[k]) << ',' << number(s2[k]) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multivariate inhomogeneous phase-type models for joint lifetimes"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  FitArgs fitArgs;
  auto* fit = app.add_subcommand("fit", "Fit a model to a couples CSV");
  fit->add_option("data", fitArgs.data, "CSV with time1,time2,delta1,delta2,age1,age2")->required();
  fit->add_option("--output,-o", fitArgs.output, "Model JSON path")->capture_default_str();
  fit->add_option("--trace", fitArgs.trace, "Per-iteration log-likelihood CSV");
  fit->add_option("--p", fitArgs.p, "Number of phases")->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--structure", fitArgs.structure)->check(CLI::IsMember({"coxian", "general"}))->capture_default_str();
  fit->add_option("--design", fitArgs.design)->check(CLI::IsMember({"intercept", "ages", "couple"}))->capture_default_str();
  fit->add_option("--iterations", fitArgs.iterations, "Maximum iterations")->capture_default_str();
  fit->add_option("--tolerance", fitArgs.tolerance,
                  "Log-likelihood change that stops the fit (<= 0: run all iterations; default 1e-7 n)");
  fit->add_option("--beta0", fitArgs.beta0, "Initial Gompertz parameter")->capture_default_str();
  fit->add_flag("--freeze-betas", fitArgs.freeze, "Keep the Gompertz parameters at --beta0");
  fit->add_option("--istep-every", fitArgs.iStepEvery, "Run the beta search every k iterations")
      ->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_flag("--istep-coordinate", fitArgs.coordinate, "Search each beta separately");

  EvalArgs evalArgs;
  auto* eval = app.add_subcommand("eval", "Joint density, survival and CDF");
  eval->add_option("model", evalArgs.model)->required();
  eval->add_option("--ages", evalArgs.ages, "Entry ages in years, a1,a2")->capture_default_str();
  eval->add_option("--point", evalArgs.points, "Point y1,y2 (repeatable)");
  eval->add_option("--grid", evalArgs.grid, "Square grid lo:hi:n per axis");
  eval->add_flag("--years", evalArgs.years, "Points are in years rather than model units");
  eval->add_option("--output,-o", evalArgs.output, "CSV path (default stdout)");

  MeasuresArgs measuresArgs;
  auto* measures = app.add_subcommand("measures", "Dependence measures and curves");
  measures->add_option("model", measuresArgs.model)->required();
  measures->add_option("--ages", measuresArgs.ages, "Entry ages in years, a1,a2")->capture_default_str();
  measures->add_option("--grid", measuresArgs.grid, "Psi grid lo:hi:n in model units")->capture_default_str();
  measures->add_option("--cr-grid", measuresArgs.crGrid, "Cross-ratio grid in years")->capture_default_str();
  measures->add_option("--output,-o", measuresArgs.output, "Curve CSV path (default stdout)");

  SimulateArgs simArgs;
  auto* simulate = app.add_subcommand("simulate", "Simulate a censored couples data set");
  simulate->add_option("model", simArgs.model)->required();
  simulate->add_option("--ages", simArgs.ages, "Entry ages in years, a1,a2 (repeatable)");
  simulate->add_option("--ages-csv", simArgs.agesCsv, "Draw entry ages from the rows of this CSV");
  simulate->add_option("--n", simArgs.n, "Number of couples")->capture_default_str();
  simulate->add_option("--censoring", simArgs.censoring, "Target censored fraction per margin")
      ->check(CLI::Range(0.0, 0.999999))->capture_default_str();
  simulate->add_option("--output,-o", simArgs.output, "CSV path")->required();

  BeranArgs beranArgs;
  auto* beran = app.add_subcommand("beran", "Conditional Kaplan-Meier survival curves");
  beran->add_option("data", beranArgs.data)->required();
  beran->add_option("--ages", beranArgs.ages, "Query ages in years, a1,a2")->capture_default_str();
  beran->add_option("--bandwidth", beranArgs.bandwidth, "Kernel bandwidth")->capture_default_str();
  beran->add_flag("--bandwidth-unscaled", beranArgs.unscaled, "Bandwidth is in years rather than model units");
  beran->add_option("--grid", beranArgs.grid, "Time grid lo:hi:n")->capture_default_str();
  beran->add_flag("--years", beranArgs.years, "Grid is in years rather than model units");
  beran->add_option("--output,-o", beranArgs.output, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*fit) return runFit(fitArgs, seed, threads);
    if (*eval) return runEval(evalArgs);
    if (*measures) return runMeasures(measuresArgs);
    if (*simulate) return runSimulate(simArgs, seed);
    if (*beran) return runBeran(beranArgs, threads);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  }
  return 0;
}
