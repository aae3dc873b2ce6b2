#include "miph/data_io.hpp"

#include <algorithm>
#include <array>
#include <cfloat>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "miph/error.hpp"
#include "parallel.hpp"

namespace miph {

namespace {

const char* const kColumns[] = {"time1", "time2", "delta1", "delta2", "age1", "age2"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> splitFields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string lineError(std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << "line " << line << ": " << what;
  return os.str();
}

double parseNumber(const std::string& cell, std::size_t line, const char* column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  const auto res = std::from_chars(first, last, v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
    throw InputError(lineError(line, std::string("column ") + column + ": '" + cell +
                                         "' is not a finite number"));
  return v;
}

void writeNumber(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  out << buf;
}

Matrix jsonMatrix(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw InputError(std::string("model JSON: '") + what + "' must be a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(std::size_t(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw InputError(std::string("model JSON: '") + what + "' rows differ in length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(std::size_t(c)).get<double>();
  }
  return m;
}

nlohmann::json matrixJson(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

// Sort order for the product-limit sum: by time, events before censorings,
// then original position.
std::vector<std::size_t> productLimitOrder(const Vector& times, const Eigen::VectorXi& deltas) {
  std::vector<std::size_t> order(static_cast<std::size_t>(times.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ia = Eigen::Index(a), ib = Eigen::Index(b);
    if (times(ia) != times(ib)) return times(ia) < times(ib);
    return deltas(ia) > deltas(ib);
  });
  return order;
}

Vector kernelWeights(const Matrix& covariates, const Vector& query, double bandwidth) {
  const Eigen::Index n = covariates.rows();
  const auto k = double(covariates.cols());
  Vector logK(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const double dist2 = ((query.transpose() - covariates.row(m)) / bandwidth).squaredNorm();
    logK(m) = -0.5 * dist2 - 0.5 * k * std::log(2.0 * M_PI);
  }
  const double top = n > 0 ? logK.maxCoeff() : 0.0;
  if (n > 0 && !(top >= std::log(DBL_MIN))) {
    std::ostringstream os;
    os << "Beran estimator: every kernel weight underflows (query too far from the data "
          "for bandwidth "
       << bandwidth << ")";
    throw NumericalError(os.str());
  }
  return (logK.array() - top).exp();
}

void checkBeranInput(const Vector& times, const Eigen::VectorXi& deltas, const Matrix& covariates,
                     const Vector& query, double bandwidth) {
  if (deltas.size() != times.size() || covariates.rows() != times.size())
    throw DimensionError("Beran estimator: times, indicators and covariates differ in length");
  if (query.size() != covariates.cols())
    throw DimensionError("Beran estimator: query length differs from covariate width");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw InputError("Beran estimator: bandwidth must be positive");
  for (Eigen::Index m = 0; m < times.size(); ++m) {
    if (!std::isfinite(times(m))) throw InputError("Beran estimator: non-finite time");
    if (deltas(m) != 0 && deltas(m) != 1)
      throw InputError("Beran estimator: indicators must be 0 or 1");
  }
}

}  // namespace

ObservationSet readCsv(std::istream& in, CovariateDesign design) {
  std::string line;
  std::size_t lineNo = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!trim(line).empty()) {
      header = splitFields(line);
      break;
    }
  }
  if (header.empty()) throw InputError("CSV input is empty (header row expected)");
  if (header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

  int index[6];
  for (int c = 0; c < 6; ++c) {
    const auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end())
      throw InputError(lineError(lineNo, std::string("missing column '") + kColumns[c] + "'"));
    index[c] = int(it - header.begin());
  }

  std::vector<std::array<double, 6>> rows;
  while (std::getline(in, line)) {
    ++lineNo;
    if (trim(line).empty()) continue;
    const auto cells = splitFields(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << "expected " << header.size() << " fields, found " << cells.size();
      throw InputError(lineError(lineNo, os.str()));
    }
    std::array<double, 6> r{};
    for (int c = 0; c < 6; ++c) r[c] = parseNumber(cells[std::size_t(index[c])], lineNo, kColumns[c]);
    for (int c : {0, 1})
      if (r[c] < 0.0) throw InputError(lineError(lineNo, std::string(kColumns[c]) + " is negative"));
    for (int c : {2, 3})
      if (r[c] != 0.0 && r[c] != 1.0)
        throw InputError(lineError(lineNo, std::string(kColumns[c]) + " must be 0 or 1"));
    for (int c : {4, 5})
      if (r[c] < 0.0) throw InputError(lineError(lineNo, std::string(kColumns[c]) + " is negative"));
    rows.push_back(r);
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  ObservationSet obs;
  obs.design = design;
  obs.y.resize(n, 2);
  obs.delta.resize(n, 2);
  obs.ages.resize(n, 2);
  obs.covariates.resize(n, static_cast<Eigen::Index>(designWidth(design)));
  for (Eigen::Index m = 0; m < n; ++m) {
    const auto& r = rows[std::size_t(m)];
    obs.y(m, 0) = r[0] / kTimeScale;
    obs.y(m, 1) = r[1] / kTimeScale;
    obs.delta(m, 0) = int(r[2]);
    obs.delta(m, 1) = int(r[3]);
    obs.ages(m, 0) = r[4] / kTimeScale;
    obs.ages(m, 1) = r[5] / kTimeScale;
    obs.covariates.row(m) = designRow(design, obs.ages(m, 0), obs.ages(m, 1));
  }
  return obs;
}

ObservationSet loadCsv(const std::string& path, CovariateDesign design) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return readCsv(in, design);
}

void writeCsv(std::ostream& out, const ObservationSet& obs) {
  if (obs.y.cols() != 2) throw DimensionError("writeCsv: the couple schema needs two margins");
  if (obs.ages.rows() != obs.y.rows() || obs.ages.cols() != 2)
    throw DimensionError("writeCsv: entry ages are required");
  out << "time1,time2,delta1,delta2,age1,age2\n";
  for (Eigen::Index m = 0; m < obs.y.rows(); ++m) {
    writeNumber(out, obs.y(m, 0) * kTimeScale);
    out << ',';
    writeNumber(out, obs.y(m, 1) * kTimeScale);
    out << ',' << obs.delta(m, 0) << ',' << obs.delta(m, 1) << ',';
    writeNumber(out, obs.ages(m, 0) * kTimeScale);
    out << ',';
    writeNumber(out, obs.ages(m, 1) * kTimeScale);
    out << '\n';
  }
}

void saveCsv(const std::string& path, const ObservationSet& obs) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  writeCsv(out, obs);
  if (!out) throw InputError("write to '" + path + "' failed");
}

std::string modelToJson(const MIPHModel& model) {
  nlohmann::ordered_json j;
  j["format"] = "miph-v1";
  j["time_scale"] = kTimeScale;
  j["p"] = model.states();
  j["d"] = model.dims();
  auto margins = nlohmann::ordered_json::array();
  for (const Margin& m : model.margins()) {
    nlohmann::ordered_json mj;
    mj["T"] = matrixJson(m.sub.matrix());
    mj["beta"] = m.transform.beta();
    margins.push_back(mj);
  }
  j["margins"] = margins;
  j["design"] = designName(model.design());
  if (model.hasRegression()) {
    j["gamma"] = matrixJson(std::get<RegressionCoefficients>(model.initial()).gamma());
  } else {
    const Vector& pi = std::get<InitialVector>(model.initial()).probs();
    j["pi"] = std::vector<double>(pi.data(), pi.data() + pi.size());
  }
  return j.dump(2) + "\n";
}

MIPHModel modelFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string()) != "miph-v1")
      throw InputError("model JSON: expected \"format\": \"miph-v1\"");
    if (j.contains("time_scale") && j.at("time_scale").get<double>() != kTimeScale)
      throw InputError("model JSON: only time_scale 100 is supported");
    std::vector<Margin> margins;
    for (const auto& mj : j.at("margins"))
      margins.push_back(Margin{SubIntensity(jsonMatrix(mj.at("T"), "T")),
                               GompertzTransform(mj.at("beta").get<double>())});
    if (margins.empty()) throw InputError("model JSON: no margins");
    const CovariateDesign design = designFromName(j.value("design", std::string("intercept")));
    if (j.contains("p") && j.at("p").get<std::size_t>() != margins.front().sub.dim())
      throw InputError("model JSON: 'p' differs from the matrix dimension");
    if (j.contains("d") && j.at("d").get<std::size_t>() != margins.size())
      throw InputError("model JSON: 'd' differs from the margin count");
    if (j.contains("gamma")) {
      RegressionCoefficients gamma(jsonMatrix(j.at("gamma"), "gamma"));
      if (gamma.width() != designWidth(design))
        throw InputError("model JSON: 'gamma' width does not match the design");
      return MIPHModel(std::move(margins), std::move(gamma), design);
    }
    const auto pi = j.at("pi").get<std::vector<double>>();
    Vector v = Eigen::Map<const Vector>(pi.data(), Eigen::Index(pi.size()));
    return MIPHModel(std::move(margins), InitialVector(v), design);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model JSON: ") + e.what());
  }
}

MIPHModel loadModel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return modelFromJson(ss.str());
}

void saveModel(const std::string& path, const MIPHModel& model) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << modelToJson(model);
  if (!out) throw InputError("write to '" + path + "' failed");
}

Vector beranCurve(const Vector& times, const Eigen::VectorXi& deltas, const Matrix& covariates,
                  const Vector& query, const Vector& grid, const BeranConfig& cfg) {
  checkBeranInput(times, deltas, covariates, query, cfg.bandwidth);
  const Vector w = kernelWeights(covariates, query, cfg.bandwidth);
  const auto order = productLimitOrder(times, deltas);
  const std::size_t n = order.size();

  // Survival right after each sorted observation.
  std::vector<double> tail(n + 1, 0.0);
  for (std::size_t r = n; r-- > 0;) tail[r] = tail[r + 1] + w(Eigen::Index(order[r]));
  std::vector<double> stepTimes(n), survival(n);
  double s = 1.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto m = Eigen::Index(order[r]);
    if (deltas(m) == 1 && tail[r] > 0.0) s *= 1.0 - w(m) / tail[r];
    stepTimes[r] = times(m);
    survival[r] = s;
  }

  Vector out(grid.size());
  detail::parallelFor(std::size_t(grid.size()), cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t q = b; q < e; ++q) {
      const double t = grid(Eigen::Index(q));
      const auto it = std::upper_bound(stepTimes.begin(), stepTimes.end(), t);
      const std::size_t count = std::size_t(it - stepTimes.begin());
      const double surv = count == 0 ? 1.0 : survival[count - 1];
      out(Eigen::Index(q)) = std::clamp(1.0 - surv, 0.0, 1.0);
    }
  });
  return out;
}

double beranEstimator(const Vector& times, const Eigen::VectorXi& deltas, const Matrix& covariates,
                      const Vector& query, double bandwidth, double t) {
  Vector grid(1);
  grid(0) = t;
  BeranConfig cfg;
  cfg.bandwidth = bandwidth;
  return beranCurve(times, deltas, covariates, query, grid, cfg)(0);
}

double calibrateCensoringRate(const Vector& lifetimes, double target) {
  if (!(target >= 0.0) || !(target < 1.0))
    throw InputError("censoring rate must lie in [0, 1)");
  if (target == 0.0 || lifetimes.size() == 0) return 0.0;
  auto fraction = [&](double c) { return (1.0 - (-c * lifetimes.array()).exp()).mean(); };
  double lo = 0.0, hi = 1.0;
  while (fraction(hi) < target) {
    hi *= 2.0;
    if (hi > 1e300) throw NumericalError("censoring calibration failed to bracket the rate");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (fraction(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ObservationSet generateSynthetic(const MIPHModel& model, const CovariateSampler& sampler,
                                 double censoringRate, std::size_t n, std::uint64_t seed) {
  if (!(censoringRate >= 0.0) || !(censoringRate < 1.0))
    throw InputError("censoring rate must lie in [0, 1)");
  Rng rng(seed);
  const auto nn = static_cast<Eigen::Index>(n);
  const auto d = static_cast<Eigen::Index>(model.dims());
  ObservationSet obs;
  obs.design = model.design();
  obs.ages.resize(nn, 2);
  obs.covariates.resize(nn, static_cast<Eigen::Index>(designWidth(obs.design)));
  Matrix life(nn, d);
  for (Eigen::Index m = 0; m < nn; ++m) {
    const auto [a1, a2] = sampler(rng);
    obs.ages(m, 0) = a1;
    obs.ages(m, 1) = a2;
    obs.covariates.row(m) = designRow(obs.design, a1, a2);
    const InitialVector pi = model.initialFor(obs.covariates.row(m));
    life.row(m) = sampleJoint(model, pi, rng, 1).row(0);
  }

  obs.y = life;
  obs.delta = IndicatorMatrix::Ones(nn, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double rate = calibrateCensoringRate(life.col(i), censoringRate);
    if (rate == 0.0) continue;
    std::exponential_distribution<double> cens(rate);
    for (Eigen::Index m = 0; m < nn; ++m) {
      const double c = cens(rng);
      if (c < life(m, i)) {
        obs.y(m, i) = c;
        obs.delta(m, i) = 0;
      }
    }
  }
  return obs;
}

}  // namespace miph
