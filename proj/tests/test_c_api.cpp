#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "miph/miph.h"

namespace {

const std::string kFixture = std::string(MIPH_FIXTURES) + "/couples_p10.json";

std::string tempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

miph_model* exponentialPair() {
  // Two independent-looking margins sharing one state.
  const double t[] = {-2.0, -3.0};
  const double betas[] = {1e-9, 1e-9};
  const double pi[] = {1.0};
  miph_model* m = nullptr;
  REQUIRE(miph_model_create(1, 2, t, betas, MIPH_DESIGN_INTERCEPT, nullptr, pi, &m) == MIPH_OK);
  return m;
}

}  // namespace

TEST_CASE("model creation validates input") {
  miph_model* m = nullptr;
  const double bad[] = {1.0};
  const double betas[] = {1.0};
  const double pi[] = {1.0};
  CHECK(miph_model_create(1, 1, bad, betas, MIPH_DESIGN_INTERCEPT, nullptr, pi, &m) == MIPH_ERR_INPUT);
  CHECK(m == nullptr);
  CHECK(std::string(miph_last_error()).size() > 0);
  CHECK(miph_model_create(0, 1, bad, betas, MIPH_DESIGN_INTERCEPT, nullptr, pi, &m) == MIPH_ERR_INPUT);
  CHECK(miph_model_create(1, 1, bad, betas, MIPH_DESIGN_INTERCEPT, nullptr, pi, nullptr) == MIPH_ERR_INPUT);
  CHECK(miph_model_load_json("/nonexistent.json", &m) == MIPH_ERR_INPUT);
}

TEST_CASE("single-state model gives closed forms") {
  miph_model* m = exponentialPair();
  CHECK(miph_model_states(m) == 1);
  CHECK(miph_model_margins(m) == 2);
  const double pi[] = {1.0};
  const double y[] = {0.4, 0.2};
  double s = 0.0, c = 0.0, f = 0.0;
  REQUIRE(miph_joint_survival(m, pi, y, &s) == MIPH_OK);
  REQUIRE(miph_joint_cdf(m, pi, y, &c) == MIPH_OK);
  REQUIRE(miph_joint_density(m, pi, y, &f) == MIPH_OK);
  // One shared state: both clocks run in parallel, S = exp(-2 y1 - 3 y2).
  CHECK(s == doctest::Approx(std::exp(-0.8 - 0.6)).epsilon(1e-7));
  CHECK(c == doctest::Approx(1.0 - std::exp(-0.8) - std::exp(-0.6) + s).epsilon(1e-7));
  CHECK(f == doctest::Approx(6.0 * s).epsilon(1e-6));
  double e = 0.0;
  REQUIRE(miph_conditional_expectation(m, pi, 0, -1, 0.0, &e) == MIPH_OK);
  CHECK(e == doctest::Approx(0.5).epsilon(1e-6));
  double tau = 1.0;
  REQUIRE(miph_kendall_tau(m, pi, 0, 1, &tau) == MIPH_OK);
  CHECK(std::abs(tau) < 1e-9);
  CHECK(miph_kendall_tau(m, pi, 0, 5, &tau) != MIPH_OK);
  miph_model_free(m);
}

TEST_CASE("golden fixture through the C interface") {
  miph_model* m = nullptr;
  REQUIRE(miph_model_load_json(kFixture.c_str(), &m) == MIPH_OK);
  CHECK(miph_model_states(m) == 10);
  CHECK(miph_model_beta(m, 1) == doctest::Approx(47.474));
  std::vector<double> pi(10);
  REQUIRE(miph_model_initial_vector(m, 63, 63, pi.data()) == MIPH_OK);
  double total = 0.0;
  for (double v : pi) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  double tau = 0.0, rho = 0.0, s = 0.0, cr = 0.0, p1 = 0.0;
  REQUIRE(miph_kendall_tau(m, pi.data(), 0, 1, &tau) == MIPH_OK);
  REQUIRE(miph_spearman_rho(m, pi.data(), 0, 1, &rho) == MIPH_OK);
  CHECK(tau == doctest::Approx(0.31).epsilon(0.02));
  CHECK(rho == doctest::Approx(0.45).epsilon(0.02));
  const double y[] = {0.12, 0.30};
  REQUIRE(miph_joint_survival(m, pi.data(), y, &s) == MIPH_OK);
  CHECK(s > 0.31);
  CHECK(s < 0.33);
  REQUIRE(miph_cross_ratio(m, pi.data(), 0.1, 0.1, &cr) == MIPH_OK);
  CHECK(cr > 1.0);
  REQUIRE(miph_psi1(m, pi.data(), 0.12, 0.30, &p1) == MIPH_OK);
  CHECK(p1 > 1.0);
  double p2 = 0.0;
  REQUIRE(miph_psi2(m, pi.data(), 0, 1, 0.0, &p2) == MIPH_OK);
  CHECK(p2 == doctest::Approx(1.0).epsilon(1e-6));

  const std::string out = tempPath("miph_c_api_model.json");
  REQUIRE(miph_model_save_json(m, out.c_str()) == MIPH_OK);
  miph_model* back = nullptr;
  REQUIRE(miph_model_load_json(out.c_str(), &back) == MIPH_OK);
  double s2 = 0.0;
  REQUIRE(miph_joint_survival(back, pi.data(), y, &s2) == MIPH_OK);
  CHECK(s2 == s);
  std::remove(out.c_str());
  miph_model_free(back);
  miph_model_free(m);
}

TEST_CASE("simulate, save, load and fit") {
  miph_model* m = nullptr;
  REQUIRE(miph_model_load_json(kFixture.c_str(), &m) == MIPH_OK);
  const double ages[] = {63, 63, 70, 65};
  miph_data* data = nullptr;
  REQUIRE(miph_simulate(m, ages, 2, 200, 0.2, 7, &data) == MIPH_OK);
  CHECK(miph_data_rows(data) == 200);
  double times[2], ag[2];
  int deltas[2];
  REQUIRE(miph_data_row(data, 0, times, deltas, ag) == MIPH_OK);
  CHECK((ag[0] == doctest::Approx(0.63) || ag[0] == doctest::Approx(0.70)));
  CHECK(miph_data_row(data, 200, times, deltas, ag) == MIPH_ERR_INPUT);

  const std::string csv = tempPath("miph_c_api_data.csv");
  REQUIRE(miph_data_save_csv(data, csv.c_str()) == MIPH_OK);
  miph_data* loaded = nullptr;
  REQUIRE(miph_data_load_csv(csv.c_str(), MIPH_DESIGN_AGES, &loaded) == MIPH_OK);
  CHECK(miph_data_rows(loaded) == 200);

  double ll = 0.0;
  REQUIRE(miph_observed_loglik(m, data, 2, &ll) == MIPH_OK);
  CHECK(std::isfinite(ll));

  miph_fit_options opt;
  miph_fit_options_default(&opt);
  CHECK(opt.p == 3);
  CHECK(std::isnan(opt.loglik_tolerance));
  opt.p = 2;
  opt.max_iterations = 4;
  opt.loglik_tolerance = 0.0;
  opt.initial_beta = 40.0;
  miph_fit_report* rep = nullptr;
  REQUIRE(miph_fit(loaded, &opt, &rep) == MIPH_OK);
  CHECK(miph_fit_report_iterations(rep) == 4);
  CHECK(miph_fit_report_converged(rep) == 0);
  CHECK(miph_fit_report_loglik(rep, 3) >= miph_fit_report_loglik(rep, 0));
  miph_model* fitted = nullptr;
  REQUIRE(miph_fit_report_model(rep, &fitted) == MIPH_OK);
  CHECK(miph_model_states(fitted) == 2);
  std::vector<double> pi(2);
  CHECK(miph_model_initial_vector(fitted, 60, 60, pi.data()) == MIPH_OK);

  opt.p = 0;
  miph_fit_report* none = nullptr;
  CHECK(miph_fit(loaded, &opt, &none) == MIPH_ERR_INPUT);
  CHECK(none == nullptr);

  std::remove(csv.c_str());
  miph_model_free(fitted);
  miph_fit_report_free(rep);
  miph_data_free(loaded);
  miph_data_free(data);
  miph_model_free(m);
}

TEST_CASE("Beran curve through the C interface") {
  miph_model* m = exponentialPair();
  const double ages[] = {60, 60};
  miph_data* data = nullptr;
  REQUIRE(miph_simulate(m, ages, 1, 300, 0.0, 3, &data) == MIPH_OK);
  const double grid[] = {0.0, 0.1, 0.5, 5.0};
  double surv[4];
  REQUIRE(miph_beran_curve(data, 0, 60, 60, 0.001, grid, 4, 1, surv) == MIPH_OK);
  CHECK(surv[0] == 1.0);
  CHECK(surv[1] <= 1.0);
  CHECK(surv[2] <= surv[1]);
  CHECK(surv[3] == 0.0);
  CHECK(miph_beran_curve(data, 0, 10, 10, 0.001, grid, 4, 1, surv) == MIPH_ERR_NUMERICAL);
  CHECK(miph_beran_curve(data, 3, 60, 60, 0.001, grid, 4, 1, surv) == MIPH_ERR_INPUT);
  miph_data_free(data);
  miph_model_free(m);
}

TEST_CASE("freeing null handles is a no-op") {
  miph_model_free(nullptr);
  miph_data_free(nullptr);
  miph_fit_report_free(nullptr);
}
