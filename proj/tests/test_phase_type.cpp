#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "miph/error.hpp"
#include "miph/phase_type.hpp"

using namespace miph;
using boost::math::quadrature::gauss_kronrod;

namespace {

SubIntensity exponential(double rate) {
  Matrix t(1, 1);
  t << -rate;
  return SubIntensity(t);
}

SubIntensity coxian3() {
  Vector fwd(2), ex(3);
  fwd << 1.5, 0.7;
  ex << 0.4, 0.9, 2.0;
  return SubIntensity::coxian(fwd, ex);
}

Vector pi3() {
  Vector pi(3);
  pi << 0.5, 0.3, 0.2;
  return pi;
}

}  // namespace

TEST_CASE("sub-intensity validation") {
  Matrix bad(2, 2);
  bad << -1, -0.5, 0, -1;
  CHECK_THROWS_AS(SubIntensity{bad}, InputError);
  bad << -1, 2, 0, -1;  // row sum positive: negative exit rate
  CHECK_THROWS_AS(SubIntensity{bad}, InputError);
  CHECK_THROWS_AS(SubIntensity{Matrix(Matrix::Zero(2, 3))}, DimensionError);

  const SubIntensity s = coxian3();
  CHECK(s.dim() == 3);
  CHECK(s.exitRates()(0) == doctest::Approx(0.4));
  CHECK(s.exitRates()(2) == doctest::Approx(2.0));
  CHECK((s.matrix().rowwise().sum() + s.exitRates()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Coxian admissible pattern") {
  CHECK(admissibleTransition(Structure::Coxian, 0, 1));
  CHECK_FALSE(admissibleTransition(Structure::Coxian, 1, 0));
  CHECK_FALSE(admissibleTransition(Structure::Coxian, 0, 2));
  CHECK_FALSE(admissibleTransition(Structure::Coxian, 1, 1));
  CHECK(admissibleTransition(Structure::General, 2, 0));
}

TEST_CASE("exponential special cases") {
  Vector one(1);
  one << 1.0;
  CHECK(phDensity(exponential(1.0), one, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(phSurvival(exponential(2.0), one, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  const SubIntensity s = coxian3();
  CHECK(phDensity(s, pi3(), 0.0) == doctest::Approx(pi3().dot(s.exitRates())));
  CHECK(phSurvival(s, pi3(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("PH density integrates to one and matches the survival") {
  const SubIntensity s = coxian3();
  const Vector pi = pi3();
  auto f = [&](double x) { return phDensity(s, pi, x); };
  CHECK(gauss_kronrod<double, 31>::integrate(f, 0.0, std::numeric_limits<double>::infinity(), 15,
                                             1e-12) == doctest::Approx(1.0).epsilon(1e-6));
  for (double x : {0.1, 0.7, 2.0, 5.0}) {
    const double mass = gauss_kronrod<double, 31>::integrate(f, 0.0, x, 15, 1e-13);
    CHECK(std::abs(1.0 - mass - phSurvival(s, pi, x)) < 1e-8);
  }
  double last = 1.0;
  for (double x = 0.0; x < 10.0; x += 0.25) {
    const double v = phSurvival(s, pi, x);
    CHECK(v <= last + 1e-15);
    last = v;
  }
}

TEST_CASE("malformed initial vectors are rejected") {
  Vector bad(3);
  bad << 0.5, 0.5, 0.5;
  CHECK_THROWS_AS(phDensity(coxian3(), bad, 1.0), InputError);
  CHECK_THROWS_AS(phSurvival(coxian3(), Vector(Vector::Ones(2) / 2.0), 1.0), DimensionError);
}

TEST_CASE("Gompertz transform") {
  const GompertzTransform g(43.101);
  CHECK(g.inverse(0.0) == 0.0);
  CHECK(g.forward(0.0) == 0.0);
  double last = -1.0;
  for (double y = 0.0; y < 0.5; y += 0.01) {
    const double x = g.inverse(y);
    CHECK(x > last);
    last = x;
    CHECK(g.forward(x) == doctest::Approx(y).epsilon(1e-12));
  }
  // lambda is the derivative of g^{-1}.
  const double y = 0.2, h = 1e-6;
  CHECK((g.inverse(y + h) - g.inverse(y - h)) / (2 * h) == doctest::Approx(g.intensity(y)).epsilon(1e-7));
  CHECK_THROWS_AS(g.inverse(-0.1), InputError);
  CHECK_THROWS_AS(GompertzTransform(0.0), InputError);
  CHECK_THROWS_AS(GompertzTransform(-1.0), InputError);
}

TEST_CASE("IPH density is minus the derivative of the IPH survival") {
  const SubIntensity s = coxian3();
  const GompertzTransform g(5.0);
  for (double y : {0.05, 0.2, 0.4}) {
    const double h = 1e-6;
    const double numeric = -(iphSurvival(s, pi3(), g, y + h) - iphSurvival(s, pi3(), g, y - h)) / (2 * h);
    CHECK(iphDensity(s, pi3(), g, y) == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("state functions at infinity vanish") {
  const auto sf = stateFunctions(coxian3(), std::numeric_limits<double>::infinity());
  CHECK(sf.survival.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sf.density.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("simulated absorption times match the PH law") {
  const SubIntensity s = coxian3();
  Rng rng(2024);
  const int n = 200000;
  const Vector means = meanAbsorptionTimes(s);
  std::vector<double> draws(n);
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    draws[std::size_t(k)] = samplePath(s, 0, rng);
    total += draws[std::size_t(k)];
  }
  // Mean from state 1 within five standard errors.
  double var = 0.0;
  for (double v : draws) var += (v - total / n) * (v - total / n);
  const double se = std::sqrt(var / (n - 1) / n);
  CHECK(std::abs(total / n - means(0)) < 5 * se);

  // Kolmogorov-Smirnov distance against the exact survival.
  std::sort(draws.begin(), draws.end());
  Vector e1 = Vector::Unit(3, 0);
  double ks = 0.0;
  for (int k = 0; k < n; k += 97) {
    const double cdf = 1.0 - phSurvival(s, e1, draws[std::size_t(k)]);
    ks = std::max({ks, std::abs(cdf - double(k) / n), std::abs(cdf - double(k + 1) / n)});
  }
  CHECK(ks < 1.63 / std::sqrt(double(n)));  // 1% critical value
}

TEST_CASE("start-state sampling frequencies") {
  Rng rng(1);
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int k = 0; k < n; ++k) ++counts[sampleIndex(pi3(), rng)];
  for (int k = 0; k < 3; ++k) CHECK(std::abs(counts[std::size_t(k)] / double(n) - pi3()(k)) < 0.01);
}
