#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "miph/data_io.hpp"
#include "miph/error.hpp"
#include "miph/model.hpp"

using namespace miph;
using boost::math::quadrature::gauss_kronrod;

namespace {

MIPHModel smallModel(double beta1 = 2.0, double beta2 = 3.0) {
  Matrix t1(2, 2), t2(2, 2);
  t1 << -3.0, 2.0, 0.0, -0.8;
  t2 << -0.5, 0.3, 0.0, -4.0;
  Vector pi(2);
  pi << 0.6, 0.4;
  return MIPHModel({Margin{SubIntensity(t1), GompertzTransform(beta1)},
                    Margin{SubIntensity(t2), GompertzTransform(beta2)}},
                   InitialVector(pi));
}

InitialVector smallPi() { return std::get<InitialVector>(smallModel().initial()); }

Vector point(double a, double b) {
  Vector y(2);
  y << a, b;
  return y;
}

// Numerical mixed partial of the joint survival.
double mixedPartial(const MIPHModel& m, const InitialVector& pi, double y1, double y2, double h) {
  auto s = [&](double a, double b) { return jointSurvival(m, pi, point(a, b)); };
  return (s(y1 + h, y2 + h) - s(y1 + h, y2 - h) - s(y1 - h, y2 + h) + s(y1 - h, y2 - h)) / (4 * h * h);
}

double integrate2d(const std::function<double(double, double)>& f, double upper) {
  auto inner = [&](double y1) {
    return gauss_kronrod<double, 21>::integrate([&](double y2) { return f(y1, y2); }, 0.0, upper, 10, 1e-10);
  };
  return gauss_kronrod<double, 21>::integrate(inner, 0.0, upper, 10, 1e-10);
}

}  // namespace

TEST_CASE("independent exponential margins factorize") {
  Matrix a(1, 1), b(1, 1);
  a << -2.0;
  b << -0.5;
  Vector one(1);
  one << 1.0;
  const MIPHModel m({Margin{SubIntensity(a), GompertzTransform(1e-9)},
                     Margin{SubIntensity(b), GompertzTransform(1e-9)}},
                    InitialVector(one));
  const InitialVector pi(one);
  const Vector y = point(0.3, 1.1);
  CHECK(jointSurvival(m, pi, y) == doctest::Approx(std::exp(-0.6 - 0.55)).epsilon(1e-8));
  CHECK(jointDensity(m, pi, y) == doctest::Approx(2.0 * 0.5 * std::exp(-0.6 - 0.55)).epsilon(1e-8));
  CHECK(kendallTau(m, pi, 0, 1) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(spearmanRho(m, pi, 0, 1) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(psi1(m, pi, 0.3, 0.4) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(crossRatio(m, pi, 0.2) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("joint functionals agree with each other") {
  const MIPHModel m = smallModel();
  const InitialVector pi = smallPi();
  CHECK(jointSurvival(m, pi, point(0, 0)) == doctest::Approx(1.0));
  for (auto [y1, y2] : {std::pair{0.1, 0.2}, std::pair{0.4, 0.05}, std::pair{0.3, 0.3}}) {
    const double s = jointSurvival(m, pi, point(y1, y2));
    const double s1 = marginalSurvival(m, pi, 0, y1);
    const double s2 = marginalSurvival(m, pi, 1, y2);
    CHECK(jointCdf(m, pi, point(y1, y2)) == doctest::Approx(1.0 - s1 - s2 + s).epsilon(1e-12));
    CHECK(jointDensity(m, pi, point(y1, y2)) ==
          doctest::Approx(mixedPartial(m, pi, y1, y2, 1e-4)).epsilon(1e-5));
    CHECK(psi1(m, pi, y1, y2) == doctest::Approx(s / (s1 * s2)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(jointSurvival(m, pi, Vector(Vector::Ones(3))), DimensionError);
}

TEST_CASE("joint density integrates to one") {
  const MIPHModel m = smallModel(0.5, 0.7);
  const InitialVector pi = smallPi();
  const double mass = integrate2d([&](double a, double b) { return jointDensity(m, pi, point(a, b)); }, 12.0);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("Kendall and Spearman match quadrature of their definitions") {
  // Rank measures do not depend on the monotone time transforms, so the
  // oracle integrates on a model with gentle transforms.
  const MIPHModel m = smallModel(0.3, 0.2);
  const InitialVector pi = smallPi();
  const double upper = 25.0;
  const double eF = integrate2d(
      [&](double a, double b) { return jointCdf(m, pi, point(a, b)) * jointDensity(m, pi, point(a, b)); }, upper);
  const double eUV = integrate2d(
      [&](double a, double b) {
        return (1.0 - marginalSurvival(m, pi, 0, a)) * (1.0 - marginalSurvival(m, pi, 1, b)) *
               jointDensity(m, pi, point(a, b));
      },
      upper);
  CHECK(kendallTau(m, pi, 0, 1) == doctest::Approx(4.0 * eF - 1.0).epsilon(1e-6));
  CHECK(spearmanRho(m, pi, 0, 1) == doctest::Approx(12.0 * eUV - 3.0).epsilon(1e-6));
  // Transform invariance.
  CHECK(kendallTau(smallModel(9.0, 0.1), pi, 0, 1) == doctest::Approx(kendallTau(m, pi, 0, 1)).epsilon(1e-14));
}

TEST_CASE("cross-ratio matches finite differences") {
  const MIPHModel m = smallModel();
  const InitialVector pi = smallPi();
  auto s = [&](double a, double b) { return jointSurvival(m, pi, point(a, b)); };
  for (double u : {0.05, 0.15, 0.3}) {
    const double h = 1e-5;
    const double d1 = (s(u + h, u) - s(u - h, u)) / (2 * h);
    const double d2 = (s(u, u + h) - s(u, u - h)) / (2 * h);
    const double d12 = mixedPartial(m, pi, u, u, 1e-4);
    CHECK(crossRatio(m, pi, u) == doctest::Approx(s(u, u) * d12 / (d1 * d2)).epsilon(1e-5));
  }
}

TEST_CASE("conditioning on survival and on a value") {
  const MIPHModel m = smallModel();
  const InitialVector pi = smallPi();
  const double y1 = 0.2;
  const ConditionedModel survived = conditionOnSurvival(m, pi, 0, y1);
  CHECK(survived.model.dims() == 1);
  CHECK(survived.initial.probs().sum() == doctest::Approx(1.0));
  const ConditionedModel valued = conditionOnValue(m, pi, 0, y1);
  for (double y2 : {0.05, 0.3, 0.8}) {
    const double direct = jointSurvival(m, pi, point(y1, y2)) / marginalSurvival(m, pi, 0, y1);
    CHECK(marginalSurvival(survived.model, survived.initial, 0, y2) == doctest::Approx(direct).epsilon(1e-12));
    const double h = 1e-6;
    const double num = -(jointSurvival(m, pi, point(y1 + h, y2)) - jointSurvival(m, pi, point(y1 - h, y2))) / (2 * h);
    CHECK(marginalSurvival(valued.model, valued.initial, 0, y2) ==
          doctest::Approx(num / marginalDensity(m, pi, 0, y1)).epsilon(1e-6));
  }
}

TEST_CASE("conditional expectations") {
  // Nearly untransformed margins: the mean is the PH mean.
  const MIPHModel m = smallModel(1e-9, 1e-9);
  const InitialVector pi = smallPi();
  const Vector phMean = meanAbsorptionTimes(m.margin(0).sub);
  CHECK(conditionalExpectation(m, pi, 0) == doctest::Approx(pi.probs().dot(phMean)).epsilon(1e-6));

  const MIPHModel g = smallModel();
  CHECK(psi2(g, pi, 0, 1, 0.0) == 1.0);
  // E(Y1 | Y2 >= y) by direct quadrature of the conditional survival.
  const double y = 0.3;
  const double s2 = marginalSurvival(g, pi, 1, y);
  const double direct = gauss_kronrod<double, 31>::integrate(
      [&](double a) { return jointSurvival(g, pi, point(a, y)) / s2; }, 0.0, 5.0, 15, 1e-12);
  CHECK(conditionalExpectation(g, pi, 0, SurvivalCondition{1, y}) == doctest::Approx(direct).epsilon(1e-7));
  CHECK_THROWS_AS(conditionalExpectation(g, pi, 0, SurvivalCondition{0, y}), InputError);
}

TEST_CASE("regression coefficients give a softmax") {
  Matrix gamma(3, 2);
  gamma << 0, 0, 1.0, -2.0, -0.5, 3.0;
  const RegressionCoefficients reg(gamma);
  RowVector a(2);
  a << 1.0, 0.4;
  const Vector p = reg.probabilities(a);
  const double e1 = std::exp(1.0 - 0.8), e2 = std::exp(-0.5 + 1.2);
  CHECK(p(0) == doctest::Approx(1.0 / (1 + e1 + e2)));
  CHECK(p(2) == doctest::Approx(e2 / (1 + e1 + e2)));
  gamma(0, 1) = 1.0;
  CHECK_THROWS_AS(RegressionCoefficients{gamma}, InputError);
  // Extreme coefficients do not overflow.
  Matrix big(2, 1);
  big << 0, 900.0;
  RowVector one(1);
  one << 1.0;
  CHECK(RegressionCoefficients(big).probabilities(one)(1) == 1.0);
}

TEST_CASE("design rows") {
  CHECK(designWidth(CovariateDesign::Couple) == 4);
  const RowVector r = designRow(CovariateDesign::Couple, 0.63, 0.68);
  CHECK(r(0) == 1.0);
  CHECK(r(3) == doctest::Approx(0.63 * 0.68));
  CHECK(designFromName(designName(CovariateDesign::Ages)) == CovariateDesign::Ages);
  CHECK_THROWS_AS(designFromName("splines"), InputError);
}

TEST_CASE("printed couples model reproduces the printed initial vectors") {
  const MIPHModel m = loadModel(std::string(MIPH_FIXTURES) + "/couples_p10.json");
  const double printed[4][10] = {
      {0.0526, 0.0734, 0.0448, 0.0886, 0.4065, 0.0330, 0.0326, 0.0569, 0.1077, 0.1039},
      {0.0356, 0.0313, 0.0297, 0.0398, 0.2805, 0.0476, 0.0396, 0.0384, 0.2472, 0.2102},
      {0.0285, 0.0242, 0.0114, 0.1625, 0.4399, 0.0419, 0.0304, 0.1282, 0.0819, 0.0510},
      {0.0172, 0.0095, 0.0140, 0.0127, 0.1378, 0.0489, 0.0343, 0.0184, 0.4041, 0.3030}};
  const double ages[4][2] = {{63, 63}, {68, 63}, {63, 68}, {73, 63}};
  for (int c = 0; c < 4; ++c) {
    const InitialVector pi = m.initialForAges(ages[c][0] / 100, ages[c][1] / 100);
    for (int k = 0; k < 10; ++k) CHECK(std::abs(pi[std::size_t(k)] - printed[c][k]) < 1e-3);
  }
}

TEST_CASE("joint sampling reproduces the marginal law") {
  const MIPHModel m = smallModel();
  const InitialVector pi = smallPi();
  Rng rng(17);
  const Matrix draws = sampleJoint(m, pi, rng, 50000);
  for (double y : {0.1, 0.3}) {
    const double emp1 = (draws.col(0).array() > y).cast<double>().mean();
    const double both = ((draws.col(0).array() > y) && (draws.col(1).array() > y)).cast<double>().mean();
    CHECK(std::abs(emp1 - marginalSurvival(m, pi, 0, y)) < 0.01);
    CHECK(std::abs(both - jointSurvival(m, pi, point(y, y))) < 0.01);
  }
}

TEST_CASE("withoutMargin keeps the remaining margins") {
  const MIPHModel m = smallModel();
  const MIPHModel r = m.withoutMargin(0, smallPi());
  CHECK(r.dims() == 1);
  CHECK(r.margin(0).transform.beta() == 3.0);
}
