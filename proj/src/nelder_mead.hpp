#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "miph/linalg.hpp"

namespace miph::detail {

struct NelderMeadResult {
  Vector x;
  double value = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

// Derivative-free maximization. Non-finite objective values rank below every
// finite value. Stops when the simplex diameter drops under xTol or the
// evaluation budget is spent.
template <class Objective>
NelderMeadResult nelderMeadMaximize(Objective&& objective, const Vector& start, double step,
                                    double xTol, int maxEvaluations) {
  const Eigen::Index n = start.size();
  NelderMeadResult out;
  auto eval = [&](const Vector& x) {
    ++out.evaluations;
    const double v = objective(x);
    return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  };

  std::vector<Vector> simplex(static_cast<std::size_t>(n + 1), start);
  std::vector<double> values(static_cast<std::size_t>(n + 1));
  values[0] = eval(start);
  for (Eigen::Index i = 0; i < n; ++i) {
    simplex[static_cast<std::size_t>(i + 1)](i) += step;
    values[static_cast<std::size_t>(i + 1)] = eval(simplex[static_cast<std::size_t>(i + 1)]);
  }

  std::vector<std::size_t> order(simplex.size());
  for (;;) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double diameter = 0.0;
    for (const Vector& v : simplex)
      diameter = std::max(diameter, (v - simplex[best]).cwiseAbs().maxCoeff());
    if (diameter <= xTol || out.evaluations >= maxEvaluations) {
      out.x = simplex[best];
      out.value = values[best];
      return out;
    }

    Vector centroid = Vector::Zero(n);
    for (std::size_t k = 0; k < simplex.size(); ++k)
      if (k != worst) centroid += simplex[k];
    centroid /= double(n);

    const Vector reflected = centroid + (centroid - simplex[worst]);
    const double fr = eval(reflected);
    if (fr > values[best]) {
      const Vector expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(expanded);
      if (fe > fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr > values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr > values[worst];
    const Vector contracted = outside ? Vector(centroid + 0.5 * (reflected - centroid))
                                      : Vector(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(contracted);
    if (fc > (outside ? fr : values[worst])) {
      simplex[worst] = contracted;
      values[worst] = fc;
      continue;
    }
    for (std::size_t k = 0; k < simplex.size(); ++k) {
      if (k == best) continue;
      simplex[k] = simplex[best] + 0.5 * (simplex[k] - simplex[best]);
      values[k] = eval(simplex[k]);
    }
  }
}

}  // namespace miph::detail
