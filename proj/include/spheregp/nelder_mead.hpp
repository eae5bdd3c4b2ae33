#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace spheregp {

struct NelderMeadOptions {
  int max_iters = 500;
  /// Converged when (f_worst - f_best) <= tol_f * max(|f_best|, 1) ...
  double tol_f = 1e-8;
  /// ... and every vertex lies within tol_x (max-norm) of the best one.
  double tol_x = 1e-6;
  /// Initial simplex edge along each coordinate axis.
  double initial_step = 0.5;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  /// Best value after each iteration (iteration index starts at 1).
  std::vector<std::pair<int, double>> trace;
};

/// Derivative-free simplex minimization with the standard reflection (1),
/// expansion (2), contraction (1/2) and shrink (1/2) coefficients. Infinite
/// or NaN objective values rank as worst, so the simplex retreats from them.
class NelderMead {
 public:
  using Objective = std::function<double(std::span<const double>)>;

  explicit NelderMead(NelderMeadOptions options = {}) : options_(options) {}

  NelderMeadResult minimize(const Objective& f, std::vector<double> start) const {
    const std::size_t dim = start.size();
    NelderMeadResult result;
    auto evaluate = [&](const std::vector<double>& x) {
      ++result.evaluations;
      const double v = f(x);
      return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };

    if (dim == 0) {
      result.x = start;
      result.value = evaluate(start);
      result.converged = true;
      return result;
    }

    std::vector<Vertex> simplex;
    simplex.reserve(dim + 1);
    simplex.push_back({start, evaluate(start)});
    for (std::size_t i = 0; i < dim; ++i) {
      std::vector<double> x = start;
      x[i] += options_.initial_step;
      simplex.push_back({x, evaluate(x)});
    }

    std::vector<double> centroid(dim);
    while (result.iterations < options_.max_iters) {
      std::stable_sort(simplex.begin(), simplex.end(),
                       [](const Vertex& a, const Vertex& b) { return a.value < b.value; });
      if (is_converged(simplex)) {
        result.converged = true;
        break;
      }
      ++result.iterations;

      std::fill(centroid.begin(), centroid.end(), 0.0);
      for (std::size_t v = 0; v < dim; ++v) {
        for (std::size_t c = 0; c < dim; ++c) centroid[c] += simplex[v].x[c];
      }
      for (double& c : centroid) c /= static_cast<double>(dim);

      Vertex& worst = simplex.back();
      const double best_value = simplex.front().value;
      const double second_worst = simplex[dim - 1].value;

      auto along = [&](double coeff) {
        std::vector<double> x(dim);
        for (std::size_t c = 0; c < dim; ++c) {
          x[c] = centroid[c] + coeff * (worst.x[c] - centroid[c]);
        }
        return x;
      };

      std::vector<double> reflected = along(-1.0);
      const double f_reflected = evaluate(reflected);
      if (f_reflected < best_value) {
        std::vector<double> expanded = along(-2.0);
        const double f_expanded = evaluate(expanded);
        if (f_expanded < f_reflected) {
          worst = {std::move(expanded), f_expanded};
        } else {
          worst = {std::move(reflected), f_reflected};
        }
      } else if (f_reflected < second_worst) {
        worst = {std::move(reflected), f_reflected};
      } else {
        const bool outside = f_reflected < worst.value;
        std::vector<double> contracted = along(outside ? -0.5 : 0.5);
        const double f_contracted = evaluate(contracted);
        if (f_contracted < (outside ? f_reflected : worst.value)) {
          worst = {std::move(contracted), f_contracted};
        } else {
          for (std::size_t v = 1; v <= dim; ++v) {
            for (std::size_t c = 0; c < dim; ++c) {
              simplex[v].x[c] = simplex[0].x[c] + 0.5 * (simplex[v].x[c] - simplex[0].x[c]);
            }
            simplex[v].value = evaluate(simplex[v].x);
          }
        }
      }
      const double current_best =
          std::min_element(simplex.begin(), simplex.end(), [](const Vertex& a, const Vertex& b) {
            return a.value < b.value;
          })->value;
      result.trace.emplace_back(result.iterations, current_best);
    }

    std::stable_sort(simplex.begin(), simplex.end(),
                     [](const Vertex& a, const Vertex& b) { return a.value < b.value; });
    if (!result.converged) result.converged = is_converged(simplex);
    result.x = simplex.front().x;
    result.value = simplex.front().value;
    return result;
  }

 private:
  struct Vertex {
    std::vector<double> x;
    double value;
  };

  bool is_converged(const std::vector<Vertex>& sorted) const {
    const double best = sorted.front().value;
    const double worst = sorted.back().value;
    if (!std::isfinite(best) || !std::isfinite(worst)) return false;
    if (worst - best > options_.tol_f * std::max(std::fabs(best), 1.0)) return false;
    for (std::size_t v = 1; v < sorted.size(); ++v) {
      for (std::size_t c = 0; c < sorted[v].x.size(); ++c) {
        if (std::fabs(sorted[v].x[c] - sorted[0].x[c]) > options_.tol_x) return false;
      }
    }
    return true;
  }

  NelderMeadOptions options_;
};

}  // namespace spheregp
