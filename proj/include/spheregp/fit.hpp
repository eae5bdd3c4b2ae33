#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "spheregp/errors.hpp"
#include "spheregp/geometry.hpp"
#include "spheregp/gp.hpp"
#include "spheregp/kernels.hpp"
#include "spheregp/nelder_mead.hpp"
#include "spheregp/random.hpp"

namespace spheregp {

struct FitConfig {
  int max_iters = 500;
  double tol_f = 1e-8;
  int n_restarts = 4;
  std::uint64_t seed = 0;
  std::set<std::string> fixed_params;
  /// Simplex size tolerance in transformed coordinates.
  double tol_x = 1e-6;

  void validate() const {
    if (max_iters < 1) throw DataError("fit config: max_iters must be >= 1");
    if (!(tol_f > 0.0)) throw DataError("fit config: tol_f must be > 0");
    if (n_restarts < 1) throw DataError("fit config: n_restarts must be >= 1");
    if (!(tol_x > 0.0)) throw DataError("fit config: tol_x must be > 0");
  }
};

struct RestartSummary {
  int index = 0;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  int n_evals = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> params;
};

struct FitResult {
  KernelSpec best_spec = KernelSpec::iso_exponential(1.0, 1.0);
  double log_likelihood = -std::numeric_limits<double>::infinity();
  int n_evals = 0;
  bool converged = false;
  /// (cumulative iteration, best log-likelihood so far) over all restarts.
  std::vector<std::pair<int, double>> trace;
  std::vector<RestartSummary> restart_results;
  /// Number of parameters the optimizer was allowed to move.
  int n_free_params = 0;
  std::uint64_t data_fingerprint = 0;
};

/// FNV-1a over the bit patterns of every site and value.
inline std::uint64_t dataset_fingerprint(const Dataset& data) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto feed = [&](double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      hash ^= (bits >> (8 * b)) & 0xffU;
      hash *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    feed(data.sites[i].lon());
    feed(data.sites[i].lat());
    feed(data.values[i]);
  }
  return hash;
}

/// Maps the free parameters of a kernel template to unconstrained
/// coordinates: log for positive scales and ranges, logit for bounded
/// shapes. tau2 is encoded as a logit of tau2 / (10 sigma) so its bound
/// follows sigma.
class ParamTransform {
 public:
  ParamTransform(const KernelSpec& templ, const std::set<std::string>& fixed)
      : templ_(templ), infos_(param_vector(templ)) {
    for (const auto& name : fixed) {
      const bool known = std::any_of(infos_.begin(), infos_.end(),
                                     [&](const ParamInfo& p) { return p.name == name; });
      if (!known) {
        throw DataError("fixed parameter '" + name + "' is not a parameter of " +
                        templ.descriptor());
      }
    }
    for (std::size_t i = 0; i < infos_.size(); ++i) {
      if (!fixed.contains(infos_[i].name)) free_.push_back(i);
      if (infos_[i].name == "sigma") sigma_index_ = i;
    }
  }

  std::size_t n_free() const { return free_.size(); }
  const std::vector<ParamInfo>& infos() const { return infos_; }
  const std::vector<std::size_t>& free_indices() const { return free_; }

  /// Full parameter vector -> free unconstrained coordinates.
  std::vector<double> encode(std::span<const double> full) const {
    std::vector<double> u;
    u.reserve(free_.size());
    for (std::size_t i : free_) {
      const ParamInfo& p = infos_[i];
      const double v = full[i];
      if (p.name == "tau2") {
        u.push_back(logit(v / (bounds::kNuggetRatio * sigma_of(full))));
      } else if (p.scale == ParamScale::log) {
        u.push_back(std::log(std::clamp(v, p.lower, p.upper)));
      } else {
        u.push_back(logit((v - p.lower) / (p.upper - p.lower)));
      }
    }
    return u;
  }

  /// Free unconstrained coordinates -> full parameter vector (fixed entries
  /// taken from the template).
  std::vector<double> decode(std::span<const double> u) const {
    std::vector<double> full(infos_.size());
    for (std::size_t i = 0; i < infos_.size(); ++i) full[i] = infos_[i].value;
    std::size_t tau_slot = infos_.size();
    double tau_u = 0.0;
    for (std::size_t k = 0; k < free_.size(); ++k) {
      const std::size_t i = free_[k];
      const ParamInfo& p = infos_[i];
      if (p.name == "tau2") {
        tau_slot = i;
        tau_u = u[k];
      } else if (p.scale == ParamScale::log) {
        full[i] = std::exp(u[k]);
      } else {
        full[i] = p.lower + (p.upper - p.lower) * logistic(u[k]);
      }
    }
    if (tau_slot < infos_.size()) {
      full[tau_slot] = bounds::kNuggetRatio * sigma_of(full) * logistic(tau_u);
    }
    return full;
  }

 private:
  static constexpr double kEdge = 1e-12;

  static double logit(double p) {
    p = std::clamp(p, kEdge, 1.0 - kEdge);
    return std::log(p) - std::log1p(-p);
  }
  static double logistic(double u) {
    return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
  }

  double sigma_of(std::span<const double> full) const {
    return sigma_index_ < infos_.size() ? full[sigma_index_] : templ_.sigma();
  }

  KernelSpec templ_;
  std::vector<ParamInfo> infos_;
  std::vector<std::size_t> free_;
  std::size_t sigma_index_ = std::numeric_limits<std::size_t>::max();
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), mid));
  }
  return m;
}

struct PairLagMedians {
  double distance = 0.0;
  double lat_lag = 0.0;
  double lon_lag = 0.0;
};

inline PairLagMedians pair_lag_medians(const std::vector<SpherePoint>& sites) {
  // Pairs are thinned with a fixed stride for large n.
  constexpr std::size_t kMaxPairs = 250000;
  const std::size_t n = sites.size();
  const std::size_t total = n * (n - 1) / 2;
  const std::size_t stride = total > kMaxPairs ? total / kMaxPairs + 1 : 1;
  std::vector<double> dist, dlat, dlon;
  std::size_t counter = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++counter) {
      if (counter % stride != 0) continue;
      dist.push_back(great_circle_distance(sites[i], sites[j]));
      dlat.push_back(std::fabs(sites[i].lat() - sites[j].lat()));
      if (!sites[i].is_pole() && !sites[j].is_pole()) dlon.push_back(longitude_lag(sites[i], sites[j]));
    }
  }
  return {median(dist), median(dlat), median(dlon)};
}

inline double sample_variance(const std::vector<double>& y) {
  if (y.size() < 2) return y.empty() ? 1.0 : y[0] * y[0];
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(y.size() - 1);
}

}  // namespace detail

/// Moment-based starting values: sigma = sample variance, r_iso = median
/// pairwise distance, r_phi = median latitude lag, r_theta = median
/// longitude lag, tau2 = 1e-3 sigma. Shape parameters and fixed parameters
/// keep the template values.
inline std::vector<double> initial_parameters(const KernelSpec& templ, const Dataset& data,
                                              const std::set<std::string>& fixed) {
  auto infos = param_vector(templ);
  const auto medians = detail::pair_lag_medians(data.sites);
  double sigma0 = detail::sample_variance(data.values);
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) sigma0 = 1.0;
  sigma0 = std::clamp(sigma0, bounds::kSigmaLower, bounds::kSigmaUpper);

  auto range_or = [](double v, double fallback) {
    return std::clamp(v > 0.0 ? v : fallback, bounds::kRangeLower, bounds::kRangeUpper);
  };

  std::vector<double> full(infos.size());
  double sigma_used = templ.sigma();
  for (std::size_t i = 0; i < infos.size(); ++i) {
    const auto& p = infos[i];
    full[i] = p.value;
    if (fixed.contains(p.name)) continue;
    if (p.name == "sigma") full[i] = sigma0;
    else if (p.name == "r_iso") full[i] = range_or(medians.distance, 1.0);
    else if (p.name == "r_phi") full[i] = range_or(medians.lat_lag, 0.5);
    else if (p.name == "r_theta") full[i] = range_or(medians.lon_lag, 1.0);
    if (p.name == "sigma") sigma_used = full[i];
  }
  for (std::size_t i = 0; i < infos.size(); ++i) {
    if (infos[i].name == "tau2" && !fixed.contains("tau2")) full[i] = 1e-3 * sigma_used;
  }
  return full;
}

/// Maximum-likelihood fit by multi-start Nelder-Mead on transformed
/// parameters. Restart 0 starts at the moment heuristics; later restarts
/// jitter that start with N(0, 0.5^2) noise in transformed space.
inline FitResult fit_mle(const KernelSpec& templ, const Dataset& data, const FitConfig& config) {
  config.validate();
  data.validate(templ.nugget() > 0.0 || !config.fixed_params.contains("tau2"));

  const ParamTransform transform(templ, config.fixed_params);
  const auto start_full = initial_parameters(templ, data, config.fixed_params);
  const auto start_u = transform.encode(start_full);

  const JitterPolicy policy{};
  const SiteGeometry geometry(data.sites);
  const Eigen::VectorXd values = data.values_vector();
  auto objective = [&](std::span<const double> u) {
    const auto full = transform.decode(u);
    KernelSpec candidate = templ;
    try {
      candidate = set_params(templ, full);
    } catch (const KernelError&) {
      return std::numeric_limits<double>::infinity();
    }
    return -log_likelihood(candidate, geometry, values, policy);
  };

  FitResult result{templ, -std::numeric_limits<double>::infinity(), 0, false, {}, {}, 0,
                   dataset_fingerprint(data)};
  result.n_free_params = static_cast<int>(transform.n_free());

  double best_value = std::numeric_limits<double>::infinity();
  std::vector<double> best_u = start_u;
  int best_restart = -1;
  int iteration_offset = 0;

  for (int r = 0; r < config.n_restarts; ++r) {
    std::vector<double> u0 = start_u;
    if (r > 0) {
      CounterRng rng(config.seed, static_cast<std::uint64_t>(r));
      for (double& c : u0) c += 0.5 * rng.normal();
    }

    NelderMeadOptions opts;
    opts.max_iters = config.max_iters;
    opts.tol_f = config.tol_f;
    opts.tol_x = config.tol_x;
    NelderMeadResult run = NelderMead(opts).minimize(objective, u0);

    RestartSummary summary;
    summary.index = r;
    summary.n_evals = run.evaluations;
    summary.iterations = run.iterations;
    std::vector<std::pair<int, double>> trace = std::move(run.trace);

    // One polishing pass from the converged point guards against a
    // collapsed simplex.
    if (run.converged && run.iterations < config.max_iters) {
      opts.max_iters = config.max_iters - run.iterations;
      opts.initial_step = 0.1;
      NelderMeadResult polish = NelderMead(opts).minimize(objective, run.x);
      for (auto [it, v] : polish.trace) trace.emplace_back(it + run.iterations, v);
      summary.n_evals += polish.evaluations;
      summary.iterations += polish.iterations;
      if (polish.value <= run.value) {
        run.x = polish.x;
        run.value = polish.value;
      }
      run.converged = polish.converged;
    }

    summary.converged = run.converged;
    summary.log_likelihood = -run.value;
    summary.params = transform.decode(run.x);
    result.n_evals += summary.n_evals;

    for (auto [it, v] : trace) {
      best_value = std::min(best_value, v);
      result.trace.emplace_back(iteration_offset + it, -best_value);
    }
    iteration_offset += summary.iterations;

    if (std::isfinite(run.value) && (best_restart < 0 || run.value < -result.log_likelihood)) {
      best_restart = r;
      best_u = run.x;
      result.log_likelihood = -run.value;
      result.converged = run.converged;
    }
    result.restart_results.push_back(std::move(summary));
  }

  if (best_restart < 0) {
    throw FitFailure("fit failed: every restart stayed in non-positive-definite or invalid "
                     "parameter regions for " + templ.descriptor());
  }
  result.best_spec = set_params(templ, transform.decode(best_u));
  return result;
}

struct ComparisonRow {
  std::string model;
  double log_likelihood = 0.0;
  int n_params = 0;
  double aic = 0.0;
};

/// AIC = 2k - 2 logL, ascending; ties by fewer parameters then by name.
inline std::vector<ComparisonRow> profile_compare(std::span<const FitResult> fits) {
  std::vector<ComparisonRow> rows;
  for (const auto& fit : fits) {
    if (fit.data_fingerprint != fits.front().data_fingerprint) {
      throw DataError("profile_compare: fits were made on different datasets");
    }
    rows.push_back({fit.best_spec.descriptor(), fit.log_likelihood, fit.n_free_params,
                    2.0 * fit.n_free_params - 2.0 * fit.log_likelihood});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    return std::tie(a.aic, a.n_params, a.model) < std::tie(b.aic, b.n_params, b.model);
  });
  return rows;
}

}  // namespace spheregp
