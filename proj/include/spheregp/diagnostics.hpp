#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "spheregp/errors.hpp"
#include "spheregp/fit.hpp"
#include "spheregp/geometry.hpp"
#include "spheregp/gp.hpp"
#include "spheregp/kernels.hpp"
#include "spheregp/random.hpp"

namespace spheregp {

template <typename K>
concept SphereKernel = requires(const K& k, const SpherePoint& a, const SpherePoint& b) {
  { k(a, b) } -> std::convertible_to<double>;
};

using KernelFunction = std::function<double(const SpherePoint&, const SpherePoint&)>;

/// A point pair that produced an extreme statistic.
struct Witness {
  SpherePoint x;
  SpherePoint y;
  double value_a = 0.0;
  double value_b = 0.0;
};

struct DiagnosticReport {
  std::string check_name;
  bool passed = false;
  double statistic = 0.0;
  double threshold = 0.0;
  /// Passing side of the threshold, e.g. "statistic <= threshold".
  std::string rule;
  std::vector<Witness> details;
};

/// Adapts a KernelSpec to the callable form used by the checks.
inline KernelFunction kernel_function(const KernelSpec& spec) {
  return [spec](const SpherePoint& x, const SpherePoint& y) { return eval(spec, x, y); };
}

// ---------------------------------------------------------------------------
// Positive definiteness

/// Draws parameters for the same kernel structure from a fixed sampling box:
/// sigma log-uniform in [0.1, 10], ranges log-uniform in [0.05, 2],
/// alpha uniform in [0.05, 1], nu uniform in [0.1, 2.5], tau2 = 0.
inline KernelSpec random_valid_parameters(const KernelSpec& spec, CounterRng& rng) {
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(rng.uniform(std::log(lo), std::log(hi)));
  };
  std::vector<double> values;
  for (const auto& p : param_vector(spec)) {
    if (p.name == "tau2") values.push_back(0.0);
    else if (p.name == "sigma") values.push_back(log_uniform(0.1, 10.0));
    else if (p.name == "alpha" || p.name == "alpha_phi") values.push_back(rng.uniform(0.05, 1.0));
    else if (p.name == "nu") values.push_back(rng.uniform(0.1, 2.5));
    else values.push_back(log_uniform(0.05, 2.0));
  }
  return set_params(spec, values);
}

/// Sample from a kernel family: the callable plus its variance scale.
struct KernelDraw {
  KernelFunction kernel;
  double sigma = 1.0;
};

using KernelFactory = std::function<KernelDraw(CounterRng&)>;

/// Gram matrices of `n_points` uniform sphere points (poles excluded when
/// requested) for `n_trials` parameter draws must admit a Cholesky
/// factorization after adding 1e-10 sigma to the diagonal.
/// statistic = number of failed trials; passes when it is 0.
inline DiagnosticReport check_positive_definite(const KernelFactory& factory, int n_trials,
                                                int n_points, std::uint64_t seed,
                                                bool exclude_poles = true) {
  if (n_points < 2) throw DataError("check_positive_definite: n_points must be >= 2");
  DiagnosticReport report{"positive_definite", true, 0.0, 0.0, "statistic <= threshold", {}};
  int failures = 0;
  for (int trial = 0; trial < n_trials; ++trial) {
    CounterRng rng(seed, static_cast<std::uint64_t>(trial));
    const KernelDraw draw = factory(rng);
    std::vector<SpherePoint> points;
    while (points.size() < static_cast<std::size_t>(n_points)) {
      SpherePoint p = uniform_sphere_point(rng);
      if (exclude_poles && p.is_pole()) continue;
      points.push_back(p);
    }
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) {
        gram(i, j) = gram(j, i) = draw.kernel(points[i], points[j]);
      }
    }
    gram.diagonal().array() += 1e-10 * draw.sigma;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      ++failures;
      if (report.details.size() < 5) {
        report.details.push_back({points[0], points[1], gram(0, 0), gram(0, 1)});
      }
    }
  }
  report.statistic = failures;
  report.passed = failures == 0;
  return report;
}

inline DiagnosticReport check_positive_definite(const KernelSpec& spec, int n_trials, int n_points,
                                                std::uint64_t seed) {
  KernelFactory factory = [&spec](CounterRng& rng) {
    KernelSpec drawn = random_valid_parameters(spec, rng);
    return KernelDraw{kernel_function(drawn), drawn.sigma()};
  };
  return check_positive_definite(factory, n_trials, n_points, seed,
                                 spec.family() == Family::separable_lonlat);
}

// ---------------------------------------------------------------------------
// Axial symmetry and latitudinal reversibility

inline constexpr double kSymmetryThreshold = 1e-12;

namespace detail {

inline SpherePoint random_non_pole(CounterRng& rng) {
  SpherePoint p = uniform_sphere_point(rng);
  while (p.is_pole()) p = uniform_sphere_point(rng);
  return p;
}

inline void finish_max_report(DiagnosticReport& report) {
  report.passed = report.statistic <= report.threshold;
}

}  // namespace detail

/// statistic = max |K(shift(x, D), shift(y, D)) - K(x, y)| over random
/// non-pole pairs and shifts; passes when <= 1e-12.
template <SphereKernel K>
DiagnosticReport check_axial_symmetry(const K& kernel, int n_trials, std::uint64_t seed) {
  DiagnosticReport report{"axial_symmetry", false, 0.0, kSymmetryThreshold,
                          "statistic <= threshold", {}};
  CounterRng rng(seed, 0xa1);
  Witness worst;
  for (int t = 0; t < n_trials; ++t) {
    const SpherePoint x = detail::random_non_pole(rng);
    const SpherePoint y = detail::random_non_pole(rng);
    const double delta = rng.uniform(-kPi, kPi);
    const double base = kernel(x, y);
    const double moved = kernel(x.shifted(delta), y.shifted(delta));
    const double dev = std::fabs(moved - base);
    if (dev > report.statistic || t == 0) {
      report.statistic = std::max(report.statistic, dev);
      worst = {x, y, base, moved};
    }
  }
  report.details.push_back(worst);
  detail::finish_max_report(report);
  return report;
}

inline DiagnosticReport check_axial_symmetry(const KernelSpec& spec, int n_trials, std::uint64_t seed) {
  return check_axial_symmetry(kernel_function(spec), n_trials, seed);
}

/// statistic = max |F(dlon, lat_x, lat_y) - F(dlon, lat_y, lat_x)| where
/// F(dlon, a, b) = K((lon0 + dlon, a), (lon0, b)); passes when <= 1e-12.
template <SphereKernel K>
DiagnosticReport check_latitudinal_reversibility(const K& kernel, int n_trials, std::uint64_t seed) {
  DiagnosticReport report{"latitudinal_reversibility", false, 0.0, kSymmetryThreshold,
                          "statistic <= threshold", {}};
  CounterRng rng(seed, 0xb2);
  Witness worst;
  for (int t = 0; t < n_trials; ++t) {
    const double lon0 = rng.uniform(-kPi, kPi);
    const double dlon = rng.uniform(-kPi, kPi);
    const double lat_a = detail::random_non_pole(rng).lat();
    const double lat_b = detail::random_non_pole(rng).lat();
    const SpherePoint x{lon0 + dlon, lat_a};
    const SpherePoint y{lon0, lat_b};
    const double forward = kernel(x, y);
    const double swapped = kernel(SpherePoint{lon0 + dlon, lat_b}, SpherePoint{lon0, lat_a});
    const double dev = std::fabs(forward - swapped);
    if (dev > report.statistic || t == 0) {
      report.statistic = std::max(report.statistic, dev);
      worst = {x, y, forward, swapped};
    }
  }
  report.details.push_back(worst);
  detail::finish_max_report(report);
  return report;
}

inline DiagnosticReport check_latitudinal_reversibility(const KernelSpec& spec, int n_trials,
                                                        std::uint64_t seed) {
  return check_latitudinal_reversibility(kernel_function(spec), n_trials, seed);
}

// ---------------------------------------------------------------------------
// Pole continuity

inline const std::vector<double>& default_pole_epsilons() {
  static const std::vector<double> eps{0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.001};
  return eps;
}

struct PoleProbeRow {
  double epsilon = 0.0;
  /// max_j K(x_j, ref) - min_j K(x_j, ref); NaN when undefined.
  double spread = std::numeric_limits<double>::quiet_NaN();
  /// |K(pole, ref) - mean_j K(x_j, ref)| when the pole value exists.
  std::optional<double> pole_gap;
  bool undefined_at_pole = false;
};

/// Evaluates K((lon_j, pi/2 - eps), reference) over n_longitudes equispaced
/// lon_j = -pi + 2 pi j / n for each eps (non-negative, strictly decreasing).
template <SphereKernel K>
std::vector<PoleProbeRow> pole_continuity_probe(const K& kernel, std::span<const double> epsilons,
                                                int n_longitudes, const SpherePoint& reference) {
  if (n_longitudes < 1) throw DataError("pole probe: n_longitudes must be >= 1");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] >= 0.0) || (i > 0 && !(epsilons[i] < epsilons[i - 1]))) {
      throw DataError("pole probe: epsilons must be non-negative and strictly decreasing");
    }
  }

  std::optional<double> pole_value;
  bool pole_undefined = false;
  try {
    pole_value = kernel(SpherePoint::north_pole(), reference);
  } catch (const UndefinedAtPole&) {
    pole_undefined = true;
  }

  std::vector<PoleProbeRow> rows;
  for (double eps : epsilons) {
    PoleProbeRow row;
    row.epsilon = eps;
    try {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      double sum = 0.0;
      for (int j = 0; j < n_longitudes; ++j) {
        const SpherePoint x{-kPi + kTwoPi * j / n_longitudes, kHalfPi - eps};
        const double v = kernel(x, reference);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      row.spread = hi - lo;
      if (pole_value) row.pole_gap = std::fabs(*pole_value - sum / n_longitudes);
    } catch (const UndefinedAtPole&) {
      row.undefined_at_pole = true;
    }
    if (eps == 0.0 && pole_undefined) row.undefined_at_pole = true;
    rows.push_back(row);
  }
  return rows;
}

inline SpherePoint default_pole_reference() { return {0.0, kPi / 4.0}; }

/// Continuity verdict: statistic = spread at the smallest epsilon divided by
/// sigma; passes when it is < 1e-3 and the spread is nonincreasing (1e-12
/// slack) along the epsilon grid.
inline DiagnosticReport check_pole_continuity(const KernelSpec& spec,
                                              std::span<const double> epsilons,
                                              int n_longitudes = 72,
                                              const SpherePoint& reference = default_pole_reference()) {
  const auto rows = pole_continuity_probe(kernel_function(spec), epsilons, n_longitudes, reference);
  DiagnosticReport report{"pole_continuity", false, std::numeric_limits<double>::infinity(), 1e-3,
                          "statistic < threshold and spread nonincreasing in epsilon", {}};
  bool monotone = true;
  double last = std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    if (row.undefined_at_pole || std::isnan(row.spread)) {
      monotone = false;
      continue;
    }
    if (row.spread > last + 1e-12) monotone = false;
    last = row.spread;
    report.statistic = row.spread / spec.sigma();
  }
  report.passed = monotone && report.statistic < report.threshold;
  return report;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct PredictionRecord {
  std::size_t index = 0;
  int fold = 0;
  double observed = 0.0;
  double mean = 0.0;
  /// Predictive variance of the observation: latent variance + tau2.
  double variance = 0.0;
};

struct ScoreRow {
  std::string model;
  bool failed = false;
  std::string error;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double mean_log_score = std::numeric_limits<double>::quiet_NaN();
  double mean_crps = std::numeric_limits<double>::quiet_NaN();
  std::vector<PredictionRecord> records;
};

struct CrossValidationResult {
  std::vector<int> fold_of;
  std::vector<ScoreRow> rows;
};

/// Gaussian log predictive density; larger is better.
inline double gaussian_log_score(double y, double mean, double variance) {
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + (y - mean) * (y - mean) / variance);
}

/// Closed-form CRPS of N(mean, variance) at y; smaller is better.
inline double gaussian_crps(double y, double mean, double variance) {
  const double sd = std::sqrt(variance);
  const double z = (y - mean) / sd;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  return sd * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::sqrt(std::numbers::pi));
}

/// Seeded shuffle, then index i of the permutation goes to fold i mod k.
inline std::vector<int> assign_folds(std::size_t n, int k_folds, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  CounterRng rng(seed, 0xf01d);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  std::vector<int> fold_of(n);
  for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k_folds));
  return fold_of;
}

inline CrossValidationResult cross_validate(std::span<const KernelSpec> templates, const Dataset& data,
                                            int k_folds, const FitConfig& config, std::uint64_t seed) {
  if (k_folds < 2) throw DataError("cross_validate: k_folds must be >= 2");
  if (data.size() < static_cast<std::size_t>(k_folds)) {
    throw DataError("cross_validate: fewer sites than folds");
  }
  data.validate(true);

  CrossValidationResult result;
  result.fold_of = assign_folds(data.size(), k_folds, seed);

  for (const KernelSpec& templ : templates) {
    ScoreRow row;
    row.model = templ.descriptor();
    try {
      for (int fold = 0; fold < k_folds; ++fold) {
        Dataset train;
        std::vector<SpherePoint> held_sites;
        std::vector<std::size_t> held_index;
        for (std::size_t i = 0; i < data.size(); ++i) {
          if (result.fold_of[i] == fold) {
            held_sites.push_back(data.sites[i]);
            held_index.push_back(i);
          } else {
            train.sites.push_back(data.sites[i]);
            train.values.push_back(data.values[i]);
          }
        }
        const FitResult fit = fit_mle(templ, train, config);
        const GpModel model = build_model(fit.best_spec, std::move(train));
        const auto preds = krige(model, held_sites);
        for (std::size_t h = 0; h < held_index.size(); ++h) {
          const std::size_t i = held_index[h];
          row.records.push_back({i, fold, data.values[i], preds[h].mean,
                                 preds[h].variance + fit.best_spec.nugget()});
        }
      }
      std::sort(row.records.begin(), row.records.end(),
                [](const PredictionRecord& a, const PredictionRecord& b) { return a.index < b.index; });
      double sq = 0.0, ls = 0.0, crps = 0.0;
      for (const auto& r : row.records) {
        const double var = std::max(r.variance, std::numeric_limits<double>::min());
        sq += (r.observed - r.mean) * (r.observed - r.mean);
        ls += gaussian_log_score(r.observed, r.mean, var);
        crps += gaussian_crps(r.observed, r.mean, var);
      }
      const double n = static_cast<double>(row.records.size());
      row.rmse = std::sqrt(sq / n);
      row.mean_log_score = ls / n;
      row.mean_crps = crps / n;
    } catch (const NumericalError& e) {
      row.failed = true;
      row.error = e.what();
      row.records.clear();
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Empirical covariogram

/// Fixed-width binning. Latitude bands are [edge_k, edge_{k+1}) on the mean
/// latitude of a pair (the last band is closed). Pairs are oriented so the
/// wrapped longitude lag lon_b - lon_a lies in [0, pi]; the latitude lag is
/// the signed lat_b - lat_a. Longitude-lag bins cover [0, lon_bin_width *
/// n_lon_bins); latitude-lag bins cover +/- lat_bin_width * n_lat_bins / 2.
struct CovariogramBins {
  std::vector<double> band_edges{-kHalfPi, kHalfPi};
  double lon_bin_width = kPi / 12.0;
  int n_lon_bins = 12;
  double lat_bin_width = kPi / 12.0;
  int n_lat_bins = 12;
};

struct CovariogramRow {
  int band = 0;
  int lon_bin = 0;
  int lat_bin = 0;
  double lon_lag_lo = 0.0;
  double lat_lag_lo = 0.0;
  /// NaN when pair_count is 0.
  double covariance = std::numeric_limits<double>::quiet_NaN();
  std::size_t pair_count = 0;
};

/// Moment estimator: for every site pair the sample covariance of the
/// centered draws, averaged within (band, lon-lag bin, lat-lag bin).
/// Rows are emitted for every bin in band-major order.
inline std::vector<CovariogramRow> empirical_covariogram(const Eigen::MatrixXd& draws,
                                                         std::span<const SpherePoint> sites,
                                                         const CovariogramBins& bins = {}) {
  if (draws.rows() < 2) throw DataError("empirical_covariogram: need at least 2 draws");
  if (static_cast<std::size_t>(draws.cols()) != sites.size()) {
    throw DataError("empirical_covariogram: draws and sites disagree in size");
  }
  if (bins.band_edges.size() < 2 || bins.n_lon_bins < 1 || bins.n_lat_bins < 1 ||
      !(bins.lon_bin_width > 0.0) || !(bins.lat_bin_width > 0.0)) {
    throw DataError("empirical_covariogram: invalid bins");
  }
  const int n_bands = static_cast<int>(bins.band_edges.size()) - 1;
  const double lat_origin = -0.5 * bins.lat_bin_width * bins.n_lat_bins;

  std::vector<CovariogramRow> rows;
  for (int b = 0; b < n_bands; ++b) {
    for (int i = 0; i < bins.n_lon_bins; ++i) {
      for (int j = 0; j < bins.n_lat_bins; ++j) {
        rows.push_back({b, i, j, i * bins.lon_bin_width, lat_origin + j * bins.lat_bin_width,
                        0.0, 0});
      }
    }
  }
  auto slot = [&](int b, int i, int j) {
    return (static_cast<std::size_t>(b) * bins.n_lon_bins + i) * bins.n_lat_bins + j;
  };

  const Eigen::MatrixXd centered = draws.rowwise() - draws.colwise().mean();
  const double denom = static_cast<double>(draws.rows() - 1);

  for (std::size_t a = 0; a < sites.size(); ++a) {
    for (std::size_t c = a + 1; c < sites.size(); ++c) {
      std::size_t first = a, second = c;
      double signed_lon = std::remainder(sites[c].lon() - sites[a].lon(), kTwoPi);
      if (signed_lon < 0.0 || ((signed_lon == 0.0 || signed_lon == kPi) &&
                               sites[c].lat() < sites[a].lat())) {
        std::swap(first, second);
      }
      const double lon_lag = longitude_lag(sites[first], sites[second]);
      const double lat_lag = sites[second].lat() - sites[first].lat();
      const double mid_lat = 0.5 * (sites[a].lat() + sites[c].lat());

      int band = -1;
      for (int b = 0; b < n_bands; ++b) {
        const bool last = b == n_bands - 1;
        if (mid_lat >= bins.band_edges[b] &&
            (mid_lat < bins.band_edges[b + 1] || (last && mid_lat == bins.band_edges[b + 1]))) {
          band = b;
          break;
        }
      }
      if (band < 0) continue;
      const auto lon_bin = static_cast<int>(std::floor(lon_lag / bins.lon_bin_width));
      const auto lat_bin = static_cast<int>(std::floor((lat_lag - lat_origin) / bins.lat_bin_width));
      if (lon_bin < 0 || lon_bin >= bins.n_lon_bins || lat_bin < 0 || lat_bin >= bins.n_lat_bins) {
        continue;
      }
      const double estimate =
          centered.col(static_cast<Eigen::Index>(a)).dot(centered.col(static_cast<Eigen::Index>(c))) /
          denom;
      CovariogramRow& row = rows[slot(band, lon_bin, lat_bin)];
      row.covariance += estimate;
      ++row.pair_count;
    }
  }
  for (auto& row : rows) {
    if (row.pair_count == 0) {
      row.covariance = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.covariance /= static_cast<double>(row.pair_count);
    }
  }
  return rows;
}

}  // namespace spheregp
