#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "spheregp/errors.hpp"
#include "spheregp/geometry.hpp"
#include "spheregp/kernels.hpp"
#include "spheregp/random.hpp"

namespace spheregp {

/// Observation sites and values.
struct Dataset {
  std::vector<SpherePoint> sites;
  std::vector<double> values;
  std::string name;

  std::size_t size() const { return sites.size(); }

  Eigen::VectorXd values_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  /// Index of the first site repeated later in the list, if any.
  std::optional<std::pair<std::size_t, std::size_t>> first_duplicate() const {
    for (std::size_t i = 0; i < sites.size(); ++i) {
      for (std::size_t j = i + 1; j < sites.size(); ++j) {
        if (sites[i] == sites[j]) return std::pair{i, j};
      }
    }
    return std::nullopt;
  }

  /// Throws DataError on empty/mismatched data, non-finite values, or
  /// duplicate sites when `allow_duplicates` is false.
  void validate(bool allow_duplicates) const {
    if (sites.empty()) throw DataError("dataset is empty");
    if (sites.size() != values.size()) {
      throw DataError("dataset has " + std::to_string(sites.size()) + " sites but " +
                      std::to_string(values.size()) + " values");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw DataError("dataset value " + std::to_string(i) + " is not finite");
      }
    }
    if (!allow_duplicates) {
      if (auto dup = first_duplicate()) {
        throw DataError("duplicate site at indices " + std::to_string(dup->first) + " and " +
                        std::to_string(dup->second) + " (a nugget tau2 > 0 is required)");
      }
    }
  }
};

/// Jitter added to the diagonal when a factorization fails: start * sigma,
/// multiplied by `factor` until it exceeds max * sigma.
struct JitterPolicy {
  double start = 1e-10;
  double max = 1e-4;
  double factor = 10.0;
  bool enabled = true;
};

struct PredictionResult {
  double mean = 0.0;
  double variance = 0.0;
};

/// A kernel bound to a dataset with its factorized covariance.
struct GpModel {
  KernelSpec spec;
  Dataset data;
  Eigen::MatrixXd chol;   // lower triangular, chol * chol^T = K + (tau2 + jitter) I
  Eigen::VectorXd alpha;  // (K + (tau2 + jitter) I)^-1 y
  double log_det = 0.0;
  double jitter = 0.0;
};

namespace detail {

/// Rethrows kernel errors tagged with the offending pair; `cross` marks a
/// site/target block rather than a site/site block.
template <typename Fn>
decltype(auto) with_site_context(std::size_t i, std::size_t j, bool cross, Fn&& fn) {
  try {
    return fn();
  } catch (const UndefinedAtPole&) {
    throw UndefinedAtPole((cross ? "site " : "sites ") + std::to_string(i) +
                          (cross ? ", target " : ", ") + std::to_string(j));
  } catch (const KernelError& e) {
    throw KernelError(std::string(e.what()) + (cross ? " (site " : " (sites ") + std::to_string(i) +
                      (cross ? ", target " : ", ") + std::to_string(j) + ")");
  }
}

template <typename Eval>
Eigen::MatrixXd assemble_with(Eval&& eval_fn, std::span<const SpherePoint> a,
                              std::span<const SpherePoint> b, bool same) {
  const auto rows = static_cast<Eigen::Index>(a.size());
  const auto cols = static_cast<Eigen::Index>(b.size());
  Eigen::MatrixXd k(rows, cols);
  if (same) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = i; j < cols; ++j) {
        const double v = with_site_context(i, j, false, [&] { return eval_fn(a[i], b[j]); });
        k(i, j) = v;
        k(j, i) = v;
      }
    }
  } else {
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        k(i, j) = with_site_context(i, j, true, [&] { return eval_fn(a[i], b[j]); });
      }
    }
  }
  return k;
}

/// Smallest diagonal value the factorization accepts; matrices whose whole
/// diagonal sits below it are treated as numerically zero.
inline constexpr double kMinVariance = 1e-20;

/// Lower Cholesky factor, or nullopt when a pivot is non-positive or
/// negligible relative to the largest diagonal entry.
inline std::optional<Eigen::MatrixXd> try_cholesky(const Eigen::MatrixXd& m) {
  const double max_diag = m.diagonal().maxCoeff();
  if (!(max_diag > kMinVariance)) return std::nullopt;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Eigen::MatrixXd l = llt.matrixL();
  const double floor = std::numeric_limits<double>::epsilon() * max_diag;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    const double pivot = l(i, i);
    if (!std::isfinite(pivot) || !(pivot * pivot > floor)) return std::nullopt;
  }
  return l;
}

}  // namespace detail

/// Entry (i, j) = eval(spec, a_i, b_j), nugget included at coincident points.
inline Eigen::MatrixXd assemble_covariance(const KernelSpec& spec, std::span<const SpherePoint> a,
                                           std::span<const SpherePoint> b) {
  const bool same = a.data() == b.data() && a.size() == b.size();
  return detail::assemble_with(
      [&](const SpherePoint& x, const SpherePoint& y) { return eval(spec, x, y); }, a, b, same);
}

inline Eigen::MatrixXd assemble_covariance(const KernelSpec& spec, std::span<const SpherePoint> sites) {
  return assemble_covariance(spec, sites, sites);
}

/// Same as assemble_covariance but without the nugget term.
inline Eigen::MatrixXd assemble_latent_covariance(const KernelSpec& spec,
                                                  std::span<const SpherePoint> a,
                                                  std::span<const SpherePoint> b) {
  const bool same = a.data() == b.data() && a.size() == b.size();
  return detail::assemble_with(
      [&](const SpherePoint& x, const SpherePoint& y) { return eval_latent(spec, x, y); }, a, b,
      same);
}

/// Pairwise geometry of one site set. Computed once and reused when the
/// same sites are factored at many parameter values.
struct SiteGeometry {
  Eigen::MatrixXd distance;  // great-circle
  Eigen::MatrixXd lat_lag;   // |lat_i - lat_j|
  Eigen::MatrixXd lon_lag;   // wrapped into [0, pi]
  bool has_pole = false;

  explicit SiteGeometry(std::span<const SpherePoint> sites) {
    const auto n = static_cast<Eigen::Index>(sites.size());
    distance.setZero(n, n);
    lat_lag.setZero(n, n);
    lon_lag.setZero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      has_pole = has_pole || sites[i].is_pole();
      for (Eigen::Index j = i + 1; j < n; ++j) {
        distance(i, j) = distance(j, i) = great_circle_distance(sites[i], sites[j]);
        lat_lag(i, j) = lat_lag(j, i) = std::fabs(sites[i].lat() - sites[j].lat());
        lon_lag(i, j) = lon_lag(j, i) = longitude_lag(sites[i], sites[j]);
      }
    }
  }

  Eigen::Index size() const { return distance.rows(); }
};

namespace detail {

inline Eigen::ArrayXXd iso_correlation_matrix(const KernelSpec& spec, const Eigen::ArrayXXd& d) {
  const auto v = spec.values();
  switch (spec.family()) {
    case Family::iso_exponential: return (-d / v[1]).exp();
    case Family::iso_powered_exponential: return (-(d / v[1]).pow(v[2])).exp();
    default: return d.unaryExpr([&](double h) { return iso_correlation(spec, h); });
  }
}

inline Eigen::ArrayXXd lat_correlation_matrix(const KernelSpec& spec, const Eigen::ArrayXXd& lag) {
  const auto v = spec.values();
  switch (spec.family()) {
    case Family::lat_exponential: return (-lag / v[0]).exp();
    case Family::lat_powered_exponential: return (-(lag / v[0]).pow(v[1])).exp();
    default: break;
  }
  throw KernelError(std::string(family_name(spec.family())) + " is not a latitude family");
}

}  // namespace detail

/// Latent covariance of the geometry's sites; agrees with
/// assemble_latent_covariance up to rounding.
inline Eigen::MatrixXd latent_covariance(const KernelSpec& spec, const SiteGeometry& g) {
  switch (spec.family()) {
    case Family::iso_exponential:
    case Family::iso_powered_exponential:
    case Family::iso_spherical:
    case Family::chordal_matern:
      return (spec.sigma() * detail::iso_correlation_matrix(spec, g.distance.array())).matrix();
    case Family::lat_exponential:
    case Family::lat_powered_exponential:
      return detail::lat_correlation_matrix(spec, g.lat_lag.array()).matrix();
    case Family::axisym_product:
      return (spec.sigma() * detail::iso_correlation_matrix(spec.iso_child(), g.distance.array()) *
              detail::lat_correlation_matrix(spec.lat_child(), g.lat_lag.array()))
          .matrix();
    case Family::separable_lonlat: {
      if (g.has_pole) throw UndefinedAtPole("separable_lonlat");
      const auto v = spec.values();
      return (v[0] * (-g.lat_lag.array() / v[2]).exp() * (-g.lon_lag.array() / v[1]).exp())
          .matrix();
    }
    case Family::euclidean_aniso_exp: break;
  }
  throw KernelError(std::string(family_name(spec.family())) + " has no sphere covariance");
}

struct Factorization {
  Eigen::MatrixXd chol;
  double jitter = 0.0;
};

namespace detail {

/// Factors k + tau2 I, escalating diagonal jitter per `policy`.
inline Factorization factor_latent(Eigen::MatrixXd k, const KernelSpec& spec,
                                   const JitterPolicy& policy) {
  k.diagonal().array() += spec.nugget();

  if (auto l = try_cholesky(k)) return {std::move(*l), 0.0};
  if (policy.enabled) {
    const double scale = spec.sigma();
    for (double rel = policy.start; rel <= policy.max * (1.0 + 1e-12); rel *= policy.factor) {
      const double jitter = rel * scale;
      Eigen::MatrixXd jittered = k;
      jittered.diagonal().array() += jitter;
      if (auto l = try_cholesky(jittered)) return {std::move(*l), jitter};
    }
  }
  throw NotPositiveDefinite("covariance matrix not positive definite at these parameters (" +
                            spec.descriptor() + ")");
}

}  // namespace detail

/// Factors K + tau2 I, escalating diagonal jitter per `policy`.
inline Factorization factor_covariance(const KernelSpec& spec, std::span<const SpherePoint> sites,
                                       const JitterPolicy& policy = {}) {
  return detail::factor_latent(assemble_latent_covariance(spec, sites, sites), spec, policy);
}

inline Factorization factor_covariance(const KernelSpec& spec, const SiteGeometry& geometry,
                                       const JitterPolicy& policy = {}) {
  return detail::factor_latent(latent_covariance(spec, geometry), spec, policy);
}

inline GpModel build_model(const KernelSpec& spec, Dataset data, const JitterPolicy& policy = {}) {
  data.validate(spec.nugget() > 0.0);
  Factorization f = factor_covariance(spec, data.sites, policy);
  GpModel model{spec, std::move(data), std::move(f.chol), {}, 0.0, f.jitter};
  const Eigen::VectorXd half = model.chol.triangularView<Eigen::Lower>().solve(model.data.values_vector());
  model.alpha = model.chol.transpose().triangularView<Eigen::Upper>().solve(half);
  model.log_det = 2.0 * model.chol.diagonal().array().log().sum();
  return model;
}

/// Kriging mean and latent-field conditional variance at each target.
inline std::vector<PredictionResult> krige(const GpModel& model, std::span<const SpherePoint> targets) {
  std::vector<PredictionResult> out;
  if (targets.empty()) return out;
  const Eigen::MatrixXd cross =
      assemble_latent_covariance(model.spec, model.data.sites, targets);  // n x m
  const Eigen::MatrixXd v = model.chol.triangularView<Eigen::Lower>().solve(cross);
  const Eigen::VectorXd means = cross.transpose() * model.alpha;
  const double tolerance = 1e-8 * model.spec.sigma();
  out.reserve(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const double prior = eval_latent(model.spec, targets[j], targets[j]);
    double variance = prior - v.col(col).squaredNorm();
    if (variance < -tolerance) {
      throw NumericalError("negative conditional variance " + std::to_string(variance) +
                           " at target " + std::to_string(j));
    }
    out.push_back({means(col), std::max(variance, 0.0)});
  }
  return out;
}

inline PredictionResult krige(const GpModel& model, const SpherePoint& target) {
  return krige(model, std::span<const SpherePoint>(&target, 1)).front();
}

/// Zero-mean Gaussian log-likelihood of the model's data.
inline double log_likelihood(const GpModel& model) {
  const double n = static_cast<double>(model.data.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + model.log_det +
                 model.data.values_vector().dot(model.alpha));
}

/// Log-likelihood, or -infinity when the covariance cannot be factored.
inline double log_likelihood(const KernelSpec& spec, const Dataset& data,
                             const JitterPolicy& policy = {}) {
  try {
    return log_likelihood(build_model(spec, data, policy));
  } catch (const NotPositiveDefinite&) {
    return -std::numeric_limits<double>::infinity();
  }
}

/// Log-likelihood of `values` at the geometry's sites; -infinity when the
/// covariance cannot be factored.
inline double log_likelihood(const KernelSpec& spec, const SiteGeometry& geometry,
                             const Eigen::VectorXd& values, const JitterPolicy& policy = {}) {
  if (values.size() != geometry.size()) throw DataError("log_likelihood: size mismatch");
  Factorization f;
  try {
    f = factor_covariance(spec, geometry, policy);
  } catch (const NotPositiveDefinite&) {
    return -std::numeric_limits<double>::infinity();
  }
  const Eigen::VectorXd half = f.chol.triangularView<Eigen::Lower>().solve(values);
  const double log_det = 2.0 * f.chol.diagonal().array().log().sum();
  const double n = static_cast<double>(values.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det + half.squaredNorm());
}

/// n_draws x n_sites matrix; row d is L z_d with z_d drawn from a seeded
/// counter-based generator (site index varies fastest).
inline Eigen::MatrixXd simulate(const KernelSpec& spec, std::span<const SpherePoint> sites,
                                std::uint64_t seed, std::size_t n_draws,
                                const JitterPolicy& policy = {}) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd draws(static_cast<Eigen::Index>(n_draws), n);
  if (n_draws == 0 || n == 0) return draws;
  const Factorization f = factor_covariance(spec, sites, policy);
  CounterRng rng(seed);
  Eigen::MatrixXd z(n, static_cast<Eigen::Index>(n_draws));
  for (Eigen::Index d = 0; d < z.cols(); ++d) {
    for (Eigen::Index i = 0; i < n; ++i) z(i, d) = rng.normal();
  }
  draws = (f.chol.triangularView<Eigen::Lower>() * z).transpose();
  return draws;
}

}  // namespace spheregp
