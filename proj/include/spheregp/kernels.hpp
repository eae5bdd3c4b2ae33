#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "spheregp/errors.hpp"
#include "spheregp/geometry.hpp"

namespace spheregp {

enum class Family {
  iso_exponential,
  iso_powered_exponential,
  iso_spherical,
  chordal_matern,
  lat_exponential,
  lat_powered_exponential,
  axisym_product,
  separable_lonlat,
  euclidean_aniso_exp,
};

inline constexpr std::array kAllFamilies = {
    Family::iso_exponential, Family::iso_powered_exponential, Family::iso_spherical,
    Family::chordal_matern,  Family::lat_exponential,         Family::lat_powered_exponential,
    Family::axisym_product,  Family::separable_lonlat,        Family::euclidean_aniso_exp,
};

inline constexpr std::array kIsotropicFamilies = {
    Family::iso_exponential, Family::iso_powered_exponential, Family::iso_spherical,
    Family::chordal_matern};

inline constexpr std::array kLatitudeFamilies = {Family::lat_exponential,
                                                 Family::lat_powered_exponential};

inline std::string_view family_name(Family family) {
  switch (family) {
    case Family::iso_exponential: return "iso_exponential";
    case Family::iso_powered_exponential: return "iso_powered_exponential";
    case Family::iso_spherical: return "iso_spherical";
    case Family::chordal_matern: return "chordal_matern";
    case Family::lat_exponential: return "lat_exponential";
    case Family::lat_powered_exponential: return "lat_powered_exponential";
    case Family::axisym_product: return "axisym_product";
    case Family::separable_lonlat: return "separable_lonlat";
    case Family::euclidean_aniso_exp: return "euclidean_aniso_exp";
  }
  return "unknown";
}

inline std::optional<Family> family_from_name(std::string_view name) {
  for (Family f : kAllFamilies) {
    if (family_name(f) == name) return f;
  }
  return std::nullopt;
}

inline bool is_isotropic(Family f) {
  return std::find(kIsotropicFamilies.begin(), kIsotropicFamilies.end(), f) !=
         kIsotropicFamilies.end();
}

inline bool is_latitude(Family f) {
  return f == Family::lat_exponential || f == Family::lat_powered_exponential;
}

/// Invalid kernel construction or parameter update.
class KernelError : public DataError {
 public:
  using DataError::DataError;
};

/// How the fitter moves a parameter to an unconstrained coordinate.
enum class ParamScale { log, logit };

struct ParamInfo {
  std::string name;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  ParamScale scale = ParamScale::log;
  /// True when `lower` itself is not an admissible value (alpha > 0).
  bool lower_open = false;
};

namespace bounds {
inline constexpr double kSigmaLower = 1e-8;
inline constexpr double kSigmaUpper = 1e8;
inline constexpr double kRangeLower = 1e-4;
inline constexpr double kRangeUpper = 1e4;
/// Latitude ranges may grow until the latitude factor is 1 to ~1e-8, so a
/// product kernel can reach its isotropic child.
inline constexpr double kLatRangeUpper = 1e8;
inline constexpr double kNuLower = 0.05;
inline constexpr double kNuUpper = 5.0;
/// tau2 may reach this multiple of sigma.
inline constexpr double kNuggetRatio = 10.0;
}  // namespace bounds

/// Parametric covariance description.
///
/// Parameter order per family (tau2 is appended by param_vector for every
/// top-level spec):
///   iso_exponential          sigma, r_iso
///   iso_powered_exponential  sigma, r_iso, alpha
///   iso_spherical            sigma, r_iso
///   chordal_matern           sigma, r_iso, nu
///   lat_exponential          r_phi
///   lat_powered_exponential  r_phi, alpha_phi
///   axisym_product           <iso child params>, <lat child params>
///   separable_lonlat         sigma, r_theta, r_phi
///   euclidean_aniso_exp      sigma, r1, r2
///
/// sigma is the variance (value at zero lag). Latitude kernels are
/// correlations and carry no sigma of their own.
class KernelSpec {
 public:
  static KernelSpec iso_exponential(double sigma, double r_iso, double tau2 = 0.0) {
    return KernelSpec(Family::iso_exponential, {sigma, r_iso}, tau2);
  }
  static KernelSpec iso_powered_exponential(double sigma, double r_iso, double alpha,
                                            double tau2 = 0.0) {
    return KernelSpec(Family::iso_powered_exponential, {sigma, r_iso, alpha}, tau2);
  }
  static KernelSpec iso_spherical(double sigma, double r_iso, double tau2 = 0.0) {
    return KernelSpec(Family::iso_spherical, {sigma, r_iso}, tau2);
  }
  static KernelSpec chordal_matern(double sigma, double r_iso, double nu, double tau2 = 0.0) {
    return KernelSpec(Family::chordal_matern, {sigma, r_iso, nu}, tau2);
  }
  static KernelSpec lat_exponential(double r_phi) {
    return KernelSpec(Family::lat_exponential, {r_phi}, 0.0);
  }
  static KernelSpec lat_powered_exponential(double r_phi, double alpha_phi) {
    return KernelSpec(Family::lat_powered_exponential, {r_phi, alpha_phi}, 0.0);
  }
  static KernelSpec separable_lonlat(double sigma, double r_theta, double r_phi,
                                     double tau2 = 0.0) {
    return KernelSpec(Family::separable_lonlat, {sigma, r_theta, r_phi}, tau2);
  }
  static KernelSpec euclidean_aniso_exp(double sigma, double r1, double r2, double tau2 = 0.0) {
    return KernelSpec(Family::euclidean_aniso_exp, {sigma, r1, r2}, tau2);
  }

  /// Isotropic kernel times latitude correlation. The children's own nuggets
  /// must be zero; the product carries `tau2`.
  static KernelSpec axisym_product(KernelSpec iso_child, KernelSpec lat_child, double tau2 = 0.0) {
    if (!is_isotropic(iso_child.family())) {
      throw KernelError("axisym_product: first child must be isotropic, got " +
                        std::string(family_name(iso_child.family())));
    }
    if (!is_latitude(lat_child.family())) {
      throw KernelError("axisym_product: second child must be a latitude kernel, got " +
                        std::string(family_name(lat_child.family())));
    }
    if (iso_child.nugget() != 0.0) {
      throw KernelError("axisym_product: children carry no nugget");
    }
    KernelSpec spec;
    spec.family_ = Family::axisym_product;
    spec.children_ = {std::move(iso_child), std::move(lat_child)};
    spec.set_nugget(tau2);
    return spec;
  }

  /// Builds a spec from a family and its own parameter values (children
  /// excluded), validating every constraint.
  static KernelSpec from_values(Family family, std::vector<double> values, double tau2 = 0.0) {
    if (family == Family::axisym_product) {
      throw KernelError("axisym_product is built from its children");
    }
    return KernelSpec(family, std::move(values), tau2);
  }

  Family family() const { return family_; }
  std::span<const double> values() const { return values_; }
  double value(std::size_t i) const { return values_.at(i); }
  double nugget() const { return nugget_; }
  const std::vector<KernelSpec>& children() const { return children_; }
  const KernelSpec& iso_child() const { return children_.at(0); }
  const KernelSpec& lat_child() const { return children_.at(1); }

  /// Variance scale: K(x, x) without the nugget.
  double sigma() const {
    switch (family_) {
      case Family::axisym_product: return iso_child().sigma();
      case Family::lat_exponential:
      case Family::lat_powered_exponential: return 1.0;
      default: return values_.front();
    }
  }

  /// Stable human-readable identifier, e.g. "axisym_product(iso_exponential,lat_exponential)".
  std::string descriptor() const {
    std::string out(family_name(family_));
    if (!children_.empty()) {
      out += "(";
      for (std::size_t i = 0; i < children_.size(); ++i) {
        if (i) out += ",";
        out += children_[i].descriptor();
      }
      out += ")";
    }
    return out;
  }

  void set_nugget(double tau2) {
    if (!std::isfinite(tau2) || tau2 < 0.0) {
      throw KernelError("nugget tau2 must be finite and >= 0");
    }
    if (is_latitude(family_) && tau2 != 0.0) {
      throw KernelError("latitude kernels are correlations and carry no nugget");
    }
    nugget_ = tau2;
  }

  /// Own parameter names for a non-product family, in storage order.
  static std::vector<std::string> value_names(Family family) {
    switch (family) {
      case Family::iso_exponential:
      case Family::iso_spherical: return {"sigma", "r_iso"};
      case Family::iso_powered_exponential: return {"sigma", "r_iso", "alpha"};
      case Family::chordal_matern: return {"sigma", "r_iso", "nu"};
      case Family::lat_exponential: return {"r_phi"};
      case Family::lat_powered_exponential: return {"r_phi", "alpha_phi"};
      case Family::separable_lonlat: return {"sigma", "r_theta", "r_phi"};
      case Family::euclidean_aniso_exp: return {"sigma", "r1", "r2"};
      case Family::axisym_product: return {};
    }
    return {};
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;

 private:
  KernelSpec() = default;

  KernelSpec(Family family, std::vector<double> values, double tau2)
      : family_(family), values_(std::move(values)) {
    const auto names = value_names(family_);
    if (names.size() != values_.size()) {
      throw KernelError(std::string(family_name(family_)) + " expects " +
                        std::to_string(names.size()) + " parameters, got " +
                        std::to_string(values_.size()));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      check_value(names[i], values_[i]);
    }
    set_nugget(tau2);
  }

  static void check_value(const std::string& name, double v) {
    if (!std::isfinite(v)) throw KernelError("parameter " + name + " is not finite");
    if (name == "alpha" || name == "alpha_phi") {
      if (!(v > 0.0 && v <= 1.0)) throw KernelError("parameter " + name + " must lie in (0, 1]");
    } else if (!(v > 0.0)) {
      throw KernelError("parameter " + name + " must be > 0");
    }
  }

  Family family_ = Family::iso_exponential;
  std::vector<double> values_;
  double nugget_ = 0.0;
  std::vector<KernelSpec> children_;
};

inline KernelSpec make_axisym_product(KernelSpec iso_child, KernelSpec lat_child) {
  return KernelSpec::axisym_product(std::move(iso_child), std::move(lat_child));
}

/// The exponential product kernel sigma exp(-d/r_iso) exp(-|dlat|/r_phi).
inline KernelSpec axisym_exp_product(double sigma, double r_iso, double r_phi, double tau2 = 0.0) {
  return KernelSpec::axisym_product(KernelSpec::iso_exponential(sigma, r_iso),
                                    KernelSpec::lat_exponential(r_phi), tau2);
}

namespace detail {

/// Matern correlation 2^(1-nu)/Gamma(nu) t^nu K_nu(t) with t = h / range.
inline double matern_correlation(double h, double range, double nu) {
  const double t = h / range;
  if (t < 1e-12) return 1.0;
  if (nu == 0.5) return std::exp(-t);
  if (t > 700.0) return 0.0;
  const double log_scale = (1.0 - nu) * std::log(2.0) - boost::math::lgamma(nu) + nu * std::log(t);
  const double value = std::exp(log_scale) * boost::math::cyl_bessel_k(nu, t);
  return std::clamp(value, 0.0, 1.0);
}

inline double iso_correlation(const KernelSpec& spec, double d) {
  const auto v = spec.values();
  switch (spec.family()) {
    case Family::iso_exponential: return std::exp(-d / v[1]);
    case Family::iso_powered_exponential: return std::exp(-std::pow(d / v[1], v[2]));
    case Family::iso_spherical: {
      const double t = d / v[1];
      return t < 1.0 ? 1.0 - 1.5 * t + 0.5 * t * t * t : 0.0;
    }
    case Family::chordal_matern: return matern_correlation(2.0 * std::sin(0.5 * d), v[1], v[2]);
    default: break;
  }
  throw KernelError("eval_iso: " + std::string(family_name(spec.family())) +
                    " is not an isotropic family");
}

inline void check_latitude(double lat) {
  if (!(lat >= -kHalfPi && lat <= kHalfPi)) {
    throw DataError("latitude " + std::to_string(lat) + " outside [-pi/2, pi/2]");
  }
}

}  // namespace detail

/// sigma * g(d(x, y)) for an isotropic family; the nugget is not included.
inline double eval_iso(const KernelSpec& spec, const SpherePoint& x, const SpherePoint& y) {
  const double d = great_circle_distance(x, y);
  return spec.sigma() * detail::iso_correlation(spec, d);
}

/// Latitude correlation in (0, 1].
inline double eval_lat(const KernelSpec& spec, double lat_x, double lat_y) {
  detail::check_latitude(lat_x);
  detail::check_latitude(lat_y);
  const auto v = spec.values();
  const double lag = std::fabs(lat_x - lat_y);
  switch (spec.family()) {
    case Family::lat_exponential: return std::exp(-lag / v[0]);
    case Family::lat_powered_exponential: return std::exp(-std::pow(lag / v[0], v[1]));
    default: break;
  }
  throw KernelError("eval_lat: " + std::string(family_name(spec.family())) +
                    " is not a latitude family");
}

/// Huang-style product of a longitude-lag and a latitude-lag exponential.
/// Longitude lag is wrapped into [0, pi]. Undefined when either point is a pole.
inline double eval_separable_lonlat(const KernelSpec& spec, const SpherePoint& x,
                                    const SpherePoint& y) {
  if (spec.family() != Family::separable_lonlat) {
    throw KernelError("eval_separable_lonlat: wrong family");
  }
  if (x.is_pole() || y.is_pole()) throw UndefinedAtPole("separable_lonlat");
  const auto v = spec.values();
  return v[0] * std::exp(-std::fabs(x.lat() - y.lat()) / v[2]) *
         std::exp(-longitude_lag(x, y) / v[1]);
}

inline double eval_euclidean_aniso(const KernelSpec& spec, const Point2D& x, const Point2D& y) {
  if (spec.family() != Family::euclidean_aniso_exp) {
    throw KernelError("eval_euclidean_aniso: wrong family");
  }
  const auto v = spec.values();
  return v[0] * std::exp(-std::fabs(x.x - y.x) / v[1]) * std::exp(-std::fabs(x.y - y.y) / v[2]);
}

/// Covariance without the nugget term.
inline double eval_latent(const KernelSpec& spec, const SpherePoint& x, const SpherePoint& y) {
  switch (spec.family()) {
    case Family::iso_exponential:
    case Family::iso_powered_exponential:
    case Family::iso_spherical:
    case Family::chordal_matern: return eval_iso(spec, x, y);
    case Family::lat_exponential:
    case Family::lat_powered_exponential: return eval_lat(spec, x.lat(), y.lat());
    case Family::axisym_product:
      return eval_iso(spec.iso_child(), x, y) * eval_lat(spec.lat_child(), x.lat(), y.lat());
    case Family::separable_lonlat: return eval_separable_lonlat(spec, x, y);
    case Family::euclidean_aniso_exp:
      throw KernelError("euclidean_aniso_exp is evaluated on planar points, not on the sphere");
  }
  throw KernelError("unknown kernel family");
}

/// Full covariance: family value plus tau2 when x and y are the same point.
inline double eval(const KernelSpec& spec, const SpherePoint& x, const SpherePoint& y) {
  const double value = eval_latent(spec, x, y);
  return x == y ? value + spec.nugget() : value;
}

namespace detail {

inline ParamInfo describe(const std::string& name, double value, double sigma_hint) {
  using namespace bounds;
  if (name == "sigma") return {name, value, kSigmaLower, kSigmaUpper, ParamScale::log, false};
  if (name == "alpha" || name == "alpha_phi") return {name, value, 0.0, 1.0, ParamScale::logit, true};
  if (name == "nu") return {name, value, kNuLower, kNuUpper, ParamScale::logit, false};
  if (name == "tau2") {
    return {name, value, 0.0, kNuggetRatio * sigma_hint, ParamScale::logit, false};
  }
  if (name == "r_phi") return {name, value, kRangeLower, kLatRangeUpper, ParamScale::log, false};
  return {name, value, kRangeLower, kRangeUpper, ParamScale::log, false};
}

inline void append_params(const KernelSpec& spec, double sigma_hint, std::vector<ParamInfo>& out) {
  if (spec.family() == Family::axisym_product) {
    for (const auto& child : spec.children()) append_params(child, sigma_hint, out);
    return;
  }
  const auto names = KernelSpec::value_names(spec.family());
  for (std::size_t i = 0; i < names.size(); ++i) {
    out.push_back(describe(names[i], spec.value(i), sigma_hint));
  }
}

inline bool within(const ParamInfo& p, double v) {
  if (!std::isfinite(v)) return false;
  if (p.lower_open ? !(v > p.lower) : !(v >= p.lower)) return false;
  return v <= p.upper;
}

}  // namespace detail

/// Flat, ordered parameter list with fitting bounds; tau2 is always last.
inline std::vector<ParamInfo> param_vector(const KernelSpec& spec) {
  std::vector<ParamInfo> out;
  detail::append_params(spec, spec.sigma(), out);
  out.push_back(detail::describe("tau2", spec.nugget(), spec.sigma()));
  return out;
}

inline std::vector<std::string> param_names(const KernelSpec& spec) {
  std::vector<std::string> names;
  for (const auto& p : param_vector(spec)) names.push_back(p.name);
  return names;
}

/// Returns a copy of `spec` with parameters replaced, in param_vector order.
/// Every value must lie inside its fitting bounds; tau2 is bounded by the new sigma.
inline KernelSpec set_params(const KernelSpec& spec, std::span<const double> values) {
  const auto current = param_vector(spec);
  if (values.size() != current.size()) {
    throw KernelError("set_params: expected " + std::to_string(current.size()) +
                      " values, got " + std::to_string(values.size()));
  }

  std::size_t next = 0;
  auto rebuild = [&](const KernelSpec& s, auto&& self) -> KernelSpec {
    if (s.family() == Family::axisym_product) {
      KernelSpec iso = self(s.iso_child(), self);
      KernelSpec lat = self(s.lat_child(), self);
      return KernelSpec::axisym_product(std::move(iso), std::move(lat));
    }
    std::vector<double> own(s.values().size());
    for (double& v : own) {
      const ParamInfo& info = current[next];
      const double candidate = values[next];
      if (!detail::within(info, candidate)) {
        throw KernelError("set_params: " + info.name + " = " + std::to_string(candidate) +
                          " outside its bounds");
      }
      v = candidate;
      ++next;
    }
    return KernelSpec::from_values(s.family(), std::move(own));
  };

  KernelSpec updated = rebuild(spec, rebuild);
  const double tau2 = values[next];
  const ParamInfo tau_info = detail::describe("tau2", tau2, updated.sigma());
  if (!detail::within(tau_info, tau2)) {
    throw KernelError("set_params: tau2 = " + std::to_string(tau2) + " outside [0, 10 sigma]");
  }
  updated.set_nugget(tau2);
  return updated;
}

}  // namespace spheregp
