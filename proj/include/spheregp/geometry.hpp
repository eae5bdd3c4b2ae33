#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "spheregp/errors.hpp"
#include "spheregp/random.hpp"

namespace spheregp {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHalfPi = std::numbers::pi / 2.0;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Mean Earth radius, used only to turn a ground spacing into an angle.
inline constexpr double kEarthRadiusKm = 6371.0;

inline double deg_to_rad(double deg) { return deg * (kPi / 180.0); }
inline double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

/// Maps any finite angle onto [-pi, pi). +pi is folded onto -pi so that
/// both spellings of the antimeridian compare equal.
inline double wrap_longitude(double lon) {
  double wrapped = std::remainder(lon, kTwoPi);
  if (wrapped >= kPi) wrapped -= kTwoPi;
  return wrapped;
}

/// A point on the unit sphere in radians. Longitude is canonicalized into
/// [-pi, pi); at the poles the stored longitude is kept but ignored by
/// equality and by every distance computation.
class SpherePoint {
 public:
  SpherePoint() = default;

  SpherePoint(double lon, double lat) : lat_(lat) {
    if (!std::isfinite(lon) || !std::isfinite(lat)) {
      throw DataError("sphere point: non-finite coordinate");
    }
    if (lat < -kHalfPi || lat > kHalfPi) {
      throw DataError("sphere point: latitude " + std::to_string(lat) +
                      " outside [-pi/2, pi/2]");
    }
    lon_ = wrap_longitude(lon);
  }

  static SpherePoint from_degrees(double lon_deg, double lat_deg) {
    // Exact poles stay exact after conversion.
    double lat = deg_to_rad(lat_deg);
    if (lat_deg == 90.0) lat = kHalfPi;
    if (lat_deg == -90.0) lat = -kHalfPi;
    return SpherePoint(deg_to_rad(lon_deg), lat);
  }

  static SpherePoint north_pole(double lon = 0.0) { return {lon, kHalfPi}; }
  static SpherePoint south_pole(double lon = 0.0) { return {lon, -kHalfPi}; }

  double lon() const { return lon_; }
  double lat() const { return lat_; }

  bool is_north_pole() const { return lat_ == kHalfPi; }
  bool is_south_pole() const { return lat_ == -kHalfPi; }
  bool is_pole() const { return is_north_pole() || is_south_pole(); }

  /// Same latitude, longitude moved by `delta` radians.
  SpherePoint shifted(double delta) const { return {lon_ + delta, lat_}; }

  friend bool operator==(const SpherePoint& a, const SpherePoint& b) {
    if (a.lat_ != b.lat_) return false;
    return a.is_pole() || a.lon_ == b.lon_;
  }

 private:
  double lon_ = 0.0;
  double lat_ = 0.0;
};

/// |lon_b - lon_a| taken around the circle, in [0, pi].
inline double longitude_lag(const SpherePoint& a, const SpherePoint& b) {
  return std::fabs(std::remainder(b.lon() - a.lon(), kTwoPi));
}

/// Great-circle (angular) distance on the unit sphere, in [0, pi].
inline double great_circle_distance(const SpherePoint& x, const SpherePoint& y) {
  // Longitude is meaningless at a pole; use the exact meridian distance.
  if (x.is_north_pole()) return kHalfPi - y.lat();
  if (x.is_south_pole()) return y.lat() + kHalfPi;
  if (y.is_north_pole()) return kHalfPi - x.lat();
  if (y.is_south_pole()) return x.lat() + kHalfPi;
  if (x == y) return 0.0;

  const double inner = std::sin(x.lat()) * std::sin(y.lat()) +
                       std::cos(x.lat()) * std::cos(y.lat()) * std::cos(y.lon() - x.lon());
  return std::acos(std::clamp(inner, -1.0, 1.0));
}

/// Chord length through the unit ball between two sphere points.
inline double chordal_distance(const SpherePoint& x, const SpherePoint& y) {
  return 2.0 * std::sin(0.5 * great_circle_distance(x, y));
}

/// Planar point used by the Euclidean anisotropic reference kernel.
struct Point2D {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2D&, const Point2D&) = default;
};

inline Point2D euclidean_point(double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) {
    throw DataError("euclidean point: non-finite coordinate");
  }
  return {x, y};
}

/// Area-uniform draw: longitude uniform, sin(latitude) uniform.
inline SpherePoint uniform_sphere_point(CounterRng& rng) {
  const double lon = rng.uniform(-kPi, kPi);
  const double lat = std::asin(rng.uniform(-1.0, 1.0));
  return {lon, lat};
}

inline std::vector<SpherePoint> uniform_sphere_points(std::size_t count, CounterRng& rng) {
  std::vector<SpherePoint> points;
  points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) points.push_back(uniform_sphere_point(rng));
  return points;
}

enum class GridKind { regular_lonlat, reduced_gaussian_like, fibonacci };

/// Deterministic point-set description.
///
/// regular_lonlat: n_lat interior latitude rings (poles excluded) times
///   n_lon equispaced longitudes starting at -pi.
/// reduced_gaussian_like: n_lat interior rings equispaced in latitude plus one
///   point per pole; each ring holds ceil(2 pi cos(lat) / spacing) points
///   (at least 4), where spacing = spacing_km / Earth radius.
/// fibonacci: n_points on the golden-angle spiral.
struct GridSpec {
  GridKind kind = GridKind::regular_lonlat;
  int n_lat = 1;
  int n_lon = 1;
  double spacing_km = 1000.0;
  int n_points = 1;

  static GridSpec regular(int n_lat, int n_lon) {
    return {GridKind::regular_lonlat, n_lat, n_lon, 1000.0, 1};
  }
  static GridSpec reduced(int n_lat, double spacing_km) {
    return {GridKind::reduced_gaussian_like, n_lat, 1, spacing_km, 1};
  }
  static GridSpec fibonacci_points(int n_points) {
    return {GridKind::fibonacci, 1, 1, 1000.0, n_points};
  }
};

namespace detail {

inline double ring_latitude(int ring, int n_rings) {
  return -kHalfPi + kPi * static_cast<double>(ring + 1) / static_cast<double>(n_rings + 1);
}

inline std::size_t reduced_ring_count(double lat, double spacing_rad) {
  // The small offset keeps exact multiples (16 cos(pi/3) = 8.0000000000000018)
  // from rounding up to an extra point.
  const double raw = kTwoPi * std::cos(lat) / spacing_rad - 1e-9;
  return std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(raw)));
}

}  // namespace detail

inline std::vector<SpherePoint> generate_grid(const GridSpec& spec) {
  std::vector<SpherePoint> points;
  switch (spec.kind) {
    case GridKind::regular_lonlat: {
      if (spec.n_lat < 1 || spec.n_lon < 1) {
        throw DataError("regular grid needs n_lat >= 1 and n_lon >= 1");
      }
      for (int i = 0; i < spec.n_lat; ++i) {
        const double lat = detail::ring_latitude(i, spec.n_lat);
        for (int j = 0; j < spec.n_lon; ++j) {
          points.emplace_back(-kPi + kTwoPi * j / spec.n_lon, lat);
        }
      }
      break;
    }
    case GridKind::reduced_gaussian_like: {
      if (spec.n_lat < 1) throw DataError("reduced grid needs n_lat >= 1");
      if (!(spec.spacing_km > 0.0) || !std::isfinite(spec.spacing_km)) {
        throw DataError("reduced grid needs a positive target spacing");
      }
      const double spacing_rad = spec.spacing_km / kEarthRadiusKm;
      points.push_back(SpherePoint::south_pole());
      for (int i = 0; i < spec.n_lat; ++i) {
        const double lat = detail::ring_latitude(i, spec.n_lat);
        const std::size_t count = detail::reduced_ring_count(lat, spacing_rad);
        for (std::size_t j = 0; j < count; ++j) {
          points.emplace_back(-kPi + kTwoPi * static_cast<double>(j) / static_cast<double>(count), lat);
        }
      }
      points.push_back(SpherePoint::north_pole());
      break;
    }
    case GridKind::fibonacci: {
      if (spec.n_points < 1) throw DataError("fibonacci grid needs n_points >= 1");
      const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
      const auto n = static_cast<double>(spec.n_points);
      for (int i = 0; i < spec.n_points; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        points.emplace_back(golden_angle * i, std::asin(z));
      }
      break;
    }
  }
  if (points.empty()) throw DataError("grid specification produced no points");
  return points;
}

}  // namespace spheregp
