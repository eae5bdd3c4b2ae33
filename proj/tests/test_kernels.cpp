#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "spheregp/kernels.hpp"
#include "spheregp/random.hpp"

namespace spheregp {
namespace {

// Points at a prescribed great-circle distance d along the equator.
SpherePoint equator(double lon) { return {lon, 0.0}; }

std::vector<KernelSpec> sample_specs() {
  return {
      KernelSpec::iso_exponential(1.3, 0.7, 0.05),
      KernelSpec::iso_powered_exponential(0.8, 0.4, 0.6),
      KernelSpec::iso_spherical(2.0, 1.1),
      KernelSpec::chordal_matern(1.0, 0.5, 1.5, 0.01),
      axisym_exp_product(1.5, 1.0, 0.2),
      KernelSpec::axisym_product(KernelSpec::chordal_matern(0.9, 0.6, 0.8),
                                 KernelSpec::lat_powered_exponential(0.3, 0.7), 0.02),
      KernelSpec::separable_lonlat(1.0, 0.5, 0.5),
  };
}

TEST(EvalIso, Values) {
  EXPECT_EQ(eval_iso(KernelSpec::iso_exponential(1, 1), {0.2, 0.3}, {0.2, 0.3}), 1.0);
  // 2 exp(-2 pi), 30-digit evaluation.
  EXPECT_NEAR(eval_iso(KernelSpec::iso_exponential(2, 0.5), SpherePoint::north_pole(),
                       SpherePoint::south_pole()),
              0.00373488546341597762886, 1e-15);
  EXPECT_EQ(eval_iso(KernelSpec::iso_spherical(1, 1), equator(0), equator(2)), 0.0);
  EXPECT_THROW(eval_iso(KernelSpec::lat_exponential(1), equator(0), equator(1)), KernelError);
}

TEST(EvalIso, ChordalMaternMatchesReference) {
  // 2^(1-nu)/Gamma(nu) t^nu K_nu(t), t = 2 sin(d/2) / r, 30-digit evaluation.
  EXPECT_NEAR(eval_iso(KernelSpec::chordal_matern(1, 0.5, 0.7), equator(0), equator(1)),
              0.209419281677166080721943, 1e-12);
  EXPECT_NEAR(eval_iso(KernelSpec::chordal_matern(1, 1.3, 2.5), equator(0), equator(2)),
              0.781823257519178451625108, 1e-12);
  // nu = 1/2 is the exponential in chordal distance.
  EXPECT_NEAR(eval_iso(KernelSpec::chordal_matern(1, 0.5, 0.5), equator(0), equator(1)),
              0.146944229636670507220860, 1e-14);
  EXPECT_EQ(eval_iso(KernelSpec::chordal_matern(3, 0.5, 1.7), equator(1), equator(1)), 3.0);
}

TEST(EvalIso, CorrelationNonincreasingInDistance) {
  for (const auto& spec : {KernelSpec::iso_exponential(1, 0.7), KernelSpec::iso_powered_exponential(1, 0.4, 0.3),
                           KernelSpec::iso_spherical(1, 1.1), KernelSpec::chordal_matern(1, 0.5, 2.2)}) {
    double previous = eval_iso(spec, equator(0), equator(0));
    EXPECT_DOUBLE_EQ(previous, 1.0);
    for (int k = 1; k <= 100; ++k) {
      const double v = eval_iso(spec, equator(0), equator(kPi * k / 100));
      EXPECT_LE(v, previous + 1e-15) << spec.descriptor() << " at step " << k;
      previous = v;
    }
  }
}

TEST(EvalLat, Values) {
  EXPECT_EQ(eval_lat(KernelSpec::lat_exponential(1), 0.3, 0.3), 1.0);
  EXPECT_NEAR(eval_lat(KernelSpec::lat_exponential(0.5), kHalfPi, -kHalfPi),
              0.00186744273170798881443, 1e-15);
  CounterRng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(-kHalfPi, kHalfPi), b = rng.uniform(-kHalfPi, kHalfPi);
    EXPECT_EQ(eval_lat(KernelSpec::lat_powered_exponential(1, 1), a, b),
              eval_lat(KernelSpec::lat_exponential(1), a, b));
  }
  EXPECT_THROW(eval_lat(KernelSpec::lat_exponential(1), 2.0, 0.0), DataError);
  EXPECT_THROW(eval_lat(KernelSpec::iso_exponential(1, 1), 0.0, 0.0), KernelError);
}

TEST(AxisymProduct, CompositionLaw) {
  const auto spec = make_axisym_product(KernelSpec::iso_exponential(1, 1), KernelSpec::lat_exponential(1));
  EXPECT_EQ(eval(spec, {0.4, 0.1}, {0.4, 0.1}), 1.0);

  // d = 1 along a meridian would couple the lags; use a point pair with
  // |dlat| = 0.5 and solve for the longitude giving d = 1.
  const double lat_x = 0.0, lat_y = 0.5;
  const double dlon = std::acos((std::cos(1.0) - std::sin(lat_x) * std::sin(lat_y)) /
                                (std::cos(lat_x) * std::cos(lat_y)));
  const SpherePoint x{0.0, lat_x}, y{dlon, lat_y};
  ASSERT_NEAR(great_circle_distance(x, y), 1.0, 1e-14);
  EXPECT_NEAR(eval(spec, x, y), 0.223130160148429828933, 1e-14);  // exp(-1.5)

  const auto loose = make_axisym_product(KernelSpec::iso_exponential(1.7, 0.6),
                                         KernelSpec::lat_exponential(1e8));
  CounterRng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto a = uniform_sphere_point(rng), b = uniform_sphere_point(rng);
    const double iso = eval_iso(KernelSpec::iso_exponential(1.7, 0.6), a, b);
    EXPECT_NEAR(eval(loose, a, b), iso, 1e-7 * iso);
  }
}

TEST(AxisymProduct, RejectsWrongChildren) {
  EXPECT_THROW(make_axisym_product(KernelSpec::lat_exponential(1), KernelSpec::lat_exponential(1)),
               KernelError);
  EXPECT_THROW(make_axisym_product(KernelSpec::iso_exponential(1, 1), KernelSpec::iso_exponential(1, 1)),
               KernelError);
  EXPECT_THROW(make_axisym_product(KernelSpec::iso_exponential(1, 1, 0.1), KernelSpec::lat_exponential(1)),
               KernelError);
}

TEST(Separable, ValuesAndPoleError) {
  const auto spec = KernelSpec::separable_lonlat(1, 1, 1);
  EXPECT_EQ(eval(spec, {0.3, 0.2}, {0.3, 0.2}), 1.0);
  EXPECT_NEAR(eval(spec, {0.0, 0.1}, {kPi - 1e-300, 0.1}), 0.0432139182637722497744, 1e-15);
  EXPECT_NEAR(eval(spec, {-3.0, 0.1}, {3.0, 0.1}), std::exp(-(kTwoPi - 6.0)), 1e-15);  // wrapped lag
  EXPECT_THROW(eval(spec, SpherePoint::north_pole(), {0.0, 0.1}), UndefinedAtPole);
  EXPECT_THROW(eval(spec, {0.0, 0.1}, SpherePoint::south_pole()), UndefinedAtPole);
}

TEST(Euclidean, Values) {
  const auto spec = KernelSpec::euclidean_aniso_exp(1, 1, 2);
  EXPECT_EQ(eval_euclidean_aniso(spec, {0.3, 0.4}, {0.3, 0.4}), 1.0);
  EXPECT_NEAR(eval_euclidean_aniso(spec, {0, 0}, {1, 1}), 0.223130160148429828933, 1e-15);
  const auto iso = KernelSpec::euclidean_aniso_exp(2.0, 0.7, 0.7);
  CounterRng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Point2D a{rng.uniform(-2, 2), rng.uniform(-2, 2)}, b{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    EXPECT_NEAR(eval_euclidean_aniso(iso, a, b),
                2.0 * std::exp(-(std::fabs(a.x - b.x) + std::fabs(a.y - b.y)) / 0.7), 1e-14);
  }
  EXPECT_THROW(eval(spec, {0, 0}, {0, 0}), KernelError);
}

TEST(Eval, NuggetAtCoincidenceOnly) {
  const auto spec = KernelSpec::iso_exponential(1, 1, 0.1);
  EXPECT_DOUBLE_EQ(eval(spec, {0.2, 0.2}, {0.2, 0.2}), 1.1);
  EXPECT_DOUBLE_EQ(eval(spec, SpherePoint::north_pole(1.0), SpherePoint::north_pole(-2.0)), 1.1);
  EXPECT_LT(eval(spec, {0.2, 0.2}, {0.2 + 1e-9, 0.2}), 1.0 + 1e-8);
}

TEST(Eval, SymmetryBoundAndShiftInvariance) {
  CounterRng rng(4);
  for (const auto& spec : sample_specs()) {
    for (int i = 0; i < 300; ++i) {
      const auto x = uniform_sphere_point(rng), y = uniform_sphere_point(rng);
      const double v = eval(spec, x, y);
      EXPECT_EQ(v, eval(spec, y, x)) << spec.descriptor();
      EXPECT_LE(std::fabs(v), spec.sigma() + spec.nugget()) << spec.descriptor();
      const double delta = rng.uniform(-kPi, kPi);
      EXPECT_NEAR(eval(spec, x.shifted(delta), y.shifted(delta)), v, 1e-12) << spec.descriptor();
    }
  }
}

TEST(Eval, LatitudinalReversibility) {
  CounterRng rng(5);
  const auto spec = sample_specs()[5];
  for (int i = 0; i < 300; ++i) {
    const double lon0 = rng.uniform(-kPi, kPi), dlon = rng.uniform(-kPi, kPi);
    const double a = rng.uniform(-1.5, 1.5), b = rng.uniform(-1.5, 1.5);
    EXPECT_NEAR(eval(spec, {lon0 + dlon, a}, {lon0, b}), eval(spec, {lon0 + dlon, b}, {lon0, a}), 1e-12);
  }
}

TEST(Params, AxisymOrderAndRoundTrip) {
  const auto spec = axisym_exp_product(1.5, 1.0, 0.2, 0.01);
  const auto params = param_vector(spec);
  ASSERT_EQ(params.size(), 4u);
  EXPECT_EQ(params[0].name, "sigma");
  EXPECT_EQ(params[1].name, "r_iso");
  EXPECT_EQ(params[2].name, "r_phi");
  EXPECT_EQ(params[3].name, "tau2");
  std::vector<double> values;
  for (const auto& p : params) values.push_back(p.value);
  EXPECT_EQ(set_params(spec, values), spec);

  for (const auto& s : sample_specs()) {
    std::vector<double> v;
    for (const auto& p : param_vector(s)) v.push_back(p.value);
    EXPECT_EQ(set_params(s, v), s) << s.descriptor();
  }
}

TEST(Params, BoundViolations) {
  const auto spec = axisym_exp_product(1.5, 1.0, 0.2);
  EXPECT_THROW(set_params(spec, std::vector<double>{-1.0, 1.0, 0.2, 0.0}), KernelError);
  EXPECT_THROW(set_params(spec, std::vector<double>{1.0, 1.0, 0.2}), KernelError);
  EXPECT_THROW(set_params(spec, std::vector<double>{1.0, 1e5, 0.2, 0.0}), KernelError);
  EXPECT_THROW(set_params(spec, std::vector<double>{1.0, 1.0, 0.2, 10.5}), KernelError);
  EXPECT_NO_THROW(set_params(spec, std::vector<double>{1.0, 1.0, 0.2, 10.0}));
  const auto pe = KernelSpec::iso_powered_exponential(1, 1, 0.5);
  EXPECT_THROW(set_params(pe, std::vector<double>{1, 1, 0.0, 0}), KernelError);
  EXPECT_THROW(set_params(pe, std::vector<double>{1, 1, 1.01, 0}), KernelError);
  EXPECT_NO_THROW(set_params(pe, std::vector<double>{1, 1, 1.0, 0}));
  const auto mat = KernelSpec::chordal_matern(1, 1, 1);
  EXPECT_THROW(set_params(mat, std::vector<double>{1, 1, 6.0, 0}), KernelError);
}

TEST(KernelSpec, ConstructionInvariants) {
  EXPECT_THROW(KernelSpec::iso_exponential(0.0, 1.0), KernelError);
  EXPECT_THROW(KernelSpec::iso_exponential(1.0, -1.0), KernelError);
  EXPECT_THROW(KernelSpec::iso_powered_exponential(1.0, 1.0, 1.5), KernelError);
  EXPECT_THROW(KernelSpec::chordal_matern(1.0, 1.0, 0.0), KernelError);
  EXPECT_THROW(KernelSpec::iso_exponential(1.0, 1.0, -0.1), KernelError);
  EXPECT_EQ(axisym_exp_product(2.0, 1.0, 1.0).sigma(), 2.0);
  EXPECT_EQ(axisym_exp_product(2.0, 1.0, 1.0).descriptor(),
            "axisym_product(iso_exponential,lat_exponential)");
}

}  // namespace
}  // namespace spheregp
