#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "spheregp/fit.hpp"
#include "spheregp/nelder_mead.hpp"

namespace spheregp {
namespace {

Dataset simulated(const KernelSpec& truth, const std::vector<SpherePoint>& sites, std::uint64_t seed) {
  const auto draws = simulate(truth, sites, seed, 1);
  Dataset data;
  data.sites = sites;
  for (Eigen::Index i = 0; i < draws.cols(); ++i) data.values.push_back(draws(0, i));
  return data;
}

TEST(NelderMead, MinimizesRosenbrock) {
  NelderMeadOptions opts;
  opts.max_iters = 5000;
  opts.tol_f = 1e-14;
  opts.tol_x = 1e-9;
  const auto res = NelderMead(opts).minimize(
      [](std::span<const double> x) {
        return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
      },
      {-1.2, 1.0});
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.x[0], 1.0, 1e-6);
  EXPECT_NEAR(res.x[1], 1.0, 1e-6);
}

TEST(NelderMead, RetreatsFromInfiniteRegion) {
  const auto res = NelderMead().minimize(
      [](std::span<const double> x) {
        return x[0] < 0.5 ? std::numeric_limits<double>::infinity() : (x[0] - 2) * (x[0] - 2);
      },
      {1.0});
  EXPECT_NEAR(res.x[0], 2.0, 1e-5);
}

TEST(ParamTransform, RoundTripOnRandomInBoundsVectors) {
  const std::vector<KernelSpec> templates{
      axisym_exp_product(1, 1, 1, 0.1),
      KernelSpec::axisym_product(KernelSpec::chordal_matern(1, 1, 1),
                                 KernelSpec::lat_powered_exponential(1, 0.5), 0.1),
      KernelSpec::iso_powered_exponential(1, 1, 0.5, 0.1),
      KernelSpec::separable_lonlat(1, 1, 1),
  };
  CounterRng rng(31);
  for (const auto& templ : templates) {
    const ParamTransform t(templ, {});
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> full;
      double sigma = 1.0;
      for (const auto& p : param_vector(templ)) {
        double v;
        if (p.name == "tau2") v = rng.uniform(0.001, 0.999) * 10.0 * sigma;
        else if (p.scale == ParamScale::log) v = std::exp(rng.uniform(std::log(p.lower), std::log(p.upper)));
        else v = p.lower + (p.upper - p.lower) * rng.uniform(0.001, 0.999);
        if (p.name == "sigma") sigma = v;
        full.push_back(v);
      }
      const auto back = t.decode(t.encode(full));
      for (std::size_t i = 0; i < full.size(); ++i) {
        EXPECT_NEAR(back[i], full[i], 1e-12 * std::max(1.0, std::fabs(full[i]))) << templ.descriptor();
      }
    }
  }
}

TEST(ParamTransform, FixedParamsAreNotEncoded) {
  const ParamTransform t(axisym_exp_product(1, 1, 1), {"tau2", "r_phi"});
  EXPECT_EQ(t.n_free(), 2u);
  EXPECT_THROW(ParamTransform(axisym_exp_product(1, 1, 1), {"nonexistent"}), DataError);
}

TEST(FitMle, ProfileVarianceMatchesClosedForm) {
  // With everything but sigma fixed, the MLE is y^T K0^-1 y / n for the
  // unit-variance correlation matrix K0.
  const auto sites = generate_grid(GridSpec::fibonacci_points(40));
  const Dataset data = simulated(KernelSpec::iso_exponential(2.0, 0.5), sites, 5);
  const auto templ = KernelSpec::iso_exponential(1.0, 0.5);
  const Eigen::MatrixXd k0 = assemble_covariance(templ, sites);
  const Eigen::VectorXd y = data.values_vector();
  const double closed_form = y.dot(k0.llt().solve(y)) / static_cast<double>(y.size());

  FitConfig config;
  config.fixed_params = {"r_iso", "tau2"};
  const FitResult fit = fit_mle(templ, data, config);
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.best_spec.sigma(), closed_form, 1e-4 * closed_form);
  EXPECT_EQ(fit.best_spec.value(1), 0.5);
  EXPECT_EQ(fit.best_spec.nugget(), 0.0);
  EXPECT_EQ(fit.n_free_params, 1);
}

TEST(FitMle, InvariantsOnSmallProblem) {
  const auto sites = generate_grid(GridSpec::fibonacci_points(60));
  const Dataset data = simulated(axisym_exp_product(1.2, 0.9, 0.3), sites, 6);
  FitConfig config;
  config.seed = 17;
  config.n_restarts = 2;
  const auto templ = axisym_exp_product(1, 1, 1);
  const FitResult fit = fit_mle(templ, data, config);

  EXPECT_TRUE(std::isfinite(fit.log_likelihood));
  EXPECT_NEAR(fit.log_likelihood, log_likelihood(fit.best_spec, data), 1e-10);
  for (std::size_t i = 1; i < fit.trace.size(); ++i) {
    EXPECT_GE(fit.trace[i].second, fit.trace[i - 1].second);
    EXPECT_GT(fit.trace[i].first, fit.trace[i - 1].first);
  }
  EXPECT_EQ(fit.restart_results.size(), 2u);
  EXPECT_EQ(fit.n_free_params, 4);

  const FitResult again = fit_mle(templ, data, config);
  EXPECT_EQ(again.best_spec, fit.best_spec);
  EXPECT_EQ(again.log_likelihood, fit.log_likelihood);
  EXPECT_EQ(again.n_evals, fit.n_evals);
}

TEST(FitMle, TruncatedRunStillReturns) {
  const auto sites = generate_grid(GridSpec::fibonacci_points(30));
  const Dataset data = simulated(KernelSpec::iso_exponential(1.0, 0.7), sites, 7);
  FitConfig config;
  config.max_iters = 1;
  config.n_restarts = 1;
  const FitResult fit = fit_mle(KernelSpec::iso_exponential(1, 1), data, config);
  EXPECT_FALSE(fit.converged);
  EXPECT_TRUE(std::isfinite(fit.log_likelihood));
}

TEST(FitMle, FailsWhenEveryRegionIsInvalid) {
  const auto sites = generate_grid(GridSpec::fibonacci_points(10));
  const Dataset data = simulated(KernelSpec::iso_exponential(1.0, 0.7), sites, 8);
  FitConfig config;
  config.fixed_params = {"sigma", "r_iso", "tau2"};
  config.n_restarts = 2;
  // sigma fixed at a numerically-zero variance: every evaluation is non-PD.
  EXPECT_THROW(fit_mle(KernelSpec::iso_exponential(1e-30, 1.0), data, config), FitFailure);
}

TEST(FitMle, RejectsInvalidConfig) {
  Dataset data{{{0, 0}, {1, 0}}, {1, 2}, ""};
  FitConfig config;
  config.n_restarts = 0;
  EXPECT_THROW(fit_mle(KernelSpec::iso_exponential(1, 1), data, config), DataError);
}

TEST(ProfileCompare, RanksByAic) {
  FitResult a, b;
  a.best_spec = axisym_exp_product(1, 1, 1);
  b.best_spec = KernelSpec::iso_exponential(1, 1);
  a.log_likelihood = b.log_likelihood = -10.0;
  a.n_free_params = 4;
  b.n_free_params = 3;
  const std::vector<FitResult> fits{a, b};
  const auto rows = profile_compare(fits);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].model, "iso_exponential");
  EXPECT_DOUBLE_EQ(rows[0].aic, 26.0);
  EXPECT_DOUBLE_EQ(rows[1].aic, 28.0);

  const std::vector<FitResult> single{a};
  EXPECT_EQ(profile_compare(single).size(), 1u);

  // Equal AIC and parameter count: lexicographic by model name.
  FitResult c = b;
  c.best_spec = KernelSpec::iso_spherical(1, 1);
  const std::vector<FitResult> tie{c, b};
  EXPECT_EQ(profile_compare(tie)[0].model, "iso_exponential");

  b.data_fingerprint = 1;
  const std::vector<FitResult> mismatched{a, b};
  EXPECT_THROW(profile_compare(mismatched), DataError);
}

TEST(ProfileCompare, NestedProductDominatesIsotropicChild) {
  const auto sites = generate_grid(GridSpec::fibonacci_points(50));
  const Dataset data = simulated(KernelSpec::iso_exponential(1.0, 0.6), sites, 9);
  FitConfig config;
  config.fixed_params = {"tau2"};
  config.n_restarts = 2;
  const FitResult iso = fit_mle(KernelSpec::iso_exponential(1, 1), data, config);
  const FitResult product = fit_mle(axisym_exp_product(1, 1, 1), data, config);
  EXPECT_GE(product.log_likelihood, iso.log_likelihood - 1e-6);
  const std::vector<FitResult> fits{product, iso};
  const auto rows = profile_compare(fits);
  EXPECT_EQ(rows.size(), 2u);
}

}  // namespace
}  // namespace spheregp
