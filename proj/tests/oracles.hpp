#pragma once

// Reference computations that avoid the Cholesky path under test: explicit
// inverses and determinants from a full-pivot LU of the joint covariance.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/LU>

#include "spheregp/kernels.hpp"

namespace spheregp::oracle {

inline Eigen::MatrixXd joint_covariance(const KernelSpec& spec, const std::vector<SpherePoint>& pts,
                                        std::size_t n_observed) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = eval_latent(spec, pts[i], pts[j]);
  }
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n_observed); ++i) k(i, i) += spec.nugget();
  return k;
}

struct Conditional {
  double mean;
  double variance;
};

/// Conditional law of the latent value at `target` given noisy observations.
inline Conditional condition(const KernelSpec& spec, const std::vector<SpherePoint>& sites,
                             const std::vector<double>& y, const SpherePoint& target) {
  std::vector<SpherePoint> pts = sites;
  pts.push_back(target);
  const Eigen::MatrixXd joint = joint_covariance(spec, pts, sites.size());
  const auto n = static_cast<Eigen::Index>(sites.size());
  const Eigen::MatrixXd obs = joint.topLeftCorner(n, n);
  const Eigen::VectorXd cross = joint.col(n).head(n);
  const Eigen::MatrixXd inv = obs.fullPivLu().inverse();
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  return {cross.dot(inv * yv), joint(n, n) - cross.dot(inv * cross)};
}

inline double log_likelihood(const KernelSpec& spec, const std::vector<SpherePoint>& sites,
                             const std::vector<double>& y) {
  const Eigen::MatrixXd k = joint_covariance(spec, sites, sites.size());
  const auto lu = k.fullPivLu();
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const double n = static_cast<double>(y.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + std::log(std::fabs(lu.determinant())) +
                 yv.dot(lu.inverse() * yv));
}

}  // namespace spheregp::oracle
