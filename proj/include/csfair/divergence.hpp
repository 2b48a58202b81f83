#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "csfair/kernels.hpp"

namespace csfair {

// Values that round below zero by at most this much are clamped to 0.
inline constexpr double kNumericSlack = 1e-10;
// Probabilities are clipped into [kProbClip, 1 - kProbClip] before any log.
inline constexpr double kProbClip = 1e-7;
inline constexpr double kVarianceFloor = 1e-6;

/// A discrepancy value and its partial derivatives with respect to every
/// entry of the two inputs. grad_p / grad_q have the shapes of the inputs.
struct DivergenceResult {
  double value = 0.0;
  Eigen::MatrixXd grad_p;
  Eigen::MatrixXd grad_q;
};

/// Raised when a dependence estimator needs both groups and one is absent.
class GroupMissingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Kernel Cauchy-Schwarz divergence estimate
///   log S_pp + log S_qq - 2 log S_pq
/// with exact analytic gradients.
DivergenceResult cs_divergence(const SampleSet& p, const SampleSet& q, const KernelSpec& spec);

/// Biased MMD^2 estimate S_pp + S_qq - 2 S_pq.
DivergenceResult mmd_squared(const SampleSet& p, const SampleSet& q, const KernelSpec& spec);

/// Biased HSIC estimate tr(K H L H) / N^2 between paired samples x and y.
DivergenceResult hsic(const SampleSet& x, const SampleSet& y, const KernelSpec& spec_x, const KernelSpec& spec_y);

/// |mean(p) - mean(q)| for scalar samples. The subgradient at a tie is 0.
DivergenceResult mean_disparity(const SampleSet& p, const SampleSet& q);

/// Plug-in mutual information between a soft Bernoulli prediction z and a
/// binary group label s. grad_p holds d value / d z (N x 1); grad_q is zero.
/// Throws GroupMissingError if only one group is present.
DivergenceResult pr_mutual_information(const Eigen::VectorXd& z, const Eigen::VectorXi& s);

/// KL(p || q) between 1-d Gaussians fitted to each sample by moments
/// (population variance, floored at kVarianceFloor).
DivergenceResult kl_gaussian_moment(const SampleSet& p, const SampleSet& q);

/// Squared empirical distance covariance from double-centred distance
/// matrices.
DivergenceResult distance_covariance(const SampleSet& x, const SampleSet& y);

}  // namespace csfair
