#pragma once

#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace csfair {

// One observation per row.
using SampleSet = Eigen::MatrixXd;

enum class KernelFamily { GaussianRbf, Laplacian, PolynomialDeg2 };
enum class BandwidthMode { Fixed, MedianHeuristic };

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Kernel family plus bandwidth. For the degree-2 polynomial kernel the
/// bandwidth enters as gamma = 1 / sigma.
struct KernelSpec {
  KernelFamily family = KernelFamily::GaussianRbf;
  double bandwidth = 1.0;
  BandwidthMode mode = BandwidthMode::Fixed;

  static KernelSpec gaussian(double sigma) { return {KernelFamily::GaussianRbf, sigma, BandwidthMode::Fixed}; }
  static KernelSpec laplacian(double sigma) { return {KernelFamily::Laplacian, sigma, BandwidthMode::Fixed}; }
  static KernelSpec polynomial(double sigma) { return {KernelFamily::PolynomialDeg2, sigma, BandwidthMode::Fixed}; }

  // Throws std::invalid_argument when the spec cannot be evaluated as is.
  void validate_resolved() const;
};

/// k(u, v). The spec must carry a fixed, positive bandwidth.
double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& u,
                   const Eigen::Ref<const Eigen::VectorXd>& v,
                   const KernelSpec& spec);

/// Gradient of k(u, v) with respect to u. The Laplacian kernel is not
/// differentiable at u == v; the zero subgradient is returned there.
Eigen::VectorXd kernel_grad_u(const Eigen::Ref<const Eigen::VectorXd>& u,
                              const Eigen::Ref<const Eigen::VectorXd>& v,
                              const KernelSpec& spec);

/// Full kernel matrix K(i, j) = k(a_i, b_j).
Eigen::MatrixXd gram_matrix(const SampleSet& a, const SampleSet& b, const KernelSpec& spec);

struct GramSums {
  double pp = 0.0;
  double qq = 0.0;
  double pq = 0.0;
};

/// Normalized double sums over within-P, within-Q and cross pairs,
/// self-pairs included. Throws std::domain_error if the cross sum is not
/// strictly positive (possible only for the polynomial kernel).
GramSums gram_sums(const SampleSet& p, const SampleSet& q, const KernelSpec& spec);

/// Gram sums together with their gradients with respect to every
/// coordinate of every observation.
struct GramSumsWithGrad {
  GramSums sums;
  Eigen::MatrixXd dpp_dp;  // d S_pp / d P
  Eigen::MatrixXd dqq_dq;  // d S_qq / d Q
  Eigen::MatrixXd dpq_dp;  // d S_pq / d P
  Eigen::MatrixXd dpq_dq;  // d S_pq / d Q
};

GramSumsWithGrad gram_sums_with_grad(const SampleSet& p, const SampleSet& q, const KernelSpec& spec);

/// Median of the pairwise Euclidean distances over the pooled rows of p and
/// q (self-pairs excluded). Falls back to 1.0 when that median is zero.
double median_heuristic(const SampleSet& p, const SampleSet& q);

/// Returns a fixed-mode copy of spec, computing the median-heuristic
/// bandwidth from the pooled samples when requested.
KernelSpec resolve_bandwidth(const KernelSpec& spec, const SampleSet& p, const SampleSet& q);

}  // namespace csfair
