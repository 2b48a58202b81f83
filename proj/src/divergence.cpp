#include "csfair/divergence.hpp"

#include <algorithm>
#include <cmath>

namespace csfair {

namespace {

double clamp_slack(double v) { return (v < 0.0 && v >= -kNumericSlack) ? 0.0 : v; }

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string(what) + ": non-finite value");
}

void require_scalar(const SampleSet& s, const char* what) {
  if (s.cols() != 1) throw std::invalid_argument(std::string(what) + ": expects scalar samples (d = 1)");
}

Eigen::MatrixXd centred(const Eigen::MatrixXd& m) {
  const Eigen::RowVectorXd col_means = m.colwise().mean();
  const Eigen::VectorXd row_means = m.rowwise().mean();
  const double grand = m.mean();
  Eigen::MatrixXd out = m;
  out.colwise() -= row_means;
  out.rowwise() -= col_means;
  out.array() += grand;
  return out;
}

// Accumulates sum_j w(a, j) * dk(x_a, x_j)/dx_a for every a.
Eigen::MatrixXd weighted_kernel_grad(const SampleSet& x, const Eigen::MatrixXd& w, const KernelSpec& spec) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (Eigen::Index a = 0; a < x.rows(); ++a) {
    const Eigen::VectorXd xa = x.row(a).transpose();
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      if (w(a, j) == 0.0) continue;
      g.row(a) += w(a, j) * kernel_grad_u(xa, x.row(j).transpose(), spec).transpose();
    }
  }
  return g;
}

Eigen::MatrixXd pairwise_distances(const SampleSet& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).norm();
  }
  return d;
}

// Gradient of (1/N^2) sum_ij dist(x_i, x_j) * w_ij for a symmetric w.
Eigen::MatrixXd weighted_distance_grad(const SampleSet& x, const Eigen::MatrixXd& dist, const Eigen::MatrixXd& w) {
  const double n = static_cast<double>(x.rows());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (Eigen::Index a = 0; a < x.rows(); ++a)
    for (Eigen::Index j = 0; j < x.rows(); ++j)
      if (j != a && dist(a, j) > 0.0) g.row(a) += (w(a, j) / dist(a, j)) * (x.row(a) - x.row(j));
  return g * (2.0 / (n * n));
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  bool floored = false;
};

Moments fit_moments(const SampleSet& s) {
  Moments m;
  m.mean = s.col(0).mean();
  m.var = (s.col(0).array() - m.mean).square().mean();
  if (m.var < kVarianceFloor) {
    m.var = kVarianceFloor;
    m.floored = true;
  }
  return m;
}

}  // namespace

DivergenceResult cs_divergence(const SampleSet& p, const SampleSet& q, const KernelSpec& spec) {
  const GramSumsWithGrad g = gram_sums_with_grad(p, q, spec);
  const auto& s = g.sums;
  if (!(s.pp > 0.0) || !(s.qq > 0.0) || !(s.pq > 0.0))
    throw std::domain_error("cs_divergence: log of a non-positive Gram sum");
  DivergenceResult r;
  r.value = clamp_slack(std::log(s.pp) + std::log(s.qq) - 2.0 * std::log(s.pq));
  require_finite(r.value, "cs_divergence");
  r.grad_p = g.dpp_dp / s.pp - 2.0 * g.dpq_dp / s.pq;
  r.grad_q = g.dqq_dq / s.qq - 2.0 * g.dpq_dq / s.pq;
  return r;
}

DivergenceResult mmd_squared(const SampleSet& p, const SampleSet& q, const KernelSpec& spec) {
  const GramSumsWithGrad g = gram_sums_with_grad(p, q, spec);
  DivergenceResult r;
  r.value = clamp_slack(g.sums.pp + g.sums.qq - 2.0 * g.sums.pq);
  require_finite(r.value, "mmd_squared");
  r.grad_p = g.dpp_dp - 2.0 * g.dpq_dp;
  r.grad_q = g.dqq_dq - 2.0 * g.dpq_dq;
  return r;
}

DivergenceResult hsic(const SampleSet& x, const SampleSet& y, const KernelSpec& spec_x, const KernelSpec& spec_y) {
  if (x.rows() != y.rows()) throw std::invalid_argument("hsic: sample count mismatch");
  if (x.rows() < 2) throw std::invalid_argument("hsic: need at least two paired samples");
  const double n = static_cast<double>(x.rows());
  const Eigen::MatrixXd k = gram_matrix(x, x, spec_x);
  const Eigen::MatrixXd l = gram_matrix(y, y, spec_y);
  const Eigen::MatrixXd hkh = centred(k);
  const Eigen::MatrixXd hlh = centred(l);

  DivergenceResult r;
  r.value = clamp_slack((k.array() * hlh.array()).sum() / (n * n));
  require_finite(r.value, "hsic");
  r.grad_p = weighted_kernel_grad(x, hlh, spec_x) * (2.0 / (n * n));
  r.grad_q = weighted_kernel_grad(y, hkh, spec_y) * (2.0 / (n * n));
  return r;
}

DivergenceResult mean_disparity(const SampleSet& p, const SampleSet& q) {
  if (p.rows() < 1 || q.rows() < 1) throw std::invalid_argument("mean_disparity: empty sample set");
  require_scalar(p, "mean_disparity");
  require_scalar(q, "mean_disparity");
  const double diff = p.col(0).mean() - q.col(0).mean();
  const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  DivergenceResult r;
  r.value = std::abs(diff);
  r.grad_p = Eigen::MatrixXd::Constant(p.rows(), 1, sign / static_cast<double>(p.rows()));
  r.grad_q = Eigen::MatrixXd::Constant(q.rows(), 1, -sign / static_cast<double>(q.rows()));
  return r;
}

DivergenceResult pr_mutual_information(const Eigen::VectorXd& z, const Eigen::VectorXi& s) {
  if (z.size() != s.size()) throw std::invalid_argument("pr_mutual_information: length mismatch");
  if (z.size() < 1) throw std::invalid_argument("pr_mutual_information: empty input");
  const double n = static_cast<double>(z.size());

  // joint(y, g): y = predicted class, g = group.
  double joint[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  double group_count[2] = {0.0, 0.0};
  Eigen::VectorXd zc(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (s(i) != 0 && s(i) != 1) throw std::invalid_argument("pr_mutual_information: group labels must be 0 or 1");
    zc(i) = std::clamp(z(i), kProbClip, 1.0 - kProbClip);
    joint[1][s(i)] += zc(i) / n;
    joint[0][s(i)] += (1.0 - zc(i)) / n;
    group_count[s(i)] += 1.0;
  }
  if (group_count[0] == 0.0 || group_count[1] == 0.0)
    throw GroupMissingError("pr_mutual_information: both groups must be present");

  const double p_group[2] = {group_count[0] / n, group_count[1] / n};
  const double p_pred[2] = {joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]};

  DivergenceResult r;
  double mi = 0.0;
  for (int y = 0; y < 2; ++y)
    for (int g = 0; g < 2; ++g) mi += joint[y][g] * std::log(joint[y][g] / (p_pred[y] * p_group[g]));
  r.value = clamp_slack(mi);
  require_finite(r.value, "pr_mutual_information");

  // d MI / d z_i = (1/N) [log J(1,s_i) - log J(0,s_i) - log P(1) + log P(0)]
  r.grad_p = Eigen::MatrixXd::Zero(z.size(), 1);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z(i) != zc(i)) continue;  // clipped entries carry no gradient
    const int g = s(i);
    r.grad_p(i, 0) = (std::log(joint[1][g]) - std::log(joint[0][g]) - std::log(p_pred[1]) + std::log(p_pred[0])) / n;
  }
  r.grad_q = Eigen::MatrixXd::Zero(z.size(), 1);
  return r;
}

DivergenceResult kl_gaussian_moment(const SampleSet& p, const SampleSet& q) {
  require_scalar(p, "kl_gaussian_moment");
  require_scalar(q, "kl_gaussian_moment");
  if (p.rows() < 2 || q.rows() < 2) throw std::invalid_argument("kl_gaussian_moment: need at least two samples per side");
  const Moments mp = fit_moments(p);
  const Moments mq = fit_moments(q);
  const double delta = mq.mean - mp.mean;

  DivergenceResult r;
  r.value = clamp_slack(0.5 * (mp.var / mq.var - 1.0 + delta * delta / mq.var + std::log(mq.var / mp.var)));
  require_finite(r.value, "kl_gaussian_moment");

  const double d_mp = -delta / mq.var;
  const double d_mq = delta / mq.var;
  const double d_vp = mp.floored ? 0.0 : 0.5 * (1.0 / mq.var - 1.0 / mp.var);
  const double d_vq = mq.floored ? 0.0 : 0.5 * (1.0 / mq.var - mp.var / (mq.var * mq.var) - delta * delta / (mq.var * mq.var));
  const double n1 = static_cast<double>(p.rows());
  const double n2 = static_cast<double>(q.rows());
  r.grad_p = (d_mp / n1 + d_vp * 2.0 * (p.col(0).array() - mp.mean) / n1).matrix();
  r.grad_q = (d_mq / n2 + d_vq * 2.0 * (q.col(0).array() - mq.mean) / n2).matrix();
  return r;
}

DivergenceResult distance_covariance(const SampleSet& x, const SampleSet& y) {
  if (x.rows() != y.rows()) throw std::invalid_argument("distance_covariance: sample count mismatch");
  if (x.rows() < 2) throw std::invalid_argument("distance_covariance: need at least two paired samples");
  const double n = static_cast<double>(x.rows());
  const Eigen::MatrixXd a = pairwise_distances(x);
  const Eigen::MatrixXd b = pairwise_distances(y);
  const Eigen::MatrixXd ca = centred(a);
  const Eigen::MatrixXd cb = centred(b);

  DivergenceResult r;
  r.value = clamp_slack((ca.array() * cb.array()).sum() / (n * n));
  require_finite(r.value, "distance_covariance");
  // Centring is absorbed by the other (already centred) factor.
  r.grad_p = weighted_distance_grad(x, a, cb);
  r.grad_q = weighted_distance_grad(y, b, ca);
  return r;
}

}  // namespace csfair
