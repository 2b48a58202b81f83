#include "csfair/gaussian_oracle.hpp"

#include "csfair/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace csfair {

namespace {

Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw std::invalid_argument(std::string(what) + ": matrix is not positive definite");
  return llt;
}

double log_det_from(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

void check_dims(const GaussianParams& p, const GaussianParams& q) {
  if (p.dim() != q.dim()) throw std::invalid_argument("gaussian divergence: dimension mismatch");
}

std::string describe(const GaussianParams& p, const GaussianParams& q) {
  const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, ", ", "; ", "", "", "[", "]");
  std::ostringstream os;
  os << "mu_p=" << p.mu().transpose().format(fmt) << " sigma_p=" << p.sigma().format(fmt)
     << " mu_q=" << q.mu().transpose().format(fmt) << " sigma_q=" << q.sigma().format(fmt);
  return os.str();
}

// Mean of Gaussian KDE values at x, with kernel width sigma.
double kde_at(const Eigen::VectorXd& centres, double sigma, double x) {
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double s = 0.0;
  for (Eigen::Index i = 0; i < centres.size(); ++i) {
    const double t = x - centres(i);
    s += std::exp(-t * t * inv);
  }
  return norm * s / static_cast<double>(centres.size());
}

}  // namespace

GaussianParams::GaussianParams(Eigen::VectorXd mu, Eigen::MatrixXd sigma) : mu_(std::move(mu)), sigma_(std::move(sigma)) {
  if (mu_.size() < 1) throw std::invalid_argument("GaussianParams: empty mean");
  if (sigma_.rows() != mu_.size() || sigma_.cols() != mu_.size())
    throw std::invalid_argument("GaussianParams: covariance shape does not match mean");
  if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("GaussianParams: covariance is not symmetric");
  log_det_ = log_det_from(spd_factor(sigma_, "GaussianParams"));
}

double cs_closed_form(const GaussianParams& p, const GaussianParams& q) {
  check_dims(p, q);
  const auto d = static_cast<double>(p.dim());
  const Eigen::VectorXd delta = q.mu() - p.mu();
  const auto sum = spd_factor(p.sigma() + q.sigma(), "cs_closed_form");
  const double mahal = delta.dot(sum.solve(delta));
  const double log_ratio = log_det_from(sum) - d * std::numbers::ln2 - 0.5 * (p.log_det() + q.log_det());
  return 0.5 * mahal + 0.5 * log_ratio;
}

double kl_closed_form(const GaussianParams& p, const GaussianParams& q) {
  check_dims(p, q);
  const auto d = static_cast<double>(p.dim());
  const Eigen::VectorXd delta = q.mu() - p.mu();
  const auto lq = spd_factor(q.sigma(), "kl_closed_form");
  const double trace = lq.solve(p.sigma()).trace();
  const double mahal = delta.dot(lq.solve(delta));
  return 0.5 * (trace - d + mahal + q.log_det() - p.log_det());
}

double cs_kl_covariance_term(double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("cs_kl_covariance_term: lambda must be positive");
  return -std::numbers::ln2 + std::log1p(lambda) + 0.5 * std::log(lambda) - lambda + 1.0;
}

InequalityReport verify_cs_kl_inequality(std::size_t trials, const std::vector<int>& dims, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("verify_cs_kl_inequality: trials must be >= 1");
  if (dims.empty()) throw std::invalid_argument("verify_cs_kl_inequality: no dimensions given");
  for (int d : dims)
    if (d < 1 || d > 16) throw std::invalid_argument("verify_cs_kl_inequality: dimensions must be in [1, 16]");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean_dist(-3.0, 3.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto draw = [&](int d) {
    Eigen::VectorXd mu(d);
    for (int i = 0; i < d; ++i) mu(i) = mean_dist(rng);
    Eigen::MatrixXd a(d, d);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) a(i, j) = normal(rng);
    Eigen::MatrixXd cov = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
    cov = 0.5 * (cov + cov.transpose());
    return GaussianParams(std::move(mu), std::move(cov));
  };

  InequalityReport report;
  report.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const int d = dims[t % dims.size()];
    const GaussianParams p = draw(d);
    const GaussianParams q = (t % 100 == 99) ? p : draw(d);
    const double cs = cs_closed_form(p, q);
    const double kl = std::min(kl_closed_form(p, q), kl_closed_form(q, p));
    const double gap = cs - kl;
    if (gap > report.max_gap) {
      report.max_gap = gap;
      report.worst_instance = describe(p, q);
    }
    report.max_violation = std::max(report.max_violation, gap);
  }
  report.ok = report.max_violation <= kInequalitySlack;
  return report;
}

QuadratureGrid default_kde_grid(const SampleSet& p, const SampleSet& q, double sigma, std::size_t points) {
  const double lo = std::min(p.minCoeff(), q.minCoeff());
  const double hi = std::max(p.maxCoeff(), q.maxCoeff());
  return {lo - 8.0 * sigma, hi + 8.0 * sigma, points};
}

double kde_quadrature_cs(const SampleSet& p, const SampleSet& q, double sigma, const QuadratureGrid& grid) {
  if (p.cols() != 1 || q.cols() != 1) throw std::invalid_argument("kde_quadrature_cs: expects 1-d samples");
  if (p.rows() < 1 || q.rows() < 1) throw std::invalid_argument("kde_quadrature_cs: empty sample set");
  if (!(sigma > 0.0)) throw std::invalid_argument("kde_quadrature_cs: sigma must be positive");
  if (grid.points < 2048) throw std::invalid_argument("kde_quadrature_cs: grid needs at least 2048 points");
  if (!(grid.hi > grid.lo)) throw std::invalid_argument("kde_quadrature_cs: empty grid interval");

  const Eigen::VectorXd cp = p.col(0);
  const Eigen::VectorXd cq = q.col(0);
  constexpr double kBoundaryDensity = 1e-8;
  for (double edge : {grid.lo, grid.hi})
    if (kde_at(cp, sigma, edge) > kBoundaryDensity || kde_at(cq, sigma, edge) > kBoundaryDensity)
      throw std::invalid_argument("kde_quadrature_cs: grid too narrow, density is non-negligible at the boundary");

  const double h = (grid.hi - grid.lo) / static_cast<double>(grid.points - 1);
  double int_pq = 0.0;
  double int_pp = 0.0;
  double int_qq = 0.0;
  for (std::size_t k = 0; k < grid.points; ++k) {
    const double x = grid.lo + h * static_cast<double>(k);
    const double w = (k == 0 || k + 1 == grid.points) ? 0.5 : 1.0;
    const double fp = kde_at(cp, sigma, x);
    const double fq = kde_at(cq, sigma, x);
    int_pq += w * fp * fq;
    int_pp += w * fp * fp;
    int_qq += w * fq * fq;
  }
  // The step h cancels in the ratio.
  return -std::log(int_pq * int_pq / (int_pp * int_qq));
}

QuadratureReport verify_cs_estimator_quadrature(std::size_t instances, std::uint64_t seed) {
  if (instances < 1) throw std::invalid_argument("verify_cs_estimator_quadrature: instances must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre(-2.0, 2.0);
  std::uniform_real_distribution<double> spread(0.5, 1.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kSigmas[] = {0.3, 0.5, 0.8};

  auto draw_mixture = [&](Eigen::Index n) {
    const double m0 = centre(rng), m1 = centre(rng);
    const double s0 = spread(rng), s1 = spread(rng);
    const double w = unit(rng);
    SampleSet out(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool first = unit(rng) < w;
      out(i, 0) = first ? m0 + s0 * normal(rng) : m1 + s1 * normal(rng);
    }
    return out;
  };

  QuadratureReport report;
  report.instances = instances;
  for (std::size_t t = 0; t < instances; ++t) {
    const Eigen::Index n = (t % 2 == 0) ? 50 : 200;
    const double sigma = kSigmas[t % 3];
    const SampleSet p = draw_mixture(n);
    const SampleSet q = draw_mixture(n);
    const double quad = kde_quadrature_cs(p, q, sigma, default_kde_grid(p, q, sigma, 4096));
    const double est = cs_divergence(p, q, KernelSpec::gaussian(std::numbers::sqrt2 * sigma)).value;
    const double diff = std::abs(quad - est);
    if (diff >= report.max_abs_diff) {
      report.max_abs_diff = diff;
      std::ostringstream os;
      os << "instance " << t << " n=" << n << " sigma=" << sigma << " quadrature=" << quad << " estimator=" << est;
      report.worst_instance = os.str();
    }
  }
  report.ok = report.max_abs_diff <= kQuadratureTolerance;
  return report;
}

}  // namespace csfair
