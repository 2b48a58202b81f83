#include "csfair/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace csfair {

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::GaussianRbf: return "rbf";
    case KernelFamily::Laplacian: return "laplacian";
    case KernelFamily::PolynomialDeg2: return "poly2";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "rbf" || name == "gaussian") return KernelFamily::GaussianRbf;
  if (name == "laplacian") return KernelFamily::Laplacian;
  if (name == "poly2" || name == "polynomial") return KernelFamily::PolynomialDeg2;
  throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

void KernelSpec::validate_resolved() const {
  if (mode != BandwidthMode::Fixed)
    throw std::invalid_argument("kernel bandwidth must be resolved before evaluation");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw std::invalid_argument("kernel bandwidth must be positive and finite");
}

namespace {

// Observations are stored one per column so each one is contiguous.
struct Columns {
  Eigen::MatrixXd data;
  explicit Columns(const SampleSet& s) : data(s.transpose()) {}
  const double* col(Eigen::Index i) const { return data.data() + i * data.rows(); }
  Eigen::Index count() const { return data.cols(); }
  Eigen::Index dim() const { return data.rows(); }
};

inline double sq_dist(const double* a, const double* b, Eigen::Index d) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

inline double dot(const double* a, const double* b, Eigen::Index d) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

// Evaluates k(a, b) and optionally accumulates scale * dk/da into grad.
class KernelFn {
 public:
  explicit KernelFn(const KernelSpec& spec) : spec_(spec) {
    spec.validate_resolved();
    inv_two_sigma2_ = 1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
    inv_sigma_ = 1.0 / spec.bandwidth;
  }

  double value(const double* a, const double* b, Eigen::Index d) const {
    switch (spec_.family) {
      case KernelFamily::GaussianRbf: return std::exp(-sq_dist(a, b, d) * inv_two_sigma2_);
      case KernelFamily::Laplacian: return std::exp(-std::sqrt(sq_dist(a, b, d)) * inv_sigma_);
      case KernelFamily::PolynomialDeg2: {
        const double base = inv_sigma_ * dot(a, b, d) + 1.0;
        return base * base;
      }
    }
    return 0.0;
  }

  // Returns k(a, b) and adds scale * dk/da to grad.
  double value_and_grad(const double* a, const double* b, Eigen::Index d, double scale, double* grad) const {
    switch (spec_.family) {
      case KernelFamily::GaussianRbf: {
        const double k = std::exp(-sq_dist(a, b, d) * inv_two_sigma2_);
        const double c = -scale * k * 2.0 * inv_two_sigma2_;
        for (Eigen::Index m = 0; m < d; ++m) grad[m] += c * (a[m] - b[m]);
        return k;
      }
      case KernelFamily::Laplacian: {
        const double r = std::sqrt(sq_dist(a, b, d));
        const double k = std::exp(-r * inv_sigma_);
        if (r > 0.0) {
          const double c = -scale * k * inv_sigma_ / r;
          for (Eigen::Index m = 0; m < d; ++m) grad[m] += c * (a[m] - b[m]);
        }
        return k;
      }
      case KernelFamily::PolynomialDeg2: {
        const double base = inv_sigma_ * dot(a, b, d) + 1.0;
        const double c = scale * 2.0 * base * inv_sigma_;
        for (Eigen::Index m = 0; m < d; ++m) grad[m] += c * b[m];
        return base * base;
      }
    }
    return 0.0;
  }

 private:
  KernelSpec spec_;
  double inv_two_sigma2_ = 0.0;
  double inv_sigma_ = 0.0;
};

void check_pair(const SampleSet& p, const SampleSet& q) {
  if (p.rows() < 1 || q.rows() < 1) throw std::invalid_argument("gram_sums: empty sample set");
  if (p.cols() != q.cols()) throw std::invalid_argument("gram_sums: dimension mismatch");
  if (p.cols() < 1) throw std::invalid_argument("gram_sums: zero-dimensional samples");
}

// Within-set sum over all ordered pairs, using symmetry.
double self_sum(const Columns& x, const KernelFn& k) {
  const Eigen::Index n = x.count();
  const Eigen::Index d = x.dim();
  double diag = 0.0;
  double off = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    diag += k.value(x.col(i), x.col(i), d);
    double row = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) row += k.value(x.col(i), x.col(j), d);
    off += row;
  }
  return diag + 2.0 * off;
}

double cross_sum(const Columns& x, const Columns& y, const KernelFn& k) {
  const Eigen::Index d = x.dim();
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.count(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < y.count(); ++j) row += k.value(x.col(i), y.col(j), d);
    total += row;
  }
  return total;
}

}  // namespace

double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v,
                   const KernelSpec& spec) {
  if (u.size() != v.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
  const Eigen::VectorXd a = u;
  const Eigen::VectorXd b = v;
  return KernelFn(spec).value(a.data(), b.data(), a.size());
}

Eigen::VectorXd kernel_grad_u(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v,
                              const KernelSpec& spec) {
  if (u.size() != v.size()) throw std::invalid_argument("kernel_grad_u: dimension mismatch");
  const Eigen::VectorXd a = u;
  const Eigen::VectorXd b = v;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(a.size());
  KernelFn(spec).value_and_grad(a.data(), b.data(), a.size(), 1.0, g.data());
  return g;
}

Eigen::MatrixXd gram_matrix(const SampleSet& a, const SampleSet& b, const KernelSpec& spec) {
  if (a.cols() != b.cols()) throw std::invalid_argument("gram_matrix: dimension mismatch");
  const KernelFn k(spec);
  const Columns ca(a);
  const Columns cb(b);
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < cb.count(); ++j)
    for (Eigen::Index i = 0; i < ca.count(); ++i) out(i, j) = k.value(ca.col(i), cb.col(j), ca.dim());
  return out;
}

GramSums gram_sums(const SampleSet& p, const SampleSet& q, const KernelSpec& spec) {
  check_pair(p, q);
  const KernelFn k(spec);
  const Columns cp(p);
  const Columns cq(q);
  const double n1 = static_cast<double>(p.rows());
  const double n2 = static_cast<double>(q.rows());
  GramSums s;
  s.pp = self_sum(cp, k) / (n1 * n1);
  s.qq = self_sum(cq, k) / (n2 * n2);
  s.pq = cross_sum(cp, cq, k) / (n1 * n2);
  if (!(s.pq > 0.0)) throw std::domain_error("gram_sums: cross Gram sum is not positive");
  return s;
}

GramSumsWithGrad gram_sums_with_grad(const SampleSet& p, const SampleSet& q, const KernelSpec& spec) {
  check_pair(p, q);
  const KernelFn k(spec);
  const Columns cp(p);
  const Columns cq(q);
  const Eigen::Index d = cp.dim();
  const Eigen::Index n1 = cp.count();
  const Eigen::Index n2 = cq.count();
  const double w_pp = 1.0 / (static_cast<double>(n1) * n1);
  const double w_qq = 1.0 / (static_cast<double>(n2) * n2);
  const double w_pq = 1.0 / (static_cast<double>(n1) * n2);

  // Gradients are accumulated column-wise (d x N) and transposed at the end.
  Eigen::MatrixXd gpp = Eigen::MatrixXd::Zero(d, n1);
  Eigen::MatrixXd gqq = Eigen::MatrixXd::Zero(d, n2);
  Eigen::MatrixXd gpq_p = Eigen::MatrixXd::Zero(d, n1);
  Eigen::MatrixXd gpq_q = Eigen::MatrixXd::Zero(d, n2);

  // For a symmetric kernel, d/dx_a sum_{i,j} k(x_i, x_j) = 2 sum_j dk(x_a, x_j)/dx_a.
  // Values are accumulated in the same order as gram_sums so both agree bitwise.
  auto self_pass = [&](const Columns& x, double scale, Eigen::MatrixXd& grad) {
    double diag = 0.0;
    double off = 0.0;
    for (Eigen::Index i = 0; i < x.count(); ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < x.count(); ++j) {
        const double v = k.value_and_grad(x.col(i), x.col(j), d, scale, grad.col(i).data());
        if (j == i) diag += v;
        else if (j > i) row += v;
      }
      off += row;
    }
    return diag + 2.0 * off;
  };
  const double spp = self_pass(cp, 2.0 * w_pp, gpp);
  const double sqq = self_pass(cq, 2.0 * w_qq, gqq);
  double spq = 0.0;
  for (Eigen::Index i = 0; i < n1; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < n2; ++j) {
      row += k.value_and_grad(cp.col(i), cq.col(j), d, w_pq, gpq_p.col(i).data());
      k.value_and_grad(cq.col(j), cp.col(i), d, w_pq, gpq_q.col(j).data());
    }
    spq += row;
  }

  GramSumsWithGrad out;
  const double m1 = static_cast<double>(n1);
  const double m2 = static_cast<double>(n2);
  out.sums = {spp / (m1 * m1), sqq / (m2 * m2), spq / (m1 * m2)};
  if (!(out.sums.pq > 0.0)) throw std::domain_error("gram_sums: cross Gram sum is not positive");
  out.dpp_dp = gpp.transpose();
  out.dqq_dq = gqq.transpose();
  out.dpq_dp = gpq_p.transpose();
  out.dpq_dq = gpq_q.transpose();
  return out;
}

double median_heuristic(const SampleSet& p, const SampleSet& q) {
  if (p.cols() != q.cols() && p.rows() > 0 && q.rows() > 0)
    throw std::invalid_argument("median_heuristic: dimension mismatch");
  const Eigen::Index n = p.rows() + q.rows();
  if (n < 2) throw std::invalid_argument("median_heuristic: need at least two pooled points");
  SampleSet pool(n, std::max(p.cols(), q.cols()));
  if (p.rows() > 0) pool.topRows(p.rows()) = p;
  if (q.rows() > 0) pool.bottomRows(q.rows()) = q;
  const Columns c(pool);

  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) dists.push_back(std::sqrt(sq_dist(c.col(i), c.col(j), c.dim())));

  // Lower/upper middle averaged for an even count.
  const std::size_t m = dists.size();
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(m / 2), dists.end());
  double med = dists[m / 2];
  if (m % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(m / 2));
    med = 0.5 * (med + lower);
  }
  return med > 0.0 ? med : 1.0;
}

KernelSpec resolve_bandwidth(const KernelSpec& spec, const SampleSet& p, const SampleSet& q) {
  if (spec.mode == BandwidthMode::Fixed) {
    spec.validate_resolved();
    return spec;
  }
  KernelSpec out = spec;
  out.bandwidth = median_heuristic(p, q);
  out.mode = BandwidthMode::Fixed;
  return out;
}

}  // namespace csfair
