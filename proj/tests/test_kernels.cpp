#include <cmath>
#include <random>

#include <doctest.h>

#include "csfair/kernels.hpp"
#include "fd.hpp"

using namespace csfair;
using csfair::testing::central_diff;
using csfair::testing::rel_error;

namespace {

Eigen::MatrixXd col(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Eigen::MatrixXd random_set(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = nd(rng);
  return m;
}

// Direct formulas, written independently of the library.
double naive_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v, KernelFamily f, double sigma) {
  switch (f) {
    case KernelFamily::GaussianRbf: return std::exp(-(u - v).squaredNorm() / (2 * sigma * sigma));
    case KernelFamily::Laplacian: return std::exp(-(u - v).norm() / sigma);
    case KernelFamily::PolynomialDeg2: {
      const double t = u.dot(v) / sigma + 1.0;
      return t * t;
    }
  }
  return 0.0;
}

double naive_sum(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, KernelFamily f, double sigma) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      s += naive_kernel(a.row(i).transpose(), b.row(j).transpose(), f, sigma);
  return s / static_cast<double>(a.rows() * b.rows());
}

}  // namespace

TEST_CASE("kernel values") {
  const auto g = KernelSpec::gaussian(1.0);
  CHECK(kernel_eval(col({0.3}).col(0), col({0.3}).col(0), g) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(kernel_eval(col({0}).col(0), col({1}).col(0), g) == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK(kernel_eval(col({0}).col(0), col({2}).col(0), KernelSpec::laplacian(1.0)) ==
        doctest::Approx(0.135335).epsilon(1e-6));
  Eigen::VectorXd u(2), v(2);
  u << 1.0, 2.0;
  v << -0.5, 0.25;
  CHECK(kernel_eval(u, v, KernelSpec::polynomial(2.0)) ==
        doctest::Approx(naive_kernel(u, v, KernelFamily::PolynomialDeg2, 2.0)));
}

TEST_CASE("kernel parameters are validated") {
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(kernel_eval(u, u, KernelSpec::gaussian(0.0)), std::invalid_argument);
  CHECK_THROWS_AS(kernel_eval(u, u, KernelSpec::gaussian(-1.0)), std::invalid_argument);
  CHECK_THROWS_AS(kernel_eval(u, Eigen::VectorXd::Zero(2), KernelSpec::gaussian(1.0)), std::invalid_argument);
  KernelSpec median{KernelFamily::GaussianRbf, 1.0, BandwidthMode::MedianHeuristic};
  CHECK_THROWS_AS(kernel_eval(u, u, median), std::invalid_argument);
  CHECK_THROWS_AS(parse_kernel_family("cosine"), std::invalid_argument);
  CHECK(parse_kernel_family("rbf") == KernelFamily::GaussianRbf);
  CHECK(parse_kernel_family("poly2") == KernelFamily::PolynomialDeg2);
}

TEST_CASE("gram sums on hand examples") {
  const auto g = KernelSpec::gaussian(1.0);
  auto s = gram_sums(col({0}), col({0}), g);
  CHECK(s.pp == 1.0);
  CHECK(s.qq == 1.0);
  CHECK(s.pq == 1.0);

  s = gram_sums(col({0}), col({1}), g);
  CHECK(s.pp == 1.0);
  CHECK(s.qq == 1.0);
  CHECK(s.pq == doctest::Approx(0.606531).epsilon(1e-6));

  s = gram_sums(col({0, 1}), col({0, 1}), g);
  const double expected = (2.0 + 2.0 * std::exp(-0.5)) / 4.0;
  CHECK(s.pp == doctest::Approx(expected).epsilon(1e-14));
  CHECK(s.qq == doctest::Approx(expected).epsilon(1e-14));
  CHECK(s.pq == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.803265).epsilon(1e-6));
}

TEST_CASE("gram sums agree with direct double sums") {
  std::mt19937_64 rng(11);
  for (auto family : {KernelFamily::GaussianRbf, KernelFamily::Laplacian, KernelFamily::PolynomialDeg2}) {
    const Eigen::MatrixXd p = random_set(rng, 7, 3);
    const Eigen::MatrixXd q = random_set(rng, 5, 3);
    const KernelSpec spec{family, 1.7, BandwidthMode::Fixed};
    const auto s = gram_sums(p, q, spec);
    CHECK(s.pp == doctest::Approx(naive_sum(p, p, family, 1.7)).epsilon(1e-13));
    CHECK(s.qq == doctest::Approx(naive_sum(q, q, family, 1.7)).epsilon(1e-13));
    CHECK(s.pq == doctest::Approx(naive_sum(p, q, family, 1.7)).epsilon(1e-13));
    const Eigen::MatrixXd k = gram_matrix(p, q, spec);
    CHECK(k.mean() == doctest::Approx(s.pq).epsilon(1e-13));
  }
}

TEST_CASE("gram sum gradients match finite differences") {
  std::mt19937_64 rng(5);
  for (auto family : {KernelFamily::GaussianRbf, KernelFamily::Laplacian, KernelFamily::PolynomialDeg2}) {
    const KernelSpec spec{family, 1.3, BandwidthMode::Fixed};
    const Eigen::MatrixXd p = random_set(rng, 4, 2);
    const Eigen::MatrixXd q = random_set(rng, 3, 2);
    const auto g = gram_sums_with_grad(p, q, spec);
    CHECK(g.sums.pq == doctest::Approx(gram_sums(p, q, spec).pq).epsilon(1e-14));
    auto pp = [&](const Eigen::MatrixXd& x) { return gram_sums(x, q, spec).pp; };
    auto qq = [&](const Eigen::MatrixXd& x) { return gram_sums(p, x, spec).qq; };
    auto pq_p = [&](const Eigen::MatrixXd& x) { return gram_sums(x, q, spec).pq; };
    auto pq_q = [&](const Eigen::MatrixXd& x) { return gram_sums(p, x, spec).pq; };
    CHECK(rel_error(g.dpp_dp, central_diff(pp, p)) < 1e-6);
    CHECK(rel_error(g.dqq_dq, central_diff(qq, q)) < 1e-6);
    CHECK(rel_error(g.dpq_dp, central_diff(pq_p, p)) < 1e-6);
    CHECK(rel_error(g.dpq_dq, central_diff(pq_q, q)) < 1e-6);
  }
}

TEST_CASE("laplacian subgradient at coincident points is zero") {
  Eigen::VectorXd u(2);
  u << 0.5, -1.0;
  CHECK(kernel_grad_u(u, u, KernelSpec::laplacian(1.0)).norm() == 0.0);
}

TEST_CASE("polynomial cross sum must be positive") {
  Eigen::MatrixXd p(1, 1), q(1, 1);
  p << 1.0;
  q << -1.0;
  // (u v / sigma + 1)^2 = 0 for sigma = 1
  CHECK_THROWS_AS(gram_sums(p, q, KernelSpec::polynomial(1.0)), std::domain_error);
}

TEST_CASE("median heuristic") {
  CHECK(median_heuristic(col({0, 1, 3}), Eigen::MatrixXd(0, 1)) == 2.0);
  CHECK(median_heuristic(col({0, 1}), col({3})) == 2.0);
  CHECK(median_heuristic(col({5, 5, 5}), Eigen::MatrixXd(0, 1)) == 1.0);
  CHECK(median_heuristic(col({0}), col({4})) == 4.0);
  // four points: distances {1,2,3,1,2,1} sorted {1,1,1,2,2,3} -> (1+2)/2
  CHECK(median_heuristic(col({0, 1, 2, 3}), Eigen::MatrixXd(0, 1)) == 1.5);
  CHECK_THROWS_AS(median_heuristic(col({1}), Eigen::MatrixXd(0, 1)), std::invalid_argument);

  const KernelSpec med{KernelFamily::Laplacian, 1.0, BandwidthMode::MedianHeuristic};
  const auto r = resolve_bandwidth(med, col({0, 1}), col({3}));
  CHECK(r.mode == BandwidthMode::Fixed);
  CHECK(r.family == KernelFamily::Laplacian);
  CHECK(r.bandwidth == 2.0);
  const auto fixed = resolve_bandwidth(KernelSpec::gaussian(0.7), col({0, 1}), col({3}));
  CHECK(fixed.bandwidth == 0.7);
}
