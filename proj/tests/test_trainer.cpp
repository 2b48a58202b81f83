#include <cmath>
#include <random>
#include <sstream>

#include <doctest.h>

#include "csfair/divergence.hpp"
#include "csfair/trainer.hpp"
#include "fd.hpp"

using namespace csfair;
using csfair::testing::central_diff;
using csfair::testing::rel_error;

namespace {

TrainConfig fixed_kernel(Regularizer r, FairnessMode mode = FairnessMode::Dp) {
  TrainConfig c;
  c.regularizer = r;
  c.mode = mode;
  c.kernel = KernelSpec::gaussian(0.7);
  return c;
}

struct Batch {
  Eigen::VectorXd z;
  Eigen::MatrixXd h;
  Eigen::VectorXd y;
  Eigen::MatrixXi s;
};

Batch random_batch(std::mt19937_64& rng, int n, int width, int attrs = 1) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::normal_distribution<double> nd(0.0, 1.0);
  Batch b;
  b.z.resize(n);
  b.h.resize(n, width);
  b.y.resize(n);
  b.s.resize(n, attrs);
  for (int i = 0; i < n; ++i) {
    b.z(i) = u(rng);
    for (int j = 0; j < width; ++j) b.h(i, j) = nd(rng);
    b.y(i) = (i / 2) % 2;
    for (int k = 0; k < attrs; ++k) b.s(i, k) = (i >> k) % 2;
  }
  return b;
}

// Reference ERM setting used for the data-level checks: small MLP, no L2.
TrainConfig reference_erm() {
  TrainConfig c;
  c.regularizer = Regularizer::None;
  c.alpha = 0.0;
  c.beta = 0.0;
  c.hidden_sizes = {32, 16};
  return c;
}

// Same path as the command line: CSV text, schema, split, train-fitted scaling.
std::pair<Dataset, Dataset> synthetic_split(std::size_t n, double bias, std::uint64_t seed) {
  std::stringstream csv;
  write_dataset_csv(gen_synthetic(n, bias, 6, seed), csv);
  const Schema schema = synthetic_schema(6);
  return prepare_train_test(load_csv(csv, schema), schema, 0.2, seed);
}

}  // namespace

TEST_CASE("names and validation") {
  for (auto r : {Regularizer::None, Regularizer::Cs, Regularizer::Mmd, Regularizer::Hsic, Regularizer::DpGap,
                 Regularizer::EoGap, Regularizer::EoddGap, Regularizer::Pr, Regularizer::Kl, Regularizer::Dcov})
    CHECK(parse_regularizer(to_string(r)) == r);
  CHECK(parse_regularizer("dp_gap") == Regularizer::DpGap);
  CHECK(parse_regularizer("dp") == Regularizer::DpGap);
  CHECK_THROWS_AS(parse_regularizer("adv"), std::invalid_argument);
  CHECK(parse_mode("eodd") == FairnessMode::Eodd);
  CHECK(parse_multi_attr("joint_groups") == MultiAttr::JointGroups);
  CHECK(default_target(Regularizer::Mmd) == RegTarget::Hidden);
  CHECK(default_target(Regularizer::Cs) == RegTarget::Prediction);

  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.regularizer = Regularizer::Pr;
  c.target = RegTarget::Hidden;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("target"), std::invalid_argument);
  c = TrainConfig{};
  c.alpha = -1;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("alpha"), std::invalid_argument);
  c = TrainConfig{};
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.beta = std::nan("");
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  c = TrainConfig{};
  c.regularizer = Regularizer::EoGap;
  CHECK(c.effective_mode() == FairnessMode::Eo);
  c.regularizer = Regularizer::EoddGap;
  CHECK(c.effective_mode() == FairnessMode::Eodd);
  c.regularizer = Regularizer::DpGap;
  c.mode = FairnessMode::Eo;
  CHECK(c.effective_mode() == FairnessMode::Eo);
}

TEST_CASE("fairness loss hand examples") {
  Eigen::VectorXd z(2), y(2);
  Eigen::MatrixXi s(2, 1);
  z << 0.2, 0.8;
  y << 1, 0;
  s << 0, 1;
  auto c = fixed_kernel(Regularizer::Cs);
  c.kernel = KernelSpec::gaussian(1.0);
  CHECK(fairness_batch_loss(c, z, Eigen::MatrixXd(2, 0), y, s).value == doctest::Approx(0.36).epsilon(1e-12));

  Eigen::VectorXd z3(3), y3(3);
  Eigen::MatrixXi s3(3, 1);
  y3 << 1, 1, 0;
  z3 << 0.9, 0.3, 0.5;
  s3 << 0, 1, 0;
  auto gap = fixed_kernel(Regularizer::DpGap, FairnessMode::Eo);
  CHECK(fairness_batch_loss(gap, z3, Eigen::MatrixXd(3, 0), y3, s3).value == doctest::Approx(0.6).epsilon(1e-12));
  // dp conditioning compares {0.9, 0.5} with {0.3}
  gap.mode = FairnessMode::Dp;
  CHECK(fairness_batch_loss(gap, z3, Eigen::MatrixXd(3, 0), y3, s3).value == doctest::Approx(0.4).epsilon(1e-12));
  // eo_gap ignores the configured mode
  auto eo_gap = fixed_kernel(Regularizer::EoGap, FairnessMode::Dp);
  CHECK(fairness_batch_loss(eo_gap, z3, Eigen::MatrixXd(3, 0), y3, s3).value == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("single-group batches contribute nothing") {
  std::mt19937_64 rng(1);
  auto b = random_batch(rng, 8, 3);
  b.s.setZero();
  for (auto r : {Regularizer::Cs, Regularizer::Mmd, Regularizer::Hsic, Regularizer::DpGap, Regularizer::EoGap,
                 Regularizer::EoddGap, Regularizer::Pr, Regularizer::Kl, Regularizer::Dcov}) {
    const auto l = fairness_batch_loss(fixed_kernel(r), b.z, b.h, b.y, b.s);
    CHECK(l.value == 0.0);
    CHECK(l.dz.norm() == 0.0);
    CHECK(l.dhidden.norm() == 0.0);
  }
  // KL needs two points per side
  Eigen::VectorXd z(3), y = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXi s(3, 1);
  z << 0.2, 0.4, 0.9;
  s << 0, 0, 1;
  CHECK(fairness_batch_loss(fixed_kernel(Regularizer::Kl), z, Eigen::MatrixXd(3, 0), y, s).value == 0.0);
  CHECK(fairness_batch_loss(fixed_kernel(Regularizer::Cs), z, Eigen::MatrixXd(3, 0), y, s).value > 0.0);
}

TEST_CASE("fairness gradients match finite differences") {
  std::mt19937_64 rng(2);
  const std::vector<Regularizer> on_predictions = {Regularizer::Cs,    Regularizer::Mmd,     Regularizer::Hsic,
                                                   Regularizer::DpGap, Regularizer::EoGap,   Regularizer::EoddGap,
                                                   Regularizer::Pr,    Regularizer::Kl,      Regularizer::Dcov};
  for (int t = 0; t < 3; ++t) {
    const auto b = random_batch(rng, 12, 3);
    for (auto r : on_predictions)
      for (auto mode : {FairnessMode::Dp, FairnessMode::Eo, FairnessMode::Eodd}) {
        auto c = fixed_kernel(r, mode);
        c.target = RegTarget::Prediction;
        const auto l = fairness_batch_loss(c, b.z, b.h, b.y, b.s);
        const auto fd = central_diff(
            [&](const Eigen::MatrixXd& z) { return fairness_batch_loss(c, z.col(0), b.h, b.y, b.s).value; },
            Eigen::MatrixXd(b.z));
        CHECK(rel_error(Eigen::MatrixXd(l.dz), fd) < 1e-6);
      }
    for (auto r : {Regularizer::Cs, Regularizer::Mmd, Regularizer::Hsic, Regularizer::Dcov}) {
      auto c = fixed_kernel(r, FairnessMode::Eodd);
      c.target = RegTarget::Hidden;
      const auto l = fairness_batch_loss(c, b.z, b.h, b.y, b.s);
      CHECK(l.dz.norm() == 0.0);
      const auto fd = central_diff(
          [&](const Eigen::MatrixXd& h) { return fairness_batch_loss(c, b.z, h, b.y, b.s).value; }, b.h);
      CHECK(rel_error(l.dhidden, fd) < 1e-6);
    }
  }
}

TEST_CASE("multiple sensitive attributes") {
  std::mt19937_64 rng(3);
  const auto b = random_batch(rng, 16, 2, 2);
  auto c = fixed_kernel(Regularizer::Cs);
  const double first = fairness_batch_loss(c, b.z, b.h, b.y, b.s.leftCols(1)).value;
  const double second = fairness_batch_loss(c, b.z, b.h, b.y, b.s.rightCols(1)).value;
  CHECK(fairness_batch_loss(c, b.z, b.h, b.y, b.s).value == doctest::Approx(first));
  c.multi_attr = MultiAttr::SumPerAttribute;
  CHECK(fairness_batch_loss(c, b.z, b.h, b.y, b.s).value == doctest::Approx(first + second));

  // joint groups: the worst of the six pairs of the four cells
  c.multi_attr = MultiAttr::JointGroups;
  std::vector<std::vector<double>> cells(4);
  for (Eigen::Index i = 0; i < b.z.size(); ++i) cells[static_cast<std::size_t>(b.s(i, 0) + 2 * b.s(i, 1))].push_back(b.z(i));
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) {
      const Eigen::MatrixXd p = Eigen::Map<const Eigen::VectorXd>(cells[i].data(), static_cast<Eigen::Index>(cells[i].size()));
      const Eigen::MatrixXd q = Eigen::Map<const Eigen::VectorXd>(cells[j].data(), static_cast<Eigen::Index>(cells[j].size()));
      worst = std::max(worst, cs_divergence(p, q, c.kernel).value);
    }
  const auto joint = fairness_batch_loss(c, b.z, b.h, b.y, b.s);
  CHECK(joint.value == doctest::Approx(worst).epsilon(1e-12));
  const auto fd = central_diff(
      [&](const Eigen::MatrixXd& z) { return fairness_batch_loss(c, z.col(0), b.h, b.y, b.s).value; },
      Eigen::MatrixXd(b.z));
  CHECK(rel_error(Eigen::MatrixXd(joint.dz), fd) < 1e-6);

  // a three-valued attribute sums over its three value pairs
  Eigen::VectorXd z(3), y = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXi s(3, 1);
  z << 0.1, 0.5, 0.8;
  s << 0, 1, 2;
  auto gap = fixed_kernel(Regularizer::DpGap);
  CHECK(fairness_batch_loss(gap, z, Eigen::MatrixXd(3, 0), y, s).value == doctest::Approx(0.4 + 0.7 + 0.3));
}

TEST_CASE("full objective gradient on a toy network") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x(6, 3);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = nd(rng);
  Eigen::VectorXd y(6);
  y << 0, 1, 1, 0, 1, 0;
  Eigen::MatrixXi s(6, 1);
  s << 0, 0, 0, 1, 1, 1;
  for (auto r : {Regularizer::None, Regularizer::Cs, Regularizer::Mmd, Regularizer::Hsic, Regularizer::DpGap,
                 Regularizer::EoGap, Regularizer::EoddGap, Regularizer::Pr, Regularizer::Kl, Regularizer::Dcov}) {
    auto c = fixed_kernel(r);
    c.alpha = 0.7;
    c.beta = 0.3;
    const auto params = init_mlp({4, 3}, 3, 5);
    const auto obj = objective(c, params, x, y, s);
    CHECK(obj.total == doctest::Approx(obj.bce + c.alpha * obj.fairness + obj.l2).epsilon(1e-15));
    const auto fd = central_diff(
        [&](const Eigen::MatrixXd& theta) {
          MlpParams p = params;
          unflatten(theta.col(0), p);
          return objective(c, p, x, y, s).total;
        },
        Eigen::MatrixXd(flatten(params)));
    CHECK(rel_error(Eigen::MatrixXd(flatten(obj.grad)), fd) < 1e-4);
  }
}

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  CHECK(scheduled_lr(c, 0) == 1e-2);
  CHECK(scheduled_lr(c, 49) == 1e-2);
  CHECK(scheduled_lr(c, 50) == doctest::Approx(1e-3));
  CHECK(scheduled_lr(c, 149) == doctest::Approx(1e-4));

  auto [train_set, test_set] = synthetic_split(20, 0.5, 0);
  c = reference_erm();
  c.hidden_sizes = {4};
  c.gamma = 0.01;  // lr drops to 1e-6 < floor at epoch 100
  const auto r = train(c, train_set, test_set);
  CHECK(r.history.size() == 100);
  c.gamma = 0.1;
  CHECK(train(c, train_set, test_set).history.size() == 150);
}

TEST_CASE("plain ERM fits separable data") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0.0, 1.0);
  Dataset d;
  d.x.resize(200, 2);
  d.y.resize(200);
  d.s.resize(200, 1);
  for (Eigen::Index i = 0; i < 200;) {
    const double a = nd(rng), b = nd(rng);
    if (std::abs(a + b) < 0.3) continue;
    d.x(i, 0) = a;
    d.x(i, 1) = b;
    d.y(i) = a + b > 0 ? 1.0 : 0.0;
    d.s(i, 0) = static_cast<int>(i % 2);
    ++i;
  }
  d.sensitive_cardinalities = {2};
  const auto r = train(reference_erm(), d, d);
  CHECK(r.history.back().bce < 0.1);
  CHECK(*r.metrics.accuracy > 0.98);
}

TEST_CASE("training is deterministic and logs a consistent objective") {
  auto [train_set, test_set] = synthetic_split(60, 0.8, 1);
  TrainConfig c;
  c.hidden_sizes = {8};
  c.epochs = 30;
  c.batch_size = 64;
  c.beta = 1e-3;
  const auto a = train(c, train_set, test_set);
  const auto b = train(c, train_set, test_set);
  CHECK(flatten(a.model) == flatten(b.model));
  CHECK(*a.metrics.dp == *b.metrics.dp);
  CHECK(*a.metrics.auc == *b.metrics.auc);
  for (const auto& h : a.history) CHECK(std::abs(h.total - (h.bce + c.alpha * h.fairness + h.l2)) <= 1e-10);
  c.seed = 1;
  CHECK(flatten(train(c, train_set, test_set).model) != flatten(a.model));
}

TEST_CASE("sweep") {
  auto [train_set, test_set] = synthetic_split(40, 0.8, 2);
  TrainConfig base;
  base.hidden_sizes = {8};
  base.epochs = 20;
  base.batch_size = 64;

  const auto one = sweep(base, {0.1}, {0.01}, {3}, train_set, test_set);
  REQUIRE(one.size() == 1);
  TrainConfig direct = base;
  direct.alpha = 0.1;
  direct.beta = 0.01;
  direct.seed = 3;
  CHECK(flatten(one[0].model) == flatten(train(direct, train_set, test_set).model));

  const auto seq = sweep(base, {0.0, 0.1}, {0.01, 0.1}, {0, 1}, train_set, test_set, 1);
  const auto par = sweep(base, {0.0, 0.1}, {0.01, 0.1}, {0, 1}, train_set, test_set, 3);
  REQUIRE(seq.size() == 8);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK(flatten(seq[i].model) == flatten(par[i].model));
    CHECK(*seq[i].metrics.abcc == *par[i].metrics.abcc);
  }
  CHECK(seq[0].config.alpha == 0.0);
  CHECK(seq[5].config.alpha == 0.1);
  CHECK(seq[5].config.beta == 0.01);
  CHECK(seq[5].config.seed == 1);

  const auto failed = sweep(base, {0.1}, {-1.0, 0.01}, {0}, train_set, test_set);
  CHECK(failed[0].status == "failed");
  CHECK(failed[0].error.find("beta") != std::string::npos);
  CHECK_FALSE(failed[0].metrics.accuracy.has_value());
  CHECK(failed[1].status == "ok");
  CHECK_THROWS_AS(sweep(base, {}, {1.0}, {0}, train_set, test_set), std::invalid_argument);
}

TEST_CASE("group bias of the synthetic data under reference ERM") {
  double unbiased = 0.0, biased = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto c = reference_erm();
    c.seed = seed;
    auto [tr0, te0] = synthetic_split(1000, 0.0, seed);
    unbiased += *train(c, tr0, te0).metrics.dp / 3.0;
    auto [tr1, te1] = synthetic_split(1000, 0.8, seed);
    biased += *train(c, tr1, te1).metrics.dp / 3.0;
  }
  CHECK(unbiased < 0.05);
  CHECK(biased > 0.15);
}

TEST_CASE("a small fairness weight lowers the parity gap") {
  auto [train_set, test_set] = synthetic_split(500, 0.8, 0);
  TrainConfig base = reference_erm();
  base.regularizer = Regularizer::Cs;
  const auto runs = sweep(base, {0.0, 0.05}, {0.0}, {0, 1, 2}, train_set, test_set);
  double plain = 0.0, fair = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    plain += *runs[i].metrics.dp / 3.0;
    fair += *runs[3 + i].metrics.dp / 3.0;
  }
  CHECK(fair < plain);
}
