#include "csfair/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "csfair/divergence.hpp"

namespace csfair {

namespace {

struct NamedRegularizer {
  Regularizer value;
  const char* name;
};

constexpr NamedRegularizer kRegularizers[] = {
    {Regularizer::None, "none"}, {Regularizer::Cs, "cs"},         {Regularizer::Mmd, "mmd"},
    {Regularizer::Hsic, "hsic"}, {Regularizer::DpGap, "dp"},      {Regularizer::EoGap, "eo"},
    {Regularizer::EoddGap, "eodd"}, {Regularizer::Pr, "pr"},      {Regularizer::Kl, "kl"},
    {Regularizer::Dcov, "dcov"},
};

bool is_two_sample(Regularizer r) {
  switch (r) {
    case Regularizer::Cs:
    case Regularizer::Mmd:
    case Regularizer::DpGap:
    case Regularizer::EoGap:
    case Regularizer::EoddGap:
    case Regularizer::Kl: return true;
    default: return false;
  }
}

bool needs_scalar_target(Regularizer r) {
  switch (r) {
    case Regularizer::DpGap:
    case Regularizer::EoGap:
    case Regularizer::EoddGap:
    case Regularizer::Kl:
    case Regularizer::Pr: return true;
    default: return false;
  }
}

// Smallest group size each estimator can handle.
Eigen::Index min_side(Regularizer r) { return r == Regularizer::Kl ? 2 : 1; }

SampleSet gather(const Eigen::MatrixXd& target, const std::vector<Eigen::Index>& rows) {
  SampleSet out(static_cast<Eigen::Index>(rows.size()), target.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = target.row(rows[i]);
  return out;
}

void scatter_add(Eigen::MatrixXd& dst, const std::vector<Eigen::Index>& rows, const Eigen::MatrixXd& src, double scale) {
  for (std::size_t i = 0; i < rows.size(); ++i) dst.row(rows[i]) += scale * src.row(static_cast<Eigen::Index>(i));
}

struct PairLoss {
  double value = 0.0;
  Eigen::MatrixXd dtarget;  // same shape as the full target
};

PairLoss pair_loss(const TrainConfig& config, const Eigen::MatrixXd& target, const Eigen::VectorXd& z,
                   const std::vector<Eigen::Index>& a, const std::vector<Eigen::Index>& b) {
  PairLoss out{0.0, Eigen::MatrixXd::Zero(target.rows(), target.cols())};
  const Regularizer reg = config.regularizer;
  if (static_cast<Eigen::Index>(a.size()) < min_side(reg) || static_cast<Eigen::Index>(b.size()) < min_side(reg)) return out;

  if (is_two_sample(reg)) {
    const SampleSet p = gather(target, a);
    const SampleSet q = gather(target, b);
    DivergenceResult r;
    switch (reg) {
      case Regularizer::Cs: r = cs_divergence(p, q, resolve_bandwidth(config.kernel, p, q)); break;
      case Regularizer::Mmd: r = mmd_squared(p, q, resolve_bandwidth(config.kernel, p, q)); break;
      case Regularizer::Kl: r = kl_gaussian_moment(p, q); break;
      default: r = mean_disparity(p, q); break;
    }
    out.value = r.value;
    scatter_add(out.dtarget, a, r.grad_p, 1.0);
    scatter_add(out.dtarget, b, r.grad_q, 1.0);
    return out;
  }

  // Dependence measures see the union with a 0/1 group indicator.
  std::vector<Eigen::Index> rows = a;
  rows.insert(rows.end(), b.begin(), b.end());
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXi group(n);
  for (Eigen::Index i = 0; i < n; ++i) group(i) = i < static_cast<Eigen::Index>(a.size()) ? 0 : 1;
  const SampleSet x = gather(target, rows);
  DivergenceResult r;
  switch (reg) {
    case Regularizer::Hsic: {
      const SampleSet g = group.cast<double>();
      const SampleSet empty(0, g.cols());
      r = hsic(x, g, resolve_bandwidth(config.kernel, x, SampleSet(0, x.cols())), resolve_bandwidth(config.kernel, g, empty));
      break;
    }
    case Regularizer::Dcov: r = distance_covariance(x, group.cast<double>()); break;
    case Regularizer::Pr: {
      Eigen::VectorXd zs(n);
      for (Eigen::Index i = 0; i < n; ++i) zs(i) = z(rows[static_cast<std::size_t>(i)]);
      r = pr_mutual_information(zs, group);
      break;
    }
    default: throw std::invalid_argument("fairness_batch_loss: unsupported regularizer");
  }
  out.value = r.value;
  scatter_add(out.dtarget, rows, r.grad_p, 1.0);
  return out;
}

// Rows satisfying the label condition, grouped by their sensitive values.
using GroupRows = std::map<std::vector<int>, std::vector<Eigen::Index>>;

GroupRows group_rows(const Eigen::MatrixXi& s, const std::vector<Eigen::Index>& rows, std::optional<Eigen::Index> column) {
  GroupRows out;
  for (Eigen::Index r : rows) {
    std::vector<int> key;
    if (column) key.push_back(s(r, *column));
    else
      for (Eigen::Index k = 0; k < s.cols(); ++k) key.push_back(s(r, k));
    out[key].push_back(r);
  }
  return out;
}

// Loss over one label condition.
PairLoss condition_loss(const TrainConfig& config, const Eigen::MatrixXd& target, const Eigen::VectorXd& z,
                        const Eigen::MatrixXi& s, const std::vector<Eigen::Index>& rows) {
  PairLoss total{0.0, Eigen::MatrixXd::Zero(target.rows(), target.cols())};
  if (config.multi_attr == MultiAttr::JointGroups) {
    const GroupRows groups = group_rows(s, rows, std::nullopt);
    std::optional<PairLoss> worst;
    for (auto i = groups.begin(); i != groups.end(); ++i)
      for (auto j = std::next(i); j != groups.end(); ++j) {
        PairLoss l = pair_loss(config, target, z, i->second, j->second);
        if (!worst || l.value > worst->value) worst = std::move(l);
      }
    return worst ? *worst : total;
  }
  const Eigen::Index columns = config.multi_attr == MultiAttr::Single ? 1 : s.cols();
  for (Eigen::Index k = 0; k < columns; ++k) {
    // Every pair of values of this attribute; a binary attribute gives one pair.
    const GroupRows groups = group_rows(s, rows, k);
    for (auto i = groups.begin(); i != groups.end(); ++i)
      for (auto j = std::next(i); j != groups.end(); ++j) {
        const PairLoss l = pair_loss(config, target, z, i->second, j->second);
        total.value += l.value;
        total.dtarget += l.dtarget;
      }
  }
  return total;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string to_string(Regularizer r) {
  for (const auto& e : kRegularizers)
    if (e.value == r) return e.name;
  return "unknown";
}

std::string to_string(FairnessMode m) {
  switch (m) {
    case FairnessMode::Dp: return "dp";
    case FairnessMode::Eo: return "eo";
    case FairnessMode::Eodd: return "eodd";
  }
  return "unknown";
}

std::string to_string(RegTarget t) { return t == RegTarget::Prediction ? "prediction" : "hidden"; }

std::string to_string(MultiAttr m) {
  switch (m) {
    case MultiAttr::Single: return "single";
    case MultiAttr::SumPerAttribute: return "sum_per_attribute";
    case MultiAttr::JointGroups: return "joint_groups";
  }
  return "unknown";
}

Regularizer parse_regularizer(std::string_view name) {
  for (const auto& e : kRegularizers)
    if (name == e.name) return e.value;
  if (name == "dp_gap") return Regularizer::DpGap;
  if (name == "eo_gap") return Regularizer::EoGap;
  if (name == "eodd_gap") return Regularizer::EoddGap;
  throw std::invalid_argument("unknown regularizer '" + std::string(name) + "'");
}

FairnessMode parse_mode(std::string_view name) {
  if (name == "dp") return FairnessMode::Dp;
  if (name == "eo") return FairnessMode::Eo;
  if (name == "eodd") return FairnessMode::Eodd;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

RegTarget parse_target(std::string_view name) {
  if (name == "prediction") return RegTarget::Prediction;
  if (name == "hidden") return RegTarget::Hidden;
  throw std::invalid_argument("unknown target '" + std::string(name) + "'");
}

MultiAttr parse_multi_attr(std::string_view name) {
  if (name == "single") return MultiAttr::Single;
  if (name == "sum_per_attribute" || name == "sum") return MultiAttr::SumPerAttribute;
  if (name == "joint_groups" || name == "joint") return MultiAttr::JointGroups;
  throw std::invalid_argument("unknown multi-attribute mode '" + std::string(name) + "'");
}

RegTarget default_target(Regularizer r) { return r == Regularizer::Mmd ? RegTarget::Hidden : RegTarget::Prediction; }

FairnessMode TrainConfig::effective_mode() const {
  switch (regularizer) {
    case Regularizer::EoGap: return FairnessMode::Eo;
    case Regularizer::EoddGap: return FairnessMode::Eodd;
    default: return mode;
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (!std::isfinite(alpha) || alpha < 0.0) fail("alpha: must be finite and >= 0");
  if (!std::isfinite(beta) || beta < 0.0) fail("beta: must be finite and >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr: must be positive");
  if (epochs < 1) fail("epochs: must be >= 1");
  if (batch_size < 1) fail("batch_size: must be >= 1");
  if (step_size < 1) fail("step_size: must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma: must lie in (0, 1]");
  if (!(lr_floor >= 0.0)) fail("lr_floor: must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold: must lie in (0, 1)");
  if (kernel.mode == BandwidthMode::Fixed && !(kernel.bandwidth > 0.0)) fail("bandwidth: must be positive");
  for (int h : hidden_sizes)
    if (h < 1) fail("hidden_sizes: every layer needs at least one unit");
  if (effective_target() == RegTarget::Hidden && needs_scalar_target(regularizer))
    fail("target: regularizer '" + to_string(regularizer) + "' is defined on prediction probabilities, not hidden activations");
}

FairnessLoss fairness_batch_loss(const TrainConfig& config, const Eigen::VectorXd& z, const Eigen::MatrixXd& hidden,
                                 const Eigen::VectorXd& y, const Eigen::MatrixXi& s) {
  const Eigen::Index b = z.size();
  if (b < 1) throw std::invalid_argument("fairness_batch_loss: empty batch");
  if (y.size() != b || s.rows() != b) throw std::invalid_argument("fairness_batch_loss: batch length mismatch");
  if (s.cols() < 1) throw std::invalid_argument("fairness_batch_loss: no sensitive columns");
  const RegTarget target = config.effective_target();
  if (target == RegTarget::Hidden && needs_scalar_target(config.regularizer))
    throw std::invalid_argument("fairness_batch_loss: regularizer '" + to_string(config.regularizer) +
                                "' cannot act on hidden activations");
  if (target == RegTarget::Hidden && hidden.rows() != b)
    throw std::invalid_argument("fairness_batch_loss: hidden activations do not match the batch");

  FairnessLoss out;
  out.dz = Eigen::VectorXd::Zero(b);
  out.dhidden = Eigen::MatrixXd::Zero(b, target == RegTarget::Hidden ? hidden.cols() : 0);
  if (config.regularizer == Regularizer::None) return out;

  const Eigen::MatrixXd t = target == RegTarget::Hidden ? hidden : Eigen::MatrixXd(z);

  std::vector<std::vector<Eigen::Index>> conditions;
  auto rows_with_label = [&](std::optional<double> label) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < b; ++i)
      if (!label || y(i) == *label) rows.push_back(i);
    return rows;
  };
  switch (config.effective_mode()) {
    case FairnessMode::Dp: conditions.push_back(rows_with_label(std::nullopt)); break;
    case FairnessMode::Eo: conditions.push_back(rows_with_label(1.0)); break;
    case FairnessMode::Eodd:
      conditions.push_back(rows_with_label(0.0));
      conditions.push_back(rows_with_label(1.0));
      break;
  }

  Eigen::MatrixXd dt = Eigen::MatrixXd::Zero(t.rows(), t.cols());
  for (const auto& rows : conditions) {
    const PairLoss l = condition_loss(config, t, z, s, rows);
    out.value += l.value;
    dt += l.dtarget;
  }
  if (target == RegTarget::Hidden) out.dhidden = dt;
  else out.dz = dt.col(0);
  return out;
}

double scheduled_lr(const TrainConfig& config, int epoch) {
  return config.lr * std::pow(config.gamma, static_cast<double>(epoch / config.step_size));
}

MetricsRecord evaluate_model(const MlpParams& model, const Dataset& data, double threshold) {
  const ForwardCache cache = forward(model, data.x);
  EvalInput in{cache.prob, data.y, data.s, threshold, 0};
  std::vector<int> cards = data.sensitive_cardinalities;
  if (cards.size() != static_cast<std::size_t>(data.s.cols())) {
    cards.assign(static_cast<std::size_t>(data.s.cols()), 2);
    for (Eigen::Index k = 0; k < data.s.cols(); ++k)
      cards[static_cast<std::size_t>(k)] = std::max(2, data.s.col(k).maxCoeff() + 1);
  }
  return evaluate_all(in, cards);
}

ObjectiveValue objective(const TrainConfig& config, const MlpParams& params, const Eigen::MatrixXd& x,
                         const Eigen::VectorXd& y, const Eigen::MatrixXi& s) {
  const ForwardCache cache = forward(params, x);
  const LossAndGrad bce = bce_loss(cache.prob, y);
  const FairnessLoss fair = fairness_batch_loss(config, cache.prob, cache.hidden(), y, s);
  const PenaltyAndGrad l2 = l2_penalty(params, config.beta);

  const Eigen::VectorXd dz = bce.grad + config.alpha * fair.dz;
  std::optional<Eigen::MatrixXd> dhidden;
  if (config.effective_target() == RegTarget::Hidden && config.alpha != 0.0) dhidden = config.alpha * fair.dhidden;
  ObjectiveValue out;
  out.grad = backward(params, cache, dz, dhidden);
  axpy(1.0, l2.grad, out.grad);
  out.bce = bce.value;
  out.fairness = fair.value;
  out.l2 = l2.value;
  out.total = bce.value + config.alpha * fair.value + l2.value;
  return out;
}

RunResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& test_set) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  if (train_set.size() < 1) throw std::invalid_argument("train: empty training set");
  if (train_set.x.cols() != test_set.x.cols()) throw std::invalid_argument("train: train/test feature dimensions differ");
  if (train_set.s.cols() < 1) throw std::invalid_argument("train: training set has no sensitive columns");

  RunResult result;
  result.config = config;
  MlpParams params = init_mlp(config.hidden_sizes, static_cast<int>(train_set.x.cols()), config.seed);

  // Adam state over the flattened parameter vector.
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.parameter_count()));
  Eigen::VectorXd v = m;
  long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = scheduled_lr(config, epoch);
    if (lr < config.lr_floor) break;
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    const auto plan = batches(static_cast<std::size_t>(train_set.size()), static_cast<std::size_t>(config.batch_size),
                              config.seed, static_cast<std::uint64_t>(epoch));
    for (const auto& idx : plan) {
      const Dataset batch = train_set.subset(idx);
      const ObjectiveValue obj = objective(config, params, batch.x, batch.y, batch.s);
      auto check = [&](double value, const char* term) {
        if (!std::isfinite(value))
          throw TrainingError(std::string("non-finite ") + term + " loss at epoch " + std::to_string(epoch));
      };
      check(obj.bce, "bce");
      check(obj.fairness, "fairness");
      check(obj.l2, "l2");

      const Eigen::VectorXd g = flatten(obj.grad);
      if (!g.allFinite()) throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch));
      ++step;
      m = kBeta1 * m + (1.0 - kBeta1) * g;
      v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseAbs2();
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      Eigen::VectorXd theta = flatten(params);
      theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEps);
      unflatten(theta, params);

      log.bce += obj.bce;
      log.fairness += obj.fairness;
      log.l2 += obj.l2;
    }
    const auto nb = static_cast<double>(plan.size());
    log.bce /= nb;
    log.fairness /= nb;
    log.l2 /= nb;
    log.total = log.bce + config.alpha * log.fairness + log.l2;
    result.history.push_back(log);
  }

  result.metrics = evaluate_model(params, test_set, config.threshold);
  result.model = std::move(params);
  result.wall_seconds = elapsed_seconds(start);
  return result;
}

std::vector<RunResult> sweep(const TrainConfig& base, const std::vector<double>& alphas, const std::vector<double>& betas,
                             const std::vector<std::uint64_t>& seeds, const Dataset& train_set, const Dataset& test_set,
                             int jobs) {
  if (alphas.empty() || betas.empty() || seeds.empty()) throw std::invalid_argument("sweep: grids must be non-empty");
  std::vector<TrainConfig> cells;
  for (double a : alphas)
    for (double b : betas)
      for (std::uint64_t s : seeds) {
        TrainConfig c = base;
        c.alpha = a;
        c.beta = b;
        c.seed = s;
        cells.push_back(c);
      }

  std::vector<RunResult> results(cells.size());
  auto run_cell = [&](std::size_t i) {
    try {
      results[i] = train(cells[i], train_set, test_set);
    } catch (const std::exception& e) {
      results[i] = RunResult{};
      results[i].config = cells[i];
      results[i].status = "failed";
      results[i].error = e.what();
    }
  };

  const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, static_cast<int>(cells.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
    });
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace csfair
