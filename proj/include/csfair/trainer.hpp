#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "csfair/data.hpp"
#include "csfair/kernels.hpp"
#include "csfair/metrics.hpp"
#include "csfair/model.hpp"

namespace csfair {

enum class Regularizer { None, Cs, Mmd, Hsic, DpGap, EoGap, EoddGap, Pr, Kl, Dcov };
enum class FairnessMode { Dp, Eo, Eodd };
enum class RegTarget { Prediction, Hidden };
enum class MultiAttr { Single, SumPerAttribute, JointGroups };

std::string to_string(Regularizer r);
std::string to_string(FairnessMode m);
std::string to_string(RegTarget t);
std::string to_string(MultiAttr m);
Regularizer parse_regularizer(std::string_view name);
FairnessMode parse_mode(std::string_view name);
RegTarget parse_target(std::string_view name);
MultiAttr parse_multi_attr(std::string_view name);

/// MMD defaults to hidden representations, everything else to predictions.
RegTarget default_target(Regularizer r);

struct TrainConfig {
  Regularizer regularizer = Regularizer::Cs;
  FairnessMode mode = FairnessMode::Dp;
  std::optional<RegTarget> target;  // unset: default_target(regularizer)
  double alpha = 0.05;
  double beta = 1.0;
  double lr = 1e-2;
  int epochs = 150;
  int batch_size = 1024;
  int step_size = 50;
  double gamma = 0.1;
  double lr_floor = 1e-5;
  KernelSpec kernel{KernelFamily::GaussianRbf, 1.0, BandwidthMode::MedianHeuristic};
  std::uint64_t seed = 0;
  MultiAttr multi_attr = MultiAttr::Single;
  std::vector<int> hidden_sizes = {512, 256, 64};
  double threshold = 0.5;

  RegTarget effective_target() const { return target.value_or(default_target(regularizer)); }
  /// The gap regularizers fix their own conditioning; the rest use `mode`.
  FairnessMode effective_mode() const;
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct FairnessLoss {
  double value = 0.0;
  Eigen::VectorXd dz;       // B
  Eigen::MatrixXd dhidden;  // B x h (zero unless the target is hidden)
};

/// Fairness term for one mini-batch. Within each label condition, groups are
/// compared pairwise: every pair of values of a sensitive column (summed over
/// pairs and, for sum_per_attribute, over columns) or every pair of joint
/// groups (worst pair). A comparison whose side is too small for the
/// estimator contributes nothing.
FairnessLoss fairness_batch_loss(const TrainConfig& config, const Eigen::VectorXd& z, const Eigen::MatrixXd& hidden,
                                 const Eigen::VectorXd& y, const Eigen::MatrixXi& s);

struct ObjectiveValue {
  double bce = 0.0;
  double fairness = 0.0;
  double l2 = 0.0;
  double total = 0.0;  // bce + alpha * fairness + l2
  MlpGrads grad;
};

/// BCE + alpha * fairness + (beta / 2) ||W||^2 on one batch, with the exact
/// gradient over every parameter.
ObjectiveValue objective(const TrainConfig& config, const MlpParams& params, const Eigen::MatrixXd& x,
                         const Eigen::VectorXd& y, const Eigen::MatrixXi& s);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double bce = 0.0;
  double fairness = 0.0;
  double l2 = 0.0;
  double total = 0.0;
};

struct RunResult {
  TrainConfig config;
  std::vector<EpochLog> history;
  MetricsRecord metrics;
  MlpParams model;
  double wall_seconds = 0.0;
  std::string status = "ok";
  std::string error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Learning rate used during `epoch` (0-based) under step decay.
double scheduled_lr(const TrainConfig& config, int epoch);

/// Mini-batch Adam on BCE + alpha * fairness + (beta / 2) ||W||^2, followed
/// by evaluation of the full metric suite on the test set.
RunResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& test_set);

/// Metric suite for a trained model on a dataset.
MetricsRecord evaluate_model(const MlpParams& model, const Dataset& data, double threshold);

/// One run per (alpha, beta, seed) cell, in that nesting order. Failing
/// cells are reported with status "failed" and the error message. With
/// jobs > 1 cells run concurrently; results do not depend on scheduling.
std::vector<RunResult> sweep(const TrainConfig& base, const std::vector<double>& alphas, const std::vector<double>& betas,
                             const std::vector<std::uint64_t>& seeds, const Dataset& train_set, const Dataset& test_set,
                             int jobs = 1);

}  // namespace csfair
