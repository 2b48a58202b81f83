#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace csfair {

/// A metric value, or nullopt when a required cell is empty.
using Metric = std::optional<double>;

/// Predictions, labels and sensitive columns for evaluation. Binarized
/// metrics use yhat = 1 iff z >= threshold. Group-conditional metrics read
/// sensitive column `attribute` and compare groups 0 and 1.
struct EvalInput {
  Eigen::VectorXd z;
  Eigen::VectorXd y;
  Eigen::MatrixXi s;
  double threshold = 0.5;
  int attribute = 0;

  void validate() const;
};

Metric delta_dp(const EvalInput& in);
Metric delta_eo(const EvalInput& in);
Metric delta_eodd(const EvalInput& in);
Metric accuracy(const EvalInput& in);
Metric auc(const EvalInput& in);
Metric ppv_gap(const EvalInput& in);
Metric prule(const EvalInput& in);
Metric bfp_gap(const EvalInput& in);
Metric bfn_gap(const EvalInput& in);
/// Area between the groups' empirical CDFs of z on [0, 1], computed exactly.
Metric abcc(const EvalInput& in);

struct IntersectionalMetrics {
  double dp_gap_inter = 0.0;
  double eo_gap_inter = 0.0;
  double worst_group_acc = 0.0;
};

/// Max-min gaps over groups 0..num_groups-1 with prediction yhat = z > 0.5.
/// An empty group contributes a rate of 0.0.
IntersectionalMetrics intersectional_metrics(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                                             const Eigen::VectorXi& group, int num_groups);

/// Cross-product group id: sum_k s_k * prod_{j<k} card_j.
Eigen::VectorXi joint_group_ids(const Eigen::MatrixXi& s, const std::vector<int>& cardinalities);

struct MetricsRecord {
  Metric accuracy;
  Metric auc;
  Metric dp;
  Metric eo;
  Metric eodd;
  Metric ppv_gap;
  Metric prule;
  Metric bfp;
  Metric bfn;
  Metric abcc;
  std::optional<IntersectionalMetrics> intersectional;
};

/// Full suite. Intersectional metrics are filled when there are at least two
/// sensitive columns; cardinalities give the per-column group counts.
MetricsRecord evaluate_all(const EvalInput& in, const std::vector<int>& cardinalities);

}  // namespace csfair
