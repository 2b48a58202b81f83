#include "csfair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace csfair {

namespace {

struct Cell {
  double count = 0.0;
  double hits = 0.0;
  Metric rate() const { return count > 0.0 ? Metric(hits / count) : std::nullopt; }
};

bool predicted_positive(const EvalInput& in, Eigen::Index i) { return in.z(i) >= in.threshold; }

int group_of(const EvalInput& in, Eigen::Index i) { return in.s(i, in.attribute); }

// Rate of `hit` among rows of group g that satisfy `keep`.
template <typename Keep, typename Hit>
Cell group_cell(const EvalInput& in, int g, Keep keep, Hit hit) {
  Cell c;
  for (Eigen::Index i = 0; i < in.z.size(); ++i) {
    if (group_of(in, i) != g || !keep(i)) continue;
    c.count += 1.0;
    if (hit(i)) c.hits += 1.0;
  }
  return c;
}

Metric abs_gap(const Metric& a, const Metric& b) {
  if (!a || !b) return std::nullopt;
  return std::abs(*a - *b);
}

template <typename Keep>
Metric positive_rate_gap(const EvalInput& in, Keep keep) {
  auto hit = [&](Eigen::Index i) { return predicted_positive(in, i); };
  return abs_gap(group_cell(in, 0, keep, hit).rate(), group_cell(in, 1, keep, hit).rate());
}

// Mean of z within group g among rows with label y.
Metric mean_score(const EvalInput& in, int g, double label) {
  double n = 0.0;
  double s = 0.0;
  for (Eigen::Index i = 0; i < in.z.size(); ++i)
    if (group_of(in, i) == g && in.y(i) == label) {
      n += 1.0;
      s += in.z(i);
    }
  return n > 0.0 ? Metric(s / n) : std::nullopt;
}

std::vector<double> scores_of_group(const EvalInput& in, int g) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < in.z.size(); ++i)
    if (group_of(in, i) == g) out.push_back(in.z(i));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void EvalInput::validate() const {
  if (z.size() != y.size() || s.rows() != z.size())
    throw std::invalid_argument("EvalInput: z, y and s must have the same length");
  if (s.cols() < 1) throw std::invalid_argument("EvalInput: need at least one sensitive column");
  if (attribute < 0 || attribute >= s.cols()) throw std::invalid_argument("EvalInput: attribute index out of range");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("EvalInput: threshold must lie in (0, 1)");
  if (((y.array() != 0.0) && (y.array() != 1.0)).any()) throw std::invalid_argument("EvalInput: labels must be 0 or 1");
}

Metric delta_dp(const EvalInput& in) {
  in.validate();
  return positive_rate_gap(in, [](Eigen::Index) { return true; });
}

Metric delta_eo(const EvalInput& in) {
  in.validate();
  return positive_rate_gap(in, [&](Eigen::Index i) { return in.y(i) == 1.0; });
}

Metric delta_eodd(const EvalInput& in) {
  in.validate();
  const Metric neg = positive_rate_gap(in, [&](Eigen::Index i) { return in.y(i) == 0.0; });
  const Metric pos = positive_rate_gap(in, [&](Eigen::Index i) { return in.y(i) == 1.0; });
  if (!neg || !pos) return std::nullopt;
  return std::max(*neg, *pos);
}

Metric accuracy(const EvalInput& in) {
  in.validate();
  if (in.z.size() == 0) return std::nullopt;
  double correct = 0.0;
  for (Eigen::Index i = 0; i < in.z.size(); ++i)
    if ((predicted_positive(in, i) ? 1.0 : 0.0) == in.y(i)) correct += 1.0;
  return correct / static_cast<double>(in.z.size());
}

Metric auc(const EvalInput& in) {
  in.validate();
  const Eigen::Index n = in.z.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return in.z(a) < in.z(b); });

  // Mann-Whitney via average ranks; tied pairs get half credit.
  double n_pos = 0.0;
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && in.z(order[j + 1]) == in.z(order[i])) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (in.y(order[k]) == 1.0) {
        n_pos += 1.0;
        rank_sum_pos += avg_rank;
      }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

Metric ppv_gap(const EvalInput& in) {
  in.validate();
  auto keep = [&](Eigen::Index i) { return predicted_positive(in, i); };
  auto hit = [&](Eigen::Index i) { return in.y(i) == 1.0; };
  return abs_gap(group_cell(in, 0, keep, hit).rate(), group_cell(in, 1, keep, hit).rate());
}

Metric prule(const EvalInput& in) {
  in.validate();
  auto all = [](Eigen::Index) { return true; };
  auto hit = [&](Eigen::Index i) { return predicted_positive(in, i); };
  const Metric r0 = group_cell(in, 0, all, hit).rate();
  const Metric r1 = group_cell(in, 1, all, hit).rate();
  if (!r0 || !r1 || *r0 == 0.0 || *r1 == 0.0) return std::nullopt;
  return 100.0 * std::min(*r0 / *r1, *r1 / *r0);
}

Metric bfp_gap(const EvalInput& in) {
  in.validate();
  return abs_gap(mean_score(in, 0, 1.0), mean_score(in, 1, 1.0));
}

Metric bfn_gap(const EvalInput& in) {
  in.validate();
  return abs_gap(mean_score(in, 0, 0.0), mean_score(in, 1, 0.0));
}

Metric abcc(const EvalInput& in) {
  in.validate();
  const std::vector<double> a = scores_of_group(in, 0);
  const std::vector<double> b = scores_of_group(in, 1);
  if (a.empty() || b.empty()) return std::nullopt;

  std::vector<double> cuts = {0.0, 1.0};
  for (double v : a) cuts.push_back(std::clamp(v, 0.0, 1.0));
  for (double v : b) cuts.push_back(std::clamp(v, 0.0, 1.0));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  // Both empirical CDFs are constant on [cuts[k], cuts[k+1]).
  auto cdf = [](const std::vector<double>& v, double t) {
    return static_cast<double>(std::upper_bound(v.begin(), v.end(), t) - v.begin()) / static_cast<double>(v.size());
  };
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
    area += std::abs(cdf(a, cuts[k]) - cdf(b, cuts[k])) * (cuts[k + 1] - cuts[k]);
  return area;
}

IntersectionalMetrics intersectional_metrics(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                                             const Eigen::VectorXi& group, int num_groups) {
  if (z.size() != y.size() || z.size() != group.size())
    throw std::invalid_argument("intersectional_metrics: length mismatch");
  if (z.size() == 0) throw std::invalid_argument("intersectional_metrics: empty input");
  if (num_groups < 2) throw std::invalid_argument("intersectional_metrics: need at least two groups");

  std::vector<Cell> rate(num_groups), tpr(num_groups), acc(num_groups);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const int g = group(i);
    if (g < 0 || g >= num_groups) throw std::invalid_argument("intersectional_metrics: group id out of range");
    const bool pred = z(i) > 0.5;
    rate[g].count += 1.0;
    rate[g].hits += pred ? 1.0 : 0.0;
    if (y(i) == 1.0) {
      tpr[g].count += 1.0;
      tpr[g].hits += pred ? 1.0 : 0.0;
    }
    acc[g].count += 1.0;
    acc[g].hits += ((pred ? 1.0 : 0.0) == y(i)) ? 1.0 : 0.0;
  }
  auto values = [](const std::vector<Cell>& cells) {
    std::vector<double> v;
    for (const auto& c : cells) v.push_back(c.rate().value_or(0.0));
    return v;
  };
  const auto r = values(rate);
  const auto t = values(tpr);
  const auto a = values(acc);
  IntersectionalMetrics m;
  m.dp_gap_inter = *std::max_element(r.begin(), r.end()) - *std::min_element(r.begin(), r.end());
  m.eo_gap_inter = *std::max_element(t.begin(), t.end()) - *std::min_element(t.begin(), t.end());
  m.worst_group_acc = *std::min_element(a.begin(), a.end());
  return m;
}

Eigen::VectorXi joint_group_ids(const Eigen::MatrixXi& s, const std::vector<int>& cardinalities) {
  if (static_cast<std::size_t>(s.cols()) != cardinalities.size())
    throw std::invalid_argument("joint_group_ids: one cardinality per sensitive column required");
  Eigen::VectorXi ids = Eigen::VectorXi::Zero(s.rows());
  int stride = 1;
  for (Eigen::Index k = 0; k < s.cols(); ++k) {
    const int card = cardinalities[static_cast<std::size_t>(k)];
    if (card < 1) throw std::invalid_argument("joint_group_ids: cardinality must be >= 1");
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      if (s(i, k) < 0 || s(i, k) >= card) throw std::invalid_argument("joint_group_ids: value exceeds cardinality");
      ids(i) += s(i, k) * stride;
    }
    stride *= card;
  }
  return ids;
}

MetricsRecord evaluate_all(const EvalInput& in, const std::vector<int>& cardinalities) {
  MetricsRecord m;
  m.accuracy = accuracy(in);
  m.auc = auc(in);
  m.dp = delta_dp(in);
  m.eo = delta_eo(in);
  m.eodd = delta_eodd(in);
  m.ppv_gap = ppv_gap(in);
  m.prule = prule(in);
  m.bfp = bfp_gap(in);
  m.bfn = bfn_gap(in);
  m.abcc = abcc(in);
  if (in.s.cols() >= 2 && in.z.size() > 0) {
    const Eigen::VectorXi ids = joint_group_ids(in.s, cardinalities);
    int groups = 1;
    for (int c : cardinalities) groups *= c;
    m.intersectional = intersectional_metrics(in.z, in.y, ids, std::max(groups, 2));
  }
  return m;
}

}  // namespace csfair
