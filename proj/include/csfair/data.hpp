#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace csfair {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& msg, std::size_t line) : std::runtime_error(msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class FeatureKind { Numeric, Categorical };

struct FeatureColumn {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
};

struct SensitiveColumn {
  std::string name;
  std::map<std::string, int> values;  // raw value -> group id
  int cardinality() const;
};

struct Schema {
  std::string label_column;
  std::string positive_label_value = "1";
  std::vector<SensitiveColumn> sensitive_columns;
  std::vector<FeatureColumn> feature_columns;
  // Append the encoded sensitive columns to the feature matrix.
  bool include_sensitive = false;

  void validate() const;
  std::vector<int> cardinalities() const;
};

Schema load_schema_file(const std::string& path);
void save_schema_file(const Schema& schema, const std::string& path);

/// Rows restricted to the schema's columns, in the order
/// features..., label, sensitive...
struct RawTable {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::size_t dropped_missing = 0;
  std::size_t dropped_unknown_sensitive = 0;

  std::size_t size() const { return rows.size(); }
  std::size_t dropped_count() const { return dropped_missing + dropped_unknown_sensitive; }
  RawTable subset(const std::vector<std::size_t>& indices) const;
};

/// Splits one CSV record (RFC 4180 quoting).
std::vector<std::string> parse_csv_line(const std::string& line);

/// Reads a header-first CSV. Empty fields and "?" count as missing; such
/// rows are dropped and counted, as are rows whose sensitive value is not in
/// the schema's value map. Throws SchemaError for a missing column and
/// CsvError (with the line number) for an unparseable numeric field.
RawTable load_csv(const std::string& path, const Schema& schema);
RawTable load_csv(std::istream& in, const Schema& schema);

/// Label of every raw row mapped to {0, 1}.
Eigen::VectorXd raw_labels(const RawTable& raw, const Schema& schema);

/// Frozen preprocessing state: z-score statistics and category orders.
struct FitStats {
  std::vector<double> mean;                          // per feature column (numeric only)
  std::vector<double> stddev;                        // population std, floored at 1e-8
  std::vector<std::vector<std::string>> categories;  // per feature column (categorical only)
};

struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::MatrixXi s;
  std::vector<std::string> feature_names;
  std::vector<int> sensitive_cardinalities;
  FitStats stats;
  std::size_t unseen_categories = 0;

  Eigen::Index size() const { return x.rows(); }
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

/// One-hot encodes categoricals, z-scores numerics and maps labels and
/// sensitive values. Statistics are fitted on `raw` unless fit_stats is
/// supplied.
Dataset preprocess(const RawTable& raw, const Schema& schema, const std::optional<FitStats>& fit_stats = std::nullopt);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Label-stratified random split; each class needs at least two samples.
SplitIndices split_indices(const Eigen::VectorXd& labels, double test_fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Stratified split of the raw rows followed by preprocessing fitted on the
/// training rows only.
std::pair<Dataset, Dataset> prepare_train_test(const RawTable& raw, const Schema& schema, double test_fraction,
                                               std::uint64_t seed);

/// Shuffled mini-batches for one epoch; the last batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

/// Two-group synthetic data with a controllable group bias. Each
/// (group, label) cell holds exactly n_per_group_label rows:
///   x0 ~ N((2y - 1) + 1.5 * bias * (2s - 1), 1)   label direction, shifted by group
///   x1 ~ N(1.0 * bias * (2s - 1), 1)              noisy group proxy
///   xj ~ N(0.25 * (2y - 1), 1), j >= 2            weak group-free label signal
/// Features are returned unscaled; rows are ordered by (s, y).
Dataset gen_synthetic(std::size_t n_per_group_label, double bias, int dim, std::uint64_t seed);

/// CSV + schema describing a synthetic dataset (columns x0.., group, label).
void write_dataset_csv(const Dataset& data, std::ostream& out);
Schema synthetic_schema(int dim);

/// Versioned binary cache; round-trips X, y and S bit-exactly.
void save_dataset(const Dataset& data, std::ostream& out);
Dataset load_dataset(std::istream& in);

}  // namespace csfair
