#include "csfair/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace csfair {

namespace {

using json = nlohmann::json;

constexpr char kDatasetMagic[8] = {'C', 'S', 'F', 'D', 'A', 'T', 'A', '\0'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr double kStdFloor = 1e-8;

bool is_missing(const std::string& v) { return v.empty() || v == "?"; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("dataset cache: truncated file");
  return v;
}

}  // namespace

int SensitiveColumn::cardinality() const {
  int m = 0;
  for (const auto& [raw, id] : values) m = std::max(m, id + 1);
  return m;
}

void Schema::validate() const {
  if (label_column.empty()) throw SchemaError("schema: label_column is empty");
  if (sensitive_columns.empty()) throw SchemaError("schema: at least one sensitive column is required");
  std::set<std::string> seen = {label_column};
  auto claim = [&](const std::string& name) {
    if (name.empty()) throw SchemaError("schema: empty column name");
    if (!seen.insert(name).second) throw SchemaError("schema: column '" + name + "' is used twice");
  };
  for (const auto& s : sensitive_columns) {
    claim(s.name);
    if (s.values.empty()) throw SchemaError("schema: sensitive column '" + s.name + "' has no value map");
    for (const auto& [raw, id] : s.values)
      if (id < 0) throw SchemaError("schema: negative group id in '" + s.name + "'");
  }
  for (const auto& f : feature_columns) claim(f.name);
}

std::vector<int> Schema::cardinalities() const {
  std::vector<int> out;
  for (const auto& s : sensitive_columns) out.push_back(s.cardinality());
  return out;
}

Schema load_schema_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("schema: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("schema: invalid JSON in '" + path + "': " + e.what());
  }
  try {
    Schema s;
    s.label_column = j.at("label_column").get<std::string>();
    s.positive_label_value = j.value("positive_label_value", std::string("1"));
    s.include_sensitive = j.value("include_sensitive", false);
    for (const auto& sc : j.at("sensitive_columns")) {
      SensitiveColumn col;
      col.name = sc.at("name").get<std::string>();
      for (const auto& [k, v] : sc.at("values").items()) col.values[k] = v.get<int>();
      s.sensitive_columns.push_back(std::move(col));
    }
    for (const auto& fc : j.at("features")) {
      FeatureColumn col;
      col.name = fc.at("name").get<std::string>();
      const std::string kind = fc.value("kind", std::string("numeric"));
      if (kind == "numeric") col.kind = FeatureKind::Numeric;
      else if (kind == "categorical") col.kind = FeatureKind::Categorical;
      else throw SchemaError("schema: unknown feature kind '" + kind + "' for '" + col.name + "'");
      s.feature_columns.push_back(std::move(col));
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("schema: ") + e.what());
  }
}

void save_schema_file(const Schema& schema, const std::string& path) {
  json j;
  j["label_column"] = schema.label_column;
  j["positive_label_value"] = schema.positive_label_value;
  j["include_sensitive"] = schema.include_sensitive;
  j["sensitive_columns"] = json::array();
  for (const auto& s : schema.sensitive_columns) j["sensitive_columns"].push_back({{"name", s.name}, {"values", s.values}});
  j["features"] = json::array();
  for (const auto& f : schema.feature_columns)
    j["features"].push_back({{"name", f.name}, {"kind", f.kind == FeatureKind::Numeric ? "numeric" : "categorical"}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write schema file '" + path + "'");
  out << j.dump(2) << "\n";
}

RawTable RawTable::subset(const std::vector<std::size_t>& indices) const {
  RawTable out;
  for (std::size_t i : indices) {
    out.rows.push_back(rows.at(i));
    out.line_numbers.push_back(line_numbers.at(i));
  }
  return out;
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

RawTable load_csv(std::istream& in, const Schema& schema) {
  schema.validate();
  RawTable table;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("csv: missing header row");
  if (line.size() >= 3 && std::memcmp(line.data(), "\xEF\xBB\xBF", 3) == 0) line.erase(0, 3);
  const std::vector<std::string> header = parse_csv_line(line);

  auto find_col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> idx;
  for (const auto& f : schema.feature_columns) idx.push_back(find_col(f.name));
  idx.push_back(find_col(schema.label_column));
  for (const auto& s : schema.sensitive_columns) idx.push_back(find_col(s.name));
  const std::size_t n_feat = schema.feature_columns.size();

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = parse_csv_line(line);
    std::vector<std::string> row;
    bool missing = false;
    for (std::size_t c : idx) {
      if (c >= fields.size() || is_missing(fields[c])) {
        missing = true;
        break;
      }
      row.push_back(fields[c]);
    }
    if (missing) {
      ++table.dropped_missing;
      continue;
    }
    for (std::size_t f = 0; f < n_feat; ++f) {
      double v = 0.0;
      if (schema.feature_columns[f].kind == FeatureKind::Numeric && !parse_double(row[f], v))
        throw CsvError("csv: line " + std::to_string(line_no) + ": cannot parse '" + row[f] + "' as a number in column '" +
                           schema.feature_columns[f].name + "'",
                       line_no);
    }
    bool known = true;
    for (std::size_t k = 0; k < schema.sensitive_columns.size(); ++k)
      if (!schema.sensitive_columns[k].values.contains(row[n_feat + 1 + k])) known = false;
    if (!known) {
      ++table.dropped_unknown_sensitive;
      continue;
    }
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(line_no);
  }
  return table;
}

RawTable load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");
  return load_csv(in, schema);
}

Eigen::VectorXd raw_labels(const RawTable& raw, const Schema& schema) {
  const std::size_t col = schema.feature_columns.size();
  Eigen::VectorXd y(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) y(static_cast<Eigen::Index>(i)) = raw.rows[i][col] == schema.positive_label_value ? 1.0 : 0.0;
  return y;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  const auto n = static_cast<Eigen::Index>(indices.size());
  out.x.resize(n, x.cols());
  out.y.resize(n);
  out.s.resize(n, s.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(r)]);
    if (i >= size()) throw std::out_of_range("Dataset::subset: index out of range");
    out.x.row(r) = x.row(i);
    out.y(r) = y(i);
    out.s.row(r) = s.row(i);
  }
  out.feature_names = feature_names;
  out.sensitive_cardinalities = sensitive_cardinalities;
  out.stats = stats;
  return out;
}

Dataset preprocess(const RawTable& raw, const Schema& schema, const std::optional<FitStats>& fit_stats) {
  schema.validate();
  const std::size_t n_feat = schema.feature_columns.size();
  const std::size_t n = raw.size();
  for (const auto& row : raw.rows)
    if (row.size() != n_feat + 1 + schema.sensitive_columns.size())
      throw SchemaError("preprocess: raw table does not conform to schema");

  auto numeric = [&](std::size_t i, std::size_t f) {
    double v = 0.0;
    if (!parse_double(raw.rows[i][f], v))
      throw CsvError("preprocess: line " + std::to_string(raw.line_numbers.at(i)) + ": unparseable numeric value",
                     raw.line_numbers.at(i));
    return v;
  };

  FitStats stats;
  if (fit_stats) {
    stats = *fit_stats;
    if (stats.mean.size() != n_feat || stats.stddev.size() != n_feat || stats.categories.size() != n_feat)
      throw SchemaError("preprocess: fit statistics do not match the schema");
  } else {
    stats.mean.assign(n_feat, 0.0);
    stats.stddev.assign(n_feat, 1.0);
    stats.categories.assign(n_feat, {});
    for (std::size_t f = 0; f < n_feat; ++f) {
      if (schema.feature_columns[f].kind == FeatureKind::Numeric) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += numeric(i, f);
        const double mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) sq += (numeric(i, f) - mean) * (numeric(i, f) - mean);
        const double sd = n > 0 ? std::sqrt(sq / static_cast<double>(n)) : 1.0;
        stats.mean[f] = mean;
        stats.stddev[f] = std::max(sd, kStdFloor);
      } else {
        auto& cats = stats.categories[f];
        for (std::size_t i = 0; i < n; ++i)
          if (std::find(cats.begin(), cats.end(), raw.rows[i][f]) == cats.end()) cats.push_back(raw.rows[i][f]);
      }
    }
  }

  Dataset d;
  d.stats = stats;
  for (std::size_t f = 0; f < n_feat; ++f) {
    const auto& col = schema.feature_columns[f];
    if (col.kind == FeatureKind::Numeric) d.feature_names.push_back(col.name);
    else
      for (const auto& c : stats.categories[f]) d.feature_names.push_back(col.name + "=" + c);
  }
  if (schema.include_sensitive)
    for (const auto& s : schema.sensitive_columns) d.feature_names.push_back(s.name);

  const auto rows = static_cast<Eigen::Index>(n);
  const auto k = static_cast<Eigen::Index>(schema.sensitive_columns.size());
  d.x = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(d.feature_names.size()));
  d.y.resize(rows);
  d.s.resize(rows, k);
  d.sensitive_cardinalities = schema.cardinalities();

  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Eigen::Index c = 0;
    for (std::size_t f = 0; f < n_feat; ++f) {
      if (schema.feature_columns[f].kind == FeatureKind::Numeric) {
        d.x(r, c++) = (numeric(i, f) - stats.mean[f]) / stats.stddev[f];
      } else {
        const auto& cats = stats.categories[f];
        const auto it = std::find(cats.begin(), cats.end(), raw.rows[i][f]);
        if (it == cats.end()) ++d.unseen_categories;
        else d.x(r, c + (it - cats.begin())) = 1.0;
        c += static_cast<Eigen::Index>(cats.size());
      }
    }
    d.y(r) = raw.rows[i][n_feat] == schema.positive_label_value ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto& col = schema.sensitive_columns[static_cast<std::size_t>(j)];
      const auto it = col.values.find(raw.rows[i][n_feat + 1 + static_cast<std::size_t>(j)]);
      if (it == col.values.end()) throw SchemaError("preprocess: unknown value in sensitive column '" + col.name + "'");
      d.s(r, j) = it->second;
      if (schema.include_sensitive) d.x(r, c++) = static_cast<double>(it->second);
    }
  }
  return d;
}

SplitIndices split_indices(const Eigen::VectorXd& labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("split: test_fraction must lie in (0, 1)");
  if (labels.size() < 2) throw std::invalid_argument("split: need at least two samples");
  std::vector<std::size_t> by_class[2];
  for (Eigen::Index i = 0; i < labels.size(); ++i) by_class[labels(i) == 1.0 ? 1 : 0].push_back(static_cast<std::size_t>(i));

  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    if (members.size() < 2) throw std::invalid_argument("split: a label class has fewer than two samples");
    std::shuffle(members.begin(), members.end(), rng);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    out.test.insert(out.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  const SplitIndices idx = split_indices(data.y, test_fraction, seed);
  return {data.subset(idx.train), data.subset(idx.test)};
}

std::pair<Dataset, Dataset> prepare_train_test(const RawTable& raw, const Schema& schema, double test_fraction,
                                               std::uint64_t seed) {
  const SplitIndices idx = split_indices(raw_labels(raw, schema), test_fraction, seed);
  Dataset train = preprocess(raw.subset(idx.train), schema);
  Dataset test = preprocess(raw.subset(idx.test), schema, train.stats);
  return {std::move(train), std::move(test)};
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1) throw std::invalid_argument("batches: batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size)
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  return out;
}

Dataset gen_synthetic(std::size_t n_per_group_label, double bias, int dim, std::uint64_t seed) {
  if (n_per_group_label < 1) throw std::invalid_argument("gen_synthetic: n_per_group_label must be >= 1");
  if (dim < 2) throw std::invalid_argument("gen_synthetic: dim must be >= 2");
  if (!(bias >= 0.0 && bias <= 1.0)) throw std::invalid_argument("gen_synthetic: bias must lie in [0, 1]");

  constexpr double kLabelShift = 1.0;
  constexpr double kGroupShift = 1.5;
  constexpr double kProxyShift = 1.0;
  constexpr double kWeakSignal = 0.25;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(4 * n_per_group_label);
  Dataset d;
  d.x.resize(n, dim);
  d.y.resize(n);
  d.s.resize(n, 1);
  Eigen::Index r = 0;
  for (int g = 0; g < 2; ++g)
    for (int label = 0; label < 2; ++label)
      for (std::size_t i = 0; i < n_per_group_label; ++i, ++r) {
        const double ys = 2.0 * label - 1.0;
        const double gs = 2.0 * g - 1.0;
        d.x(r, 0) = kLabelShift * ys + kGroupShift * bias * gs + noise(rng);
        d.x(r, 1) = kProxyShift * bias * gs + noise(rng);
        for (int j = 2; j < dim; ++j) d.x(r, j) = kWeakSignal * ys + noise(rng);
        d.y(r) = label;
        d.s(r, 0) = g;
      }
  for (int j = 0; j < dim; ++j) d.feature_names.push_back("x" + std::to_string(j));
  d.sensitive_cardinalities = {2};
  return d;
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
  for (const auto& name : data.feature_names) out << name << ',';
  out << "group,label\n";
  char buf[64];
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
      auto res = std::to_chars(buf, buf + sizeof(buf), data.x(i, j));
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << data.s(i, 0) << ',' << static_cast<int>(data.y(i)) << '\n';
  }
}

Schema synthetic_schema(int dim) {
  Schema s;
  s.label_column = "label";
  s.positive_label_value = "1";
  s.sensitive_columns.push_back({"group", {{"0", 0}, {"1", 1}}});
  for (int j = 0; j < dim; ++j) s.feature_columns.push_back({"x" + std::to_string(j), FeatureKind::Numeric});
  return s;
}

void save_dataset(const Dataset& data, std::ostream& out) {
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  write_raw(out, kDatasetVersion);
  write_raw(out, static_cast<std::uint64_t>(data.x.rows()));
  write_raw(out, static_cast<std::uint64_t>(data.x.cols()));
  write_raw(out, static_cast<std::uint64_t>(data.s.cols()));
  for (Eigen::Index i = 0; i < data.x.rows(); ++i)
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) write_raw(out, data.x(i, j));
  for (Eigen::Index i = 0; i < data.y.size(); ++i) write_raw(out, data.y(i));
  for (Eigen::Index i = 0; i < data.s.rows(); ++i)
    for (Eigen::Index j = 0; j < data.s.cols(); ++j) write_raw(out, static_cast<std::int32_t>(data.s(i, j)));
  write_raw(out, static_cast<std::uint64_t>(data.feature_names.size()));
  for (const auto& name : data.feature_names) {
    write_raw(out, static_cast<std::uint64_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  write_raw(out, static_cast<std::uint64_t>(data.sensitive_cardinalities.size()));
  for (int c : data.sensitive_cardinalities) write_raw(out, static_cast<std::int32_t>(c));
  if (!out) throw std::runtime_error("dataset cache: write failed");
}

Dataset load_dataset(std::istream& in) {
  char magic[sizeof(kDatasetMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) throw std::runtime_error("dataset cache: bad magic");
  if (read_raw<std::uint32_t>(in) != kDatasetVersion) throw std::runtime_error("dataset cache: unsupported version");
  const auto n = static_cast<Eigen::Index>(read_raw<std::uint64_t>(in));
  const auto d = static_cast<Eigen::Index>(read_raw<std::uint64_t>(in));
  const auto k = static_cast<Eigen::Index>(read_raw<std::uint64_t>(in));
  Dataset data;
  data.x.resize(n, d);
  data.y.resize(n);
  data.s.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) data.x(i, j) = read_raw<double>(in);
  for (Eigen::Index i = 0; i < n; ++i) data.y(i) = read_raw<double>(in);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) data.s(i, j) = read_raw<std::int32_t>(in);
  const auto names = read_raw<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < names; ++i) {
    std::string name(read_raw<std::uint64_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    data.feature_names.push_back(std::move(name));
  }
  const auto cards = read_raw<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < cards; ++i) data.sensitive_cardinalities.push_back(read_raw<std::int32_t>(in));
  if (!in) throw std::runtime_error("dataset cache: truncated file");
  return data;
}

}  // namespace csfair
