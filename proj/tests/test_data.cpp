#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <doctest.h>

#include "csfair/data.hpp"

using namespace csfair;

namespace {

Schema toy_schema() {
  Schema s;
  s.label_column = "income";
  s.positive_label_value = ">50K";
  s.sensitive_columns = {{"sex", {{"Female", 0}, {"Male", 1}}}};
  s.feature_columns = {{"age", FeatureKind::Numeric}, {"job", FeatureKind::Categorical}};
  return s;
}

RawTable parse(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  return load_csv(in, schema);
}

}  // namespace

TEST_CASE("csv line parsing") {
  CHECK(parse_csv_line("a,b,c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(parse_csv_line("\"x, y\",2,\"say \"\"hi\"\"\"") == std::vector<std::string>{"x, y", "2", "say \"hi\""});
  CHECK(parse_csv_line("1,,3") == std::vector<std::string>{"1", "", "3"});
  CHECK(parse_csv_line("1,2\r") == std::vector<std::string>{"1", "2"});
}

TEST_CASE("loading drops incomplete rows") {
  const auto schema = toy_schema();
  const auto t = parse("age,job,sex,income\n30,clerk,Male,>50K\n41,,Female,<=50K\n25,chef,Female,<=50K\n", schema);
  CHECK(t.size() == 2);
  CHECK(t.dropped_count() == 1);
  CHECK(t.dropped_missing == 1);
  CHECK(t.line_numbers == std::vector<std::size_t>{2, 4});

  const auto q = parse("age,job,sex,income\n30,?,Male,>50K\n", schema);
  CHECK(q.size() == 0);
  CHECK(q.dropped_missing == 1);

  const auto header_only = parse("age,job,sex,income\n", schema);
  CHECK(header_only.size() == 0);
  CHECK(header_only.dropped_count() == 0);

  const auto unknown = parse("age,job,sex,income\n30,clerk,Other,>50K\n31,clerk,Male,>50K\n", schema);
  CHECK(unknown.size() == 1);
  CHECK(unknown.dropped_unknown_sensitive == 1);

  // extra columns are ignored, order follows the header
  const auto extra = parse("income,zip,sex,job,age\n>50K,123,Male,clerk,30\n", schema);
  REQUIRE(extra.size() == 1);
  CHECK(extra.rows[0] == std::vector<std::string>{"30", "clerk", ">50K", "Male"});
}

TEST_CASE("loading errors") {
  const auto schema = toy_schema();
  CHECK_THROWS_AS(parse("age,job,income\n30,clerk,>50K\n", schema), SchemaError);
  try {
    parse("age,job,sex,income\n30,clerk,Male,>50K\nold,clerk,Male,>50K\n", schema);
    FAIL("expected CsvError");
  } catch (const CsvError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", schema), std::runtime_error);
}

TEST_CASE("schema validation and round trip") {
  auto s = toy_schema();
  CHECK_NOTHROW(s.validate());
  CHECK(s.cardinalities() == std::vector<int>{2});
  auto overlap = s;
  overlap.feature_columns.push_back({"sex", FeatureKind::Categorical});
  CHECK_THROWS_AS(overlap.validate(), SchemaError);
  auto no_label = s;
  no_label.label_column.clear();
  CHECK_THROWS_AS(no_label.validate(), SchemaError);

  const auto path = std::filesystem::temp_directory_path() / "csfair_test_schema.json";
  save_schema_file(s, path.string());
  const auto back = load_schema_file(path.string());
  CHECK(back.label_column == s.label_column);
  CHECK(back.positive_label_value == s.positive_label_value);
  CHECK(back.feature_columns.size() == 2);
  CHECK(back.feature_columns[1].kind == FeatureKind::Categorical);
  CHECK(back.sensitive_columns[0].values.at("Male") == 1);
  std::filesystem::remove(path);

  std::ofstream(path) << "{\"label_column\": 3}";
  CHECK_THROWS_AS(load_schema_file(path.string()), SchemaError);
  std::filesystem::remove(path);
}

TEST_CASE("preprocessing") {
  Schema s;
  s.label_column = "y";
  s.sensitive_columns = {{"g", {{"0", 0}, {"1", 1}}}};
  s.feature_columns = {{"v", FeatureKind::Numeric}, {"c", FeatureKind::Categorical}};
  const auto raw = parse("v,c,g,y\n1,a,0,1\n2,b,1,0\n3,a,1,1\n", s);
  const auto d = preprocess(raw, s);
  REQUIRE(d.x.cols() == 3);
  CHECK(d.x(0, 0) == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(d.x(1, 0) == doctest::Approx(0.0));
  CHECK(d.x(2, 0) == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK((d.x.rightCols(2).rowwise().sum().array() == 1.0).all());
  CHECK(d.x(0, 1) == 1.0);  // "a" appears first
  CHECK(d.feature_names == std::vector<std::string>{"v", "c=a", "c=b"});
  CHECK(d.y == Eigen::Vector3d(1, 0, 1));
  CHECK(d.s.col(0) == Eigen::Vector3i(0, 1, 1));
  CHECK(d.sensitive_cardinalities == std::vector<int>{2});
  CHECK(std::abs(d.x.col(0).mean()) <= 1e-12);

  const auto again = preprocess(raw, s, d.stats);
  CHECK(again.x == d.x);

  const auto test_raw = parse("v,c,g,y\n5,z,0,0\n", s);
  const auto t = preprocess(test_raw, s, d.stats);
  CHECK(t.unseen_categories == 1);
  CHECK(t.x(0, 1) == 0.0);
  CHECK(t.x(0, 2) == 0.0);

  auto with_s = s;
  with_s.include_sensitive = true;
  CHECK(preprocess(raw, with_s).x.cols() == 4);

  // a constant column stays finite
  const auto flat = preprocess(parse("v,c,g,y\n2,a,0,1\n2,a,1,0\n", s), s);
  CHECK(flat.x.allFinite());
}

TEST_CASE("stratified split") {
  Eigen::VectorXd y(10);
  y << 0, 0, 0, 0, 0, 1, 1, 1, 1, 1;
  const auto a = split_indices(y, 0.2, 3);
  CHECK(a.train.size() == 8);
  CHECK(a.test.size() == 2);
  const auto b = split_indices(y, 0.2, 3);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 10);

  Eigen::VectorXd y2(20);
  for (int i = 0; i < 20; ++i) y2(i) = i < 6 ? 1.0 : 0.0;
  const auto c = split_indices(y2, 0.25, 1);
  double tr = 0, te = 0;
  for (auto i : c.train) tr += y2(static_cast<Eigen::Index>(i));
  for (auto i : c.test) te += y2(static_cast<Eigen::Index>(i));
  CHECK(std::abs(tr / c.train.size() - te / c.test.size()) <= 1.0 / 20 + 1e-12);

  Eigen::VectorXd lonely(5);
  lonely << 0, 0, 0, 0, 1;
  CHECK_THROWS_AS(split_indices(lonely, 0.2, 0), std::invalid_argument);
  CHECK_THROWS_AS(split_indices(y, 0.0, 0), std::invalid_argument);
}

TEST_CASE("train statistics do not leak from the test split") {
  const auto d = gen_synthetic(50, 0.5, 3, 4);
  std::ostringstream csv;
  write_dataset_csv(d, csv);
  const auto schema = synthetic_schema(3);
  std::istringstream in(csv.str());
  const auto raw = load_csv(in, schema);
  const auto [train, test] = prepare_train_test(raw, schema, 0.2, 7);
  CHECK(train.size() == 160);
  CHECK(test.size() == 40);
  for (Eigen::Index j = 0; j < train.x.cols(); ++j) {
    const double m = train.x.col(j).mean();
    const double sd = std::sqrt((train.x.col(j).array() - m).square().mean());
    CHECK(std::abs(m) <= 1e-6);
    CHECK(std::abs(sd - 1.0) <= 1e-6);
  }
  CHECK(test.stats.mean == train.stats.mean);
}

TEST_CASE("mini-batches") {
  const auto b = batches(10, 4, 1, 0);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 4);
  CHECK(b[1].size() == 4);
  CHECK(b[2].size() == 2);
  std::set<std::size_t> seen;
  for (const auto& batch : b) seen.insert(batch.begin(), batch.end());
  CHECK(seen.size() == 10);
  CHECK(batches(10, 4, 1, 0) == b);
  CHECK(batches(10, 4, 1, 1) != b);
  CHECK(batches(10, 4, 2, 0) != b);
  CHECK_THROWS_AS(batches(10, 0, 1, 0), std::invalid_argument);
}

TEST_CASE("synthetic generator") {
  const auto a = gen_synthetic(25, 0.8, 4, 9);
  CHECK(a.size() == 100);
  for (int g = 0; g < 2; ++g)
    for (int y = 0; y < 2; ++y) {
      int n = 0;
      for (Eigen::Index i = 0; i < a.size(); ++i) n += (a.s(i, 0) == g && a.y(i) == y) ? 1 : 0;
      CHECK(n == 25);
    }
  const auto b = gen_synthetic(25, 0.8, 4, 9);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.s == b.s);
  CHECK(gen_synthetic(25, 0.8, 4, 10).x != a.x);
  CHECK_THROWS_AS(gen_synthetic(0, 0.5, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(gen_synthetic(5, 0.5, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(gen_synthetic(5, 1.5, 2, 0), std::invalid_argument);

  // bias shifts only the group direction: at bias 0 group means coincide
  const auto unbiased = gen_synthetic(4000, 0.0, 2, 1);
  const auto biased = gen_synthetic(4000, 1.0, 2, 1);
  auto group_gap = [](const Dataset& d, int col) {
    double m[2] = {0, 0}, n[2] = {0, 0};
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      m[d.s(i, 0)] += d.x(i, col);
      n[d.s(i, 0)] += 1;
    }
    return m[1] / n[1] - m[0] / n[0];
  };
  CHECK(std::abs(group_gap(unbiased, 0)) < 0.1);
  CHECK(group_gap(biased, 0) == doctest::Approx(3.0).epsilon(0.05));
  CHECK(group_gap(biased, 1) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("synthetic csv and dataset cache round trips") {
  const auto d = gen_synthetic(20, 0.8, 3, 2);
  std::ostringstream csv;
  write_dataset_csv(d, csv);
  std::istringstream in(csv.str());
  const auto raw = load_csv(in, synthetic_schema(3));
  CHECK(raw.size() == 80);
  CHECK(raw.dropped_count() == 0);
  const auto y = raw_labels(raw, synthetic_schema(3));
  CHECK(y == d.y);
  // shortest round-trip formatting reproduces every value exactly
  for (std::size_t i = 0; i < raw.size(); ++i)
    CHECK(std::stod(raw.rows[i][0]) == d.x(static_cast<Eigen::Index>(i), 0));

  std::stringstream bin;
  save_dataset(d, bin);
  const auto back = load_dataset(bin);
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);
  CHECK(back.s == d.s);
  CHECK(back.feature_names == d.feature_names);
  std::stringstream junk("nope");
  CHECK_THROWS(load_dataset(junk));
}
