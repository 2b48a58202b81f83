#include "csfair/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "csfair/data.hpp"
#include "csfair/gaussian_oracle.hpp"

namespace csfair::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Configuration problems map to exit code 2, everything else to 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json metric_json(const Metric& m) { return m ? json(*m) : json(nullptr); }
Metric metric_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_metric(const Metric& m) { return m ? format_number(*m) : "NA"; }

std::string bandwidth_string(const KernelSpec& k) {
  return k.mode == BandwidthMode::MedianHeuristic ? "median" : format_number(k.bandwidth);
}

void apply_bandwidth(KernelSpec& k, const std::string& text) {
  if (text == "median") {
    k.mode = BandwidthMode::MedianHeuristic;
    return;
  }
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !(v > 0.0))
    throw UsageError("--bandwidth: expected a positive number or 'median', got '" + text + "'");
  k.mode = BandwidthMode::Fixed;
  k.bandwidth = v;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    T v{};
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size())
      throw UsageError(std::string(flag) + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": list is empty");
  return out;
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

std::string summary_line(const MetricsRecord& m) {
  std::ostringstream os;
  os << "acc=" << format_metric(m.accuracy) << " auc=" << format_metric(m.auc) << " dp=" << format_metric(m.dp)
     << " eo=" << format_metric(m.eo) << " eodd=" << format_metric(m.eodd) << " abcc=" << format_metric(m.abcc);
  return os.str();
}

// Flags shared by train, sweep and eval. Values are only applied when given
// on the command line, so they override a --config file.
struct CommonFlags {
  std::string config_path;
  std::string data;
  std::string schema;
  std::string reg, mode, target, kernel, bandwidth, multi_attr, hidden;
  double alpha = 0, beta = 0, lr = 0, gamma = 0, split_frac = 0.2, threshold = 0.5;
  int epochs = 0, batch_size = 0, step_size = 0;
  std::uint64_t seed = 0, split_seed = 0;

  CLI::Option* o_alpha = nullptr;
  CLI::Option* o_beta = nullptr;
  CLI::Option* o_lr = nullptr;
  CLI::Option* o_gamma = nullptr;
  CLI::Option* o_epochs = nullptr;
  CLI::Option* o_batch = nullptr;
  CLI::Option* o_step = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_threshold = nullptr;

  void add_data(CLI::App* app) {
    app->add_option("--data", data, "CSV file with a header row")->required();
    app->add_option("--schema", schema, "Schema JSON describing the CSV columns")->required();
    app->add_option("--split-frac", split_frac, "Test fraction of the stratified split");
    app->add_option("--split-seed", split_seed, "Seed of the train/test split");
    o_threshold = app->add_option("--threshold", threshold, "Decision threshold for binarized metrics");
  }

  void add_training(CLI::App* app, bool with_seed) {
    app->add_option("--config", config_path, "JSON config file; flags override its values");
    app->add_option("--reg", reg, "none|cs|mmd|hsic|dp|eo|eodd|pr|kl|dcov");
    app->add_option("--mode", mode, "dp|eo|eodd");
    app->add_option("--target", target, "prediction|hidden");
    o_alpha = app->add_option("--alpha", alpha, "Fairness weight");
    o_beta = app->add_option("--beta", beta, "L2 weight");
    o_lr = app->add_option("--lr", lr, "Initial learning rate");
    o_epochs = app->add_option("--epochs", epochs, "Training epochs");
    o_batch = app->add_option("--batch-size", batch_size, "Mini-batch size");
    o_step = app->add_option("--step-size", step_size, "Epochs between learning-rate decays");
    o_gamma = app->add_option("--gamma", gamma, "Learning-rate decay factor");
    app->add_option("--kernel", kernel, "rbf|laplacian|poly2");
    app->add_option("--bandwidth", bandwidth, "Kernel bandwidth: a number or 'median'");
    app->add_option("--multi-attr", multi_attr, "single|sum_per_attribute|joint_groups");
    app->add_option("--hidden", hidden, "Hidden layer sizes, e.g. 512,256,64");
    if (with_seed) o_seed = app->add_option("--seed", seed, "Run seed (falls back to $CSFAIR_SEED)");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw UsageError("--config: cannot open '" + config_path + "'");
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw UsageError(std::string("--config: invalid JSON: ") + e.what());
      }
      c = config_from_json(j, c);
    } else if (const char* env = std::getenv("CSFAIR_SEED")) {
      c.seed = parse_list<std::uint64_t>(env, "CSFAIR_SEED").front();
    }
    try {
      if (!reg.empty()) c.regularizer = parse_regularizer(reg);
      if (!mode.empty()) c.mode = parse_mode(mode);
      if (!target.empty()) c.target = parse_target(target);
      if (!kernel.empty()) c.kernel.family = parse_kernel_family(kernel);
      if (!multi_attr.empty()) c.multi_attr = parse_multi_attr(multi_attr);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (!bandwidth.empty()) apply_bandwidth(c.kernel, bandwidth);
    if (!hidden.empty()) {
      c.hidden_sizes.clear();
      if (hidden != "none") c.hidden_sizes = parse_list<int>(hidden, "--hidden");
    }
    if (o_alpha && o_alpha->count()) c.alpha = alpha;
    if (o_beta && o_beta->count()) c.beta = beta;
    if (o_lr && o_lr->count()) c.lr = lr;
    if (o_gamma && o_gamma->count()) c.gamma = gamma;
    if (o_epochs && o_epochs->count()) c.epochs = epochs;
    if (o_batch && o_batch->count()) c.batch_size = batch_size;
    if (o_step && o_step->count()) c.step_size = step_size;
    if (o_seed && o_seed->count()) c.seed = seed;
    if (o_threshold && o_threshold->count()) c.threshold = threshold;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("invalid configuration: ") + e.what());
    }
    return c;
  }

  DataSpec data_spec() const { return {data, schema, split_frac, split_seed}; }
};

std::pair<Dataset, Dataset> load_split(const DataSpec& spec) {
  Schema schema;
  try {
    schema = load_schema_file(spec.schema_path);
  } catch (const SchemaError& e) {
    throw UsageError(e.what());
  }
  if (!fs::exists(spec.data_path)) throw UsageError("--data: file '" + spec.data_path + "' does not exist");
  if (!(spec.split_frac > 0.0 && spec.split_frac < 1.0)) throw UsageError("--split-frac: must lie in (0, 1)");
  RawTable raw;
  try {
    raw = load_csv(spec.data_path, schema);
  } catch (const SchemaError& e) {
    throw UsageError(e.what());
  }
  return prepare_train_test(raw, schema, spec.split_frac, spec.split_seed);
}

int cmd_train(const CommonFlags& flags, const std::string& out_path, const std::string& model_out) {
  const TrainConfig config = flags.resolve();
  const DataSpec spec = flags.data_spec();
  const auto [train_set, test_set] = load_split(spec);
  RunResult run;
  try {
    run = train(config, train_set, test_set);
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitFailure;
  }
  write_atomic(out_path, record_to_json(make_record(run, spec)).dump(2) + "\n");
  if (!model_out.empty()) save_checkpoint_file(run.model, model_out);
  std::cout << to_string(config.regularizer) << " alpha=" << format_number(config.alpha) << " beta="
            << format_number(config.beta) << " seed=" << config.seed << " " << summary_line(run.metrics) << "\n";
  return kExitOk;
}

int cmd_sweep(const CommonFlags& flags, const std::string& alphas_text, const std::string& betas_text,
              const std::string& seeds_text, const std::string& out_dir, int jobs) {
  const TrainConfig base = flags.resolve();
  const auto alphas = parse_list<double>(alphas_text, "--alphas");
  const auto betas = parse_list<double>(betas_text, "--betas");
  const auto seeds = parse_list<std::uint64_t>(seeds_text, "--seeds");
  if (jobs < 1) throw UsageError("--jobs: must be >= 1");
  const DataSpec spec = flags.data_spec();
  const auto [train_set, test_set] = load_split(spec);

  const std::vector<RunResult> results = sweep(base, alphas, betas, seeds, train_set, test_set, jobs);
  const fs::path dir(out_dir);
  fs::create_directories(dir / "runs");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.status == "ok") ++ok;
    else std::cerr << "cell " << i << " failed: " << r.error << "\n";
    const std::string name = "cell_" + std::to_string(i) + ".json";
    write_atomic(dir / "runs" / name, record_to_json(make_record(r, spec, "sweep")).dump(2) + "\n");
  }
  write_atomic(dir / "sweep.csv", sweep_csv(results));
  std::cout << "sweep: " << ok << "/" << results.size() << " cells ok, table at " << (dir / "sweep.csv").string() << "\n";
  return ok > 0 ? kExitOk : kExitFailure;
}

int cmd_eval(const CommonFlags& flags, const std::string& model_path, const std::string& out_path) {
  if (!fs::exists(model_path)) throw UsageError("--model: checkpoint '" + model_path + "' does not exist");
  MlpParams model;
  try {
    model = load_checkpoint_file(model_path);
  } catch (const std::exception& e) {
    throw UsageError(std::string("--model: ") + e.what());
  }
  if (!(flags.threshold > 0.0 && flags.threshold < 1.0)) throw UsageError("--threshold: must lie in (0, 1)");
  const DataSpec spec = flags.data_spec();
  const auto [train_set, test_set] = load_split(spec);
  if (model.input_dim() != test_set.x.cols())
    throw UsageError("checkpoint expects " + std::to_string(model.input_dim()) + " features but the data has " +
                     std::to_string(test_set.x.cols()));
  const MetricsRecord m = evaluate_model(model, test_set, flags.threshold);
  json j;
  j["schema_version"] = kResultSchemaVersion;
  j["command"] = "eval";
  j["threshold"] = flags.threshold;
  j["metrics"] = metrics_to_json(m);
  if (!out_path.empty()) write_atomic(out_path, j.dump(2) + "\n");
  std::cout << summary_line(m) << "\n";
  return kExitOk;
}

int cmd_verify(std::size_t trials, const std::string& dims_text, std::uint64_t seed, std::size_t quad_instances) {
  if (trials < 1) throw UsageError("--trials: must be >= 1");
  const auto dims = parse_list<int>(dims_text, "--dims");
  for (int d : dims)
    if (d < 1 || d > 16) throw UsageError("--dims: dimensions must lie in [1, 16]");

  const InequalityReport ineq = verify_cs_kl_inequality(trials, dims, seed);
  std::cout << "cs<=kl: trials=" << ineq.trials << " max_violation=" << format_number(ineq.max_violation)
            << " (slack " << format_number(kInequalitySlack) << ") " << (ineq.ok ? "PASS" : "FAIL") << "\n";
  if (!ineq.ok) std::cout << "  offending instance: " << ineq.worst_instance << "\n";

  bool quad_ok = true;
  if (quad_instances > 0) {
    const QuadratureReport quad = verify_cs_estimator_quadrature(quad_instances, seed);
    quad_ok = quad.ok;
    std::cout << "estimator vs quadrature: instances=" << quad.instances << " max_abs_diff="
              << format_number(quad.max_abs_diff) << " (tolerance " << format_number(kQuadratureTolerance) << ") "
              << (quad.ok ? "PASS" : "FAIL") << "\n";
    if (!quad.ok) std::cout << "  offending instance: " << quad.worst_instance << "\n";
  }
  return ineq.ok && quad_ok ? kExitOk : kExitFailure;
}

int cmd_gen_synth(std::size_t n, double bias, int dim, std::uint64_t seed, const std::string& out,
                  std::string schema_out) {
  if (n < 1) throw UsageError("--n: must be >= 1");
  if (dim < 2) throw UsageError("--dim: must be >= 2");
  if (!(bias >= 0.0 && bias <= 1.0)) throw UsageError("--bias: must lie in [0, 1]");
  const Dataset d = gen_synthetic(n, bias, dim, seed);
  std::ostringstream csv;
  write_dataset_csv(d, csv);
  write_file(out, csv.str());
  if (schema_out.empty()) schema_out = out + ".schema.json";
  save_schema_file(synthetic_schema(dim), schema_out);
  json meta = {{"generator", "gen_synthetic"}, {"n_per_group_label", n}, {"bias", bias}, {"dim", dim}, {"seed", seed}};
  write_file(out + ".meta.json", meta.dump(2) + "\n");
  std::cout << "wrote " << d.size() << " rows to " << out << "\n";
  return kExitOk;
}

}  // namespace

json config_to_json(const TrainConfig& c) {
  return {
      {"regularizer", to_string(c.regularizer)},
      {"mode", to_string(c.mode)},
      {"target", to_string(c.effective_target())},
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"lr", c.lr},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"step_size", c.step_size},
      {"gamma", c.gamma},
      {"lr_floor", c.lr_floor},
      {"kernel", to_string(c.kernel.family)},
      {"bandwidth", bandwidth_string(c.kernel)},
      {"seed", c.seed},
      {"multi_attr", to_string(c.multi_attr)},
      {"hidden_sizes", c.hidden_sizes},
      {"threshold", c.threshold},
  };
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  try {
    if (j.contains("regularizer")) c.regularizer = parse_regularizer(j.at("regularizer").get<std::string>());
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("target")) c.target = parse_target(j.at("target").get<std::string>());
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("step_size")) c.step_size = j.at("step_size").get<int>();
    if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
    if (j.contains("lr_floor")) c.lr_floor = j.at("lr_floor").get<double>();
    if (j.contains("kernel")) c.kernel.family = parse_kernel_family(j.at("kernel").get<std::string>());
    if (j.contains("bandwidth")) {
      const auto& b = j.at("bandwidth");
      apply_bandwidth(c.kernel, b.is_string() ? b.get<std::string>() : format_number(b.get<double>()));
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("multi_attr")) c.multi_attr = parse_multi_attr(j.at("multi_attr").get<std::string>());
    if (j.contains("hidden_sizes")) c.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
    if (j.contains("threshold")) c.threshold = j.at("threshold").get<double>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

json metrics_to_json(const MetricsRecord& m) {
  json j = {
      {"accuracy", metric_json(m.accuracy)}, {"auc", metric_json(m.auc)},     {"dp", metric_json(m.dp)},
      {"eo", metric_json(m.eo)},             {"eodd", metric_json(m.eodd)},   {"ppv_gap", metric_json(m.ppv_gap)},
      {"prule", metric_json(m.prule)},       {"bfp", metric_json(m.bfp)},     {"bfn", metric_json(m.bfn)},
      {"abcc", metric_json(m.abcc)},
  };
  if (m.intersectional)
    j["intersectional"] = {{"dp_gap_inter", m.intersectional->dp_gap_inter},
                           {"eo_gap_inter", m.intersectional->eo_gap_inter},
                           {"worst_group_acc", m.intersectional->worst_group_acc}};
  else
    j["intersectional"] = nullptr;
  return j;
}

MetricsRecord metrics_from_json(const json& j) {
  MetricsRecord m;
  m.accuracy = metric_from(j, "accuracy");
  m.auc = metric_from(j, "auc");
  m.dp = metric_from(j, "dp");
  m.eo = metric_from(j, "eo");
  m.eodd = metric_from(j, "eodd");
  m.ppv_gap = metric_from(j, "ppv_gap");
  m.prule = metric_from(j, "prule");
  m.bfp = metric_from(j, "bfp");
  m.bfn = metric_from(j, "bfn");
  m.abcc = metric_from(j, "abcc");
  if (j.contains("intersectional") && !j.at("intersectional").is_null()) {
    const auto& i = j.at("intersectional");
    m.intersectional = IntersectionalMetrics{i.at("dp_gap_inter").get<double>(), i.at("eo_gap_inter").get<double>(),
                                             i.at("worst_group_acc").get<double>()};
  }
  return m;
}

ResultRecord make_record(const RunResult& run, const DataSpec& data, const std::string& command) {
  ResultRecord r;
  r.command = command;
  r.config = run.config;
  r.data = data;
  r.metrics = run.metrics;
  r.history = run.history;
  r.wall_seconds = run.wall_seconds;
  r.status = run.status;
  r.error = run.error;
  return r;
}

json record_to_json(const ResultRecord& r) {
  json history = json::array();
  for (const auto& h : r.history)
    history.push_back({{"epoch", h.epoch}, {"lr", h.lr}, {"bce", h.bce}, {"fairness", h.fairness}, {"l2", h.l2},
                       {"total", h.total}});
  json j = {
      {"schema_version", r.schema_version},
      {"command", r.command},
      {"status", r.status},
      {"seed", r.config.seed},
      {"config", config_to_json(r.config)},
      {"data",
       {{"path", r.data.data_path},
        {"schema", r.data.schema_path},
        {"split_frac", r.data.split_frac},
        {"split_seed", r.data.split_seed}}},
      {"metrics", metrics_to_json(r.metrics)},
      {"history", history},
      {"timing", {{"wall_seconds", r.wall_seconds}}},
  };
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

ResultRecord record_from_json(const json& j) {
  ResultRecord r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kResultSchemaVersion)
    throw std::runtime_error("result record: unsupported schema_version " + std::to_string(r.schema_version));
  r.command = j.at("command").get<std::string>();
  r.status = j.at("status").get<std::string>();
  r.config = config_from_json(j.at("config"));
  const auto& d = j.at("data");
  r.data = {d.at("path").get<std::string>(), d.at("schema").get<std::string>(), d.at("split_frac").get<double>(),
            d.at("split_seed").get<std::uint64_t>()};
  r.metrics = metrics_from_json(j.at("metrics"));
  for (const auto& h : j.at("history"))
    r.history.push_back({h.at("epoch").get<int>(), h.at("lr").get<double>(), h.at("bce").get<double>(),
                         h.at("fairness").get<double>(), h.at("l2").get<double>(), h.at("total").get<double>()});
  r.wall_seconds = j.at("timing").at("wall_seconds").get<double>();
  r.error = j.value("error", std::string());
  return r;
}

std::string sweep_csv(const std::vector<RunResult>& results) {
  std::ostringstream os;
  os << "alpha,beta,seed,regularizer,acc,auc,dp,eo,eodd,ppv_gap,prule,bfp,bfn,abcc,status\n";
  for (const auto& r : results) {
    const auto& m = r.metrics;
    os << format_number(r.config.alpha) << ',' << format_number(r.config.beta) << ',' << r.config.seed << ','
       << to_string(r.config.regularizer) << ',' << format_metric(m.accuracy) << ',' << format_metric(m.auc) << ','
       << format_metric(m.dp) << ',' << format_metric(m.eo) << ',' << format_metric(m.eodd) << ','
       << format_metric(m.ppv_gap) << ',' << format_metric(m.prule) << ',' << format_metric(m.bfp) << ','
       << format_metric(m.bfn) << ',' << format_metric(m.abcc) << ',' << r.status << '\n';
  }
  return os.str();
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Fairness-regularized training with kernel divergence penalties"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  std::string train_out, model_out;
  auto* train_cmd = app.add_subcommand("train", "Train one model and write a JSON result record");
  train_flags.add_training(train_cmd, true);
  train_flags.add_data(train_cmd);
  train_cmd->add_option("--out", train_out, "Result JSON path")->required();
  train_cmd->add_option("--model-out", model_out, "Optional checkpoint path");

  CommonFlags sweep_flags;
  std::string alphas, betas = "1", seeds = "0", out_dir;
  int jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over alpha x beta x seed; writes sweep.csv and per-cell JSON");
  sweep_flags.add_training(sweep_cmd, false);
  sweep_flags.add_data(sweep_cmd);
  sweep_cmd->add_option("--alphas", alphas, "Comma-separated fairness weights")->required();
  sweep_cmd->add_option("--betas", betas, "Comma-separated L2 weights");
  sweep_cmd->add_option("--seeds", seeds, "Comma-separated run seeds");
  sweep_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
  sweep_cmd->add_option("--jobs", jobs, "Concurrent cells");

  CommonFlags eval_flags;
  std::string model_path, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Recompute the metric suite for a checkpoint");
  eval_flags.add_data(eval_cmd);
  eval_cmd->add_option("--model", model_path, "Checkpoint written by train --model-out")->required();
  eval_cmd->add_option("--out", eval_out, "Optional JSON output path");

  std::size_t trials = 1000, quad = 20;
  std::string dims = "1,2,5";
  std::uint64_t verify_seed = 0;
  auto* verify_cmd = app.add_subcommand("verify", "Check CS <= KL on random Gaussians and the estimator against quadrature");
  verify_cmd->add_option("--trials", trials, "Random Gaussian pairs");
  verify_cmd->add_option("--dims", dims, "Comma-separated dimensions");
  auto* verify_seed_opt = verify_cmd->add_option("--seed", verify_seed, "Seed");
  verify_cmd->add_option("--quad-instances", quad, "Quadrature agreement instances (0 disables)");

  std::size_t n = 500;
  double bias = 0.8;
  int dim = 6;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_schema;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Write a synthetic biased dataset and its schema");
  gen_cmd->add_option("--n", n, "Rows per (group, label) cell");
  gen_cmd->add_option("--bias", bias, "Group bias in [0, 1]");
  gen_cmd->add_option("--dim", dim, "Feature dimension (>= 2)");
  auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "Seed");
  gen_cmd->add_option("--out", gen_out, "CSV output path")->required();
  gen_cmd->add_option("--schema-out", gen_schema, "Schema output path (default <out>.schema.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto env_seed = [](CLI::Option* opt, std::uint64_t& value) {
    if (opt->count() == 0)
      if (const char* env = std::getenv("CSFAIR_SEED")) value = parse_list<std::uint64_t>(env, "CSFAIR_SEED").front();
  };

  try {
    if (*train_cmd) return cmd_train(train_flags, train_out, model_out);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, alphas, betas, seeds, out_dir, jobs);
    if (*eval_cmd) return cmd_eval(eval_flags, model_path, eval_out);
    if (*verify_cmd) {
      env_seed(verify_seed_opt, verify_seed);
      return cmd_verify(trials, dims, verify_seed, quad);
    }
    if (*gen_cmd) {
      env_seed(gen_seed_opt, gen_seed);
      return cmd_gen_synth(n, bias, dim, gen_seed, gen_out, gen_schema);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("csfair");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace csfair::cli
