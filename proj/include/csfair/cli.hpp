#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "csfair/metrics.hpp"
#include "csfair/trainer.hpp"

namespace csfair::cli {

inline constexpr int kResultSchemaVersion = 1;

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Data-source settings echoed next to the training config.
struct DataSpec {
  std::string data_path;
  std::string schema_path;
  double split_frac = 0.2;
  std::uint64_t split_seed = 0;
};

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json metrics_to_json(const MetricsRecord& m);
MetricsRecord metrics_from_json(const nlohmann::json& j);

/// Structured record written for one training run.
struct ResultRecord {
  int schema_version = kResultSchemaVersion;
  std::string command = "train";
  TrainConfig config;
  DataSpec data;
  MetricsRecord metrics;
  std::vector<EpochLog> history;
  double wall_seconds = 0.0;
  std::string status = "ok";
  std::string error;
};

ResultRecord make_record(const RunResult& run, const DataSpec& data, const std::string& command = "train");
nlohmann::json record_to_json(const ResultRecord& r);
ResultRecord record_from_json(const nlohmann::json& j);

/// Plot-ready sweep table: one row per cell plus a header.
std::string sweep_csv(const std::vector<RunResult>& results);

/// Entry point for the csfair executable. Returns the process exit code.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace csfair::cli
