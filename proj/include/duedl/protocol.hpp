#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "duedl/metrics.hpp"
#include "duedl/train.hpp"

namespace duedl {

enum class ProtocolKind { clean, robustness, ood, ablation };
std::string to_string(ProtocolKind k);
ProtocolKind parse_protocol(const std::string& s);

struct ProtocolOptions {
  ProtocolKind kind = ProtocolKind::clean;
  std::filesystem::path train_dir;
  // clean/ablation: optional replacement test set. robustness: optional
  // pre-corrupted copies (else corrupted in memory). ood: required.
  std::vector<std::filesystem::path> test_dirs;
  std::filesystem::path out_dir;
  TrainConfig config;
  MetricConfig metrics;
  std::string corruption = "noise";
  std::vector<double> sigmas = {0.05, 0.1, 0.15};
  // Skip training and evaluate this checkpoint (not allowed for ablation).
  std::optional<std::filesystem::path> checkpoint;
};

struct ProtocolRow {
  std::string name;
  EvalReport report;
};

struct ProtocolResult {
  ProtocolKind kind = ProtocolKind::clean;
  std::vector<ProtocolRow> rows;
  std::vector<RunRecord> runs;
};

nlohmann::json to_json(const ProtocolResult& r);

// The ablation triple: Model1 = ce + mean, Model2 = edl + mean,
// Model3 = edl + dempster, all other settings from `base`.
std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base);

// Runs the protocol and, when out_dir is non-empty, writes summary.json,
// table.txt, table.csv, one <row>.report.json per row and the run records
// and checkpoints of every trained model.
ProtocolResult run_protocol(const ProtocolOptions& opts);

// Aligned text table (or CSV) with one row per report: name, per-class
// Dice, mean Dice, mean ASSD, ECE, UEO.
std::string render_table(const std::vector<ProtocolRow>& rows, bool csv);
// Accepts a summary.json, a single report.json or a list of report paths;
// rows are named after the file stem for single reports.
std::vector<ProtocolRow> load_rows(const std::vector<std::filesystem::path>& paths);

}  // namespace duedl
