#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "duedl/dualnet.hpp"
#include "duedl/losses.hpp"
#include "duedl/metrics.hpp"
#include "duedl/synthdata.hpp"

namespace duedl {

enum class Fusion { dempster, mean };
enum class AnnealUnit { epoch, iteration };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double beta = 10.0;
  double lambda_u = 0.3;
  // Joint L2 bound on each batch gradient; 0 disables clipping.
  double grad_clip = 5.0;
  std::uint64_t seed = 0;
  Fusion fusion = Fusion::dempster;
  SupervisedLoss loss = SupervisedLoss::edl;
  EclScope ecl_scope = EclScope::all;
  AnnealUnit anneal_unit = AnnealUnit::epoch;
  bool augment = true;
  // Keep the parameters of the epoch with the best validation mean Dice.
  bool select_best = true;
  // Network shape; its seed and class count are overwritten by train().
  NetConfig net;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults; unknown keys throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

std::string to_string(Fusion f);
std::string to_string(SupervisedLoss l);
std::string to_string(EclScope s);
std::string to_string(AnnealUnit a);
Fusion parse_fusion(const std::string& s);
SupervisedLoss parse_loss(const std::string& s);
EclScope parse_ecl_scope(const std::string& s);
AnnealUnit parse_anneal_unit(const std::string& s);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_total = 0.0;  // mean over samples
  double loss_supervised = 0.0;
  double loss_consistency = 0.0;
  double lambda_t = 0.0;  // value at the epoch's first step
  // Mean over training pixels; only meaningful for fusion=dempster.
  double fused_uncertainty = 0.0;
  double min_branch_uncertainty = 0.0;
  // Largest batch gradient norm before clipping.
  double max_grad_norm = 0.0;
  double val_dice = 0.0;
  double val_ece = 0.0;
  double seconds = 0.0;
};

struct RunRecord {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_dice = 0.0;
  double seconds = 0.0;
  std::string checkpoint;  // empty when no checkpoint was written
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

struct TrainResult {
  RunRecord record;
  DualNet net;
};

using EpochCallback = void (*)(const EpochRecord&);

// Trains a fresh network. Deterministic in (config, dataset). A non-finite
// loss aborts with NumericError naming the epoch and batch. When `checkpoint`
// is set the selected parameters are saved there.
TrainResult train(const TrainConfig& config, const Dataset& data,
                  const std::optional<std::filesystem::path>& checkpoint = std::nullopt,
                  EpochCallback on_epoch = nullptr);

// Loss components of one sample, as used inside train(). Records onto the
// current tape when one is active.
struct StepLoss {
  JointLoss loss;
  Tensor fused_uncertainty;  // [H,W]; undefined for fusion=mean
  Tensor min_branch_uncertainty;
};
StepLoss sample_loss(const DualNet& net, const ScribbleSample& sample, const TrainConfig& config,
                     double anneal_step, Rng& dropout_rng);

std::vector<EvalInput> predict_split(const DualNet& net, const Dataset& data, const std::string& split);
EvalReport evaluate_model(const DualNet& net, const Dataset& data, const std::string& split,
                          const MetricConfig& cfg = {},
                          std::vector<SampleMetrics>* per_sample = nullptr);

}  // namespace duedl
