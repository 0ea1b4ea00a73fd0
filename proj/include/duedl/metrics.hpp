#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "duedl/label_map.hpp"
#include "duedl/tensor.hpp"

namespace duedl {

struct MetricConfig {
  std::size_t ece_bins = 10;
  double ueo_step = 0.01;  // thresholds step, step*2, ..., < 1
  // ASSD when exactly one of the two maps lacks the class; <= 0 selects the
  // image diagonal.
  double assd_empty_cap = 0.0;
};

// Per foreground class c = 1..K-1: 2|P∩T| / (|P| + |T|), 1 when both empty.
std::vector<double> dice_score(const LabelMap& pred, const LabelMap& truth, std::size_t num_classes);

// Boundary pixels of `cls`: pixels of the class with at least one 8-neighbour
// that is not of the class (outside the image counts as not of the class).
std::vector<std::size_t> boundary_pixels(const LabelMap& map, std::uint8_t cls);

// Average symmetric surface distance in pixels, using an exact Euclidean
// distance transform. Both maps lacking the class yields 0.
double assd(const LabelMap& pred, const LabelMap& truth, std::uint8_t cls,
            const MetricConfig& cfg = {});

// Squared Euclidean distance from every pixel to the nearest set pixel
// (two-pass lower-envelope transform). Unreachable pixels get +inf.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& features,
                                               std::size_t height, std::size_t width);

// Expected calibration error over equal-width bins on (0, 1].
double ece(const Tensor& prob, const LabelMap& truth, std::size_t bins = 10);
// Bin of a confidence value: the b with b/bins < conf <= (b+1)/bins.
std::size_t confidence_bin(double conf, std::size_t bins);

std::vector<double> ueo_thresholds(double step = 0.01);
// Max over thresholds of Dice((u > tau), (pred != truth)); 1 for two empty sets.
double ueo(const Tensor& uncertainty, const LabelMap& pred, const LabelMap& truth,
           const std::vector<double>& thresholds = ueo_thresholds());

struct SampleMetrics {
  std::string id;
  std::vector<double> dice;  // foreground classes
  std::vector<double> assd;
  double ece = 0.0;
  double ueo = 0.0;
};

struct EvalReport {
  std::vector<double> dice;  // per foreground class, averaged over samples
  double mean_dice = 0.0;
  std::vector<double> assd;
  double mean_assd = 0.0;
  double ece = 0.0;
  double ueo = 0.0;
  std::size_t samples = 0;
  MetricConfig config;
  std::string aggregation = "per-sample mean, then mean over foreground classes";
};

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

struct EvalInput {
  std::string id;
  Tensor prob;         // [K, H, W]
  Tensor uncertainty;  // [H, W]
  LabelMap pred;
  LabelMap truth;
};

SampleMetrics evaluate_sample(const EvalInput& in, std::size_t num_classes, const MetricConfig& cfg);
// Folds per-sample metrics in order. Throws DataError when empty.
EvalReport aggregate(const std::vector<SampleMetrics>& samples, const MetricConfig& cfg);
EvalReport evaluate(const std::vector<EvalInput>& inputs, std::size_t num_classes,
                    const MetricConfig& cfg, std::vector<SampleMetrics>* per_sample = nullptr);

}  // namespace duedl
