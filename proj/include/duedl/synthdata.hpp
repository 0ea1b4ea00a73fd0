#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "duedl/label_map.hpp"
#include "duedl/rng.hpp"
#include "duedl/tensor.hpp"

namespace duedl {

struct ScribbleSample {
  std::string id;
  Tensor image;  // [1, H, W], intensities in [0, 1]
  ScribbleMask scribble;
  LabelMap mask;
};

// Class ids used by the generator: 0 background, 1 left-ventricle blob,
// 2 myocardium ring around it, 3 right-ventricle blob beside the ring.
struct GeneratorParams {
  std::uint64_t seed = 0;
  std::size_t n_train = 200;
  std::size_t n_val = 40;
  std::size_t n_test = 40;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = 4;  // 2..4
  bool ood = false;
  double min_coverage = 0.01;  // scribble pixels / all pixels
  double max_coverage = 0.05;

  void validate() const;
};

struct Corruption {
  std::string kind;  // "noise" or "blur"
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

// Paths are relative to the dataset directory; checksums are FNV-1a 64 of
// the file bytes, as 16 hex digits.
struct SampleFiles {
  std::string image;
  std::string scribble;
  std::string mask;
  std::string image_checksum;
  std::string scribble_checksum;
  std::string mask_checksum;
};

struct DatasetManifest {
  int version = 1;
  std::size_t num_classes = 4;
  std::size_t height = 0;
  std::size_t width = 0;
  GeneratorParams generator;
  std::optional<Corruption> corruption;
  std::map<std::string, std::vector<std::string>> splits;  // train / val / test
  std::map<std::string, SampleFiles> files;
};

struct Dataset {
  DatasetManifest manifest;
  std::map<std::string, ScribbleSample> samples;

  // Samples of one split in manifest order. Throws DataError for an unknown
  // or empty split.
  std::vector<const ScribbleSample*> split(const std::string& name) const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

// Deterministic in params (sample i uses an RNG seeded from (seed, i)).
Dataset generate(const GeneratorParams& params);
ScribbleSample generate_sample(const GeneratorParams& params, std::size_t index);

// Per-class mean intensities of the generator's appearance model.
std::vector<double> class_means(bool ood);

// Rotation by quarter turns (counter-clockwise), then optional horizontal flip.
struct Augmentation {
  int quarter_turns = 0;
  bool flip = false;
};

// Quarter turns of 1 or 3 are drawn only for square samples.
Augmentation draw_augmentation(Rng& rng, bool square);
ScribbleSample augment(const ScribbleSample& sample, const Augmentation& aug);
ScribbleSample augment(const ScribbleSample& sample, Rng& rng);

// noise: add N(0, sigma^2) then clamp to [0, 1]. blur: separable Gaussian of
// std sigma*W pixels, radius ceil(3 sigma W), mirror padding. Labels untouched.
ScribbleSample corrupt(const ScribbleSample& sample, const std::string& kind, double sigma,
                       std::uint64_t seed);
Dataset corrupt(const Dataset& data, const std::string& kind, double sigma, std::uint64_t seed);

void write_dataset(const Dataset& data, const std::filesystem::path& dir);
// Validates the manifest and every sample (files present, checksums, shapes,
// label ranges, scribble/mask agreement). Throws DataError or FormatError.
Dataset read_dataset(const std::filesystem::path& dir);

// Throws DataError when a sample violates its invariants.
void validate_sample(const ScribbleSample& s, std::size_t num_classes);

}  // namespace duedl
