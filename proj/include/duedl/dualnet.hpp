#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "duedl/label_map.hpp"
#include "duedl/rng.hpp"
#include "duedl/tensor.hpp"

namespace duedl {

enum class DropoutScope { bottleneck, all_skips };

struct NetConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 4;
  std::size_t base_width = 8;
  std::size_t depth = 3;
  double dropout_rate = 0.5;
  DropoutScope dropout_scope = DropoutScope::all_skips;
  std::uint64_t seed = 0;
  // Zero the 1x1 evidence head at construction (constant-output start).
  bool zero_head = false;

  // Throws ConfigError on out-of-range fields.
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

nlohmann::json to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j);
std::string to_string(DropoutScope scope);
DropoutScope parse_dropout_scope(const std::string& s);

struct DualOutput {
  Tensor raw1;  // [K, H, W], clean encoder features
  Tensor raw2;  // [K, H, W], dropout-perturbed encoder features
};

struct Prediction {
  Tensor prob;         // [K, H, W]
  Tensor uncertainty;  // [H, W]
  LabelMap labels;
};

// UNet-style encoder with one decoder that is evaluated twice: once on the
// encoder features (branch 1) and once on dropout-perturbed features
// (branch 2). Both passes use the same parameters.
//
// Blocks are conv3x3-relu-conv3x3-relu; downsampling is maxpool2 and
// upsampling is nearest-neighbour followed by conv3x3-relu. The head is a
// 1x1 conv producing raw class scores; evidence is softplus(raw).
class DualNet {
 public:
  explicit DualNet(NetConfig cfg);
  DualNet(const DualNet&) = delete;
  DualNet& operator=(const DualNet&) = delete;
  DualNet(DualNet&&) = default;
  DualNet& operator=(DualNet&&) = default;

  const NetConfig& config() const { return cfg_; }

  // image is [C, H, W] with H and W divisible by 2^depth. In eval mode
  // (training == false) dropout is the identity and raw2 == raw1.
  DualOutput forward(const Tensor& image, bool training, Rng& rng) const;
  // Branch-1 raw scores only.
  Tensor forward_main(const Tensor& image) const;
  // Branch-1 probability, uncertainty and argmax labels, without a tape.
  Prediction inference(const Tensor& image) const;

  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();
  // Copies parameter values (not gradients) from a net with the same config.
  void copy_parameters_from(const DualNet& other);

  // Single-file archive: "CKPT" | u32 LE version | u64 LE index length |
  // JSON index {config, rng_state, params: [{name, offset, bytes}]} |
  // concatenated TNSR blobs (offsets relative to the first blob).
  void save_checkpoint(const std::filesystem::path& path, const std::string& rng_state = "") const;
  // Loads into this net. Throws ConfigError when the stored config differs
  // and FormatError on a malformed file; the net is untouched on failure.
  // Returns the stored RNG state string.
  std::string load_checkpoint(const std::filesystem::path& path);
  static DualNet from_checkpoint(const std::filesystem::path& path);

 private:
  struct Conv {
    Tensor weight;
    Tensor bias;
    int padding = 1;
  };
  struct Level {
    Conv a;
    Conv b;
  };
  struct UpLevel {
    Conv up;
    Conv a;
    Conv b;
  };

  Conv make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng,
                 bool zero = false);
  static Tensor apply(const Conv& c, const Tensor& x, bool with_relu);
  static Tensor block(const Level& l, const Tensor& x);
  void check_input(const Tensor& image) const;
  Tensor decode(const std::vector<Tensor>& skips, const Tensor& bottleneck) const;

  NetConfig cfg_;
  std::vector<Level> encoder_;
  Level bottleneck_;
  std::vector<UpLevel> decoder_;  // index l mirrors encoder level l
  Conv head_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace duedl
