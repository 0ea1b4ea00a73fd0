#include "duedl/dualnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "duedl/dropout.hpp"
#include "duedl/errors.hpp"
#include "duedl/evidence.hpp"
#include "duedl/tnsr.hpp"

namespace duedl {

void NetConfig::validate() const {
  if (in_channels == 0) throw ConfigError("net config: in_channels must be >= 1");
  if (num_classes < 2) throw ConfigError("net config: num_classes must be >= 2");
  if (base_width == 0) throw ConfigError("net config: base_width must be >= 1");
  if (depth == 0 || depth > 8) throw ConfigError("net config: depth must lie in [1, 8]");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("net config: dropout_rate must lie in [0, 1)");
  }
}

std::string to_string(DropoutScope scope) {
  return scope == DropoutScope::bottleneck ? "bottleneck" : "all-skips";
}

DropoutScope parse_dropout_scope(const std::string& s) {
  if (s == "bottleneck") return DropoutScope::bottleneck;
  if (s == "all-skips") return DropoutScope::all_skips;
  throw ConfigError("unknown dropout scope '" + s + "' (expected bottleneck or all-skips)");
}

nlohmann::json to_json(const NetConfig& cfg) {
  return {{"in_channels", cfg.in_channels},   {"num_classes", cfg.num_classes},
          {"base_width", cfg.base_width},     {"depth", cfg.depth},
          {"dropout_rate", cfg.dropout_rate}, {"dropout_scope", to_string(cfg.dropout_scope)},
          {"seed", cfg.seed},                 {"zero_head", cfg.zero_head}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
  try {
    NetConfig cfg;
    cfg.in_channels = j.at("in_channels").get<std::size_t>();
    cfg.num_classes = j.at("num_classes").get<std::size_t>();
    cfg.base_width = j.at("base_width").get<std::size_t>();
    cfg.depth = j.at("depth").get<std::size_t>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.dropout_scope = parse_dropout_scope(j.at("dropout_scope").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.zero_head = j.value("zero_head", false);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("net config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

DualNet::DualNet(NetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(cfg_.seed, 0x6e6574));
  std::size_t in = cfg_.in_channels;
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    const std::size_t w = cfg_.base_width << l;
    const std::string p = "enc" + std::to_string(l);
    Level level;
    level.a = make_conv(p + ".a", in, w, 3, rng);
    level.b = make_conv(p + ".b", w, w, 3, rng);
    encoder_.push_back(std::move(level));
    in = w;
  }
  const std::size_t wb = cfg_.base_width << cfg_.depth;
  bottleneck_.a = make_conv("mid.a", in, wb, 3, rng);
  bottleneck_.b = make_conv("mid.b", wb, wb, 3, rng);
  decoder_.resize(cfg_.depth);
  for (std::size_t l = cfg_.depth; l-- > 0;) {
    const std::size_t w = cfg_.base_width << l;
    const std::string p = "dec" + std::to_string(l);
    decoder_[l].up = make_conv(p + ".up", w * 2, w, 3, rng);
    decoder_[l].a = make_conv(p + ".a", w * 2, w, 3, rng);
    decoder_[l].b = make_conv(p + ".b", w, w, 3, rng);
  }
  head_ = make_conv("head", cfg_.base_width, cfg_.num_classes, 1, rng, cfg_.zero_head);
}

DualNet::Conv DualNet::make_conv(const std::string& name, std::size_t in, std::size_t out,
                                 std::size_t k, Rng& rng, bool zero) {
  const std::size_t fan_in = in * k * k;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> w(out * fan_in);
  for (double& v : w) v = zero ? 0.0 : (2.0 * uniform01(rng) - 1.0) * bound;
  Conv c;
  c.weight = Tensor(Shape{out, in, k, k}, std::move(w), true);
  c.bias = Tensor::zeros(Shape{out}, true);
  c.padding = static_cast<int>(k / 2);
  params_.emplace_back(name + ".weight", c.weight);
  params_.emplace_back(name + ".bias", c.bias);
  return c;
}

Tensor DualNet::apply(const Conv& c, const Tensor& x, bool with_relu) {
  return add_channel_bias(conv2d(x, c.weight, 1, c.padding), c.bias, with_relu);
}

Tensor DualNet::block(const Level& l, const Tensor& x) {
  return apply(l.b, apply(l.a, x, true), true);
}

void DualNet::check_input(const Tensor& image) const {
  if (image.ndim() != 3 || image.dim(0) != cfg_.in_channels) {
    throw ShapeError("dualnet: expected image [" + std::to_string(cfg_.in_channels) + ",H,W], got " +
                     shape_str(image.shape()));
  }
  const std::size_t m = std::size_t{1} << cfg_.depth;
  if (image.dim(1) % m != 0 || image.dim(2) % m != 0 || image.dim(1) == 0 || image.dim(2) == 0) {
    throw ShapeError("dualnet: spatial extents " + shape_str(image.shape()) + " not divisible by " +
                     std::to_string(m));
  }
}

Tensor DualNet::decode(const std::vector<Tensor>& skips, const Tensor& bottleneck) const {
  Tensor x = bottleneck;
  for (std::size_t l = cfg_.depth; l-- > 0;) {
    const UpLevel& d = decoder_[l];
    x = apply(d.up, nearest_upsample2(x), true);
    x = concat_channels(skips[l], x);
    x = apply(d.b, apply(d.a, x, true), true);
  }
  return apply(head_, x, false);
}

DualOutput DualNet::forward(const Tensor& image, bool training, Rng& rng) const {
  check_input(image);
  Tensor x = reshape(image, Shape{1, image.dim(0), image.dim(1), image.dim(2)});
  std::vector<Tensor> skips;
  for (const Level& level : encoder_) {
    x = block(level, x);
    skips.push_back(x);
    x = maxpool2(x);
  }
  const Tensor mid = block(bottleneck_, x);
  const Shape out_shape{cfg_.num_classes, image.dim(1), image.dim(2)};

  DualOutput out;
  out.raw1 = reshape(decode(skips, mid), out_shape);
  if (!training) {
    out.raw2 = out.raw1;
    return out;
  }
  const Tensor mid2 = dropout(mid, cfg_.dropout_rate, rng, true);
  std::vector<Tensor> skips2 = skips;
  if (cfg_.dropout_scope == DropoutScope::all_skips) {
    for (std::size_t l = skips2.size(); l-- > 0;) skips2[l] = dropout(skips[l], cfg_.dropout_rate, rng, true);
  }
  out.raw2 = reshape(decode(skips2, mid2), out_shape);
  return out;
}

Tensor DualNet::forward_main(const Tensor& image) const {
  Rng unused(0);
  return forward(image, false, unused).raw1;
}

Prediction DualNet::inference(const Tensor& image) const {
  Tape::NoGrad no_grad;
  const Tensor raw = forward_main(image);
  const EvidenceMap em = evidence_from_logits(raw);
  Prediction p;
  p.prob = em.prob().detach();
  p.uncertainty = em.uncertainty().detach();
  const Tensor idx = argmax(p.prob, 0);
  p.labels = LabelMap(image.dim(1), image.dim(2));
  for (std::size_t i = 0; i < p.labels.size(); ++i) p.labels.labels[i] = static_cast<std::uint8_t>(idx[i]);
  return p;
}

std::size_t DualNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void DualNet::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void DualNet::copy_parameters_from(const DualNet& other) {
  if (!(other.cfg_ == cfg_)) throw ConfigError("copy_parameters_from: config mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = other.params_[i].second.data();
    auto dst = params_[i].second.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCkptMagic[4] = {'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

std::string describe_mismatch(const NetConfig& want, const NetConfig& got) {
  const auto a = to_json(want);
  const auto b = to_json(got);
  std::ostringstream os;
  os << "checkpoint config mismatch:";
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (b.contains(it.key()) && b[it.key()] != it.value()) {
      os << ' ' << it.key() << " (expected " << it.value().dump() << ", found " << b[it.key()].dump()
         << ')';
    }
  }
  return os.str();
}

struct LoadedCheckpoint {
  NetConfig config;
  std::string rng_state;
  std::vector<std::pair<std::string, tnsr::Blob>> params;
};

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic bytes in " + path.string());
  }
  auto u = [&](std::size_t off, int n) {
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(i)]);
    return v;
  };
  if (u(4, 4) != kCkptVersion) throw FormatError("checkpoint: unsupported version");
  const std::uint64_t index_len = u(8, 8);
  if (16 + index_len > bytes.size()) throw FormatError("checkpoint: truncated index");
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(bytes.substr(16, index_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed index: ") + e.what());
  }
  const std::size_t blob_base = 16 + index_len;
  LoadedCheckpoint out;
  out.config = net_config_from_json(index.at("config"));
  out.rng_state = index.value("rng_state", "");
  try {
    for (const auto& entry : index.at("params")) {
      const auto off = entry.at("offset").get<std::size_t>();
      const auto len = entry.at("bytes").get<std::size_t>();
      if (blob_base + off + len > bytes.size()) {
        throw FormatError("checkpoint: truncated parameter blob " + entry.at("name").get<std::string>());
      }
      std::istringstream blob(bytes.substr(blob_base + off, len));
      out.params.emplace_back(entry.at("name").get<std::string>(), tnsr::read(blob));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed index: ") + e.what());
  }
  return out;
}

}  // namespace

void DualNet::save_checkpoint(const std::filesystem::path& path, const std::string& rng_state) const {
  std::ostringstream blobs;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [name, t] : params_) {
    const auto start = static_cast<std::size_t>(blobs.tellp());
    tnsr::write(blobs, t.shape(), t.data());
    const auto end = static_cast<std::size_t>(blobs.tellp());
    entries.push_back({{"name", name}, {"offset", start}, {"bytes", end - start}});
  }
  const nlohmann::json index = {{"format", "dual-branch-evidential-net"},
                                {"config", to_json(cfg_)},
                                {"rng_state", rng_state},
                                {"params", entries}};
  const std::string text = index.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("checkpoint: cannot write " + path.string());
  os.write(kCkptMagic, 4);
  auto put = [&](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put(kCkptVersion, 4);
  put(text.size(), 8);
  os << text << blobs.str();
  if (!os) throw FormatError("checkpoint: write failed for " + path.string());
}

std::string DualNet::load_checkpoint(const std::filesystem::path& path) {
  LoadedCheckpoint ck = read_checkpoint(path);
  if (!(ck.config == cfg_)) throw ConfigError(describe_mismatch(cfg_, ck.config));
  if (ck.params.size() != params_.size()) throw FormatError("checkpoint: parameter count differs");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& [name, blob] = ck.params[i];
    if (name != params_[i].first || blob.shape != params_[i].second.shape() ||
        blob.dtype != tnsr::DType::f64) {
      throw FormatError("checkpoint: parameter " + params_[i].first + " missing or mis-shaped");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].second.mutable_data();
    std::copy(ck.params[i].second.f64.begin(), ck.params[i].second.f64.end(), dst.begin());
  }
  return ck.rng_state;
}

DualNet DualNet::from_checkpoint(const std::filesystem::path& path) {
  DualNet net(read_checkpoint(path).config);
  net.load_checkpoint(path);
  return net;
}

}  // namespace duedl
