#include "duedl/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "duedl/errors.hpp"
#include "duedl/tnsr.hpp"

namespace duedl {

namespace fs = std::filesystem;

void GeneratorParams::validate() const {
  if (num_classes < 2 || num_classes > 4) throw ConfigError("generator: num_classes must lie in [2, 4]");
  if (height < 16 || width < 16) throw ConfigError("generator: images must be at least 16x16");
  if (height > 4096 || width > 4096) throw ConfigError("generator: images larger than 4096 px");
  if (n_train + n_val + n_test == 0) throw ConfigError("generator: no samples requested");
  if (!(min_coverage > 0.0 && min_coverage < max_coverage && max_coverage < 0.5)) {
    throw ConfigError("generator: coverage band must satisfy 0 < min < max < 0.5");
  }
}

std::vector<double> class_means(bool ood) {
  std::vector<double> m = {0.12, 0.78, 0.40, 0.60};
  if (!ood) return m;
  // Lower contrast around mid-grey plus a brightness shift; every class
  // moves by at least 0.15.
  for (double& v : m) v = 0.5 + 0.85 * (v - 0.5) + 0.2;
  return m;
}

std::vector<const ScribbleSample*> Dataset::split(const std::string& name) const {
  auto it = manifest.splits.find(name);
  if (it == manifest.splits.end() || it->second.empty()) {
    throw DataError("dataset: split '" + name + "' is missing or empty");
  }
  std::vector<const ScribbleSample*> out;
  for (const auto& id : it->second) {
    auto s = samples.find(id);
    if (s == samples.end()) throw DataError("dataset: split '" + name + "' references unknown id " + id);
    out.push_back(&s->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double gaussian(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

struct Ellipse {
  double cy, cx, a, b, theta;

  double level(double y, double x, double grow = 0.0) const {
    const double dy = y - cy;
    const double dx = x - cx;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double u = (dx * c + dy * s) / (a + grow);
    const double v = (-dx * s + dy * c) / (b + grow);
    return u * u + v * v;
  }
};

constexpr std::array<int, 8> kDy = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr std::array<int, 8> kDx = {-1, 0, 1, -1, 1, -1, 0, 1};

// Pixels of `cls` whose 4-neighbours are all in-bounds and of `cls`; falls
// back to the whole region when the interior is empty.
std::vector<std::uint8_t> interior(const LabelMap& mask, std::uint8_t cls) {
  const std::size_t h = mask.height;
  const std::size_t w = mask.width;
  std::vector<std::uint8_t> in(h * w, 0);
  bool any = false;
  for (std::size_t y = 1; y + 1 < h; ++y) {
    for (std::size_t x = 1; x + 1 < w; ++x) {
      if (mask.at(y, x) == cls && mask.at(y - 1, x) == cls && mask.at(y + 1, x) == cls &&
          mask.at(y, x - 1) == cls && mask.at(y, x + 1) == cls) {
        in[y * w + x] = 1;
        any = true;
      }
    }
  }
  if (!any) {
    for (std::size_t i = 0; i < mask.size(); ++i) in[i] = mask.labels[i] == cls ? 1 : 0;
  }
  return in;
}

// Direction-persistent random walk restricted to `allowed`; returns the
// visited pixels in first-visit order.
std::vector<std::size_t> scribble_walk(const std::vector<std::uint8_t>& allowed, std::size_t h,
                                       std::size_t w, std::size_t target, Rng& rng) {
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    if (allowed[i]) cells.push_back(i);
  }
  if (cells.empty()) return {};
  std::size_t pos = cells[rng() % cells.size()];
  int dir = static_cast<int>(rng() % 8);
  std::vector<std::uint8_t> seen(allowed.size(), 0);
  std::vector<std::size_t> path{pos};
  seen[pos] = 1;
  const std::size_t max_steps = 40 * target + 40;
  for (std::size_t step = 0; step < max_steps && path.size() < target; ++step) {
    const long y = static_cast<long>(pos / w);
    const long x = static_cast<long>(pos % w);
    std::array<double, 8> weight{};
    double total = 0.0;
    for (int d = 0; d < 8; ++d) {
      const long ny = y + kDy[static_cast<std::size_t>(d)];
      const long nx = x + kDx[static_cast<std::size_t>(d)];
      if (ny < 0 || nx < 0 || ny >= static_cast<long>(h) || nx >= static_cast<long>(w)) continue;
      if (!allowed[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)]) continue;
      const double cosang =
          (kDy[static_cast<std::size_t>(d)] * kDy[static_cast<std::size_t>(dir)] +
           kDx[static_cast<std::size_t>(d)] * kDx[static_cast<std::size_t>(dir)]) /
          (std::hypot(kDy[static_cast<std::size_t>(d)], kDx[static_cast<std::size_t>(d)]) *
           std::hypot(kDy[static_cast<std::size_t>(dir)], kDx[static_cast<std::size_t>(dir)]));
      const double wgt = std::pow(std::max(0.0, 1.0 + cosang), 3) + 0.02;
      weight[static_cast<std::size_t>(d)] = wgt;
      total += wgt;
    }
    if (total == 0.0) break;
    double r = uniform01(rng) * total;
    int pick = -1;
    for (int d = 0; d < 8; ++d) {
      if (weight[static_cast<std::size_t>(d)] == 0.0) continue;
      pick = d;
      r -= weight[static_cast<std::size_t>(d)];
      if (r < 0.0) break;
    }
    dir = pick;
    pos = static_cast<std::size_t>(y + kDy[static_cast<std::size_t>(pick)]) * w +
          static_cast<std::size_t>(x + kDx[static_cast<std::size_t>(pick)]);
    if (!seen[pos]) {
      seen[pos] = 1;
      path.push_back(pos);
    }
  }
  return path;
}

std::string sample_id(const char* split, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%04zu", split, i);
  return buf;
}

}  // namespace

ScribbleSample generate_sample(const GeneratorParams& params, std::size_t index) {
  params.validate();
  Rng rng(mix_seed(params.seed, index, params.ood ? 1 : 0));
  const std::size_t h = params.height;
  const std::size_t w = params.width;
  const std::size_t k = params.num_classes;
  const double s = static_cast<double>(std::min(h, w));

  Ellipse lv{};
  lv.cy = static_cast<double>(h) / 2.0 + uniform(rng, -0.08, 0.08) * s;
  lv.cx = static_cast<double>(w) / 2.0 + uniform(rng, -0.08, 0.08) * s;
  lv.a = uniform(rng, 0.10, 0.14) * s;
  lv.b = lv.a * (params.ood ? uniform(rng, 0.55, 0.75) : uniform(rng, 0.85, 1.0));
  lv.theta = uniform(rng, 0.0, std::numbers::pi);
  const double wall = uniform(rng, 0.05, 0.075) * s;
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  Ellipse rv{};
  rv.a = uniform(rng, 0.11, 0.15) * s;
  rv.b = uniform(rng, 0.06, 0.085) * s * (params.ood ? 0.8 : 1.0);
  const double reach = lv.a + wall + 0.45 * rv.b;
  rv.cy = lv.cy + reach * std::sin(phi);
  rv.cx = lv.cx + reach * std::cos(phi);
  rv.theta = phi + std::numbers::pi / 2.0;

  LabelMap mask(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double py = static_cast<double>(y) + 0.5;
      const double px = static_cast<double>(x) + 0.5;
      std::uint8_t c = 0;
      if (lv.level(py, px) <= 1.0) {
        c = 1;
      } else if (k >= 3 && lv.level(py, px, wall) <= 1.0) {
        c = 2;
      } else if (k >= 4 && rv.level(py, px) <= 1.0) {
        c = 3;
      }
      mask.at(y, x) = c;
    }
  }

  // Appearance: per-class mean with per-sample jitter, background texture,
  // pixel noise, clamped to [0, 1].
  const auto means = class_means(params.ood);
  std::array<double, 4> level{};
  for (std::size_t c = 0; c < 4; ++c) level[c] = means[c] + uniform(rng, -0.03, 0.03);
  const double f1 = uniform(rng, 0.1, 0.3);
  const double f2 = uniform(rng, 0.1, 0.3);
  const double p1 = uniform(rng, 0.0, 6.3);
  const double p2 = uniform(rng, 0.0, 6.3);
  const double noise = params.ood ? 0.05 : 0.03;
  std::vector<double> img(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t c = mask.at(y, x);
      double v = level[c];
      if (c == 0) v += 0.06 * std::sin(f1 * static_cast<double>(x) + p1) * std::sin(f2 * static_cast<double>(y) + p2);
      v += noise * gaussian(rng);
      img[y * w + x] = std::clamp(v, 0.0, 1.0);
    }
  }

  // Scribbles: one walk per present class, background gets the largest share.
  const double hw = static_cast<double>(h * w);
  const double budget = uniform(rng, 0.4, 0.7) * (params.min_coverage + params.max_coverage) * hw;
  std::vector<std::vector<std::size_t>> walks(k);
  LabelMap scr(h, w, static_cast<std::uint8_t>(k));
  std::size_t covered = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (std::find(mask.labels.begin(), mask.labels.end(), c) == mask.labels.end()) continue;
    const double share = c == 0 ? 0.4 : 0.6 / static_cast<double>(k - 1);
    const auto target = static_cast<std::size_t>(std::max(1.0, std::round(budget * share)));
    walks[c] = scribble_walk(interior(mask, static_cast<std::uint8_t>(c)), h, w, target, rng);
    for (std::size_t p : walks[c]) scr.labels[p] = static_cast<std::uint8_t>(c);
    covered += walks[c].size();
  }
  // Top up with extra background strokes if the walks got stuck.
  const auto min_px = static_cast<std::size_t>(std::ceil(params.min_coverage * hw));
  const auto max_px = static_cast<std::size_t>(std::floor(params.max_coverage * hw));
  auto bg_free = interior(mask, 0);
  for (int attempt = 0; covered < min_px && attempt < 64; ++attempt) {
    for (std::size_t i = 0; i < bg_free.size(); ++i) {
      if (scr.labels[i] != k) bg_free[i] = 0;
    }
    auto extra = scribble_walk(bg_free, h, w, min_px - covered, rng);
    for (std::size_t p : extra) {
      if (scr.labels[p] == k) {
        scr.labels[p] = 0;
        walks[0].push_back(p);
        ++covered;
      }
    }
  }
  while (covered > max_px) {
    auto longest = std::max_element(walks.begin(), walks.end(),
                                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (longest->size() <= 1) break;
    scr.labels[longest->back()] = static_cast<std::uint8_t>(k);
    longest->pop_back();
    --covered;
  }

  ScribbleSample out;
  out.image = Tensor(Shape{1, h, w}, std::move(img));
  out.scribble = ScribbleMask(std::move(scr), k);
  out.mask = std::move(mask);
  return out;
}

Dataset generate(const GeneratorParams& params) {
  params.validate();
  Dataset data;
  auto& m = data.manifest;
  m.num_classes = params.num_classes;
  m.height = params.height;
  m.width = params.width;
  m.generator = params;
  const std::pair<const char*, std::size_t> splits[] = {
      {"train", params.n_train}, {"val", params.n_val}, {"test", params.n_test}};
  std::size_t index = 0;
  for (const auto& [name, count] : splits) {
    auto& ids = m.splits[name];
    for (std::size_t i = 0; i < count; ++i, ++index) {
      ScribbleSample s = generate_sample(params, index);
      s.id = sample_id(name, i);
      ids.push_back(s.id);
      m.files[s.id] = SampleFiles{"samples/" + s.id + ".img.tnsr", "samples/" + s.id + ".scr.tnsr",
                                  "samples/" + s.id + ".msk.tnsr", "", "", ""};
      data.samples.emplace(s.id, std::move(s));
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Augmentation and corruption

Augmentation draw_augmentation(Rng& rng, bool square) {
  Augmentation a;
  const auto r = rng();
  a.quarter_turns = square ? static_cast<int>(r % 4) : static_cast<int>(r % 2) * 2;
  a.flip = ((r >> 8) & 1) != 0;
  return a;
}

namespace {

// Source index for each destination pixel of an (H, W) plane; returns the
// destination extents through out_h / out_w.
std::vector<std::size_t> transform_index(std::size_t h, std::size_t w, const Augmentation& aug,
                                         std::size_t& out_h, std::size_t& out_w) {
  const int turns = ((aug.quarter_turns % 4) + 4) % 4;
  out_h = turns % 2 ? w : h;
  out_w = turns % 2 ? h : w;
  std::vector<std::size_t> src(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t fx = aug.flip ? out_w - 1 - x : x;
      std::size_t sy = 0;
      std::size_t sx = 0;
      switch (turns) {
        case 0: sy = y; sx = fx; break;
        case 1: sy = fx; sx = w - 1 - y; break;
        case 2: sy = h - 1 - y; sx = w - 1 - fx; break;
        case 3: sy = h - 1 - fx; sx = y; break;
      }
      src[y * out_w + x] = sy * w + sx;
    }
  }
  return src;
}

}  // namespace

ScribbleSample augment(const ScribbleSample& sample, const Augmentation& aug) {
  const std::size_t h = sample.mask.height;
  const std::size_t w = sample.mask.width;
  std::size_t oh = 0;
  std::size_t ow = 0;
  const auto src = transform_index(h, w, aug, oh, ow);
  std::vector<double> img(src.size());
  LabelMap mask(oh, ow);
  LabelMap scr(oh, ow);
  for (std::size_t i = 0; i < src.size(); ++i) {
    img[i] = sample.image[src[i]];
    mask.labels[i] = sample.mask.labels[src[i]];
    scr.labels[i] = sample.scribble.labels().labels[src[i]];
  }
  ScribbleSample out;
  out.id = sample.id;
  out.image = Tensor(Shape{1, oh, ow}, std::move(img));
  out.scribble = ScribbleMask(std::move(scr), sample.scribble.num_classes());
  out.mask = std::move(mask);
  return out;
}

ScribbleSample augment(const ScribbleSample& sample, Rng& rng) {
  return augment(sample, draw_augmentation(rng, sample.mask.height == sample.mask.width));
}

namespace {

std::size_t mirror(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = i % period;
  if (m < 0) m += period;
  return m < static_cast<long>(n) ? static_cast<std::size_t>(m) : static_cast<std::size_t>(period - 1 - m);
}

std::vector<double> gaussian_blur(const std::vector<double>& img, std::size_t h, std::size_t w,
                                  double std_px) {
  const long radius = static_cast<long>(std::ceil(3.0 * std_px));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    const double v = std::exp(-static_cast<double>(k * k) / (2.0 * std_px * std_px));
    kernel[static_cast<std::size_t>(k + radius)] = v;
    total += v;
  }
  for (double& v : kernel) v /= total;
  std::vector<double> tmp(img.size(), 0.0);
  std::vector<double> out(img.size(), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] * img[y * w + mirror(static_cast<long>(x) + k, w)];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[mirror(static_cast<long>(y) + k, h) * w + x];
      }
      out[y * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

ScribbleSample corrupt(const ScribbleSample& sample, const std::string& kind, double sigma,
                       std::uint64_t seed) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("corrupt: sigma must be > 0");
  const std::size_t h = sample.mask.height;
  const std::size_t w = sample.mask.width;
  std::vector<double> img(sample.image.data().begin(), sample.image.data().end());
  if (kind == "noise") {
    Rng rng(seed);
    for (double& v : img) v = std::clamp(v + sigma * gaussian(rng), 0.0, 1.0);
  } else if (kind == "blur") {
    img = gaussian_blur(img, h, w, sigma * static_cast<double>(w));
  } else {
    throw ConfigError("corrupt: unknown kind '" + kind + "' (expected noise or blur)");
  }
  ScribbleSample out = sample;
  out.image = Tensor(sample.image.shape(), std::move(img));
  return out;
}

Dataset corrupt(const Dataset& data, const std::string& kind, double sigma, std::uint64_t seed) {
  Dataset out;
  out.manifest = data.manifest;
  out.manifest.corruption = Corruption{kind, sigma, seed};
  std::size_t i = 0;
  for (const auto& [id, s] : data.samples) {
    out.samples.emplace(id, corrupt(s, kind, sigma, mix_seed(seed, i++, 0xc0)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// On-disk format

namespace {

std::string fnv1a_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return {};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["num_classes"] = m.num_classes;
  j["height"] = m.height;
  j["width"] = m.width;
  const auto& g = m.generator;
  j["generator"] = {{"seed", g.seed},         {"shape_family", "cardiac-ellipses"},
                    {"ood", g.ood},           {"n_train", g.n_train},
                    {"n_val", g.n_val},       {"n_test", g.n_test},
                    {"min_coverage", g.min_coverage}, {"max_coverage", g.max_coverage}};
  if (m.corruption) {
    j["corruption"] = {{"kind", m.corruption->kind}, {"sigma", m.corruption->sigma}, {"seed", m.corruption->seed}};
  } else {
    j["corruption"] = nullptr;
  }
  j["splits"] = m.splits;
  nlohmann::json samples = nlohmann::json::object();
  for (const auto& [id, f] : m.files) {
    samples[id] = {{"image", f.image},
                   {"scribble", f.scribble},
                   {"mask", f.mask},
                   {"checksum", {{"image", f.image_checksum}, {"scribble", f.scribble_checksum}, {"mask", f.mask_checksum}}}};
  }
  j["samples"] = samples;
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw FormatError("manifest: unknown version " + std::to_string(m.version));
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.height = j.at("height").get<std::size_t>();
    m.width = j.at("width").get<std::size_t>();
    const auto& g = j.at("generator");
    m.generator.seed = g.at("seed").get<std::uint64_t>();
    m.generator.ood = g.at("ood").get<bool>();
    m.generator.n_train = g.value("n_train", std::size_t{0});
    m.generator.n_val = g.value("n_val", std::size_t{0});
    m.generator.n_test = g.value("n_test", std::size_t{0});
    m.generator.min_coverage = g.value("min_coverage", 0.01);
    m.generator.max_coverage = g.value("max_coverage", 0.05);
    m.generator.height = m.height;
    m.generator.width = m.width;
    m.generator.num_classes = m.num_classes;
    if (j.contains("corruption") && !j["corruption"].is_null()) {
      const auto& c = j["corruption"];
      m.corruption = Corruption{c.at("kind").get<std::string>(), c.at("sigma").get<double>(),
                                c.at("seed").get<std::uint64_t>()};
    }
    m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
    for (const auto& [id, f] : j.at("samples").items()) {
      SampleFiles sf;
      sf.image = f.at("image").get<std::string>();
      sf.scribble = f.at("scribble").get<std::string>();
      sf.mask = f.at("mask").get<std::string>();
      if (f.contains("checksum")) {
        const auto& c = f["checksum"];
        sf.image_checksum = c.value("image", "");
        sf.scribble_checksum = c.value("scribble", "");
        sf.mask_checksum = c.value("mask", "");
      }
      m.files.emplace(id, std::move(sf));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

void validate_sample(const ScribbleSample& s, std::size_t num_classes) {
  const std::size_t h = s.mask.height;
  const std::size_t w = s.mask.width;
  auto fail = [&](const std::string& what) { throw DataError("sample " + s.id + ": " + what); };
  if (s.image.shape() != Shape{1, h, w}) fail("image shape " + shape_str(s.image.shape()) + " does not match mask");
  if (s.scribble.labels().height != h || s.scribble.labels().width != w) fail("scribble shape mismatch");
  if (s.scribble.num_classes() != num_classes) fail("scribble class count mismatch");
  for (double v : s.image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) fail("intensity outside [0, 1]");
  }
  std::vector<bool> present(num_classes, false);
  std::vector<bool> scribbled(num_classes, false);
  for (std::size_t i = 0; i < s.mask.size(); ++i) {
    const auto m = s.mask.labels[i];
    if (m >= num_classes) fail("mask value " + std::to_string(m) + " out of range");
    present[m] = true;
    const auto c = s.scribble.labels().labels[i];
    if (c != num_classes) {
      if (c != m) fail("scribble disagrees with mask at pixel " + std::to_string(i));
      scribbled[c] = true;
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (present[c] && !scribbled[c]) fail("class " + std::to_string(c) + " has no scribble pixel");
  }
}

void write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir / "samples");
  DatasetManifest m = data.manifest;
  for (const auto& [id, s] : data.samples) {
    auto it = m.files.find(id);
    if (it == m.files.end()) {
      it = m.files.emplace(id, SampleFiles{"samples/" + id + ".img.tnsr", "samples/" + id + ".scr.tnsr",
                                           "samples/" + id + ".msk.tnsr", "", "", ""}).first;
    }
    SampleFiles& f = it->second;
    tnsr::save_tensor(dir / f.image, s.image);
    tnsr::save_labels(dir / f.scribble, s.scribble.labels());
    tnsr::save_labels(dir / f.mask, s.mask);
    f.image_checksum = fnv1a_file(dir / f.image);
    f.scribble_checksum = fnv1a_file(dir / f.scribble);
    f.mask_checksum = fnv1a_file(dir / f.mask);
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw DataError("dataset: cannot write " + (dir / "manifest.json").string());
  os << to_json(m).dump(2) << '\n';
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw DataError("dataset: missing " + (dir / "manifest.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  Dataset data;
  data.manifest = manifest_from_json(j);
  const auto& m = data.manifest;
  if (m.num_classes < 2 || m.num_classes > 254) throw DataError("manifest: invalid num_classes");

  std::set<std::string> seen;
  for (const auto& [split, ids] : m.splits) {
    for (const auto& id : ids) {
      if (!seen.insert(id).second) throw DataError("manifest: id " + id + " appears in more than one split");
      if (!m.files.count(id)) throw DataError("manifest: split '" + split + "' references unknown id " + id);
    }
  }
  for (const auto& [id, f] : m.files) {
    auto check = [&, id = id](const std::string& rel, const std::string& want) {
      const fs::path p = dir / rel;
      if (!fs::exists(p)) throw DataError("sample " + id + ": missing file " + p.string());
      if (!want.empty() && fnv1a_file(p) != want) throw DataError("sample " + id + ": checksum mismatch for " + rel);
    };
    check(f.image, f.image_checksum);
    check(f.scribble, f.scribble_checksum);
    check(f.mask, f.mask_checksum);
    ScribbleSample s;
    s.id = id;
    s.image = tnsr::load_tensor(dir / f.image);
    LabelMap scr = tnsr::load_labels(dir / f.scribble);
    try {
      s.scribble = ScribbleMask(std::move(scr), m.num_classes);
    } catch (const DataError& e) {
      throw DataError("sample " + id + ": " + e.what());
    }
    s.mask = tnsr::load_labels(dir / f.mask);
    if (s.mask.height != m.height || s.mask.width != m.width) throw DataError("sample " + id + ": mask shape mismatch");
    validate_sample(s, m.num_classes);
    data.samples.emplace(id, std::move(s));
  }
  return data;
}

}  // namespace duedl
