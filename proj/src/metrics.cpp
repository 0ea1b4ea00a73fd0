#include "duedl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "duedl/errors.hpp"

namespace duedl {

namespace {

void require_same(const LabelMap& a, const LabelMap& b, const char* who) {
  if (a.height != b.height || a.width != b.width) throw ShapeError(std::string(who) + ": shape mismatch");
}

double binary_dice(std::size_t inter, std::size_t a, std::size_t b) {
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

}  // namespace

std::vector<double> dice_score(const LabelMap& pred, const LabelMap& truth, std::size_t num_classes) {
  require_same(pred, truth, "dice_score");
  std::vector<std::size_t> p(num_classes, 0);
  std::vector<std::size_t> t(num_classes, 0);
  std::vector<std::size_t> both(num_classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto a = pred.labels[i];
    const auto b = truth.labels[i];
    if (a < num_classes) ++p[a];
    if (b < num_classes) ++t[b];
    if (a == b && a < num_classes) ++both[a];
  }
  std::vector<double> out;
  for (std::size_t c = 1; c < num_classes; ++c) out.push_back(binary_dice(both[c], p[c], t[c]));
  return out;
}

std::vector<std::size_t> boundary_pixels(const LabelMap& map, std::uint8_t cls) {
  std::vector<std::size_t> out;
  const long h = static_cast<long>(map.height);
  const long w = static_cast<long>(map.width);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      if (map.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) != cls) continue;
      bool edge = false;
      for (long dy = -1; dy <= 1 && !edge; ++dy) {
        for (long dx = -1; dx <= 1 && !edge; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const long ny = y + dy;
          const long nx = x + dx;
          edge = ny < 0 || nx < 0 || ny >= h || nx >= w ||
                 map.at(static_cast<std::size_t>(ny), static_cast<std::size_t>(nx)) != cls;
        }
      }
      if (edge) out.push_back(static_cast<std::size_t>(y * w + x));
    }
  }
  return out;
}

namespace {

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas).
void dt_1d(const double* f, std::size_t n, std::size_t stride, double* out, std::vector<double>& z,
           std::vector<std::size_t>& v, std::vector<double>& tmp) {
  const double inf = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q * stride] < inf) {
      first = q;
      break;
    }
  }
  if (first == n) {
    for (std::size_t q = 0; q < n; ++q) out[q * stride] = inf;
    return;
  }
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = first + 1; q < n; ++q) {
    const double fq = f[q * stride];
    if (fq == inf) continue;
    const auto dq = static_cast<double>(q);
    double s = 0.0;
    while (true) {
      const auto dv = static_cast<double>(v[k]);
      s = ((fq + dq * dq) - (f[v[k] * stride] + dv * dv)) / (2.0 * (dq - dv));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const auto dq = static_cast<double>(q);
    while (z[k + 1] < dq) ++k;
    const auto dv = static_cast<double>(v[k]);
    tmp[q] = (dq - dv) * (dq - dv) + f[v[k] * stride];
  }
  for (std::size_t q = 0; q < n; ++q) out[q * stride] = tmp[q];
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& features,
                                               std::size_t height, std::size_t width) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(height * width);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = features[i] ? 0.0 : inf;
  const std::size_t n = std::max(height, width);
  std::vector<double> z(n + 1);
  std::vector<std::size_t> v(n);
  std::vector<double> tmp(n);
  for (std::size_t x = 0; x < width; ++x) dt_1d(grid.data() + x, height, width, grid.data() + x, z, v, tmp);
  for (std::size_t y = 0; y < height; ++y) {
    dt_1d(grid.data() + y * width, width, 1, grid.data() + y * width, z, v, tmp);
  }
  return grid;
}

double assd(const LabelMap& pred, const LabelMap& truth, std::uint8_t cls, const MetricConfig& cfg) {
  require_same(pred, truth, "assd");
  const auto bp = boundary_pixels(pred, cls);
  const auto bt = boundary_pixels(truth, cls);
  if (bp.empty() && bt.empty()) return 0.0;
  if (bp.empty() || bt.empty()) {
    return cfg.assd_empty_cap > 0.0
               ? cfg.assd_empty_cap
               : std::hypot(static_cast<double>(pred.height), static_cast<double>(pred.width));
  }
  const std::size_t n = pred.size();
  auto mean_dist = [&](const std::vector<std::size_t>& from, const std::vector<std::size_t>& to) {
    std::vector<std::uint8_t> feat(n, 0);
    for (std::size_t i : to) feat[i] = 1;
    const auto dt = squared_distance_transform(feat, pred.height, pred.width);
    double acc = 0.0;
    for (std::size_t i : from) acc += std::sqrt(dt[i]);
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (mean_dist(bp, bt) + mean_dist(bt, bp));
}

std::size_t confidence_bin(double conf, std::size_t bins) {
  const auto nb = static_cast<double>(bins);
  long b = static_cast<long>(std::ceil(conf * nb)) - 1;
  b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
  // Settle floating-point edge cases against the exact bin edges.
  while (b > 0 && conf <= static_cast<double>(b) / nb) --b;
  while (b + 1 < static_cast<long>(bins) && conf > static_cast<double>(b + 1) / nb) ++b;
  return static_cast<std::size_t>(b);
}

double ece(const Tensor& prob, const LabelMap& truth, std::size_t bins) {
  if (prob.ndim() != 3 || prob.dim(1) != truth.height || prob.dim(2) != truth.width) {
    throw ShapeError("ece: probability map does not match truth");
  }
  if (bins == 0) throw ConfigError("ece: bins must be >= 1");
  const std::size_t k = prob.dim(0);
  const std::size_t plane = truth.size();
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> correct(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (prob[c * plane + i] > prob[best * plane + i]) best = c;
    }
    const double conf = prob[best * plane + i];
    const std::size_t b = confidence_bin(conf, bins);
    conf_sum[b] += conf;
    correct[b] += best == truth.labels[i] ? 1.0 : 0.0;
    ++count[b];
  }
  double out = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const auto nb = static_cast<double>(count[b]);
    out += nb / static_cast<double>(plane) * std::abs(correct[b] / nb - conf_sum[b] / nb);
  }
  return out;
}

std::vector<double> ueo_thresholds(double step) {
  if (!(step > 0.0 && step < 1.0)) throw ConfigError("ueo: threshold step must lie in (0, 1)");
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::llround(1.0 / step));
  for (std::size_t i = 1; i < n; ++i) out.push_back(static_cast<double>(i) / static_cast<double>(n));
  return out;
}

double ueo(const Tensor& uncertainty, const LabelMap& pred, const LabelMap& truth,
           const std::vector<double>& thresholds) {
  require_same(pred, truth, "ueo");
  if (uncertainty.numel() != pred.size()) throw ShapeError("ueo: uncertainty map size mismatch");
  const std::size_t n = pred.size();
  // Sort pixel uncertainties; the pixels above tau form a suffix.
  std::vector<double> u_all(uncertainty.data().begin(), uncertainty.data().end());
  std::vector<double> u_err;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred.labels[i] != truth.labels[i]) u_err.push_back(uncertainty[i]);
  }
  std::sort(u_all.begin(), u_all.end());
  std::sort(u_err.begin(), u_err.end());
  double best = 0.0;
  for (double tau : thresholds) {
    const auto above = static_cast<std::size_t>(u_all.end() - std::upper_bound(u_all.begin(), u_all.end(), tau));
    const auto hit = static_cast<std::size_t>(u_err.end() - std::upper_bound(u_err.begin(), u_err.end(), tau));
    best = std::max(best, binary_dice(hit, above, u_err.size()));
  }
  return best;
}

SampleMetrics evaluate_sample(const EvalInput& in, std::size_t num_classes, const MetricConfig& cfg) {
  SampleMetrics m;
  m.id = in.id;
  m.dice = dice_score(in.pred, in.truth, num_classes);
  for (std::size_t c = 1; c < num_classes; ++c) {
    m.assd.push_back(assd(in.pred, in.truth, static_cast<std::uint8_t>(c), cfg));
  }
  m.ece = ece(in.prob, in.truth, cfg.ece_bins);
  m.ueo = ueo(in.uncertainty, in.pred, in.truth, ueo_thresholds(cfg.ueo_step));
  return m;
}

EvalReport aggregate(const std::vector<SampleMetrics>& samples, const MetricConfig& cfg) {
  if (samples.empty()) throw DataError("evaluate: no samples to aggregate");
  EvalReport r;
  r.config = cfg;
  r.samples = samples.size();
  const std::size_t fg = samples.front().dice.size();
  r.dice.assign(fg, 0.0);
  r.assd.assign(fg, 0.0);
  for (const auto& s : samples) {
    for (std::size_t c = 0; c < fg; ++c) {
      r.dice[c] += s.dice[c];
      r.assd[c] += s.assd[c];
    }
    r.ece += s.ece;
    r.ueo += s.ueo;
  }
  const auto n = static_cast<double>(samples.size());
  for (std::size_t c = 0; c < fg; ++c) {
    r.dice[c] /= n;
    r.assd[c] /= n;
    r.mean_dice += r.dice[c];
    r.mean_assd += r.assd[c];
  }
  if (fg > 0) {
    r.mean_dice /= static_cast<double>(fg);
    r.mean_assd /= static_cast<double>(fg);
  }
  r.ece /= n;
  r.ueo /= n;
  return r;
}

EvalReport evaluate(const std::vector<EvalInput>& inputs, std::size_t num_classes,
                    const MetricConfig& cfg, std::vector<SampleMetrics>* per_sample) {
  std::vector<SampleMetrics> all;
  all.reserve(inputs.size());
  for (const auto& in : inputs) all.push_back(evaluate_sample(in, num_classes, cfg));
  EvalReport r = aggregate(all, cfg);
  if (per_sample) *per_sample = std::move(all);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"dice", r.dice},
          {"mean_dice", r.mean_dice},
          {"assd", r.assd},
          {"mean_assd", r.mean_assd},
          {"ece", r.ece},
          {"ueo", r.ueo},
          {"samples", r.samples},
          {"config",
           {{"ece_bins", r.config.ece_bins},
            {"ueo_step", r.config.ueo_step},
            {"assd_empty_cap", r.config.assd_empty_cap},
            {"assd_boundary", "8-connectivity"},
            {"aggregation", r.aggregation}}}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.dice = j.at("dice").get<std::vector<double>>();
    r.mean_dice = j.at("mean_dice").get<double>();
    r.assd = j.at("assd").get<std::vector<double>>();
    r.mean_assd = j.at("mean_assd").get<double>();
    r.ece = j.at("ece").get<double>();
    r.ueo = j.at("ueo").get<double>();
    r.samples = j.at("samples").get<std::size_t>();
    const auto& c = j.at("config");
    r.config.ece_bins = c.at("ece_bins").get<std::size_t>();
    r.config.ueo_step = c.at("ueo_step").get<double>();
    r.config.assd_empty_cap = c.value("assd_empty_cap", 0.0);
    r.aggregation = c.value("aggregation", r.aggregation);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

}  // namespace duedl
