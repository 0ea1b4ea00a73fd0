#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. Each one is written from the definition, without reusing library
// code paths, and is deliberately slow.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "duedl/label_map.hpp"
#include "duedl/rng.hpp"
#include "duedl/tensor.hpp"

namespace oracle {

using duedl::LabelMap;
using duedl::Tensor;

// Direct 6-loop cross-correlation over [N,C,H,W] x [F,C,kh,kw].
inline std::vector<double> conv2d(const Tensor& in, const Tensor& k, int stride, int pad) {
  const auto n = static_cast<long>(in.dim(0));
  const auto c = static_cast<long>(in.dim(1));
  const auto h = static_cast<long>(in.dim(2));
  const auto w = static_cast<long>(in.dim(3));
  const auto f = static_cast<long>(k.dim(0));
  const auto kh = static_cast<long>(k.dim(2));
  const auto kw = static_cast<long>(k.dim(3));
  const long ho = (h + 2 * pad - kh) / stride + 1;
  const long wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n * f * ho * wo), 0.0);
  for (long b = 0; b < n; ++b)
    for (long o = 0; o < f; ++o)
      for (long y = 0; y < ho; ++y)
        for (long x = 0; x < wo; ++x) {
          double acc = 0.0;
          for (long ci = 0; ci < c; ++ci)
            for (long i = 0; i < kh; ++i)
              for (long j = 0; j < kw; ++j) {
                const long iy = y * stride - pad + i;
                const long ix = x * stride - pad + j;
                if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
                acc += in[static_cast<std::size_t>(((b * c + ci) * h + iy) * w + ix)] *
                       k[static_cast<std::size_t>(((o * c + ci) * kh + i) * kw + j)];
              }
          out[static_cast<std::size_t>(((b * f + o) * ho + y) * wo + x)] = acc;
        }
  return out;
}

// Foreground Dice per class 1..K-1, 1 when the class is absent from both.
inline std::vector<double> dice(const LabelMap& p, const LabelMap& t, std::size_t k) {
  std::vector<double> out;
  for (std::size_t c = 1; c < k; ++c) {
    double inter = 0, np = 0, nt = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool a = p.labels[i] == c;
      const bool b = t.labels[i] == c;
      inter += (a && b) ? 1 : 0;
      np += a ? 1 : 0;
      nt += b ? 1 : 0;
    }
    out.push_back(np + nt == 0 ? 1.0 : 2 * inter / (np + nt));
  }
  return out;
}

inline std::vector<std::pair<long, long>> boundary(const LabelMap& m, std::uint8_t cls) {
  std::vector<std::pair<long, long>> out;
  const auto h = static_cast<long>(m.height);
  const auto w = static_cast<long>(m.width);
  auto is = [&](long y, long x) {
    return y >= 0 && x >= 0 && y < h && x < w &&
           m.labels[static_cast<std::size_t>(y * w + x)] == cls;
  };
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      if (!is(y, x)) continue;
      const bool inner = is(y - 1, x - 1) && is(y - 1, x) && is(y - 1, x + 1) && is(y, x - 1) &&
                         is(y, x + 1) && is(y + 1, x - 1) && is(y + 1, x) && is(y + 1, x + 1);
      if (!inner) out.emplace_back(y, x);
    }
  return out;
}

// All-pairs symmetric surface distance; both empty gives 0, one empty gives
// the image diagonal.
inline double assd(const LabelMap& p, const LabelMap& t, std::uint8_t cls) {
  const auto bp = boundary(p, cls);
  const auto bt = boundary(t, cls);
  if (bp.empty() && bt.empty()) return 0.0;
  if (bp.empty() || bt.empty()) {
    return std::sqrt(static_cast<double>(p.height * p.height + p.width * p.width));
  }
  auto directed = [](const auto& from, const auto& to) {
    double acc = 0;
    for (auto [y, x] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (auto [v, u] : to) {
        best = std::min(best, std::sqrt(static_cast<double>((y - v) * (y - v) + (x - u) * (x - u))));
      }
      acc += best;
    }
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (directed(bp, bt) + directed(bt, bp));
}

// Confidence = max class probability (first index on ties); bin b holds
// b/B < conf <= (b+1)/B, and bin 0 also holds conf == 0.
inline double ece(const Tensor& prob, const LabelMap& truth, std::size_t bins) {
  const std::size_t k = prob.dim(0);
  const std::size_t n = truth.size();
  double out = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    double cnt = 0, conf = 0, acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 0; c < k; ++c) {
        if (prob[c * n + i] > prob[best * n + i]) best = c;
      }
      const double v = prob[best * n + i];
      const bool in = (v > lo && v <= hi) || (b == 0 && v == 0.0);
      if (!in) continue;
      cnt += 1;
      conf += v;
      acc += best == truth.labels[i] ? 1 : 0;
    }
    if (cnt > 0) out += cnt / static_cast<double>(n) * std::abs(acc / cnt - conf / cnt);
  }
  return out;
}

inline double ueo(const Tensor& u, const LabelMap& p, const LabelMap& t, double step) {
  const auto steps = static_cast<int>(std::lround(1.0 / step));
  double best = 0;
  for (int s = 1; s < steps; ++s) {
    const double tau = static_cast<double>(s) / steps;
    double inter = 0, nu = 0, ne = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool a = u[i] > tau;
      const bool e = p.labels[i] != t.labels[i];
      inter += (a && e) ? 1 : 0;
      nu += a ? 1 : 0;
      ne += e ? 1 : 0;
    }
    best = std::max(best, nu + ne == 0 ? 1.0 : 2 * inter / (nu + ne));
  }
  return best;
}

// Digamma by upward recurrence to x >= 20 and a 6-term asymptotic series.
inline double digamma(double x) {
  double acc = 0;
  while (x < 20) {
    acc -= 1 / x;
    x += 1;
  }
  const double r = 1 / (x * x);
  return acc + std::log(x) - 0.5 / x -
         r * (1.0 / 12 - r * (1.0 / 120 - r * (1.0 / 252 - r * (1.0 / 240 - r * (1.0 / 132)))));
}

// KL(Dir(a) || Dir(1,...,1)).
inline double kl_uniform(const std::vector<double>& a) {
  double s = 0;
  for (double v : a) s += v;
  double out = std::lgamma(s) - std::lgamma(static_cast<double>(a.size()));
  for (double v : a) out += -std::lgamma(v) + (v - 1) * (digamma(v) - digamma(s));
  return out;
}

// Random label map with values in [0, k).
inline LabelMap random_labels(duedl::Rng& rng, std::size_t h, std::size_t w, std::size_t k) {
  LabelMap m(h, w);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng() % k);
  return m;
}

// Random blob-like map: k-1 axis-aligned rectangles painted over class 0, so
// boundaries are not all single pixels.
inline LabelMap random_blobs(duedl::Rng& rng, std::size_t h, std::size_t w, std::size_t k) {
  LabelMap m(h, w, 0);
  for (std::size_t c = 1; c < k; ++c) {
    if (rng() % 5 == 0) continue;  // sometimes absent
    const std::size_t y0 = rng() % h, x0 = rng() % w;
    const std::size_t y1 = std::min(h, y0 + 1 + rng() % (h / 2));
    const std::size_t x1 = std::min(w, x0 + 1 + rng() % (w / 2));
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) m.at(y, x) = static_cast<std::uint8_t>(c);
  }
  return m;
}

struct GradReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Central-difference check of the gradient of `loss` w.r.t. `leaves`. The
// relative error is |a - n| / max(|a|, |n|, floor). At most `per_leaf`
// entries per leaf are probed, spread evenly over the leaf.
inline GradReport check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                                  double h = 1e-5, std::size_t per_leaf = 0,
                                  double floor = 1e-6) {
  for (auto& l : leaves) l.zero_grad();
  {
    duedl::Tape tape;
    duedl::Tape::Scope scope(tape);
    const Tensor value = loss();
    tape.backward(value);
  }
  GradReport rep;
  for (auto& l : leaves) {
    const std::vector<double> analytic(l.grad().begin(), l.grad().end());
    const std::size_t n = l.numel();
    const std::size_t stride = per_leaf == 0 || per_leaf >= n ? 1 : n / per_leaf;
    for (std::size_t i = 0; i < n; i += stride) {
      double& x = l.mutable_data()[i];
      const double saved = x;
      x = saved + h;
      const double fp = loss().item();
      x = saved - h;
      const double fm = loss().item();
      x = saved;
      const double numeric = (fp - fm) / (2 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      rep.max_rel = std::max(rep.max_rel, std::abs(analytic[i] - numeric) / denom);
      ++rep.checked;
    }
  }
  return rep;
}

inline Tensor random_tensor(duedl::Rng& rng, const duedl::Shape& shape, double lo, double hi,
                            bool requires_grad = false) {
  std::vector<double> v(duedl::shape_numel(shape));
  for (auto& x : v) x = lo + (hi - lo) * duedl::uniform01(rng);
  return Tensor(shape, std::move(v), requires_grad);
}

}  // namespace oracle
