// Acceptance suite: one PASS/FAIL line per criterion, details on the lines
// that follow it. Exit status is nonzero when any criterion fails. With
// --trend-advisory the training trend criteria (5, 6) are still printed but
// only the deterministic criteria (1-4) decide the exit status.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "duedl/dualnet.hpp"
#include "duedl/evidence.hpp"
#include "duedl/fusion.hpp"
#include "duedl/losses.hpp"
#include "duedl/metrics.hpp"
#include "duedl/protocol.hpp"
#include "duedl/special.hpp"
#include "duedl/synthdata.hpp"
#include "duedl/train.hpp"
#include "support/oracles.hpp"

using namespace duedl;

namespace {

// Pinned tolerances and budgets.
constexpr double kAlgebraTol = 1e-9;
constexpr double kAlgebraSeconds = 30.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr double kOracleTol = 1e-9;
constexpr double kSpecialTol = 1e-10;
constexpr double kConvTol = 1e-12;
constexpr double kExampleTol = 1e-12;
constexpr double kCleanDice = 0.85;
constexpr double kNoiseSigma = 0.1;
constexpr double kRerunTol = 1e-12;

struct GridPoint {
  double x, log_gamma, digamma;
};
const GridPoint kGrid[] = {
#include "oracles/special_grid.inc"
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "    failed: " << what << '\n';
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

int failures = 0;
int trend_failures = 0;

void report(int id, const std::string& name, Outcome& o, double secs) {
  std::cout << "criterion " << id << ' ' << name << ": " << (o.pass ? "PASS" : "FAIL") << " (" << fmt(secs)
            << " s)\n"
            << o.detail.str() << std::flush;
  if (!o.pass) ++(id >= 5 ? trend_failures : failures);
}

// ---------------------------------------------------------------- 1

struct Opinion {
  Tensor b, u;
};

Opinion random_opinion(Rng& rng, std::size_t k, std::size_t n) {
  std::vector<double> b(k * n), u(n);
  std::vector<double> m(k + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (auto& v : m) {
      v = -std::log(1 - uniform01(rng));
      total += v;
    }
    for (std::size_t c = 0; c < k; ++c) b[c * n + i] = m[c] / total;
    u[i] = m[k] / total;
  }
  return {Tensor({k, 1, n}, b), Tensor({1, n}, u)};
}

void criterion_algebra() {
  const auto t0 = Clock::now();
  Outcome o;
  Tape::NoGrad no_grad;
  Rng rng(101);

  double worst_partition = 0, worst_prob = 0;
  for (int m = 0; m < 10000; ++m) {
    const std::size_t k = 2 + m % 3;
    const std::size_t h = 4 + rng() % 5, w = 4 + rng() % 5;
    // Mix of near-vacuous, moderate and saturated evidence.
    const double scale = std::pow(10.0, -3.0 + 6.0 * uniform01(rng));
    std::vector<double> e(k * h * w);
    for (auto& v : e) v = scale * -std::log(1 - uniform01(rng));
    const EvidenceMap em(Tensor({k, h, w}, e));
    const Tensor b = em.belief(), u = em.uncertainty(), p = em.prob();
    const std::size_t n = h * w;
    for (std::size_t i = 0; i < n; ++i) {
      double sb = u[i], sp = 0;
      for (std::size_t c = 0; c < k; ++c) {
        sb += b[c * n + i];
        sp += p[c * n + i];
      }
      worst_partition = std::max(worst_partition, std::abs(sb - 1));
      worst_prob = std::max(worst_prob, std::abs(sp - 1));
    }
  }
  o.require(worst_partition <= kAlgebraTol, "sum b + u = 1");
  o.require(worst_prob <= kAlgebraTol, "sum p = 1");
  o.detail << "    10000 evidence maps: max |sum b + u - 1| " << fmt(worst_partition) << ", max |sum p - 1| "
           << fmt(worst_prob) << '\n';

  // 1e5 opinion pairs in chunks of 1e4 pixels, K cycling over 2..4.
  double worst_identity = 0, worst_comm = 0, worst_contract = -1, worst_closure = 0, worst_trip = 0;
  const std::size_t chunk = 10000;
  for (int part = 0; part < 10; ++part) {
    const std::size_t k = 2 + part % 3;
    const auto o1 = random_opinion(rng, k, chunk);
    const auto o2 = random_opinion(rng, k, chunk);
    const auto f = fuse(o1.b, o1.u, o2.b, o2.u);
    const auto g = fuse(o2.b, o2.u, o1.b, o1.u);
    const auto v = fuse(o1.b, o1.u, Tensor::zeros({k, 1, chunk}), Tensor::full({1, chunk}, 1.0));
    const auto d = fused_dirichlet(f, k);
    // Back to an opinion through the evidence map of the fused Dirichlet.
    const EvidenceMap back(d.evidence);
    const Tensor bb = back.belief(), bu = back.uncertainty();
    for (std::size_t i = 0; i < chunk; ++i) {
      double closure = f.uncertainty[i];
      worst_contract = std::max(worst_contract, f.uncertainty[i] - std::min(o1.u[i], o2.u[i]));
      worst_comm = std::max(worst_comm, std::abs(f.uncertainty[i] - g.uncertainty[i]));
      worst_identity = std::max(worst_identity, std::abs(v.uncertainty[i] - o1.u[i]));
      worst_trip = std::max(worst_trip, std::abs(bu[i] - f.uncertainty[i]));
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t j = c * chunk + i;
        closure += f.belief[j];
        worst_comm = std::max(worst_comm, std::abs(f.belief[j] - g.belief[j]));
        worst_identity = std::max(worst_identity, std::abs(v.belief[j] - o1.b[j]));
        worst_trip = std::max(worst_trip, std::abs(bb[j] - f.belief[j]));
      }
      worst_closure = std::max(worst_closure, std::abs(closure - 1));
    }
  }
  o.require(worst_identity <= kAlgebraTol, "vacuous opinion is the identity");
  o.require(worst_comm <= kAlgebraTol, "commutativity");
  o.require(worst_contract <= 0.0, "u+ <= min(u1, u2)");
  o.require(worst_closure <= kAlgebraTol, "fused sum b + u = 1");
  o.require(worst_trip <= kAlgebraTol, "opinion -> Dirichlet -> opinion round trip");
  o.detail << "    100000 opinion pairs: identity " << fmt(worst_identity) << ", commutativity " << fmt(worst_comm)
           << ", max(u+ - min u) " << fmt(worst_contract) << ", closure " << fmt(worst_closure)
           << ", round trip " << fmt(worst_trip) << '\n';

  const double secs = seconds_since(t0);
  o.require(secs < kAlgebraSeconds, "runtime under 30 s");
  report(1, "algebraic properties", o, secs);
}

// ---------------------------------------------------------------- 2

ScribbleMask random_scribble(Rng& rng, std::size_t k, std::size_t h, std::size_t w) {
  LabelMap m(h, w, static_cast<std::uint8_t>(k));
  for (auto& v : m.labels) {
    if (rng() % 3 == 0) v = static_cast<std::uint8_t>(rng() % k);
  }
  m.labels[0] = 0;
  return ScribbleMask(m, k);
}

DirichletView view_of(const EvidenceMap& em) { return {em.prob(), em.strength(), em.alpha()}; }

void criterion_gradients() {
  const auto t0 = Clock::now();
  Outcome o;
  Rng rng(202);
  const std::size_t k = 4, h = 8, w = 8;
  auto em = [](const Tensor& r) { return evidence_from_logits(r); };

  for (int inst = 0; inst < 3; ++inst) {
    const auto sc = random_scribble(rng, k, h, w);
    Tensor r1 = oracle::random_tensor(rng, {k, h, w}, -2, 2, true);
    Tensor r2 = oracle::random_tensor(rng, {k, h, w}, -2, 2, true);
    const auto target = oracle::random_labels(rng, h, w, k);
    LossConfig cfg;
    cfg.step = 2.0 + inst * 4.0;
    LabelMap pseudo;
    {
      Tape::NoGrad ng;
      const auto e1 = em(r1), e2 = em(r2);
      pseudo = hard_pseudo_labels(fused_dirichlet(fuse(e1.belief(), e1.uncertainty(), e2.belief(), e2.uncertainty()), k).prob);
    }
    const std::vector<std::pair<std::string, std::function<Tensor()>>> losses = {
        {"partial mse", [&] { const auto e = em(r1); return partial_mse(e.prob(), e.strength(), sc); }},
        {"partial kl", [&] { return partial_kl(em(r1).alpha(), sc); }},
        {"partial edl", [&] { return partial_edl(view_of(em(r1)), sc, cfg); }},
        {"dice", [&] { return dice_loss(em(r1).prob(), target); }},
        {"consistency", [&] { return consistency_loss(em(r1).prob(), em(r2).prob(), pseudo); }},
        {"joint", [&] {
           const auto e1 = em(r1), e2 = em(r2);
           const auto d = fused_dirichlet(fuse(e1.belief(), e1.uncertainty(), e2.belief(), e2.uncertainty()), k);
           return joint_loss(view_of(e1), view_of(e2), {d.prob, d.strength, d.alpha}, sc, pseudo, cfg).total;
         }},
    };
    for (const auto& [name, fn] : losses) {
      const auto rep = oracle::check_gradients(fn, {r1, r2});
      o.require(rep.max_rel < kGradTol, name + " gradient");
      if (inst == 0) o.detail << "    " << name << ": max rel " << fmt(rep.max_rel) << " over " << rep.checked << '\n';
    }
  }

  // Full network: forward in training mode with fixed dropout draws, then
  // the evidential joint loss on a random scribble.
  NetConfig nc;
  nc.num_classes = k;
  nc.seed = 7;
  DualNet net(nc);
  const Tensor img = oracle::random_tensor(rng, {1, h, w}, 0, 1);
  const auto sc = random_scribble(rng, k, h, w);
  const LabelMap pseudo = oracle::random_labels(rng, h, w, k);
  LossConfig cfg;
  cfg.step = 3;
  std::vector<Tensor> leaves;
  for (auto& [name, t] : net.parameters()) leaves.push_back(t);
  auto full = [&] {
    Rng drop(9);
    const auto out = net.forward(img, true, drop);
    const auto e1 = em(out.raw1), e2 = em(out.raw2);
    const auto d = fused_dirichlet(fuse(e1.belief(), e1.uncertainty(), e2.belief(), e2.uncertainty()), k);
    return joint_loss(view_of(e1), view_of(e2), {d.prob, d.strength, d.alpha}, sc, pseudo, cfg).total;
  };
  const auto rep = oracle::check_gradients(full, leaves, 1e-5, 24);
  o.require(rep.max_rel < kGradTol, "dualnet gradient");
  o.detail << "    dualnet forward + joint loss: max rel " << fmt(rep.max_rel) << " over " << rep.checked
           << " parameter entries\n";

  const double secs = seconds_since(t0);
  o.require(secs < kGradSeconds, "runtime under 2 min");
  report(2, "gradients vs finite differences", o, secs);
}

// ---------------------------------------------------------------- 3

Tensor random_prob(Rng& rng, std::size_t k, std::size_t h, std::size_t w) {
  const std::size_t n = h * w;
  std::vector<double> p(k * n);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double v = std::pow(uniform01(rng), 3.0) + 1e-3;
      p[c * n + i] = v;
      total += v;
    }
    for (std::size_t c = 0; c < k; ++c) p[c * n + i] /= total;
  }
  return Tensor({k, h, w}, p);
}

void criterion_oracles() {
  const auto t0 = Clock::now();
  Outcome o;
  Rng rng(303);
  double d_dice = 0, d_assd = 0, d_ece = 0, d_ueo = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor p = random_prob(rng, 4, 12, 12);
    const auto pred = oracle::random_blobs(rng, 12, 12, 4);
    const auto truth = oracle::random_blobs(rng, 12, 12, 4);
    const Tensor u = oracle::random_tensor(rng, {12, 12}, 0, 1);
    const auto d = dice_score(pred, truth, 4);
    const auto dref = oracle::dice(pred, truth, 4);
    for (std::size_t c = 0; c < 3; ++c) d_dice = std::max(d_dice, std::abs(d[c] - dref[c]));
    for (std::uint8_t c = 1; c < 4; ++c) {
      d_assd = std::max(d_assd, std::abs(assd(pred, truth, c) - oracle::assd(pred, truth, c)));
    }
    d_ece = std::max(d_ece, std::abs(ece(p, truth, 10) - oracle::ece(p, truth, 10)));
    d_ueo = std::max(d_ueo, std::abs(ueo(u, pred, truth) - oracle::ueo(u, pred, truth, 0.01)));
  }
  o.require(d_dice <= kOracleTol, "dice");
  o.require(d_assd <= kOracleTol, "assd");
  o.require(d_ece <= kOracleTol, "ece");
  o.require(d_ueo <= kOracleTol, "ueo");
  o.detail << "    50 instances at 12x12: dice " << fmt(d_dice) << ", assd " << fmt(d_assd) << ", ece "
           << fmt(d_ece) << ", ueo " << fmt(d_ueo) << '\n';

  double d_lg = 0, d_dg = 0;
  for (const auto& g : kGrid) {
    d_lg = std::max(d_lg, std::abs(log_gamma(g.x) - g.log_gamma));
    d_dg = std::max(d_dg, std::abs(digamma(g.x) - g.digamma));
  }
  o.require(std::size(kGrid) == 100, "grid has 100 points");
  o.require(d_lg <= kSpecialTol, "log-gamma");
  o.require(d_dg <= kSpecialTol, "digamma");
  o.detail << "    special functions on " << std::size(kGrid) << " points: log-gamma " << fmt(d_lg)
           << ", digamma " << fmt(d_dg) << '\n';

  double d_conv = 0;
  struct Case {
    Shape in, k;
    int stride, pad;
  };
  const std::vector<Case> cases = {{{1, 1, 8, 8}, {4, 1, 3, 3}, 1, 1},   {{2, 3, 9, 7}, {5, 3, 3, 3}, 1, 1},
                                   {{1, 4, 8, 8}, {2, 4, 1, 1}, 1, 0},   {{1, 2, 9, 9}, {3, 2, 3, 3}, 2, 1},
                                   {{1, 16, 16, 16}, {8, 16, 3, 3}, 1, 1}, {{1, 3, 10, 12}, {2, 3, 5, 5}, 1, 2}};
  for (const auto& c : cases) {
    const Tensor x = oracle::random_tensor(rng, c.in, -1, 1);
    const Tensor kk = oracle::random_tensor(rng, c.k, -1, 1);
    const Tensor y = conv2d(x, kk, c.stride, c.pad);
    const auto ref = oracle::conv2d(x, kk, c.stride, c.pad);
    for (std::size_t i = 0; i < ref.size(); ++i) d_conv = std::max(d_conv, std::abs(y[i] - ref[i]));
  }
  o.require(d_conv <= kConvTol, "conv2d");
  o.detail << "    conv2d on " << cases.size() << " shapes: max abs " << fmt(d_conv) << '\n';
  report(3, "fast paths vs oracles", o, seconds_since(t0));
}

// ---------------------------------------------------------------- 4

// Expected values are printed by tests/oracles/reference_values.py.
void criterion_examples() {
  const auto t0 = Clock::now();
  Outcome o;
  auto near = [&](double got, double want, const std::string& what) {
    o.require(std::abs(got - want) <= kExampleTol, what + " = " + fmt(want) + " (got " + fmt(got) + ")");
  };

  const EvidenceMap e3(Tensor({4, 1, 1}, {3, 0, 0, 0}));
  near(e3.strength().item(), 7.0, "S for e = (3,0,0,0)");
  near(e3.belief()[0], 3.0 / 7, "b0 for e = (3,0,0,0)");
  near(e3.uncertainty().item(), 4.0 / 7, "u for e = (3,0,0,0)");
  near(e3.prob()[0], 4.0 / 7, "p0 for e = (3,0,0,0)");
  near(e3.prob()[1], 1.0 / 7, "p1 for e = (3,0,0,0)");

  const ScribbleMask sc(LabelMap(1, 1, 0), 2);
  const EvidenceMap e1(Tensor({2, 1, 1}, {1.0, 0.0}));
  near(partial_mse(e1.prob(), e1.strength(), sc).item(), 1.0 / 3, "partial mse example");
  near(partial_kl(Tensor({2, 1, 1}, {5.0, 3.0}), sc).item(), 0.43194562200144302473, "partial kl example");

  const auto f = fuse(Tensor({2, 1, 1}, {0.6, 0.0}), Tensor({1, 1}, {0.4}), Tensor({2, 1, 1}, {0.0, 0.6}),
                      Tensor({1, 1}, {0.4}));
  near(f.conflict.item(), 0.36, "conflict");
  near(f.belief[0], 0.375, "fused b0");
  near(f.belief[1], 0.375, "fused b1");
  near(f.uncertainty.item(), 0.25, "fused u");
  const auto d = fused_dirichlet(f, 2);
  near(d.evidence[0], 3.0, "fused e0");
  near(d.evidence[1], 3.0, "fused e1");
  near(d.strength.item(), 8.0, "fused S");
  near(d.alpha[0], 4.0, "fused alpha0");
  near(d.prob[0], 0.5, "fused p0");
  near(d.prob[1], 0.5, "fused p1");

  NetConfig nc;
  nc.zero_head = true;
  const DualNet net(nc);
  const auto pred = net.inference(Tensor::full({1, 16, 16}, 0.3));
  near(pred.uncertainty[0], 0.5906161091496412, "zero-head uncertainty");
  near(digamma(1.0), -0.57721566490153286061, "digamma(1)");

  o.detail << "    evidence, partial mse/kl, two-source fusion, Dirichlet round trip, zero head\n";
  report(4, "worked examples", o, seconds_since(t0));
}

// ---------------------------------------------------------------- 5 and 6

struct Evaluated {
  RunRecord record;
  EvalReport clean, noisy, ood;
};

Evaluated train_and_evaluate(const TrainConfig& cfg, const Dataset& clean, const Dataset& noisy,
                             const Dataset& ood) {
  TrainResult tr = train(cfg, clean);
  return {std::move(tr.record), evaluate_model(tr.net, clean, "test"), evaluate_model(tr.net, noisy, "test"),
          evaluate_model(tr.net, ood, "test")};
}

std::string summary(const EvalReport& r) {
  std::ostringstream s;
  s << "dice [";
  for (std::size_t c = 0; c < r.dice.size(); ++c) s << (c ? " " : "") << fmt(r.dice[c]);
  s << "] mean " << fmt(r.mean_dice) << ", assd " << fmt(r.mean_assd) << ", ece " << fmt(r.ece) << ", ueo "
    << fmt(r.ueo);
  return s.str();
}

double report_gap(const EvalReport& a, const EvalReport& b) {
  double g = std::max({std::abs(a.mean_dice - b.mean_dice), std::abs(a.mean_assd - b.mean_assd),
                       std::abs(a.ece - b.ece), std::abs(a.ueo - b.ueo)});
  for (std::size_t c = 0; c < a.dice.size(); ++c) {
    g = std::max({g, std::abs(a.dice[c] - b.dice[c]), std::abs(a.assd[c] - b.assd[c])});
  }
  return g;
}

double record_gap(const RunRecord& a, const RunRecord& b) {
  if (a.epochs.size() != b.epochs.size() || a.best_epoch != b.best_epoch) return INFINITY;
  double g = std::abs(a.best_val_dice - b.best_val_dice);
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const auto& x = a.epochs[i];
    const auto& y = b.epochs[i];
    g = std::max({g, std::abs(x.loss_total - y.loss_total), std::abs(x.loss_supervised - y.loss_supervised),
                  std::abs(x.loss_consistency - y.loss_consistency), std::abs(x.lambda_t - y.lambda_t),
                  std::abs(x.fused_uncertainty - y.fused_uncertainty),
                  std::abs(x.min_branch_uncertainty - y.min_branch_uncertainty), std::abs(x.val_dice - y.val_dice),
                  std::abs(x.val_ece - y.val_ece)});
  }
  return g;
}

void criteria_end_to_end() {
  const auto t0 = Clock::now();
  GeneratorParams gp;  // 200 / 40 / 40 at 64x64
  const Dataset clean = generate(gp);
  const Dataset noisy = corrupt(clean, "noise", kNoiseSigma, gp.seed);
  GeneratorParams gp_ood = gp;
  gp_ood.ood = true;
  const Dataset ood = generate(gp_ood);

  const auto configs = ablation_configs(TrainConfig{});
  const TrainConfig& model1_cfg = configs.front().second;
  const TrainConfig& duedl_cfg = configs.back().second;

  const auto t_duedl = Clock::now();
  const Evaluated duedl = train_and_evaluate(duedl_cfg, clean, noisy, ood);
  const double duedl_secs = seconds_since(t_duedl);
  const Evaluated model1 = train_and_evaluate(model1_cfg, clean, noisy, ood);
  const Evaluated rerun = train_and_evaluate(duedl_cfg, clean, noisy, ood);

  Outcome o5;
  const double drop_duedl = duedl.clean.mean_dice - duedl.noisy.mean_dice;
  const double drop_model1 = model1.clean.mean_dice - model1.noisy.mean_dice;
  o5.require(duedl.clean.mean_dice >= kCleanDice, "(a) clean mean Dice >= 0.85");
  o5.require(drop_duedl < drop_model1, "(b) Dice degradation under noise smaller than Model1");
  o5.require(duedl.noisy.ece < model1.noisy.ece, "(b) ECE under noise lower than Model1");
  const double gap = std::max({record_gap(duedl.record, rerun.record), report_gap(duedl.clean, rerun.clean),
                               report_gap(duedl.noisy, rerun.noisy), report_gap(duedl.ood, rerun.ood)});
  o5.require(gap <= kRerunTol, "(c) rerun reproduces every number to 1e-12");
  // Training loss over the first five epochs, informational.
  std::ostringstream early;
  for (std::size_t e = 0; e < std::min<std::size_t>(5, duedl.record.epochs.size()); ++e) {
    early << (e ? " " : "") << fmt(duedl.record.epochs[e].loss_total);
  }
  o5.detail << "    duedl  clean: " << summary(duedl.clean) << '\n'
            << "    duedl  noise " << kNoiseSigma << ": " << summary(duedl.noisy) << '\n'
            << "    model1 clean: " << summary(model1.clean) << '\n'
            << "    model1 noise " << kNoiseSigma << ": " << summary(model1.noisy) << '\n'
            << "    dice degradation: duedl " << fmt(drop_duedl) << ", model1 " << fmt(drop_model1) << '\n'
            << "    rerun max abs difference " << fmt(gap) << '\n'
            << "    duedl train loss, epochs 0-4: " << early.str() << '\n'
            << "    one training run " << fmt(duedl_secs) << " s; best epoch " << duedl.record.best_epoch << '\n';
  report(5, "end-to-end trend", o5, seconds_since(t0));

  Outcome o6;
  o6.require(duedl.ood.ueo > model1.ood.ueo, "ood UEO of DuEDL exceeds Model1");
  o6.detail << "    duedl  ood: " << summary(duedl.ood) << '\n'
            << "    model1 ood: " << summary(model1.ood) << '\n';
  report(6, "ood uncertainty trend", o6, 0.0);
}

}  // namespace

int main(int argc, char** argv) {
  bool trend_advisory = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--trend-advisory") {
      trend_advisory = true;
    } else {
      std::cout << "usage: acceptance [--trend-advisory]\n";
      return 2;
    }
  }
  try {
    criterion_algebra();
    criterion_gradients();
    criterion_oracles();
    criterion_examples();
    criteria_end_to_end();
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << '\n';
    return 2;
  }
  const int total = failures + trend_failures;
  std::cout << (total == 0 ? "all criteria passed" : std::to_string(total) + " criteria failed");
  if (trend_advisory && trend_failures > 0) std::cout << " (trend criteria are advisory in this mode)";
  std::cout << '\n';
  const int gating = trend_advisory ? failures : total;
  return gating == 0 ? 0 : 1;
}
