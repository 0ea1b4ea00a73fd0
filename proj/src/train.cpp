#include "duedl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "duedl/errors.hpp"
#include "duedl/evidence.hpp"
#include "duedl/fusion.hpp"
#include "duedl/sgd.hpp"

namespace duedl {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train config: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train config: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight decay must be >= 0");
  if (!(beta > 0.0)) throw ConfigError("train config: beta must be > 0");
  if (!(lambda_u >= 0.0)) throw ConfigError("train config: lambda_u must be >= 0");
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip)) throw ConfigError("train config: grad_clip must be >= 0");
  net.validate();
}

std::string to_string(Fusion f) { return f == Fusion::dempster ? "dempster" : "mean"; }
std::string to_string(SupervisedLoss l) { return l == SupervisedLoss::edl ? "edl" : "ce"; }
std::string to_string(EclScope s) { return s == EclScope::all ? "all" : "unlabeled"; }
std::string to_string(AnnealUnit a) { return a == AnnealUnit::epoch ? "epoch" : "iteration"; }

Fusion parse_fusion(const std::string& s) {
  if (s == "dempster") return Fusion::dempster;
  if (s == "mean") return Fusion::mean;
  throw ConfigError("unknown fusion '" + s + "' (expected dempster or mean)");
}
SupervisedLoss parse_loss(const std::string& s) {
  if (s == "edl") return SupervisedLoss::edl;
  if (s == "ce") return SupervisedLoss::ce;
  throw ConfigError("unknown loss '" + s + "' (expected edl or ce)");
}
EclScope parse_ecl_scope(const std::string& s) {
  if (s == "all") return EclScope::all;
  if (s == "unlabeled") return EclScope::unlabeled;
  throw ConfigError("unknown ecl scope '" + s + "' (expected all or unlabeled)");
}
AnnealUnit parse_anneal_unit(const std::string& s) {
  if (s == "epoch") return AnnealUnit::epoch;
  if (s == "iteration") return AnnealUnit::iteration;
  throw ConfigError("unknown anneal unit '" + s + "' (expected epoch or iteration)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"beta", c.beta},
          {"lambda_u", c.lambda_u},
          {"seed", c.seed},
          {"fusion", to_string(c.fusion)},
          {"loss", to_string(c.loss)},
          {"ecl_scope", to_string(c.ecl_scope)},
          {"anneal_unit", to_string(c.anneal_unit)},
          {"grad_clip", c.grad_clip},
          {"augment", c.augment},
          {"select_best", c.select_best},
          {"net", to_json(c.net)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "lambda_u") c.lambda_u = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "fusion") c.fusion = parse_fusion(v.get<std::string>());
      else if (key == "loss") c.loss = parse_loss(v.get<std::string>());
      else if (key == "ecl_scope") c.ecl_scope = parse_ecl_scope(v.get<std::string>());
      else if (key == "anneal_unit") c.anneal_unit = parse_anneal_unit(v.get<std::string>());
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else if (key == "augment") c.augment = v.get<bool>();
      else if (key == "select_best") c.select_best = v.get<bool>();
      else if (key == "net") c.net = net_config_from_json(v);
      else throw ConfigError("train config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss_total", e.loss_total},
                      {"loss_supervised", e.loss_supervised},
                      {"loss_consistency", e.loss_consistency},
                      {"lambda_t", e.lambda_t},
                      {"fused_uncertainty", e.fused_uncertainty},
                      {"min_branch_uncertainty", e.min_branch_uncertainty},
                      {"max_grad_norm", e.max_grad_norm},
                      {"val_dice", e.val_dice},
                      {"val_ece", e.val_ece},
                      {"seconds", e.seconds}});
  }
  return {{"config", to_json(r.config)}, {"epochs", epochs},       {"best_epoch", r.best_epoch},
          {"best_val_dice", r.best_val_dice}, {"seconds", r.seconds}, {"checkpoint", r.checkpoint}};
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.config = train_config_from_json(j.at("config"));
    for (const auto& e : j.at("epochs")) {
      EpochRecord x;
      x.epoch = e.at("epoch").get<std::size_t>();
      x.loss_total = e.at("loss_total").get<double>();
      x.loss_supervised = e.at("loss_supervised").get<double>();
      x.loss_consistency = e.at("loss_consistency").get<double>();
      x.lambda_t = e.at("lambda_t").get<double>();
      x.fused_uncertainty = e.value("fused_uncertainty", 0.0);
      x.min_branch_uncertainty = e.value("min_branch_uncertainty", 0.0);
      x.max_grad_norm = e.value("max_grad_norm", 0.0);
      x.val_dice = e.value("val_dice", 0.0);
      x.val_ece = e.value("val_ece", 0.0);
      x.seconds = e.value("seconds", 0.0);
      r.epochs.push_back(x);
    }
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.best_val_dice = j.at("best_val_dice").get<double>();
    r.seconds = j.value("seconds", 0.0);
    r.checkpoint = j.value("checkpoint", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run record: ") + e.what());
  }
}

namespace {

DirichletView view_of(const EvidenceMap& em) { return {em.prob(), em.strength(), em.alpha()}; }

double mean_of(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  return acc / static_cast<double>(t.numel());
}

// Fisher-Yates with a portable index draw.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

bool has_split(const Dataset& data, const std::string& name) {
  auto it = data.manifest.splits.find(name);
  return it != data.manifest.splits.end() && !it->second.empty();
}

}  // namespace

StepLoss sample_loss(const DualNet& net, const ScribbleSample& sample, const TrainConfig& config,
                     double anneal_step, Rng& dropout_rng) {
  const std::size_t k = net.config().num_classes;
  const DualOutput out = net.forward(sample.image, true, dropout_rng);
  const EvidenceMap em1 = evidence_from_logits(out.raw1);
  const EvidenceMap em2 = evidence_from_logits(out.raw2);
  const DirichletView v1 = view_of(em1);
  const DirichletView v2 = view_of(em2);

  StepLoss s;
  DirichletView vf;
  if (config.fusion == Fusion::dempster) {
    const FusedOpinion f = fuse(em1.belief(), em1.uncertainty(), em2.belief(), em2.uncertainty());
    const FusedDirichlet fd = fused_dirichlet(f, k);
    vf = {fd.prob, fd.strength, fd.alpha};
    s.fused_uncertainty = f.uncertainty;
    Tape::NoGrad off;
    const Tensor u1 = em1.uncertainty();
    const Tensor u2 = em2.uncertainty();
    std::vector<double> m(u1.numel());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::min(u1[i], u2[i]);
    s.min_branch_uncertainty = Tensor(u1.shape(), std::move(m));
  } else {
    vf = {mul(add(v1.prob, v2.prob), 0.5), mul(add(v1.strength, v2.strength), 0.5),
          mul(add(v1.alpha, v2.alpha), 0.5)};
  }
  const LabelMap pseudo = hard_pseudo_labels(vf.prob);

  LossConfig lc;
  lc.beta = config.beta;
  lc.lambda_u = config.lambda_u;
  lc.step = anneal_step;
  lc.ecl_scope = config.ecl_scope;
  s.loss = joint_loss(v1, v2, vf, sample.scribble, pseudo, lc, config.loss);
  return s;
}

std::vector<EvalInput> predict_split(const DualNet& net, const Dataset& data, const std::string& split) {
  std::vector<EvalInput> out;
  for (const ScribbleSample* s : data.split(split)) {
    Prediction p = net.inference(s->image);
    out.push_back({s->id, p.prob, p.uncertainty, p.labels, s->mask});
  }
  return out;
}

EvalReport evaluate_model(const DualNet& net, const Dataset& data, const std::string& split,
                          const MetricConfig& cfg, std::vector<SampleMetrics>* per_sample) {
  if (net.config().num_classes != data.manifest.num_classes) {
    throw ConfigError("evaluate: network has " + std::to_string(net.config().num_classes) +
                      " classes, dataset has " + std::to_string(data.manifest.num_classes));
  }
  return evaluate(predict_split(net, data, split), data.manifest.num_classes, cfg, per_sample);
}

TrainResult train(const TrainConfig& config, const Dataset& data,
                  const std::optional<std::filesystem::path>& checkpoint, EpochCallback on_epoch) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();

  RunRecord record;
  record.config = config;
  record.config.net.seed = config.seed;
  record.config.net.num_classes = data.manifest.num_classes;
  record.config.net.in_channels = 1;
  record.config.validate();
  const TrainConfig& cfg = record.config;

  const auto train_set = data.split("train");
  const bool use_val = cfg.select_best && has_split(data, "val");

  DualNet net(cfg.net);
  DualNet best(cfg.net);
  best.copy_parameters_from(net);
  Sgd opt(net.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay);

  std::size_t iteration = 0;
  bool have_best = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t_epoch = clock::now();
    Rng order_rng(mix_seed(cfg.seed, epoch, 0x6f72646572));
    const auto order = permutation(train_set.size(), order_rng);

    EpochRecord er;
    er.epoch = epoch;
    er.lambda_t = std::min(1.0, static_cast<double>(cfg.anneal_unit == AnnealUnit::epoch ? epoch : iteration) /
                                    cfg.beta);
    std::size_t pixels = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      const double step = static_cast<double>(cfg.anneal_unit == AnnealUnit::epoch ? epoch : iteration);
      opt.zero_grad();
      try {
        for (std::size_t j = start; j < stop; ++j) {
          const std::size_t idx = order[j];
          const ScribbleSample* base = train_set[idx];
          ScribbleSample aug_sample;
          const ScribbleSample* sample = base;
          if (cfg.augment) {
            Rng aug_rng(mix_seed(cfg.seed, epoch, idx, 0x617567));
            aug_sample = augment(*base, aug_rng);
            sample = &aug_sample;
          }
          Rng drop_rng(mix_seed(cfg.seed, epoch, j, 0x64726f70));
          Tape tape;
          Tape::Scope scope(tape);
          const StepLoss sl = sample_loss(net, *sample, cfg, step, drop_rng);
          const double total = sl.loss.total.item();
          if (!std::isfinite(total)) throw NumericError("non-finite loss");
          tape.backward(mul(sl.loss.total, scale));
          er.loss_total += total;
          er.loss_supervised += sl.loss.supervised.item();
          er.loss_consistency += sl.loss.consistency.item();
          if (cfg.fusion == Fusion::dempster) {
            const double n = static_cast<double>(sl.fused_uncertainty.numel());
            er.fused_uncertainty += mean_of(sl.fused_uncertainty) * n;
            er.min_branch_uncertainty += mean_of(sl.min_branch_uncertainty) * n;
            pixels += sl.fused_uncertainty.numel();
          }
        }
        const double norm =
            opt.clip_grad_norm(cfg.grad_clip > 0.0 ? cfg.grad_clip : std::numeric_limits<double>::infinity());
        er.max_grad_norm = std::max(er.max_grad_norm, norm);
        opt.step();
        for (const auto& [name, p] : net.parameters()) {
          for (double v : p.data()) {
            if (!std::isfinite(v)) throw NumericError("parameter " + name + " became non-finite");
          }
        }
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": " + e.what());
      }
      ++iteration;
    }
    const auto n = static_cast<double>(order.size());
    er.loss_total /= n;
    er.loss_supervised /= n;
    er.loss_consistency /= n;
    if (pixels > 0) {
      er.fused_uncertainty /= static_cast<double>(pixels);
      er.min_branch_uncertainty /= static_cast<double>(pixels);
    }
    if (use_val) {
      const EvalReport vr = evaluate_model(net, data, "val");
      er.val_dice = vr.mean_dice;
      er.val_ece = vr.ece;
      if (!have_best || er.val_dice > record.best_val_dice) {
        have_best = true;
        record.best_val_dice = er.val_dice;
        record.best_epoch = epoch;
        best.copy_parameters_from(net);
      }
    }
    er.seconds = std::chrono::duration<double>(clock::now() - t_epoch).count();
    record.epochs.push_back(er);
    if (on_epoch) on_epoch(er);
  }
  if (!use_val) {
    record.best_epoch = cfg.epochs - 1;
    best.copy_parameters_from(net);
  }
  if (checkpoint) {
    best.save_checkpoint(*checkpoint, std::to_string(cfg.seed));
    record.checkpoint = checkpoint->string();
  }
  record.seconds = std::chrono::duration<double>(clock::now() - t_start).count();
  return {std::move(record), std::move(best)};
}

}  // namespace duedl
