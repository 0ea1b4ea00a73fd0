// Command-line front end: dataset generation, corruption, training,
// evaluation, prediction, experiment protocols and report rendering.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "duedl/errors.hpp"
#include "duedl/protocol.hpp"
#include "duedl/synthdata.hpp"
#include "duedl/tnsr.hpp"
#include "duedl/train.hpp"

namespace fs = std::filesystem;
using namespace duedl;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

// Flags for the training configuration. Values are applied on top of the
// optional JSON config only when given on the command line.
struct TrainFlags {
  std::string config_file;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, batch = 0, base_width = 0, depth = 0;
  double lr = 0, momentum = 0, weight_decay = 0, beta = 0, lambda_u = 0, dropout = 0, grad_clip = 0;
  std::string fusion, loss, ecl_scope, anneal_unit, dropout_scope;
  bool no_augment = false;
  bool last_epoch = false;
  std::vector<CLI::Option*> opts;
  CLI::App* app = nullptr;

  void attach(CLI::App* sub) {
    app = sub;
    sub->add_option("--config", config_file, "JSON training config file");
    opts = {sub->add_option("--seed", seed, "Random seed"),
            sub->add_option("--epochs", epochs, "Training epochs"),
            sub->add_option("--batch-size", batch, "Samples per SGD step"),
            sub->add_option("--lr", lr, "Learning rate"),
            sub->add_option("--momentum", momentum, "SGD momentum"),
            sub->add_option("--weight-decay", weight_decay, "L2 weight decay"),
            sub->add_option("--beta", beta, "KL annealing horizon"),
            sub->add_option("--lambda-u", lambda_u, "Consistency loss weight"),
            sub->add_option("--grad-clip", grad_clip, "Batch gradient norm bound (0 disables)"),
            sub->add_option("--fusion", fusion, "dempster | mean"),
            sub->add_option("--loss", loss, "edl | ce"),
            sub->add_option("--ecl-scope", ecl_scope, "all | unlabeled"),
            sub->add_option("--anneal-unit", anneal_unit, "epoch | iteration"),
            sub->add_option("--dropout-scope", dropout_scope, "bottleneck | all-skips"),
            sub->add_option("--dropout", dropout, "Dropout rate of the perturbed branch"),
            sub->add_option("--base-width", base_width, "Channels of the first encoder level"),
            sub->add_option("--depth", depth, "Number of downsampling levels")};
    sub->add_flag("--no-augment", no_augment, "Disable rotation/flip augmentation");
    sub->add_flag("--last-epoch", last_epoch, "Keep the final epoch instead of the best validation epoch");
  }

  bool given(const std::string& name) const { return app->count(name) > 0; }

  TrainConfig build() const {
    TrainConfig c;
    if (!config_file.empty()) c = train_config_from_json(read_json_file(config_file));
    if (given("--seed")) c.seed = seed;
    if (given("--epochs")) c.epochs = epochs;
    if (given("--batch-size")) c.batch_size = batch;
    if (given("--lr")) c.lr = lr;
    if (given("--momentum")) c.momentum = momentum;
    if (given("--weight-decay")) c.weight_decay = weight_decay;
    if (given("--beta")) c.beta = beta;
    if (given("--lambda-u")) c.lambda_u = lambda_u;
    if (given("--grad-clip")) c.grad_clip = grad_clip;
    if (given("--fusion")) c.fusion = parse_fusion(fusion);
    if (given("--loss")) c.loss = parse_loss(loss);
    if (given("--ecl-scope")) c.ecl_scope = parse_ecl_scope(ecl_scope);
    if (given("--anneal-unit")) c.anneal_unit = parse_anneal_unit(anneal_unit);
    if (given("--dropout-scope")) c.net.dropout_scope = parse_dropout_scope(dropout_scope);
    if (given("--dropout")) c.net.dropout_rate = dropout;
    if (given("--base-width")) c.net.base_width = base_width;
    if (given("--depth")) c.net.depth = depth;
    if (no_augment) c.augment = false;
    if (last_epoch) c.select_best = false;
    c.validate();
    return c;
  }
};

void print_epoch(const EpochRecord& e) {
  std::fprintf(stderr,
               "epoch %3zu  loss %.5f  (sup %.5f, ecl %.5f, lambda_t %.2f)  |g|max %.3g  val dice %.4f  %.1fs\n",
               e.epoch, e.loss_total, e.loss_supervised, e.loss_consistency, e.lambda_t, e.max_grad_norm,
               e.val_dice, e.seconds);
}

GeneratorParams generator_from_json(const nlohmann::json& j, GeneratorParams g) {
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") g.seed = v.get<std::uint64_t>();
      else if (key == "n_train") g.n_train = v.get<std::size_t>();
      else if (key == "n_val") g.n_val = v.get<std::size_t>();
      else if (key == "n_test") g.n_test = v.get<std::size_t>();
      else if (key == "height") g.height = v.get<std::size_t>();
      else if (key == "width") g.width = v.get<std::size_t>();
      else if (key == "num_classes") g.num_classes = v.get<std::size_t>();
      else if (key == "ood") g.ood = v.get<bool>();
      else if (key == "min_coverage") g.min_coverage = v.get<double>();
      else if (key == "max_coverage") g.max_coverage = v.get<double>();
      else throw ConfigError("generator config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  return g;
}

void write_eval(const EvalReport& report, const std::vector<SampleMetrics>& per_sample,
                const std::string& out, const std::string& csv) {
  const auto j = to_json(report);
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(out, j);
  }
  if (csv.empty()) return;
  std::ofstream f(csv);
  f << "id";
  for (std::size_t c = 0; c < report.dice.size(); ++c) f << ",dice_c" << c + 1;
  for (std::size_t c = 0; c < report.assd.size(); ++c) f << ",assd_c" << c + 1;
  f << ",ece,ueo\n";
  f.precision(17);
  for (const auto& s : per_sample) {
    f << s.id;
    for (double d : s.dice) f << ',' << d;
    for (double a : s.assd) f << ',' << a;
    f << ',' << s.ece << ',' << s.ueo << '\n';
  }
  if (!f) throw DataError("cannot write " + csv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-branch evidential segmentation toolkit"};
  app.require_subcommand(1);

  // generate-data
  GeneratorParams gen;
  std::string gen_out, gen_config;
  auto* g = app.add_subcommand("generate-data", "Write a synthetic scribble-annotated dataset");
  g->add_option("--out", gen_out, "Output directory")->required();
  g->add_option("--config", gen_config, "JSON generator config file");
  auto* g_seed = g->add_option("--seed", gen.seed, "Random seed");
  auto* g_train = g->add_option("--n-train", gen.n_train, "Training samples");
  auto* g_val = g->add_option("--n-val", gen.n_val, "Validation samples");
  auto* g_test = g->add_option("--n-test", gen.n_test, "Test samples");
  auto* g_h = g->add_option("--height", gen.height, "Image height");
  auto* g_w = g->add_option("--width", gen.width, "Image width");
  auto* g_k = g->add_option("--classes", gen.num_classes, "Number of classes (2..4)");
  auto* g_ood = g->add_flag("--ood", gen.ood, "Use the shifted appearance/geometry distribution");

  // corrupt
  std::string cor_in, cor_out, cor_kind = "noise";
  double cor_sigma = 0.1;
  std::uint64_t cor_seed = 0;
  auto* c = app.add_subcommand("corrupt", "Write a noise- or blur-corrupted copy of a dataset");
  c->add_option("--in", cor_in, "Source dataset directory")->required();
  c->add_option("--out", cor_out, "Output directory")->required();
  c->add_option("--kind", cor_kind, "noise | blur")->check(CLI::IsMember({"noise", "blur"}));
  c->add_option("--sigma", cor_sigma, "Noise std, or blur std as a fraction of the width");
  c->add_option("--seed", cor_seed, "Random seed");

  // train
  TrainFlags tf;
  std::string tr_data, tr_out;
  auto* t = app.add_subcommand("train", "Train a network; writes model.ckpt and run.json");
  t->add_option("--data", tr_data, "Dataset directory")->required();
  t->add_option("--out", tr_out, "Output directory")->required();
  tf.attach(t);

  // evaluate
  std::string ev_ckpt, ev_data, ev_split = "test", ev_out, ev_csv;
  std::uint64_t ev_seed = 0;
  MetricConfig mc;
  auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
  e->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required();
  e->add_option("--data", ev_data, "Dataset directory")->required();
  e->add_option("--split", ev_split, "train | val | test");
  e->add_option("--out", ev_out, "report.json path (stdout when omitted)");
  e->add_option("--csv", ev_csv, "Per-sample CSV path");
  e->add_option("--bins", mc.ece_bins, "ECE bins");
  e->add_option("--ueo-step", mc.ueo_step, "UEO threshold step");
  e->add_option("--seed", ev_seed, "Accepted for uniformity; evaluation is deterministic");

  // predict
  std::string pr_ckpt, pr_data, pr_split = "test", pr_out;
  std::uint64_t pr_seed = 0;
  auto* p = app.add_subcommand("predict", "Write probability, uncertainty and label maps as TNSR");
  p->add_option("--checkpoint", pr_ckpt, "Model checkpoint")->required();
  p->add_option("--data", pr_data, "Dataset directory")->required();
  p->add_option("--split", pr_split, "train | val | test");
  p->add_option("--out", pr_out, "Output directory")->required();
  p->add_option("--seed", pr_seed, "Accepted for uniformity; prediction is deterministic");

  // protocol
  TrainFlags pf;
  std::string pt_kind, pt_train, pt_out, pt_ckpt, pt_corruption = "noise";
  std::vector<std::string> pt_test;
  std::vector<double> pt_sigmas;
  auto* pc = app.add_subcommand("protocol", "Run an experiment protocol");
  pc->add_option("kind", pt_kind, "clean | robustness | ood | ablation")
      ->required()
      ->check(CLI::IsMember({"clean", "robustness", "ood", "ablation"}));
  pc->add_option("--train", pt_train, "Training dataset directory")->required();
  pc->add_option("--test", pt_test, "Test dataset directories");
  pc->add_option("--out", pt_out, "Output directory")->required();
  pc->add_option("--checkpoint", pt_ckpt, "Evaluate this model instead of training");
  pc->add_option("--corruption", pt_corruption, "noise | blur (robustness)")
      ->check(CLI::IsMember({"noise", "blur"}));
  pc->add_option("--sigmas", pt_sigmas, "Corruption levels (robustness)");
  pf.attach(pc);

  // report
  std::vector<std::string> rp_files;
  bool rp_csv = false;
  std::string rp_out;
  std::uint64_t rp_seed = 0;
  auto* r = app.add_subcommand("report", "Render JSON reports as an aligned table or CSV");
  r->add_option("files", rp_files, "summary.json or report.json files")->required();
  r->add_flag("--csv", rp_csv, "CSV instead of aligned text");
  r->add_option("--out", rp_out, "Output file (stdout when omitted)");
  r->add_option("--seed", rp_seed, "Accepted for uniformity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) {
      GeneratorParams params = gen;
      if (!gen_config.empty()) {
        params = generator_from_json(read_json_file(gen_config), GeneratorParams{});
        // Command-line values win over the file.
        if (g_seed->count()) params.seed = gen.seed;
        if (g_train->count()) params.n_train = gen.n_train;
        if (g_val->count()) params.n_val = gen.n_val;
        if (g_test->count()) params.n_test = gen.n_test;
        if (g_h->count()) params.height = gen.height;
        if (g_w->count()) params.width = gen.width;
        if (g_k->count()) params.num_classes = gen.num_classes;
        if (g_ood->count()) params.ood = gen.ood;
      }
      write_dataset(generate(params), gen_out);
    } else if (*c) {
      write_dataset(corrupt(read_dataset(cor_in), cor_kind, cor_sigma, cor_seed), cor_out);
    } else if (*t) {
      const TrainConfig cfg = tf.build();
      const Dataset data = read_dataset(tr_data);
      fs::create_directories(tr_out);
      const TrainResult res = train(cfg, data, fs::path(tr_out) / "model.ckpt", print_epoch);
      write_json(fs::path(tr_out) / "run.json", to_json(res.record));
    } else if (*e) {
      const DualNet net = DualNet::from_checkpoint(ev_ckpt);
      const Dataset data = read_dataset(ev_data);
      std::vector<SampleMetrics> per_sample;
      const EvalReport rep = evaluate_model(net, data, ev_split, mc, &per_sample);
      write_eval(rep, per_sample, ev_out, ev_csv);
    } else if (*p) {
      const DualNet net = DualNet::from_checkpoint(pr_ckpt);
      const Dataset data = read_dataset(pr_data);
      fs::create_directories(pr_out);
      for (const ScribbleSample* s : data.split(pr_split)) {
        const Prediction pred = net.inference(s->image);
        const fs::path base = fs::path(pr_out) / s->id;
        tnsr::save_tensor(base.string() + ".prob.tnsr", pred.prob);
        tnsr::save_tensor(base.string() + ".unc.tnsr", pred.uncertainty);
        tnsr::save_labels(base.string() + ".labels.tnsr", pred.labels);
      }
    } else if (*pc) {
      ProtocolOptions opts;
      opts.kind = parse_protocol(pt_kind);
      opts.train_dir = pt_train;
      for (const auto& d : pt_test) opts.test_dirs.emplace_back(d);
      opts.out_dir = pt_out;
      opts.config = pf.build();
      opts.corruption = pt_corruption;
      if (!pt_sigmas.empty()) opts.sigmas = pt_sigmas;
      if (!pt_ckpt.empty()) opts.checkpoint = fs::path(pt_ckpt);
      const ProtocolResult res = run_protocol(opts);
      std::cout << render_table(res.rows, false);
    } else if (*r) {
      std::vector<fs::path> paths(rp_files.begin(), rp_files.end());
      const std::string table = render_table(load_rows(paths), rp_csv);
      if (rp_out.empty()) {
        std::cout << table;
      } else {
        std::ofstream out(rp_out);
        out << table;
        if (!out) throw DataError("cannot write " + rp_out);
      }
    }
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  } catch (const FormatError& err) {
    std::cerr << "format error: " << err.what() << '\n';
    return kExitData;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  }
  return 0;
}
