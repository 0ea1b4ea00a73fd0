#include "duedl/protocol.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "duedl/errors.hpp"

namespace duedl {

namespace fs = std::filesystem;

std::string to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::clean: return "clean";
    case ProtocolKind::robustness: return "robustness";
    case ProtocolKind::ood: return "ood";
    case ProtocolKind::ablation: return "ablation";
  }
  return "?";
}

ProtocolKind parse_protocol(const std::string& s) {
  if (s == "clean") return ProtocolKind::clean;
  if (s == "robustness") return ProtocolKind::robustness;
  if (s == "ood") return ProtocolKind::ood;
  if (s == "ablation") return ProtocolKind::ablation;
  throw ConfigError("unknown protocol '" + s + "'");
}

nlohmann::json to_json(const ProtocolResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back({{"name", row.name}, {"report", to_json(row.report)}});
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) runs.push_back(to_json(run));
  return {{"protocol", to_string(r.kind)}, {"rows", rows}, {"runs", runs}};
}

std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base) {
  auto with = [&](SupervisedLoss l, Fusion f) {
    TrainConfig c = base;
    c.loss = l;
    c.fusion = f;
    return c;
  };
  return {{"Model1", with(SupervisedLoss::ce, Fusion::mean)},
          {"Model2", with(SupervisedLoss::edl, Fusion::mean)},
          {"Model3", with(SupervisedLoss::edl, Fusion::dempster)}};
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::string sigma_key(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sigma=%.3g", s);
  return buf;
}

}  // namespace

ProtocolResult run_protocol(const ProtocolOptions& opts) {
  ProtocolResult result;
  result.kind = opts.kind;
  if (opts.kind == ProtocolKind::ood && opts.test_dirs.empty()) {
    throw ConfigError("ood protocol needs an out-of-distribution dataset (--test)");
  }
  if (opts.kind == ProtocolKind::ablation && opts.checkpoint) {
    throw ConfigError("ablation protocol trains three models; --checkpoint is not accepted");
  }
  if (opts.kind == ProtocolKind::robustness && !opts.test_dirs.empty() &&
      opts.test_dirs.size() != opts.sigmas.size()) {
    throw ConfigError("robustness protocol: one corrupted dataset per sigma expected");
  }
  const bool write = !opts.out_dir.empty();
  if (write) fs::create_directories(opts.out_dir);

  const Dataset train_data = read_dataset(opts.train_dir);

  auto obtain_model = [&](const std::string& name, const TrainConfig& cfg) {
    if (opts.checkpoint) return DualNet::from_checkpoint(*opts.checkpoint);
    std::optional<fs::path> ckpt;
    if (write) ckpt = opts.out_dir / ("model_" + name + ".ckpt");
    TrainResult tr = train(cfg, train_data, ckpt);
    if (write) write_text(opts.out_dir / ("run_" + name + ".json"), to_json(tr.record).dump(2));
    result.runs.push_back(std::move(tr.record));
    return std::move(tr.net);
  };
  auto test_set = [&]() {
    return opts.test_dirs.empty() ? train_data : read_dataset(opts.test_dirs.front());
  };

  switch (opts.kind) {
    case ProtocolKind::clean: {
      const Dataset test = test_set();
      DualNet net = obtain_model("clean", opts.config);
      result.rows.push_back({"clean", evaluate_model(net, test, "test", opts.metrics)});
      break;
    }
    case ProtocolKind::ood: {
      const Dataset test = read_dataset(opts.test_dirs.front());
      DualNet net = obtain_model("ood", opts.config);
      result.rows.push_back({"ood", evaluate_model(net, test, "test", opts.metrics)});
      break;
    }
    case ProtocolKind::robustness: {
      DualNet net = obtain_model("robustness", opts.config);
      for (std::size_t i = 0; i < opts.sigmas.size(); ++i) {
        const double sigma = opts.sigmas[i];
        const Dataset test = opts.test_dirs.empty()
                                 ? corrupt(train_data, opts.corruption, sigma, opts.config.seed)
                                 : read_dataset(opts.test_dirs[i]);
        result.rows.push_back({sigma_key(sigma), evaluate_model(net, test, "test", opts.metrics)});
      }
      break;
    }
    case ProtocolKind::ablation: {
      const Dataset test = test_set();
      for (const auto& [name, cfg] : ablation_configs(opts.config)) {
        DualNet net = obtain_model(name, cfg);
        result.rows.push_back({name, evaluate_model(net, test, "test", opts.metrics)});
      }
      break;
    }
  }

  if (write) {
    for (const auto& row : result.rows) {
      write_text(opts.out_dir / (row.name + ".report.json"), to_json(row.report).dump(2));
    }
    write_text(opts.out_dir / "summary.json", to_json(result).dump(2));
    write_text(opts.out_dir / "table.txt", render_table(result.rows, false));
    write_text(opts.out_dir / "table.csv", render_table(result.rows, true));
  }
  return result;
}

std::string render_table(const std::vector<ProtocolRow>& rows, bool csv) {
  std::size_t classes = 0;
  for (const auto& r : rows) classes = std::max(classes, r.report.dice.size());
  std::vector<std::string> header = {"name"};
  for (std::size_t c = 0; c < classes; ++c) header.push_back("dice_c" + std::to_string(c + 1));
  for (const char* h : {"mean_dice", "mean_assd", "ece", "ueo", "samples"}) header.emplace_back(h);

  std::vector<std::vector<std::string>> cells = {header};
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    std::vector<std::string> line = {r.name};
    for (std::size_t c = 0; c < classes; ++c) line.push_back(c < r.report.dice.size() ? num(r.report.dice[c]) : "");
    line.push_back(num(r.report.mean_dice));
    line.push_back(num(r.report.mean_assd));
    line.push_back(num(r.report.ece));
    line.push_back(num(r.report.ueo));
    line.push_back(std::to_string(r.report.samples));
    cells.push_back(std::move(line));
  }

  std::ostringstream out;
  if (csv) {
    for (const auto& line : cells) {
      for (std::size_t i = 0; i < line.size(); ++i) out << (i ? "," : "") << line[i];
      out << '\n';
    }
    return out.str();
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i == 0) {
        out << line[i] << std::string(width[i] - line[i].size(), ' ');
      } else {
        out << "  " << std::string(width[i] - line[i].size(), ' ') << line[i];
      }
    }
    out << '\n';
  }
  return out.str();
}

std::vector<ProtocolRow> load_rows(const std::vector<fs::path>& paths) {
  std::vector<ProtocolRow> rows;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open report " + p.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
    if (j.contains("rows")) {
      for (const auto& r : j.at("rows")) {
        rows.push_back({r.at("name").get<std::string>(), eval_report_from_json(r.at("report"))});
      }
    } else {
      std::string name = p.stem().string();
      if (name.ends_with(".report")) name.resize(name.size() - 7);
      rows.push_back({name, eval_report_from_json(j)});
    }
  }
  return rows;
}

}  // namespace duedl
