// rsoft: command-line front end for data generation, ingestion, training,
// temperature grids, experiment suites, evaluation and reporting.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsoft/config.hpp"
#include "rsoft/core_model.hpp"
#include "rsoft/errors.hpp"
#include "rsoft/evaluation.hpp"
#include "rsoft/experiments.hpp"
#include "rsoft/ingestion.hpp"
#include "rsoft/report.hpp"
#include "rsoft/synthetic.hpp"
#include "rsoft/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rsoft;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

double json_real(const json& j) {
  if (j.is_null()) return std::nan("");
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::nan("");
  }
  return j.get<double>();
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "inf" || item == "Inf" || item == "INF") {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad grid value '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("temperature grid is empty");
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Training options shared by train and grid-temp: a settings file, --set
// overrides, then the named flags, in that order of precedence (last wins).
struct ConfigOptions {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> named;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "JSON or key=value settings file");
    app->add_option("--set", sets, "Override one key, as key=value (repeatable)");
    for (const char* key : {"method", "temperature", "degeneracy", "n_negatives", "batch_size",
                            "epochs", "max_steps", "learning_rate", "optimizer", "dim", "seed",
                            "threads", "data", "ground_truth", "output_dir", "eval_every",
                            "eval_split", "boltzmann_cache", "include_positive"}) {
      std::string flag = std::string("--") + key;
      for (auto& ch : flag) {
        if (ch == '_') ch = '-';
      }
      app->add_option(flag, named[key], std::string("Sets ") + key);
    }
  }

  TrainConfig resolve() const {
    json j = json::object();
    if (!config_file.empty()) j = load_settings_file(config_file);
    for (const auto& s : sets) apply_setting(j, s);
    for (const auto& [key, value] : named) {
      if (!value.empty()) j[key] = parse_setting_value(value);
    }
    auto cfg = TrainConfig::from_json(j);
    cfg.validate();
    return cfg;
  }
};

struct LoadedInputs {
  IngestResult data;
  std::optional<GroundTruth> ground_truth;
};

LoadedInputs load_inputs(const TrainConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("no dataset: set data=<pair cache base>");
  LoadedInputs in{load_pair_cache(cfg.data), std::nullopt};
  if (!cfg.ground_truth.empty()) in.ground_truth = load_ground_truth(cfg.ground_truth);
  return in;
}

TrainInputs as_train_inputs(const LoadedInputs& in) {
  TrainInputs t;
  t.vocab = &in.data.vocab;
  t.data = &in.data.data;
  t.ground_truth = in.ground_truth ? &*in.ground_truth : nullptr;
  return t;
}

// KL-vs-steps chart from the run's snapshots, when there is more than one.
void write_snapshot_chart(const RunRecord& record, const fs::path& path) {
  if (record.snapshots.size() < 2) return;
  std::map<std::string, Series> by_name;
  for (const auto& s : record.snapshots) {
    for (const auto& [name, v] : s.metrics.kl) {
      auto& series = by_name[name];
      series.name = name;
      series.x.push_back(static_cast<double>(s.step));
      series.y.push_back(v);
    }
  }
  if (by_name.empty()) return;
  std::vector<Series> series;
  for (auto& [_, s] : by_name) series.push_back(std::move(s));
  write_text_file(path, svg_line_chart(series, {"KL vs steps", "step", "KL", false}));
}

int cmd_synth_gen(const json& opts) {
  const auto gt = build_mixture(opts["card_i"], opts["card_j"], opts["components"],
                                opts["mixture_seed"],
                                SigmaRange{opts["sigma_lo"], opts["sigma_hi"]});
  auto data = sample_pairs(gt, opts["pairs"], opts["sample_seed"]);
  const SplitFractions fr{opts["train"], opts["valid"], opts["test"]};
  data = split_dataset(std::move(data), fr, opts["split_seed"]);
  auto vocab = grid_vocab(gt, data);
  assign_train_counts(vocab, data);
  const fs::path base = opts["out"].get<std::string>();
  save_pair_cache(base, vocab, data);
  save_ground_truth(gt, base.string() + ".gt");
  std::cout << "wrote " << base.string() << ".{bin,json,gt}: " << data.pairs.size()
            << " pairs\n";
  return kExitOk;
}

void split_and_save(IngestResult r, const SplitFractions& fr, std::uint64_t seed,
                    const fs::path& base, json meta) {
  r.data = split_dataset(std::move(r.data), fr, seed);
  assign_train_counts(r.vocab, r.data);
  r.data.source_meta = meta.dump();
  save_pair_cache(base, r.vocab, r.data);
  std::cout << "wrote " << base.string() << ".{bin,json}: " << r.data.pairs.size()
            << " pairs, card(I)=" << r.vocab.card_i() << " card(J)=" << r.vocab.card_j()
            << "\n";
}

int cmd_train(const TrainConfig& cfg, const std::string& out_override) {
  const auto in = load_inputs(cfg);
  const fs::path out_dir = !out_override.empty()       ? fs::path(out_override)
                           : !cfg.output_dir.empty() ? fs::path(cfg.output_dir)
                                                     : fs::path("runs");
  auto result = train(cfg, as_train_inputs(in));
  auto& rec = result.record;
  write_run_outputs(rec, result.params, in.data.vocab, out_dir,
                    cfg.checkpoint_dtype == "f64" ? CheckpointDtype::f64 : CheckpointDtype::f32);
  write_text_file(out_dir / (rec.config_hash + ".loss.csv"), loss_trace_csv(rec));
  write_text_file(out_dir / (rec.config_hash + ".metrics.csv"),
                  std::string(kMetricsCsvHeader) + "\n" + rec.snapshots.back().metrics.to_csv_rows());
  write_snapshot_chart(rec, out_dir / (rec.config_hash + ".kl.svg"));
  std::cout << "run " << rec.config_hash << ": " << rec.steps << " steps in " << rec.wall_time_s
            << " s, final loss "
            << (rec.loss_trace.empty() ? std::nan("") : rec.loss_trace.back()) << "\n";
  for (const auto& [name, value] : rec.snapshots.back().metrics.long_rows()) {
    std::cout << "  " << name << " = " << value << "\n";
  }
  std::cout << "outputs in " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_grid(const TrainConfig& cfg, const std::string& grid_text, const std::string& metric,
             const std::string& out_override) {
  const auto grid = parse_grid(grid_text);
  check_metric_name(metric);
  const auto in = load_inputs(cfg);
  LoadedDataset ds;
  ds.name = cfg.data;
  ds.vocab = in.data.vocab;
  ds.data = in.data.data;
  ds.ground_truth = in.ground_truth;
  const auto res = grid_search_temperature(cfg, grid, ds, metric);
  const fs::path out_dir = !out_override.empty()       ? fs::path(out_override)
                           : !cfg.output_dir.empty() ? fs::path(cfg.output_dir)
                                                     : fs::path("runs");
  const std::string stem = "grid-" + cfg.hash();
  write_text_file(out_dir / (stem + ".csv"), grid_csv(res));
  write_json_file(out_dir / (stem + ".json"), grid_json(res));
  Series s{to_string(cfg.method), {}, {}};
  for (const auto& r : res.rows) {
    if (!r.value) continue;
    s.x.push_back(r.temperature);
    s.y.push_back(*r.value);
  }
  write_text_file(out_dir / (stem + ".svg"),
                  svg_line_chart({s}, {metric + " vs temperature", "T", metric, true}));
  for (const auto& r : res.rows) {
    std::cout << "T=" << r.temperature << "  "
              << (r.value ? std::to_string(*r.value) : "failed: " + r.error) << "\n";
  }
  if (res.best_temperature) {
    std::cout << "best T=" << *res.best_temperature << " " << metric << "=" << *res.best_value
              << "\n";
  } else {
    std::cout << "no run completed\n";
  }
  std::cout << "outputs in " << out_dir.string() << "\n";
  return res.best_temperature ? kExitOk : kExitNumerical;
}

void write_suite_outputs(const SuiteConfig& suite, const std::vector<AggregateRow>& table,
                         const fs::path& out_dir, const std::string& note) {
  std::vector<std::string> methods;
  for (const auto& m : suite.methods) methods.push_back(m.label);
  write_text_file(out_dir / "table.csv", aggregate_csv(table));
  write_json_file(out_dir / "table.json", aggregate_json(table));
  write_text_file(out_dir / "table.md", method_table_markdown(table, methods, {}, note));
  for (const auto& metric : suite.metrics) {
    std::string file = metric;
    for (auto& ch : file) {
      if (ch == '@') ch = '_';
    }
    write_text_file(out_dir / ("bars-" + file + ".svg"),
                    svg_bar_chart(table, metric, {metric, "dataset", metric}));
  }
}

std::string budget_note(const SuiteConfig& suite) {
  return "Training budget (learning rate, epochs, optimizer) is this tool's choice: " +
         suite.base.dump() + ". Mean ± sample std over seeds " + json(suite.seeds).dump() + ".";
}

int cmd_suite(const std::string& suite_file, const std::string& out) {
  const auto suite = SuiteConfig::from_json(read_json_file(suite_file));
  const fs::path out_dir = out.empty() ? fs::path("suite") : fs::path(out);
  fs::create_directories(out_dir);
  std::ofstream runs(out_dir / "runs.jsonl");
  std::size_t failures = 0;
  const auto res = run_experiment_suite(suite, [&](const SuiteRun& r) {
    json line = {{"method", r.method}, {"dataset", r.dataset}, {"seed", r.seed}};
    if (r.error.empty()) {
      line["record"] = r.record.to_json();
      line["metrics"] = r.final_metrics.to_json();
    } else {
      line["error"] = r.error;
      ++failures;
    }
    runs << line.dump() << "\n" << std::flush;
    std::cout << r.dataset << " seed " << r.seed << " " << r.method << ": "
              << (r.error.empty() ? "ok" : "failed: " + r.error) << std::endl;
  });
  write_json_file(out_dir / "suite.json", suite.to_json());
  write_suite_outputs(suite, res.table, out_dir, budget_note(suite));
  std::cout << method_table_markdown(res.table, [&] {
    std::vector<std::string> m;
    for (const auto& x : suite.methods) m.push_back(x.label);
    return m;
  }());
  std::cout << "outputs in " << out_dir.string() << "\n";
  return failures == res.runs.size() ? kExitNumerical : kExitOk;
}

int cmd_eval(const json& opts) {
  const auto ckpt = load_checkpoint(opts["checkpoint"].get<std::string>());
  auto data = load_pair_cache(opts["data"].get<std::string>());
  if (ckpt.vocab.context_labels != data.vocab.context_labels ||
      ckpt.vocab.target_labels != data.vocab.target_labels) {
    throw DataError("checkpoint labels do not match the dataset vocabulary");
  }
  std::optional<GroundTruth> gt;
  if (!opts["ground_truth"].get<std::string>().empty()) {
    gt = load_ground_truth(opts["ground_truth"].get<std::string>());
  }
  TrainConfig cfg;
  cfg.eval_split = opts["split"];
  cfg.mpr_negatives = opts["mpr_negatives"];
  cfg.eval_seed = opts["eval_seed"];
  cfg.prec_ks.clear();
  for (const auto& k : split_list(opts["prec_ks"])) cfg.prec_ks.push_back(std::stoul(k));
  auto report = evaluate_model(ckpt.params, data.vocab, data.data, gt ? &*gt : nullptr, cfg);
  for (const auto& f : opts["similarity"]) {
    const fs::path p = f.get<std::string>();
    const auto triples = load_similarity_file(p);
    const auto r = similarity_eval(ckpt.params, data.vocab, triples);
    report.similarity[p.stem().string()] = r.correlation;
    std::cout << p.stem().string() << ": pearson " << r.correlation << " over " << r.used
              << " pairs (" << r.out_of_vocab << " out of vocabulary)\n";
  }
  if (!opts["analogy"].get<std::string>().empty()) {
    const auto quads = load_analogy_file(opts["analogy"].get<std::string>());
    const std::vector<std::size_t> ks = {1, 5, 15};
    const auto r = analogy_eval(ckpt.params, data.vocab, quads, ks);
    report.analogy = r.precision;
    std::cout << "analogy: " << r.used << " questions used, " << r.out_of_vocab
              << " out of vocabulary\n";
  }
  report.validate();
  for (const auto& [name, value] : report.long_rows()) {
    std::cout << name << " = " << value << "\n";
  }
  if (!opts["out"].get<std::string>().empty()) {
    write_json_file(opts["out"].get<std::string>(), report.to_json());
  }
  return kExitOk;
}

int cmd_report(const json& opts) {
  const fs::path out_dir = opts["out"].get<std::string>();
  bool did = false;
  if (!opts["table"].get<std::string>().empty()) {
    const auto j = read_json_file(opts["table"].get<std::string>());
    std::vector<AggregateRow> rows;
    std::vector<std::string> methods;
    for (const auto& r : j) {
      AggregateRow row;
      row.method = r.at("method");
      row.dataset = r.at("dataset");
      row.metric = r.at("metric");
      row.mean = json_real(r.at("mean"));
      row.std = json_real(r.at("std"));
      row.n = r.at("n");
      row.failures = r.value("failures", std::size_t{0});
      if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
        methods.push_back(row.method);
      }
      rows.push_back(row);
    }
    if (!opts["methods"].get<std::string>().empty()) methods = split_list(opts["methods"]);
    write_text_file(out_dir / "table.md", method_table_markdown(rows, methods));
    write_text_file(out_dir / "table.csv", aggregate_csv(rows));
    did = true;
  }
  if (!opts["grid"].get<std::string>().empty()) {
    std::vector<Series> series;
    std::string metric;
    for (const auto& path : split_list(opts["grid"])) {
      const auto j = read_json_file(path);
      metric = j.value("metric", std::string("metric"));
      Series s{fs::path(path).stem().string(), {}, {}};
      for (const auto& r : j.at("rows")) {
        if (r.at("value").is_null()) continue;
        s.x.push_back(json_real(r.at("temperature")));
        s.y.push_back(json_real(r.at("value")));
      }
      series.push_back(std::move(s));
    }
    write_text_file(out_dir / "grid.svg",
                    svg_line_chart(series, {metric + " vs temperature", "T", metric, true}));
    did = true;
  }
  if (!opts["run"].get<std::string>().empty()) {
    const auto j = read_json_file(opts["run"].get<std::string>());
    RunRecord rec;
    rec.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    for (const auto& s : j.at("snapshots")) {
      Snapshot snap;
      snap.step = s.at("step");
      snap.metrics = MetricsReport::from_json(s.at("metrics"));
      rec.snapshots.push_back(std::move(snap));
    }
    write_text_file(out_dir / "loss.csv", loss_trace_csv(rec));
    write_snapshot_chart(rec, out_dir / "kl.svg");
    did = true;
  }
  if (!did) throw ConfigError("report needs --table, --grid or --run");
  std::cout << "outputs in " << out_dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relaxed softmax embedding trainer"};
  app.require_subcommand(1);

  std::size_t s_ci = 200, s_cj = 200, s_k = 50, s_n = 300000;
  std::uint64_t s_ms = 1, s_ss = 2, s_sp = 3;
  double s_lo = 0.02, s_hi = 0.08, s_tr = 1.0, s_va = 0.0, s_te = 0.0;
  std::string s_out;
  auto* synth_cmd = app.add_subcommand("synth-gen", "Sample a Gaussian-mixture pair dataset");
  synth_cmd->add_option("--card-i", s_ci, "Number of contexts")->capture_default_str();
  synth_cmd->add_option("--card-j", s_cj, "Number of targets")->capture_default_str();
  synth_cmd->add_option("--components", s_k, "Mixture components")->capture_default_str();
  synth_cmd->add_option("--pairs", s_n, "Pairs to sample")->capture_default_str();
  synth_cmd->add_option("--mixture-seed", s_ms)->capture_default_str();
  synth_cmd->add_option("--sample-seed", s_ss)->capture_default_str();
  synth_cmd->add_option("--split-seed", s_sp)->capture_default_str();
  synth_cmd->add_option("--sigma-lo", s_lo)->capture_default_str();
  synth_cmd->add_option("--sigma-hi", s_hi)->capture_default_str();
  synth_cmd->add_option("--train", s_tr, "Train fraction")->capture_default_str();
  synth_cmd->add_option("--valid", s_va, "Validation fraction")->capture_default_str();
  synth_cmd->add_option("--test", s_te, "Test fraction")->capture_default_str();
  synth_cmd->add_option("-o,--out", s_out, "Output base path")->required();

  std::string t_in, t_out;
  std::size_t t_bytes = 0, t_vocab = 15000, t_window = 3;
  bool t_bidir = false;
  std::uint64_t t_seed = 3;
  double t_tr = 0.7, t_va = 0.1, t_te = 0.2;
  auto* text_cmd = app.add_subcommand("ingest-text", "Window a whitespace-tokenized corpus");
  text_cmd->add_option("-i,--input", t_in, "Corpus file")->required();
  text_cmd->add_option("--max-bytes", t_bytes, "Read only this many leading bytes (0 = all)");
  text_cmd->add_option("--vocab-size", t_vocab)->capture_default_str();
  text_cmd->add_option("--window", t_window)->capture_default_str();
  text_cmd->add_flag("--bidirectional", t_bidir, "Also emit reversed pairs");
  text_cmd->add_option("--split-seed", t_seed)->capture_default_str();
  text_cmd->add_option("--train", t_tr)->capture_default_str();
  text_cmd->add_option("--valid", t_va)->capture_default_str();
  text_cmd->add_option("--test", t_te)->capture_default_str();
  text_cmd->add_option("-o,--out", t_out, "Output base path")->required();

  std::string r_in, r_out;
  RatingColumns r_cols;
  double r_threshold = 4.0;
  std::size_t r_items = 20000, r_window = 3;
  std::uint64_t r_seed = 3;
  double r_tr = 0.7, r_va = 0.1, r_te = 0.2;
  auto* rat_cmd = app.add_subcommand("ingest-ratings", "Build item pairs from user timelines");
  rat_cmd->add_option("-i,--input", r_in, "Ratings CSV with a header row")->required();
  rat_cmd->add_option("--user-col", r_cols.user)->capture_default_str();
  rat_cmd->add_option("--item-col", r_cols.item)->capture_default_str();
  rat_cmd->add_option("--rating-col", r_cols.rating)->capture_default_str();
  rat_cmd->add_option("--timestamp-col", r_cols.timestamp, "Empty keeps file order");
  rat_cmd->add_option("--threshold", r_threshold, "Minimum rating kept")->capture_default_str();
  rat_cmd->add_option("--max-items", r_items, "Item vocabulary cap")->capture_default_str();
  rat_cmd->add_option("--window", r_window)->capture_default_str();
  rat_cmd->add_option("--split-seed", r_seed)->capture_default_str();
  rat_cmd->add_option("--train", r_tr)->capture_default_str();
  rat_cmd->add_option("--valid", r_va)->capture_default_str();
  rat_cmd->add_option("--test", r_te)->capture_default_str();
  rat_cmd->add_option("-o,--out", r_out, "Output base path")->required();

  ConfigOptions train_opts;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_opts.attach(train_cmd);
  train_cmd->add_option("-o,--out", train_out, "Output directory (overrides output_dir)");

  ConfigOptions grid_opts;
  std::string grid_text = "0.5,1,3,6,12,36", grid_metric = "kl_joint", grid_out;
  auto* grid_cmd = app.add_subcommand("grid-temp", "Train once per temperature");
  grid_opts.attach(grid_cmd);
  grid_cmd->add_option("--grid", grid_text, "Comma-separated temperatures, 'inf' allowed")
      ->capture_default_str();
  grid_cmd->add_option("--metric", grid_metric, "kl_joint, kl_true, likelihood, mpr or prec@k")
      ->capture_default_str();
  grid_cmd->add_option("-o,--out", grid_out, "Output directory");

  std::string suite_file, suite_out;
  auto* suite_cmd = app.add_subcommand("suite", "Run methods x datasets x seeds");
  suite_cmd->add_option("suite_file", suite_file, "Suite JSON")->required();
  suite_cmd->add_option("-o,--out", suite_out, "Output directory");

  std::string e_ckpt, e_data, e_gt, e_split = "test", e_ks = "1,5,15,50", e_analogy, e_out;
  std::vector<std::string> e_sim;
  std::size_t e_m = 100;
  std::uint64_t e_seed = 7;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", e_ckpt)->required();
  eval_cmd->add_option("--data", e_data, "Pair cache base path")->required();
  eval_cmd->add_option("--ground-truth", e_gt);
  eval_cmd->add_option("--split", e_split, "valid, test or none")->capture_default_str();
  eval_cmd->add_option("--prec-ks", e_ks)->capture_default_str();
  eval_cmd->add_option("--mpr-negatives", e_m)->capture_default_str();
  eval_cmd->add_option("--eval-seed", e_seed)->capture_default_str();
  eval_cmd->add_option("--similarity", e_sim, "Similarity file (repeatable)");
  eval_cmd->add_option("--analogy", e_analogy, "Analogy questions file");
  eval_cmd->add_option("-o,--out", e_out, "Metrics JSON path");

  std::string x_ckpt, x_out;
  auto* export_cmd = app.add_subcommand("export-embeddings", "Write context vectors as text");
  export_cmd->add_option("--checkpoint", x_ckpt)->required();
  export_cmd->add_option("-o,--out", x_out)->required();

  std::string p_table, p_grid, p_run, p_methods, p_out = "report";
  auto* report_cmd = app.add_subcommand("report", "Re-render tables and charts");
  report_cmd->add_option("--table", p_table, "Aggregate table JSON from a suite");
  report_cmd->add_option("--grid", p_grid, "Comma-separated grid JSON files");
  report_cmd->add_option("--run", p_run, "RunRecord JSON");
  report_cmd->add_option("--methods", p_methods, "Column order, comma-separated");
  report_cmd->add_option("-o,--out", p_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth_cmd) {
      const json synth = {{"card_i", s_ci},  {"card_j", s_cj},   {"components", s_k}, {"pairs", s_n},
               {"mixture_seed", s_ms}, {"sample_seed", s_ss}, {"split_seed", s_sp},
               {"sigma_lo", s_lo}, {"sigma_hi", s_hi}, {"train", s_tr}, {"valid", s_va},
               {"test", s_te},    {"out", s_out}};
      return cmd_synth_gen(synth);
    }
    if (*text_cmd) {
      const auto tokens = read_tokens(t_in, t_bytes);
      auto r = pairs_from_text(tokens, t_window, t_vocab, t_bidir);
      split_and_save(std::move(r), {t_tr, t_va, t_te}, t_seed, t_out,
                     {{"source", t_in}, {"max_bytes", t_bytes}, {"window", t_window}});
      return kExitOk;
    }
    if (*rat_cmd) {
      const auto events = load_ratings_csv(r_in, r_cols);
      auto r = pairs_from_ratings(events, r_threshold, r_items, r_window);
      split_and_save(std::move(r), {r_tr, r_va, r_te}, r_seed, r_out,
                     {{"source", r_in}, {"threshold", r_threshold}, {"window", r_window}});
      return kExitOk;
    }
    if (*train_cmd) return cmd_train(train_opts.resolve(), train_out);
    if (*grid_cmd) return cmd_grid(grid_opts.resolve(), grid_text, grid_metric, grid_out);
    if (*suite_cmd) return cmd_suite(suite_file, suite_out);
    if (*eval_cmd) {
      return cmd_eval({{"checkpoint", e_ckpt}, {"data", e_data}, {"ground_truth", e_gt},
                       {"split", e_split}, {"prec_ks", e_ks}, {"mpr_negatives", e_m},
                       {"eval_seed", e_seed}, {"similarity", e_sim}, {"analogy", e_analogy},
                       {"out", e_out}});
    }
    if (*export_cmd) {
      const auto ckpt = load_checkpoint(x_ckpt);
      export_word2vec_text(ckpt.params, ckpt.vocab, x_out);
      std::cout << "wrote " << ckpt.vocab.card_i() << " vectors to " << x_out << "\n";
      return kExitOk;
    }
    if (*report_cmd) {
      return cmd_report({{"table", p_table}, {"grid", p_grid}, {"run", p_run},
                         {"methods", p_methods}, {"out", p_out}});
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}
