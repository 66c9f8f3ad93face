#include "rsoft/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rsoft/errors.hpp"
#include "rsoft/random.hpp"

namespace rsoft {

nlohmann::json DatasetSpec::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["kind"] = kind;
  if (kind == "synthetic") {
    j["card_i"] = card_i;
    j["card_j"] = card_j;
    j["components"] = components;
    j["n_pairs"] = n_pairs;
    j["mixture_seed"] = mixture_seed;
    j["sample_seed"] = sample_seed;
    j["sigma_lo"] = sigma_range.lo;
    j["sigma_hi"] = sigma_range.hi;
    j["resample_per_seed"] = resample_per_seed;
  } else {
    j["path"] = path;
    j["ground_truth"] = ground_truth;
  }
  return j;
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("dataset spec must be an object");
  DatasetSpec d;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "name") d.name = v.get<std::string>();
      else if (key == "kind") d.kind = v.get<std::string>();
      else if (key == "card_i") d.card_i = v.get<std::size_t>();
      else if (key == "card_j") d.card_j = v.get<std::size_t>();
      else if (key == "card") d.card_i = d.card_j = v.get<std::size_t>();
      else if (key == "components") d.components = v.get<std::size_t>();
      else if (key == "n_pairs") d.n_pairs = v.get<std::size_t>();
      else if (key == "mixture_seed") d.mixture_seed = v.get<std::uint64_t>();
      else if (key == "sample_seed") d.sample_seed = v.get<std::uint64_t>();
      else if (key == "sigma_lo") d.sigma_range.lo = v.get<double>();
      else if (key == "sigma_hi") d.sigma_range.hi = v.get<double>();
      else if (key == "resample_per_seed") d.resample_per_seed = v.get<bool>();
      else if (key == "path") d.path = v.get<std::string>();
      else if (key == "ground_truth") d.ground_truth = v.get<std::string>();
      else throw ConfigError("unknown dataset key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset spec: ") + e.what());
  }
  if (d.kind != "synthetic" && d.kind != "pairs") {
    throw ConfigError("dataset kind must be synthetic or pairs");
  }
  if (d.kind == "pairs" && d.path.empty()) throw ConfigError("pairs dataset needs a path");
  return d;
}

LoadedDataset load_dataset(const DatasetSpec& spec, std::uint64_t run_seed) {
  LoadedDataset out;
  out.name = spec.name;
  if (spec.kind == "synthetic") {
    out.ground_truth = build_mixture(spec.card_i, spec.card_j, spec.components, spec.mixture_seed,
                                     spec.sigma_range);
    const std::uint64_t s =
        spec.resample_per_seed ? derive_seed(spec.sample_seed, run_seed) : spec.sample_seed;
    out.data = sample_pairs(*out.ground_truth, spec.n_pairs, s);
    out.vocab = grid_vocab(*out.ground_truth, out.data);
  } else {
    auto r = load_pair_cache(spec.path);
    out.vocab = std::move(r.vocab);
    out.data = std::move(r.data);
    if (!spec.ground_truth.empty()) out.ground_truth = load_ground_truth(spec.ground_truth);
  }
  return out;
}

bool metric_lower_is_better(const std::string& metric) {
  check_metric_name(metric);
  return metric.rfind("kl_", 0) == 0;
}

void check_metric_name(const std::string& metric) {
  if (metric == "kl_joint" || metric == "kl_true" || metric == "kl_empirical" ||
      metric == "likelihood" || metric == "mpr") {
    return;
  }
  if (metric.rfind("prec@", 0) == 0 && metric.size() > 5 &&
      metric.find_first_not_of("0123456789", 5) == std::string::npos) {
    return;
  }
  throw ConfigError("unknown metric '" + metric + "'");
}

std::optional<double> metric_value(const MetricsReport& report, const std::string& metric) {
  check_metric_name(metric);
  if (metric == "likelihood") return report.likelihood;
  if (metric == "mpr") return report.mpr;
  if (metric.rfind("prec@", 0) == 0) {
    const auto it = report.prec_at.find(std::stoul(metric.substr(5)));
    if (it == report.prec_at.end()) return std::nullopt;
    return it->second;
  }
  const auto it = report.kl.find(metric);
  if (it == report.kl.end()) return std::nullopt;
  return it->second;
}

namespace {

TrainInputs inputs_for(const LoadedDataset& d) {
  TrainInputs in;
  in.vocab = &d.vocab;
  in.data = &d.data;
  in.ground_truth = d.ground_truth ? &*d.ground_truth : nullptr;
  return in;
}

}  // namespace

GridResult grid_search_temperature(const TrainConfig& base, const std::vector<double>& grid,
                                   const LoadedDataset& dataset, const std::string& metric) {
  if (grid.empty()) throw ConfigError("temperature grid is empty");
  GridResult res;
  res.metric = metric;
  res.minimize = metric_lower_is_better(metric);
  for (double t : grid) {
    GridRow row;
    row.temperature = t;
    try {
      TrainConfig cfg = base;
      cfg.temperature = t;
      cfg.validate();
      auto r = train(cfg, inputs_for(dataset));
      row.value = metric_value(r.record.snapshots.back().metrics, metric);
      if (!row.value) row.error = "metric " + metric + " unavailable for this dataset";
      row.record = std::move(r.record);
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (row.value && (!res.best_value || (res.minimize ? *row.value < *res.best_value
                                                      : *row.value > *res.best_value))) {
      res.best_value = row.value;
      res.best_temperature = t;
    }
    res.rows.push_back(std::move(row));
  }
  return res;
}

SuiteConfig SuiteConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("suite config must be an object");
  SuiteConfig s;
  for (const auto& [key, v] : j.items()) {
    if (key == "base") {
      if (!v.is_object()) throw ConfigError("suite base must be an object");
      s.base = v;
    } else if (key == "methods") {
      for (const auto& m : v) {
        SuiteMethod sm;
        if (m.is_string()) {
          sm.label = m.get<std::string>();
          sm.overrides = {{"method", sm.label}};
        } else if (m.is_object()) {
          sm.overrides = m;
          if (m.contains("label")) {
            sm.label = m["label"].get<std::string>();
            sm.overrides.erase("label");
          } else {
            sm.label = m.value("method", std::string("?"));
          }
        } else {
          throw ConfigError("suite methods entries must be names or objects");
        }
        s.methods.push_back(std::move(sm));
      }
    } else if (key == "datasets") {
      for (const auto& d : v) s.datasets.push_back(DatasetSpec::from_json(d));
    } else if (key == "seeds") {
      s.seeds = v.get<std::vector<std::uint64_t>>();
    } else if (key == "metrics") {
      s.metrics = v.get<std::vector<std::string>>();
    } else {
      throw ConfigError("unknown suite key '" + key + "'");
    }
  }
  // A method listed twice gets its own row, labelled "<label>#2" and so on.
  std::map<std::string, int> seen;
  for (auto& m : s.methods) {
    const int n = ++seen[m.label];
    if (n > 1) m.label += "#" + std::to_string(n);
  }
  if (s.methods.empty() || s.datasets.empty() || s.seeds.empty()) {
    throw ConfigError("suite needs methods, datasets and seeds");
  }
  for (const auto& m : s.metrics) check_metric_name(m);
  return s;
}

nlohmann::json SuiteConfig::to_json() const {
  nlohmann::json j;
  j["base"] = base;
  auto ms = nlohmann::json::array();
  for (const auto& m : methods) {
    auto o = m.overrides;
    o["label"] = m.label;
    ms.push_back(o);
  }
  j["methods"] = ms;
  auto ds = nlohmann::json::array();
  for (const auto& d : datasets) ds.push_back(d.to_json());
  j["datasets"] = ds;
  j["seeds"] = seeds;
  j["metrics"] = metrics;
  return j;
}

std::vector<AggregateRow> aggregate_runs(const std::vector<SuiteRun>& runs,
                                         const std::vector<std::string>& methods,
                                         const std::vector<std::string>& datasets,
                                         const std::vector<std::string>& metrics) {
  std::vector<AggregateRow> rows;
  for (const auto& ds : datasets) {
    for (const auto& m : methods) {
      for (const auto& metric : metrics) {
        AggregateRow row{m, ds, metric};
        std::vector<double> values;
        for (const auto& r : runs) {
          if (r.method != m || r.dataset != ds) continue;
          const auto v = r.error.empty() ? metric_value(r.final_metrics, metric) : std::nullopt;
          if (v) values.push_back(*v);
          else ++row.failures;
        }
        row.n = values.size();
        if (!values.empty()) {
          double sum = 0.0;
          for (double v : values) sum += v;
          row.mean = sum / static_cast<double>(values.size());
          if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - row.mean) * (v - row.mean);
            row.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
          }
        } else {
          row.mean = std::numeric_limits<double>::quiet_NaN();
          row.std = std::numeric_limits<double>::quiet_NaN();
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

SuiteResult run_experiment_suite(const SuiteConfig& suite, const SuiteProgress& progress) {
  SuiteResult res;
  std::vector<std::string> method_labels, dataset_names;
  for (const auto& m : suite.methods) method_labels.push_back(m.label);
  for (const auto& d : suite.datasets) dataset_names.push_back(d.name);

  for (const auto& ds : suite.datasets) {
    std::optional<LoadedDataset> shared;
    if (!ds.resample_per_seed) shared = load_dataset(ds);
    for (const auto seed : suite.seeds) {
      std::optional<LoadedDataset> own;
      if (!shared) own = load_dataset(ds, seed);
      const LoadedDataset& data = shared ? *shared : *own;
      for (const auto& m : suite.methods) {
        SuiteRun run;
        run.method = m.label;
        run.dataset = ds.name;
        run.seed = seed;
        try {
          nlohmann::json cfg_json = suite.base;
          for (const auto& [k, v] : m.overrides.items()) cfg_json[k] = v;
          cfg_json["seed"] = seed;
          const auto cfg = TrainConfig::from_json(cfg_json);
          auto r = train(cfg, inputs_for(data));
          run.final_metrics = r.record.snapshots.back().metrics;
          run.final_metrics.run_id = m.label + "/" + ds.name + "/" + std::to_string(seed);
          run.record = std::move(r.record);
        } catch (const Error& e) {
          run.error = e.what();
        }
        if (progress) progress(run);
        res.runs.push_back(std::move(run));
      }
    }
  }
  res.table = aggregate_runs(res.runs, method_labels, dataset_names, suite.metrics);
  return res;
}

}  // namespace rsoft
