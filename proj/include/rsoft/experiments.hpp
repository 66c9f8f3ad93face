#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsoft/config.hpp"
#include "rsoft/ingestion.hpp"
#include "rsoft/synthetic.hpp"
#include "rsoft/trainer.hpp"

namespace rsoft {

/// A dataset an experiment can (re)build: a synthetic mixture or a pair cache.
struct DatasetSpec {
  std::string name = "synthetic";
  std::string kind = "synthetic";  // "synthetic" or "pairs"

  std::size_t card_i = 200;
  std::size_t card_j = 200;
  std::size_t components = 50;
  std::size_t n_pairs = 300000;
  std::uint64_t mixture_seed = 1;
  std::uint64_t sample_seed = 2;
  SigmaRange sigma_range;
  /// Re-derive the sample seed from each run's seed.
  bool resample_per_seed = false;

  std::string path;          // pair cache base for kind == "pairs"
  std::string ground_truth;  // optional ground-truth file for kind == "pairs"

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

struct LoadedDataset {
  std::string name;
  Vocab vocab;
  PairDataset data;
  std::optional<GroundTruth> ground_truth;
};

LoadedDataset load_dataset(const DatasetSpec& spec, std::uint64_t run_seed = 0);

/// Metric names: kl_joint, kl_true, kl_empirical, likelihood, mpr, prec@<k>.
bool metric_lower_is_better(const std::string& metric);
void check_metric_name(const std::string& metric);
std::optional<double> metric_value(const MetricsReport& report, const std::string& metric);

struct GridRow {
  double temperature = 0.0;
  std::optional<double> value;
  std::string error;  // non-empty when the run aborted
  RunRecord record;
};

struct GridResult {
  std::string metric;
  bool minimize = true;
  std::vector<GridRow> rows;
  std::optional<double> best_temperature;  // over completed runs
  std::optional<double> best_value;
};

/// One full training run per temperature, scored on the final snapshot. Runs
/// that throw are kept in the table with their error.
GridResult grid_search_temperature(const TrainConfig& base, const std::vector<double>& grid,
                                   const LoadedDataset& dataset, const std::string& metric);

struct SuiteMethod {
  std::string label;
  nlohmann::json overrides;  // TrainConfig keys applied on top of the base
};

struct SuiteConfig {
  nlohmann::json base = nlohmann::json::object();
  std::vector<SuiteMethod> methods;
  std::vector<DatasetSpec> datasets;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<std::string> metrics = {"kl_joint"};

  static SuiteConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SuiteRun {
  std::string method;
  std::string dataset;
  std::uint64_t seed = 0;
  std::string error;
  RunRecord record;
  MetricsReport final_metrics;
};

struct AggregateRow {
  std::string method;
  std::string dataset;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
  std::size_t failures = 0;
};

struct SuiteResult {
  std::vector<SuiteRun> runs;
  std::vector<AggregateRow> table;
};

/// Mean and sample std per (method, dataset, metric), in suite order.
std::vector<AggregateRow> aggregate_runs(const std::vector<SuiteRun>& runs,
                                         const std::vector<std::string>& methods,
                                         const std::vector<std::string>& datasets,
                                         const std::vector<std::string>& metrics);

using SuiteProgress = std::function<void(const SuiteRun&)>;

SuiteResult run_experiment_suite(const SuiteConfig& suite, const SuiteProgress& progress = {});

}  // namespace rsoft
