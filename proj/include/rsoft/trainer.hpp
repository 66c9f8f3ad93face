#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsoft/config.hpp"
#include "rsoft/core_model.hpp"
#include "rsoft/evaluation.hpp"
#include "rsoft/ingestion.hpp"
#include "rsoft/synthetic.hpp"

namespace rsoft {

struct Snapshot {
  std::size_t step = 0;
  double epoch = 0.0;
  double elapsed_s = 0.0;
  MetricsReport metrics;
};

struct RunRecord {
  nlohmann::json config;  // resolved TrainConfig
  std::string config_hash;
  std::vector<double> loss_trace;  // mean batch loss per step
  std::vector<Snapshot> snapshots;
  std::string checkpoint_path;
  double wall_time_s = 0.0;
  std::size_t steps = 0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  RunRecord record;
  ModelParams params;
};

/// Everything the trainer reads besides the config.
struct TrainInputs {
  const Vocab* vocab = nullptr;
  const PairDataset* data = nullptr;
  const GroundTruth* ground_truth = nullptr;  // optional; enables KL metrics and oracle D
  /// Starting parameters; freshly initialized from the config seed when empty.
  std::optional<ModelParams> init;
};

/// Called after every step with (step, mean batch loss).
using StepCallback = std::function<void(std::size_t, double)>;

/// Mini-batch training. Each batch's gradients are computed at the parameters
/// from the start of the batch, averaged over the batch and applied sparsely to
/// the touched rows. Throws NumericalError on a non-finite loss or parameter.
TrainResult train(const TrainConfig& config, const TrainInputs& inputs,
                  const StepCallback& on_step = {});

/// Metrics of the current parameters on the configured evaluation split, plus
/// KL metrics when a ground truth is available.
MetricsReport evaluate_model(const ModelParams& params, const Vocab& vocab,
                             const PairDataset& data, const GroundTruth* gt,
                             const TrainConfig& config);

/// Summed (not averaged) full-softmax gradients of a batch via dense matrix
/// products. Returns the summed loss; grad_w is card(I) x d, grad_o card(J) x d.
double mle_batch_gradient(const ModelParams& params, std::span<const Pair> batch, Matrix& grad_w,
                          Matrix& grad_o);

/// Score rows G(c, .) for the listed contexts, one row per entry.
Matrix score_rows(const ModelParams& params, std::span<const ContextId> contexts);

/// Writes `<dir>/<hash>.ckpt` and `<dir>/<hash>.json` and fills checkpoint_path.
void write_run_outputs(RunRecord& record, const ModelParams& params, const Vocab& vocab,
                       const std::filesystem::path& dir, CheckpointDtype dtype);

}  // namespace rsoft
