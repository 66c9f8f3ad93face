#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsoft/neg_sampling.hpp"

namespace rsoft {

/// The compared training methods: full softmax, sampled softmax with a
/// popularity proposal, Relaxed Softmax with four negative samplers, and the
/// binary cross-entropy baseline.
enum class Method { MLE, SS, US, PS, UBS, PBS, BCE };

std::string to_string(Method m);
Method parse_method(const std::string& s);
bool is_sampled(Method m);
bool is_relaxed_softmax(Method m);

enum class Optimizer { sgd, adagrad, adam };
std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

enum class LrSchedule { constant, linear };

enum class BoltzmannCache {
  none,   // score row recomputed per pair
  batch,  // one GEMM over the batch's distinct contexts
};

struct TrainConfig {
  Method method = Method::UBS;
  /// 0 selects the method default: 5 for RS and BCE, 50 for SS.
  std::size_t n_negatives = 0;
  double temperature = 1.0;
  /// Overrides the Boltzmann degeneracy of UBS/PBS when non-empty
  /// ("uniform", "popularity", "oracle_inverse_p").
  std::string degeneracy;
  double popularity_exponent = 1.0;
  bool include_positive = true;

  std::size_t batch_size = 512;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // > 0 caps the step count
  bool shuffle = true;

  Optimizer optimizer = Optimizer::sgd;
  double learning_rate = 0.025;
  LrSchedule lr_schedule = LrSchedule::linear;
  double min_lr_fraction = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double optimizer_eps = 1e-8;

  std::size_t dim = 64;
  double init_scale = 0.0;  // 0 selects 0.5 / dim
  std::uint64_t seed = 1;

  std::size_t threads = 1;
  BoltzmannCache boltzmann_cache = BoltzmannCache::none;

  std::size_t eval_every = 0;  // steps between snapshots; 0 = final only
  std::string eval_split = "valid";  // "valid", "test" or "none"
  std::size_t mpr_negatives = 100;
  std::vector<std::size_t> prec_ks = {1, 10, 50};
  std::uint64_t eval_seed = 7;

  std::string data;          // pair cache base path
  std::string ground_truth;  // optional ground-truth file
  std::string output_dir;
  std::string checkpoint_dtype = "f32";

  std::size_t resolved_negatives() const;
  /// The sampler behind the method, with the degeneracy override applied.
  SamplerSpec sampler_spec() const;
  double resolved_init_scale() const;

  /// Throws ConfigError on any invalid combination.
  void validate() const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
  /// FNV-1a 64 of the canonical JSON, as 16 hex digits.
  std::string hash() const;
};

/// Parses "value" text from a key=value file or --set flag: JSON literals
/// (numbers, booleans, arrays, quoted strings) pass through, anything else is
/// a bare string.
nlohmann::json parse_setting_value(const std::string& text);

/// Applies "key=value" to a JSON object.
void apply_setting(nlohmann::json& target, const std::string& assignment);

/// Reads a JSON object, or key=value lines with '#' comments.
nlohmann::json load_settings_file(const std::filesystem::path& path);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace rsoft
