#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rsoft/core_model.hpp"
#include "rsoft/ingestion.hpp"

namespace rsoft {

/// Mean over pairs of the full-softmax probability g_i(j).
double test_likelihood(const ModelParams& params, std::span<const Pair> pairs);

inline constexpr std::size_t kDefaultMprNegatives = 100;

/// Mean over pairs and m uniform negatives of 1[G(i,j) > G(i,j')], ties 0.5.
/// Pair k draws its m negatives from Rng(derive_seed(seed, k)), so the value does
/// not depend on evaluation order. A drawn negative may equal j (a tie).
double approx_mpr(const ModelParams& params, std::span<const Pair> pairs,
                  std::size_t m_negatives, std::uint64_t seed);

/// Fraction of pairs whose target ranks within the top k over all of J. A
/// target's rank counts strictly higher scores plus equal scores at smaller ids.
double precision_at_k(const ModelParams& params, std::span<const Pair> pairs, std::size_t k);

/// Several k at once, sharing the score rows.
std::map<std::size_t, double> precision_at_ks(const ModelParams& params,
                                              std::span<const Pair> pairs,
                                              std::span<const std::size_t> ks);

/// 1-based rank of j among all targets of context i under the rule above.
std::size_t target_rank(std::span<const double> scores, TargetId j);

enum class Correlation { pearson, spearman };

struct SimilarityResult {
  double correlation = 0.0;
  std::size_t used = 0;
  std::size_t out_of_vocab = 0;
};

/// Correlation between human scores and the cosine of W rows (looked up by
/// context label).
SimilarityResult similarity_eval(const ModelParams& params, const Vocab& vocab,
                                 std::span<const SimilarityTriple> triples,
                                 Correlation kind = Correlation::pearson);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct AnalogyResult {
  /// Keyed by ("semantic" | "syntactic" | "all", k). Categories without usable
  /// questions are omitted.
  std::map<std::pair<std::string, std::size_t>, double> precision;
  std::size_t used = 0;
  std::size_t out_of_vocab = 0;
};

/// 3CosAdd over W rows: candidates are ranked by cosine to W_b - W_a + W_c,
/// with a, b and c excluded and ties broken by ascending id.
AnalogyResult analogy_eval(const ModelParams& params, const Vocab& vocab,
                           std::span<const AnalogyQuad> quads, std::span<const std::size_t> ks);

struct MetricsReport {
  std::optional<double> likelihood;
  std::optional<double> mpr;
  std::map<std::size_t, double> prec_at;
  std::map<std::string, double> similarity;
  std::map<std::pair<std::string, std::size_t>, double> analogy;
  std::map<std::string, double> kl;  // kl_joint, kl_true, kl_empirical
  std::map<std::string, double> loss;

  std::string run_id;
  std::uint64_t seed = 0;
  std::string config_hash;
  double wall_time_s = 0.0;

  /// Throws DataError if a rate leaves [0,1] or a correlation leaves [-1,1].
  void validate() const;
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  /// Long format: one (metric, value) row per reported number.
  std::vector<std::pair<std::string, double>> long_rows() const;
  /// "run_id,metric,value" lines without a header.
  std::string to_csv_rows() const;
};

inline constexpr const char* kMetricsCsvHeader = "run_id,metric,value";

}  // namespace rsoft
