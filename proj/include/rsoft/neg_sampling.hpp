#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsoft/core_model.hpp"
#include "rsoft/losses.hpp"
#include "rsoft/random.hpp"

namespace rsoft {

enum class SamplerKind { uniform, popularity, boltzmann };
enum class DegeneracyKind { uniform, popularity, oracle_inverse_p };

std::string to_string(SamplerKind kind);
std::string to_string(DegeneracyKind kind);
SamplerKind parse_sampler_kind(const std::string& s);
DegeneracyKind parse_degeneracy_kind(const std::string& s);

/// Negative distribution Q_i. For boltzmann, Q_i(j) ∝ D_i(j) exp(G(i,j) / T).
struct SamplerSpec {
  /// Sentinel for T = +inf: the Boltzmann distribution collapses onto D_i.
  static constexpr double kInfiniteTemperature = std::numeric_limits<double>::infinity();

  SamplerKind kind = SamplerKind::uniform;
  DegeneracyKind degeneracy = DegeneracyKind::uniform;
  double temperature = 1.0;
  double popularity_exponent = 1.0;

  /// Throws ConfigError for T <= 0, NaN or a negative exponent.
  void validate() const;
};

/// Static categorical distribution with O(1) draws (Walker/Vose alias method).
class CategoricalTable {
 public:
  CategoricalTable() = default;
  /// Weights must be non-negative, finite and not all zero.
  explicit CategoricalTable(std::span<const double> weights);

  std::size_t size() const { return probabilities_.size(); }
  const std::vector<double>& probabilities() const { return probabilities_; }
  std::uint32_t sample(Rng& rng) const;

 private:
  std::vector<double> probabilities_;
  std::vector<double> accept_;
  std::vector<std::uint32_t> alias_;
};

/// Inverse-CDF sampler for distributions that change on every call.
class CdfSampler {
 public:
  explicit CdfSampler(std::span<const double> probabilities);
  std::uint32_t sample(Rng& rng) const;

 private:
  std::vector<double> cdf_;
  std::uint32_t last_positive_ = 0;  // fallback when rounding lands on the total
};

/// D_i(j) exp(G(i,j)/T), normalized, computed in log space. Entries with zero
/// degeneracy get zero mass. Uniform degeneracy at T = 1 reproduces
/// conditional_softmax bitwise.
std::vector<double> boltzmann_probs(std::span<const double> scores,
                                    std::span<const double> degeneracy, double temperature);

/// Probability ∝ count^alpha over targets (0^alpha = 0; alpha = 0 gives uniform
/// over targets with a non-zero count).
CategoricalTable popularity_distribution(const Vocab& vocab, double alpha);

/// Per-context degeneracy weights: either one vector shared by every context or
/// a full card(I) x card(J) table (the synthetic oracle 1/P_i).
class DegeneracyTable {
 public:
  static DegeneracyTable shared(std::vector<double> weights);
  static DegeneracyTable per_context(std::size_t card_i, std::size_t card_j,
                                     std::vector<double> rows);

  std::span<const double> row(ContextId i) const;
  std::size_t card_j() const { return card_j_; }

 private:
  std::size_t card_i_ = 0;
  std::size_t card_j_ = 0;
  bool shared_ = true;
  std::vector<double> data_;
};

/// Draws negative sets according to a SamplerSpec.
///
/// Static kinds (uniform, popularity) sample from a precomputed alias table.
/// The boltzmann kind recomputes Q_i from the current scores on every call.
class NegativeSampler {
 public:
  /// `oracle` supplies D_i for DegeneracyKind::oracle_inverse_p and is ignored
  /// otherwise.
  NegativeSampler(const SamplerSpec& spec, const Vocab& vocab,
                  std::optional<DegeneracyTable> oracle = std::nullopt);

  const SamplerSpec& spec() const { return spec_; }
  bool is_dynamic() const { return spec_.kind == SamplerKind::boltzmann; }

  /// The exact Q_i under the current parameters.
  std::vector<double> probabilities(const ModelParams& params, ContextId i) const;
  /// Q_i from a precomputed score row of context i.
  std::vector<double> probabilities_from_scores(ContextId i,
                                                std::span<const double> scores) const;

  NegativeSet draw(const ModelParams& params, ContextId i, std::size_t n, Rng& rng) const;

  /// Static proposal over J (uniform or popularity); empty for boltzmann.
  const CategoricalTable& static_table() const { return table_; }

 private:
  SamplerSpec spec_;
  CategoricalTable table_;
  DegeneracyTable degeneracy_;
};

NegativeSet draw_negatives(const SamplerSpec& spec, const ModelParams& params,
                           const Vocab& vocab, ContextId i, std::size_t n, Rng& rng,
                           std::optional<DegeneracyTable> oracle = std::nullopt);

}  // namespace rsoft
