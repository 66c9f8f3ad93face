#include "rsoft/neg_sampling.hpp"

#include <algorithm>
#include <cmath>

#include "rsoft/errors.hpp"

namespace rsoft {

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::uniform: return "uniform";
    case SamplerKind::popularity: return "popularity";
    case SamplerKind::boltzmann: return "boltzmann";
  }
  return "?";
}

std::string to_string(DegeneracyKind kind) {
  switch (kind) {
    case DegeneracyKind::uniform: return "uniform";
    case DegeneracyKind::popularity: return "popularity";
    case DegeneracyKind::oracle_inverse_p: return "oracle_inverse_p";
  }
  return "?";
}

SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "uniform") return SamplerKind::uniform;
  if (s == "popularity") return SamplerKind::popularity;
  if (s == "boltzmann") return SamplerKind::boltzmann;
  throw ConfigError("unknown sampler kind '" + s + "'");
}

DegeneracyKind parse_degeneracy_kind(const std::string& s) {
  if (s == "uniform") return DegeneracyKind::uniform;
  if (s == "popularity") return DegeneracyKind::popularity;
  if (s == "oracle_inverse_p" || s == "oracle") return DegeneracyKind::oracle_inverse_p;
  throw ConfigError("unknown degeneracy '" + s + "'");
}

void SamplerSpec::validate() const {
  if (std::isnan(temperature) || !(temperature > 0.0)) {
    throw ConfigError("sampler temperature must be > 0 (use inf for the T = infinity limit)");
  }
  if (std::isnan(popularity_exponent) || popularity_exponent < 0.0 ||
      !std::isfinite(popularity_exponent)) {
    throw ConfigError("popularity exponent must be a finite value >= 0");
  }
}

namespace {

void check_weights(std::span<const double> w, const char* what) {
  if (w.empty()) throw DataError(std::string(what) + ": empty weight vector");
  bool any = false;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) {
      throw DataError(std::string(what) + ": weights must be finite and non-negative");
    }
    any = any || x > 0.0;
  }
  if (!any) throw DataError(std::string(what) + ": all weights are zero");
}

}  // namespace

CategoricalTable::CategoricalTable(std::span<const double> weights) {
  check_weights(weights, "categorical table");
  const std::size_t n = weights.size();
  double total = 0.0;
  for (double w : weights) total += w;
  probabilities_.resize(n);
  for (std::size_t k = 0; k < n; ++k) probabilities_[k] = weights[k] / total;

  accept_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small, large;
  for (std::size_t k = 0; k < n; ++k) {
    scaled[k] = probabilities_[k] * static_cast<double>(n);
    (scaled[k] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(k));
  }
  while (!small.empty() && !large.empty()) {
    const auto s = small.back();
    small.pop_back();
    const auto l = large.back();
    accept_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  // Leftovers are 1 up to rounding.
  for (auto l : large) accept_[l] = 1.0;
  for (auto s : small) {
    accept_[s] = probabilities_[s] > 0.0 ? 1.0 : 0.0;
    alias_[s] = large.empty() ? s : large.back();
  }
  // A zero-probability column must never be returned.
  for (std::size_t k = 0; k < n; ++k) {
    if (probabilities_[k] == 0.0) {
      accept_[k] = 0.0;
      if (probabilities_[alias_[k]] == 0.0) {
        const auto it = std::find_if(probabilities_.begin(), probabilities_.end(),
                                     [](double p) { return p > 0.0; });
        alias_[k] = static_cast<std::uint32_t>(it - probabilities_.begin());
      }
    }
  }
}

std::uint32_t CategoricalTable::sample(Rng& rng) const {
  const auto col = static_cast<std::uint32_t>(uniform_index(rng, probabilities_.size()));
  return uniform01(rng) < accept_[col] ? col : alias_[col];
}

CdfSampler::CdfSampler(std::span<const double> probabilities) {
  check_weights(probabilities, "cdf sampler");
  cdf_.resize(probabilities.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    acc += probabilities[k];
    cdf_[k] = acc;
    if (probabilities[k] > 0.0) last_positive_ = static_cast<std::uint32_t>(k);
  }
}

std::uint32_t CdfSampler::sample(Rng& rng) const {
  const double u = uniform01(rng) * cdf_.back();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) return last_positive_;
  return static_cast<std::uint32_t>(it - cdf_.begin());
}

std::vector<double> boltzmann_probs(std::span<const double> scores,
                                    std::span<const double> degeneracy, double temperature) {
  if (scores.size() != degeneracy.size()) {
    throw DataError("boltzmann: scores and degeneracy differ in length");
  }
  check_weights(degeneracy, "boltzmann degeneracy");
  if (std::isnan(temperature) || !(temperature > 0.0)) {
    throw DataError("boltzmann: temperature must be > 0");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericalError("boltzmann: non-finite score");
  }
  if (std::isinf(temperature)) {
    double total = 0.0;
    for (double d : degeneracy) total += d;
    std::vector<double> p(degeneracy.size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = degeneracy[k] / total;
    return p;
  }
  // Scaling D by its maximum leaves uniform weights at exactly log(1) = 0.
  const double dmax = *std::max_element(degeneracy.begin(), degeneracy.end());
  std::vector<double> logits(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    logits[k] = degeneracy[k] > 0.0
                    ? scores[k] / temperature + std::log(degeneracy[k] / dmax)
                    : -std::numeric_limits<double>::infinity();
  }
  return normalize_log_weights(logits);
}

CategoricalTable popularity_distribution(const Vocab& vocab, double alpha) {
  if (std::isnan(alpha) || alpha < 0.0) throw ConfigError("popularity exponent must be >= 0");
  if (vocab.target_counts.size() != vocab.card_j()) {
    throw DataError("popularity: vocabulary has no target counts");
  }
  std::vector<double> w(vocab.card_j());
  bool any = false;
  for (std::size_t t = 0; t < w.size(); ++t) {
    const auto c = vocab.target_counts[t];
    w[t] = c == 0 ? 0.0 : (alpha == 0.0 ? 1.0 : std::pow(static_cast<double>(c), alpha));
    any = any || c != 0;
  }
  if (!any) throw DataError("popularity: every target count is zero");
  return CategoricalTable(w);
}

DegeneracyTable DegeneracyTable::shared(std::vector<double> weights) {
  check_weights(weights, "degeneracy");
  DegeneracyTable t;
  t.card_i_ = 0;
  t.card_j_ = weights.size();
  t.shared_ = true;
  t.data_ = std::move(weights);
  return t;
}

DegeneracyTable DegeneracyTable::per_context(std::size_t card_i, std::size_t card_j,
                                             std::vector<double> rows) {
  if (rows.size() != card_i * card_j) {
    throw DataError("degeneracy table: size is not card(I) x card(J)");
  }
  DegeneracyTable t;
  t.card_i_ = card_i;
  t.card_j_ = card_j;
  t.shared_ = false;
  t.data_ = std::move(rows);
  return t;
}

std::span<const double> DegeneracyTable::row(ContextId i) const {
  if (shared_) return data_;
  if (i >= card_i_) throw IndexError("degeneracy table: context out of range");
  return {data_.data() + static_cast<std::size_t>(i) * card_j_, card_j_};
}

NegativeSampler::NegativeSampler(const SamplerSpec& spec, const Vocab& vocab,
                                 std::optional<DegeneracyTable> oracle)
    : spec_(spec) {
  spec_.validate();
  const std::size_t card_j = vocab.card_j();
  if (card_j == 0) throw DataError("negative sampler: empty target set");
  switch (spec_.kind) {
    case SamplerKind::uniform:
      table_ = CategoricalTable(std::vector<double>(card_j, 1.0));
      break;
    case SamplerKind::popularity:
      table_ = popularity_distribution(vocab, spec_.popularity_exponent);
      break;
    case SamplerKind::boltzmann:
      switch (spec_.degeneracy) {
        case DegeneracyKind::uniform:
          degeneracy_ = DegeneracyTable::shared(std::vector<double>(card_j, 1.0));
          break;
        case DegeneracyKind::popularity:
          degeneracy_ = DegeneracyTable::shared(
              popularity_distribution(vocab, spec_.popularity_exponent).probabilities());
          break;
        case DegeneracyKind::oracle_inverse_p:
          if (!oracle) {
            throw ConfigError("oracle_inverse_p degeneracy needs a ground-truth distribution");
          }
          if (oracle->card_j() != card_j) {
            throw ConfigError("oracle degeneracy table does not match card(J)");
          }
          degeneracy_ = std::move(*oracle);
          break;
      }
      break;
  }
}

std::vector<double> NegativeSampler::probabilities_from_scores(
    ContextId i, std::span<const double> scores) const {
  if (!is_dynamic()) return table_.probabilities();
  return boltzmann_probs(scores, degeneracy_.row(i), spec_.temperature);
}

std::vector<double> NegativeSampler::probabilities(const ModelParams& params,
                                                   ContextId i) const {
  if (!is_dynamic()) return table_.probabilities();
  return probabilities_from_scores(i, score_all_targets(params, i));
}

NegativeSet NegativeSampler::draw(const ModelParams& params, ContextId i, std::size_t n,
                                  Rng& rng) const {
  if (n == 0) throw ConfigError("number of negatives must be >= 1");
  NegativeSet out;
  out.targets.resize(n);
  if (!is_dynamic()) {
    for (auto& t : out.targets) t = table_.sample(rng);
    return out;
  }
  const CdfSampler cdf(probabilities(params, i));
  for (auto& t : out.targets) t = cdf.sample(rng);
  return out;
}

NegativeSet draw_negatives(const SamplerSpec& spec, const ModelParams& params,
                           const Vocab& vocab, ContextId i, std::size_t n, Rng& rng,
                           std::optional<DegeneracyTable> oracle) {
  return NegativeSampler(spec, vocab, std::move(oracle)).draw(params, i, n, rng);
}

}  // namespace rsoft
