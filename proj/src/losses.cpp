#include "rsoft/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rsoft/errors.hpp"

namespace rsoft {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_pair(const ModelParams& params, ContextId i, TargetId j) {
  if (i >= params.card_i()) {
    throw IndexError("context id " + std::to_string(i) + " out of range");
  }
  if (j >= params.card_j()) {
    throw IndexError("target id " + std::to_string(j) + " out of range");
  }
}

void check_negatives(const ModelParams& params, const NegativeSet& negatives) {
  if (negatives.targets.empty()) throw DataError("negative set must be non-empty");
  for (TargetId t : negatives.targets) {
    if (t >= params.card_j()) {
      throw IndexError("negative target id " + std::to_string(t) + " out of range");
    }
  }
}

// Sorted unique targets with multiplicities.
struct Multiset {
  std::vector<TargetId> targets;
  std::vector<double> counts;
};

Multiset aggregate(std::span<const TargetId> draws, std::size_t card_j) {
  Multiset m;
  if (draws.size() * 8 >= card_j) {
    std::vector<std::uint32_t> dense(card_j, 0);
    for (TargetId t : draws) ++dense[t];
    for (std::size_t t = 0; t < card_j; ++t) {
      if (dense[t] != 0) {
        m.targets.push_back(static_cast<TargetId>(t));
        m.counts.push_back(static_cast<double>(dense[t]));
      }
    }
    return m;
  }
  std::vector<TargetId> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size();) {
    std::size_t e = k;
    while (e < sorted.size() && sorted[e] == sorted[k]) ++e;
    m.targets.push_back(sorted[k]);
    m.counts.push_back(static_cast<double>(e - k));
    k = e;
  }
  return m;
}

// Inserts `t` into the sorted multiset with zero multiplicity if absent and
// returns its position.
std::size_t ensure_target(Multiset& m, TargetId t) {
  auto it = std::lower_bound(m.targets.begin(), m.targets.end(), t);
  const auto pos = static_cast<std::size_t>(it - m.targets.begin());
  if (it == m.targets.end() || *it != t) {
    m.targets.insert(it, t);
    m.counts.insert(m.counts.begin() + static_cast<long>(pos), 0.0);
  }
  return pos;
}

LossGrad finish(const ModelParams& params, ContextId i, double loss,
                std::vector<TargetId> targets, std::vector<double> score_grads) {
  LossGrad g;
  g.loss = loss;
  const auto w = params.W.row(i);
  g.w_row.assign(w.begin(), w.end());
  g.grad_w.assign(params.dim(), 0.0);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double c = score_grads[k];
    if (c == 0.0) continue;
    const auto o = params.O.row(targets[k]);
    for (std::size_t a = 0; a < g.grad_w.size(); ++a) g.grad_w[a] += c * o[a];
  }
  g.targets = std::move(targets);
  g.score_grads = std::move(score_grads);
  return g;
}

// Softmax cross-entropy of the positive against a weighted candidate multiset:
// loss = -(G(i,j) + offset_j) + ln sum_t count_t exp(G(i,t) + offset_t), where
// the positive's own weight is already folded into counts.
LossGrad weighted_softmax(const ModelParams& params, ContextId i, TargetId j, Multiset m,
                          std::span<const double> offsets) {
  const std::size_t pj = ensure_target(m, j);
  std::vector<double> logits(m.targets.size());
  for (std::size_t k = 0; k < m.targets.size(); ++k) {
    const double s = dot(params.W.row(i), params.O.row(m.targets[k])) +
                     (offsets.empty() ? 0.0 : offsets[m.targets[k]]);
    logits[k] = m.counts[k] > 0.0 ? s + std::log(m.counts[k]) : kNegInf;
  }
  const double positive =
      dot(params.W.row(i), params.O.row(j)) + (offsets.empty() ? 0.0 : offsets[j]);
  const double lse = log_sum_exp(logits);
  std::vector<double> grads(m.targets.size());
  for (std::size_t k = 0; k < m.targets.size(); ++k) {
    grads[k] = logits[k] == kNegInf ? 0.0 : std::exp(logits[k] - lse);
  }
  grads[pj] -= 1.0;
  return finish(params, i, lse - positive, std::move(m.targets), std::move(grads));
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<double> LossGrad::grad_o(std::size_t k) const {
  std::vector<double> out(w_row.size());
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = score_grads[k] * w_row[a];
  return out;
}

std::map<TargetId, std::vector<double>> LossGrad::grad_o_map() const {
  std::map<TargetId, std::vector<double>> out;
  for (std::size_t k = 0; k < targets.size(); ++k) out.emplace(targets[k], grad_o(k));
  return out;
}

bool LossGrad::all_finite() const {
  auto finite = [](double x) { return std::isfinite(x); };
  return std::isfinite(loss) && std::all_of(grad_w.begin(), grad_w.end(), finite) &&
         std::all_of(score_grads.begin(), score_grads.end(), finite);
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw DataError("log_sum_exp of an empty vector");
  const double m = *std::max_element(x.begin(), x.end());
  if (m == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - m);
  return m + std::log(sum);
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  if (log_weights.empty()) throw DataError("cannot normalize an empty weight vector");
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(m)) throw NumericalError("log-weights have no finite maximum");
  std::vector<double> p(log_weights.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(log_weights[k] - m);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> conditional_softmax(std::span<const double> scores) {
  if (scores.empty()) throw DataError("softmax of an empty score vector");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericalError("softmax input contains a non-finite score");
  }
  return normalize_log_weights(scores);
}

LossGrad mle_loss_grad(const ModelParams& params, ContextId i, TargetId j) {
  check_pair(params, i, j);
  const auto scores = score_all_targets(params, i);
  const double lse = log_sum_exp(scores);
  std::vector<double> grads(scores.size());
  for (std::size_t t = 0; t < scores.size(); ++t) grads[t] = std::exp(scores[t] - lse);
  grads[j] -= 1.0;
  std::vector<TargetId> targets(scores.size());
  for (std::size_t t = 0; t < targets.size(); ++t) targets[t] = static_cast<TargetId>(t);
  return finish(params, i, lse - scores[j], std::move(targets), std::move(grads));
}

LossGrad relaxed_softmax_loss_grad(const ModelParams& params, ContextId i, TargetId j,
                                   const NegativeSet& negatives, bool include_positive) {
  check_pair(params, i, j);
  check_negatives(params, negatives);
  Multiset m = aggregate(negatives.targets, params.card_j());
  const std::size_t pj = ensure_target(m, j);
  if (include_positive) m.counts[pj] += 1.0;
  return weighted_softmax(params, i, j, std::move(m), {});
}

LossGrad sampled_softmax_loss_grad(const ModelParams& params, ContextId i, TargetId j,
                                   std::span<const double> proposal,
                                   const NegativeSet& negatives) {
  check_pair(params, i, j);
  check_negatives(params, negatives);
  if (proposal.size() != params.card_j()) {
    throw DataError("sampled softmax: proposal size does not match card(J)");
  }
  if (!(proposal[j] > 0.0)) {
    throw DataError("sampled softmax: proposal assigns zero mass to the positive target " +
                    std::to_string(j));
  }
  for (TargetId t : negatives.targets) {
    if (!(proposal[t] > 0.0)) {
      throw DataError("sampled softmax: negative " + std::to_string(t) +
                      " has zero proposal mass");
    }
  }
  const double n = static_cast<double>(negatives.size());
  // Only the offsets of candidates are read; others stay at zero.
  std::vector<double> offsets(params.card_j(), 0.0);
  offsets[j] = -std::log(n * proposal[j]);
  for (TargetId t : negatives.targets) offsets[t] = -std::log(n * proposal[t]);

  Multiset m = aggregate(negatives.targets, params.card_j());
  const std::size_t pj = ensure_target(m, j);
  m.counts[pj] += 1.0;
  return weighted_softmax(params, i, j, std::move(m), offsets);
}

LossGrad bce_loss_grad(const ModelParams& params, ContextId i, TargetId j,
                       const NegativeSet& negatives) {
  check_pair(params, i, j);
  check_negatives(params, negatives);
  Multiset m = aggregate(negatives.targets, params.card_j());
  const std::size_t pj = ensure_target(m, j);
  const double positive = dot(params.W.row(i), params.O.row(j));
  double loss = softplus(-positive);
  std::vector<double> grads(m.targets.size(), 0.0);
  for (std::size_t k = 0; k < m.targets.size(); ++k) {
    if (m.counts[k] == 0.0) continue;
    const double s = dot(params.W.row(i), params.O.row(m.targets[k]));
    loss += m.counts[k] * softplus(s);
    grads[k] += m.counts[k] * sigmoid(s);
  }
  grads[pj] -= sigmoid(-positive);
  return finish(params, i, loss, std::move(m.targets), std::move(grads));
}

LossGrad consistency_gradient(const ModelParams& params, ContextId i, TargetId j,
                              std::span<const double> q) {
  check_pair(params, i, j);
  if (q.size() != params.card_j()) {
    throw DataError("consistency gradient: q size does not match card(J)");
  }
  double total = 0.0;
  for (double v : q) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw NumericalError("consistency gradient: q has a negative or non-finite entry");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw NumericalError("consistency gradient: q sums to " + std::to_string(total) +
                         ", not 1");
  }
  const auto scores = score_all_targets(params, i);
  std::vector<double> logits(scores.size());
  for (std::size_t t = 0; t < scores.size(); ++t) {
    logits[t] = q[t] > 0.0 ? std::log(q[t]) + scores[t] : kNegInf;
  }
  const double lse = log_sum_exp(logits);
  std::vector<double> grads(scores.size());
  for (std::size_t t = 0; t < scores.size(); ++t) {
    grads[t] = logits[t] == kNegInf ? 0.0 : std::exp(logits[t] - lse);
  }
  grads[j] -= 1.0;
  std::vector<TargetId> targets(scores.size());
  for (std::size_t t = 0; t < targets.size(); ++t) targets[t] = static_cast<TargetId>(t);
  return finish(params, i, lse - scores[j], std::move(targets), std::move(grads));
}

}  // namespace rsoft
