#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "rsoft/core_model.hpp"

namespace rsoft {

/// Loss of one positive pair (i, j) with its exact gradient.
///
/// Every loss here depends on theta only through scores G(i, t) for a set of
/// touched targets t. The gradient is therefore stored as the per-target score
/// derivatives dL/dG(i, t): the gradient w.r.t. O_t is that coefficient times
/// W_i, and the gradient w.r.t. W_i is the coefficient-weighted sum of O_t.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad_w;       // d-vector, gradient w.r.t. W_i
  std::vector<TargetId> targets;    // touched O rows, strictly ascending
  std::vector<double> score_grads;  // dL/dG(i, targets[k])
  std::vector<double> w_row;        // W_i at evaluation time

  /// Gradient w.r.t. O_{targets[k]}.
  std::vector<double> grad_o(std::size_t k) const;
  std::map<TargetId, std::vector<double>> grad_o_map() const;
  bool all_finite() const;
};

/// Negatives V_(i,j): i.i.d. draws with replacement, duplicates allowed.
struct NegativeSet {
  std::vector<TargetId> targets;
  std::size_t size() const { return targets.size(); }
};

/// ln sum exp(x), computed with max subtraction. -inf entries are allowed.
double log_sum_exp(std::span<const double> x);

/// exp(x_k - max) / sum, for log-weights that may contain -inf (zero mass).
/// At least one entry must be finite.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

/// Full softmax g_i over a score vector.
std::vector<double> conditional_softmax(std::span<const double> scores);

/// Maximum-likelihood loss -G(i,j) + ln sum_{j' in J} exp G(i,j'). Touches all of J.
LossGrad mle_loss_grad(const ModelParams& params, ContextId i, TargetId j);

/// Relaxed Softmax: -G(i,j) + ln sum_{j' in S} exp G(i,j'), with S the negative
/// multiset, plus the positive itself when include_positive is set. Without the
/// positive the loss is unbounded below.
LossGrad relaxed_softmax_loss_grad(const ModelParams& params, ContextId i, TargetId j,
                                   const NegativeSet& negatives, bool include_positive = true);

/// Importance-sampled softmax over {j} plus the sampled negatives, with each
/// candidate's logit corrected by -ln(n * proposal(c)).
LossGrad sampled_softmax_loss_grad(const ModelParams& params, ContextId i, TargetId j,
                                   std::span<const double> proposal,
                                   const NegativeSet& negatives);

/// -ln sigma(G(i,j)) - sum_k ln sigma(-G(i,j_k)).
LossGrad bce_loss_grad(const ModelParams& params, ContextId i, TargetId j,
                       const NegativeSet& negatives);

/// Infinite-sample limit of the Relaxed Softmax gradient under negative
/// distribution q: -grad G(i,j) + E_{t ~ B} grad G(i,t), B(t) ∝ q(t) exp G(i,t).
/// Computed by enumeration over J. The reported loss is the matching objective
/// -G(i,j) + ln sum_t q(t) exp G(i,t).
LossGrad consistency_gradient(const ModelParams& params, ContextId i, TargetId j,
                              std::span<const double> q);

}  // namespace rsoft
