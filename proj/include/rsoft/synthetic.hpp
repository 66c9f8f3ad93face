#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rsoft/core_model.hpp"
#include "rsoft/ingestion.hpp"
#include "rsoft/neg_sampling.hpp"

namespace rsoft {

struct GaussianComponent {
  double mean_x = 0.5;
  double mean_y = 0.5;
  double sigma = 0.05;  // isotropic standard deviation
  double weight = 1.0;
};

/// Discretized 2-D mixture of Gaussians over the grid I x J.
struct GroundTruth {
  std::size_t card_i = 0;
  std::size_t card_j = 0;
  std::vector<double> joint;  // row-major card_i x card_j, sums to 1
  std::vector<GaussianComponent> components;
  std::uint64_t seed = 0;

  double operator()(ContextId i, TargetId j) const { return joint[i * card_j + j]; }
  std::span<const double> row(ContextId i) const { return {joint.data() + i * card_j, card_j}; }
  double marginal(ContextId i) const;
};

struct SigmaRange {
  double lo = 0.02;
  double hi = 0.08;
};

/// Component means uniform in [0,1]^2, sigma uniform in sigma_range, weights
/// Dirichlet(1). The density is evaluated at cell centers and normalized.
GroundTruth build_mixture(std::size_t card_i, std::size_t card_j, std::size_t n_components,
                          std::uint64_t seed, SigmaRange sigma_range = {});

/// Same grid evaluation for explicitly given components.
GroundTruth mixture_from_components(std::size_t card_i, std::size_t card_j,
                                    std::vector<GaussianComponent> components,
                                    std::uint64_t seed = 0);

/// Wraps an arbitrary non-negative matrix as a ground truth (normalized).
GroundTruth ground_truth_from_joint(std::size_t card_i, std::size_t card_j,
                                    std::vector<double> joint);

/// P_i: row i of the joint normalized by its marginal.
std::vector<double> conditional(const GroundTruth& gt, ContextId i);

/// n i.i.d. pairs from the joint. All pairs land in the train split.
PairDataset sample_pairs(const GroundTruth& gt, std::size_t n_pairs, std::uint64_t seed);

/// Grid vocabulary ("c<i>", "t<j>") with counts taken from the train split.
Vocab grid_vocab(const GroundTruth& gt, const PairDataset& data);

/// Relative mask threshold: P_i(j) <= eps * max_j P_i(j) counts as zero.
inline constexpr double kOracleMaskEpsilon = 1e-12;

/// D_i(j) = 1 / P_i(j), with numerically-zero cells masked to weight 0.
std::vector<double> oracle_degeneracy(const GroundTruth& gt, ContextId i);

/// Oracle degeneracy for every context. Rows with zero marginal get uniform
/// weights (such contexts never occur in sampled data).
DegeneracyTable oracle_degeneracy_table(const GroundTruth& gt);

/// KL(p || q) = sum p ln(p / q); zero-mass terms of p contribute nothing and
/// q = 0 where p > 0 yields +inf.
double kl_conditional(std::span<const double> p, std::span<const double> q);

/// KL between the true joint and Pop(I) x g_i. `context_popularity` is the
/// empirical context distribution (counts are normalized here).
double kl_joint(const GroundTruth& gt, const ModelParams& params,
                std::span<const std::uint64_t> context_counts);
double kl_joint(const GroundTruth& gt, const ModelParams& params, const Vocab& vocab);

/// Empirical conditionals from training pairs, one card(J) row per context.
/// Rows of contexts without pairs stay all-zero.
struct EmpiricalConditionals {
  std::size_t card_i = 0;
  std::size_t card_j = 0;
  std::vector<double> probs;
  std::vector<std::uint64_t> row_counts;

  std::span<const double> row(ContextId i) const { return {probs.data() + i * card_j, card_j}; }
};

EmpiricalConditionals empirical_conditionals(std::span<const Pair> pairs, std::size_t card_i,
                                             std::size_t card_j);

/// Averages of KL(P_i || g_i) and KL(P^_i || g_i) over contexts seen in training.
struct ConditionalKl {
  double true_kl = 0.0;
  double empirical_kl = 0.0;
  std::size_t contexts = 0;
};

ConditionalKl averaged_conditional_kl(const GroundTruth& gt, const EmpiricalConditionals& emp,
                                      const ModelParams& params);

/// Header line {"card_i","card_j","dtype":"f64","seed","components":[...]}
/// followed by the row-major little-endian f64 joint.
void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace rsoft
