#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace rsoft {

using ContextId = std::uint32_t;
using TargetId = std::uint32_t;
using Score = double;

/// Context set I and target set J with labels and training-pair popularity.
struct Vocab {
  std::vector<std::string> context_labels;
  std::vector<std::string> target_labels;
  std::vector<std::uint64_t> context_counts;
  std::vector<std::uint64_t> target_counts;

  std::size_t card_i() const { return context_labels.size(); }
  std::size_t card_j() const { return target_labels.size(); }

  /// Throws FormatError when an invariant is broken (duplicate labels, empty
  /// index space, count vectors of the wrong size or with mismatched totals).
  void validate() const;

  std::unordered_map<std::string, ContextId> context_index() const;
  std::unordered_map<std::string, TargetId> target_index() const;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// The two-matrix score model: G(i, j) = <W_i, O_j>.
struct ModelParams {
  Matrix W;  // card(I) x d input embeddings
  Matrix O;  // card(J) x d output embeddings

  std::size_t card_i() const { return W.rows(); }
  std::size_t card_j() const { return O.rows(); }
  std::size_t dim() const { return W.cols(); }

  bool all_finite() const;
  bool operator==(const ModelParams&) const = default;
};

/// Dot product with a fixed four-way accumulation order. Every score in the
/// library goes through here so that batched and single scores agree bitwise.
double dot(std::span<const double> a, std::span<const double> b);

Score score(const ModelParams& params, ContextId i, TargetId j);

/// Scores of context i against every target, in TargetId order.
std::vector<Score> score_all_targets(const ModelParams& params, ContextId i);
void score_all_targets(const ModelParams& params, ContextId i, std::span<Score> out);

/// Entries i.i.d. uniform in [-scale, +scale].
ModelParams init_params(std::size_t card_i, std::size_t card_j, std::size_t d,
                        std::uint64_t seed, double scale);

/// The conventional default init scale, 0.5 / d.
inline double default_init_scale(std::size_t d) { return 0.5 / static_cast<double>(d); }

enum class CheckpointDtype { f32, f64 };

/// Writes the checkpoint: a JSON header line, the little-endian W then O
/// payload, then the context and target labels one per line. f32 rounds each
/// parameter to single precision; f64 is bitwise lossless.
void save_checkpoint(const ModelParams& params, const Vocab& vocab,
                     const std::filesystem::path& path,
                     CheckpointDtype dtype = CheckpointDtype::f32);

struct Checkpoint {
  ModelParams params;
  Vocab vocab;  // labels only; counts are zero
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// word2vec text format: "<count> <dim>" then "label v1 v2 ..." per row of W.
void export_word2vec_text(const ModelParams& params, const Vocab& vocab,
                          const std::filesystem::path& path);

}  // namespace rsoft
