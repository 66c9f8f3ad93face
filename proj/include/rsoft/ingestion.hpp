#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsoft/core_model.hpp"

namespace rsoft {

struct Pair {
  ContextId context = 0;
  TargetId target = 0;
  bool operator==(const Pair&) const = default;
};

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

std::string to_string(Split s);

/// Ordered positive pairs with a per-pair split assignment.
struct PairDataset {
  std::vector<Pair> pairs;
  std::vector<Split> split;  // same length as pairs
  std::string source_meta;

  std::vector<Pair> subset(Split which) const;
  std::size_t count(Split which) const;
  /// Throws FormatError if an id is out of range for the vocabulary or the
  /// split vector has the wrong length.
  void validate(const Vocab& vocab) const;
};

struct IngestResult {
  Vocab vocab;
  PairDataset data;
};

/// Whitespace tokenization of a text8-style corpus. `max_bytes` > 0 keeps only
/// the leading bytes (cut back to the last complete token).
std::vector<std::string> read_tokens(const std::filesystem::path& path,
                                     std::size_t max_bytes = 0);

/// Keeps the `vocab_size` most frequent tokens (ties broken lexicographically),
/// drops all others from the sequence, then emits (token_t, token_{t+k}) for
/// k = 1..window. `bidirectional` also emits (token_{t+k}, token_t).
/// Contexts and targets share one vocabulary. All pairs start in train.
IngestResult pairs_from_text(std::span<const std::string> tokens, std::size_t window,
                             std::size_t vocab_size, bool bidirectional = false);

struct RatingEvent {
  std::string user;
  std::string item;
  double rating = 0.0;
  std::optional<double> timestamp;
};

/// Column names in the ratings CSV header. An empty timestamp name means file
/// order defines each user's sequence.
struct RatingColumns {
  std::string user = "user";
  std::string item = "item";
  std::string rating = "rating";
  std::string timestamp;
};

std::vector<RatingEvent> load_ratings_csv(const std::filesystem::path& path,
                                          const RatingColumns& columns = {});

/// Keeps events with rating >= threshold, orders each user's retained items
/// (by timestamp when present, else file order), caps the item vocabulary at
/// `max_items`, and windows each user's sequence like pairs_from_text.
IngestResult pairs_from_ratings(std::span<const RatingEvent> events, double threshold,
                                std::size_t max_items, std::size_t window);

struct SplitFractions {
  double train = 0.7;
  double valid = 0.1;
  double test = 0.2;
};

/// Uniform random pair-level split; class sizes follow largest-remainder
/// rounding of n * fraction.
PairDataset split_dataset(PairDataset data, const SplitFractions& fractions,
                          std::uint64_t seed);

/// Class sizes split_dataset will produce for n pairs.
std::vector<std::size_t> split_sizes(std::size_t n, const SplitFractions& fractions);

/// Recomputes context and target counts from the train split only.
void assign_train_counts(Vocab& vocab, const PairDataset& data);

struct SimilarityTriple {
  std::string a;
  std::string b;
  double score = 0.0;
};

/// "w1 w2 score" per line; '#' comment lines and blank lines are skipped.
std::vector<SimilarityTriple> load_similarity_file(const std::filesystem::path& path);

struct AnalogyQuad {
  std::string a, b, c, d;
  std::string section;
  bool syntactic = false;  // section name starts with "gram"
};

/// Google analogy format: ": section" headers then four words per line.
std::vector<AnalogyQuad> load_analogy_file(const std::filesystem::path& path);

/// Pair cache: `<base>.bin` holds little-endian u32 (context, target) pairs and
/// `<base>.json` holds the vocabulary, split assignment and metadata.
void save_pair_cache(const std::filesystem::path& base, const Vocab& vocab,
                     const PairDataset& data);
IngestResult load_pair_cache(const std::filesystem::path& base);

}  // namespace rsoft
