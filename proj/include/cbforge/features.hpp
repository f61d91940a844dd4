#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cbforge {

/// Hashed word 1-2 grams plus character n-grams.
struct FeatureConfig {
  int buckets_log2 = 18;
  bool word_bigrams = true;
  int char_min = 3;
  int char_max = 5;

  std::size_t buckets() const { return std::size_t{1} << buckets_log2; }
  void validate() const;
};

/// Sorted, unique bucket indices with raw occurrence counts.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t nnz() const { return index.size(); }
  bool operator==(const SparseVector&) const = default;
};

/// Lowercase, split on Unicode word boundaries. Emoji (with their modifiers
/// and joiners) come out as single tokens; other symbols and punctuation
/// are dropped.
std::vector<std::string> tokenize(std::string_view text);

SparseVector featurize(std::string_view text, const FeatureConfig& cfg);

/// Bucket of the unigram feature for an already-tokenized word.
std::uint32_t word_bucket(std::string_view token, const FeatureConfig& cfg);

/// OpenMP kernel: featurize every text.
std::vector<SparseVector> featurize_all(std::span<const std::string_view> texts,
                                        const FeatureConfig& cfg);

namespace serial {
/// Single-threaded reference for featurize_all.
std::vector<SparseVector> featurize_all(std::span<const std::string_view> texts,
                                        const FeatureConfig& cfg);
}  // namespace serial

}  // namespace cbforge
