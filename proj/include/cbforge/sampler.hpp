#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "cbforge/corpus.hpp"
#include "cbforge/random.hpp"

namespace cbforge {

/// Messages per case at a relative size of 100%.
struct CaseBaseCounts {
  std::array<std::size_t, 4> counts{};

  /// Train+validation composition of the authentic WhatsApp role-play
  /// corpus: A 863, B 462, C 103, D 325 (1,753 in total).
  static CaseBaseCounts whatsapp();
  /// Per-case counts of the union of two slices (typically the authentic
  /// train and validation splits of the corpus at hand).
  static CaseBaseCounts from_slices(const DatasetSlice& train, const DatasetSlice& validation);

  std::size_t operator[](Case c) const { return counts[static_cast<std::size_t>(c)]; }
  std::size_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

enum class Sampling { None, Up };
std::string_view to_string(Sampling s);
std::optional<Sampling> parse_sampling(std::string_view s);

struct SamplePlan {
  int percent = 100;
  std::uint64_t seed = 0;
  /// Train share of the drawn messages; the remainder is validation.
  int train_parts = 3;
  int validation_parts = 1;
};

struct SlicePair {
  DatasetSlice train;
  DatasetSlice validation;
};

/// round(numerator / denominator) with halves rounded up.
std::size_t round_half_up(std::size_t numerator, std::size_t denominator);
/// round_half_up(percent * base / 100).
std::size_t scaled_count(std::size_t base, int percent);

/// Throws SamplingError naming the first case whose pool is smaller than
/// scaled_count(base, percent).
void check_pool_sufficiency(const DatasetSlice& pool, const CaseBaseCounts& base, int percent);

/// Per case, draw scaled_count(base, percent) messages uniformly without
/// replacement, then split each case (and each label, when the pool view
/// labels every message) train:validation by plan.train_parts:validation_parts.
SlicePair sample_pool(const DatasetSlice& pool, const CaseBaseCounts& base, const SamplePlan& plan);

/// Uniform sample without replacement of round(percent% x size) from each
/// slice, drawn independently. Original order is kept. 0 < percent <= 100.
SlicePair subsample_authentic(const DatasetSlice& train, const DatasetSlice& validation,
                              int percent, std::uint64_t seed);
DatasetSlice subsample(const DatasetSlice& slice, int percent, Rng& rng);

/// Duplicate minority-class rows (seeded shuffle, cycling) until both
/// classes have equal counts. The slice view must label every row.
DatasetSlice upsample_minority(const DatasetSlice& train, std::uint64_t seed);

/// Rows whose label is visible under the slice's view.
DatasetSlice labeled_only(const DatasetSlice& slice);

}  // namespace cbforge
