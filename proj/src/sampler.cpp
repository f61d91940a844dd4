#include "cbforge/sampler.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>

#include "cbforge/errors.hpp"

namespace cbforge {

CaseBaseCounts CaseBaseCounts::whatsapp() { return CaseBaseCounts{{863, 462, 103, 325}}; }

CaseBaseCounts CaseBaseCounts::from_slices(const DatasetSlice& train,
                                           const DatasetSlice& validation) {
  CaseBaseCounts b;
  const auto t = per_case_counts(train);
  const auto v = per_case_counts(validation);
  for (std::size_t i = 0; i < 4; ++i) b.counts[i] = t[i] + v[i];
  return b;
}

std::string_view to_string(Sampling s) { return s == Sampling::Up ? "up" : "none"; }

std::optional<Sampling> parse_sampling(std::string_view s) {
  if (s == "none") return Sampling::None;
  if (s == "up") return Sampling::Up;
  return std::nullopt;
}

std::size_t round_half_up(std::size_t numerator, std::size_t denominator) {
  return (2 * numerator + denominator) / (2 * denominator);
}

std::size_t scaled_count(std::size_t base, int percent) {
  if (percent < 0) throw PreconditionError("percent must be non-negative");
  return round_half_up(base * static_cast<std::size_t>(percent), 100);
}

namespace {

std::array<std::vector<std::size_t>, 4> rows_by_case(const DatasetSlice& pool) {
  std::array<std::vector<std::size_t>, 4> out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out[static_cast<std::size_t>(pool.message(i).case_id)].push_back(pool.rows[i]);
  }
  return out;
}

DatasetSlice like(const DatasetSlice& src, Split split) {
  DatasetSlice s;
  s.corpus = src.corpus;
  s.view = src.view;
  s.split = split;
  return s;
}

}  // namespace

void check_pool_sufficiency(const DatasetSlice& pool, const CaseBaseCounts& base, int percent) {
  const auto have = per_case_counts(pool);
  for (Case c : kAllCases) {
    const std::size_t need = scaled_count(base[c], percent);
    const std::size_t got = have[static_cast<std::size_t>(c)];
    if (got < need) {
      throw SamplingError(fmt::format("case {}: pool has {} messages, {}% of base {} needs {}",
                                      to_string(c), got, percent, base[c], need));
    }
  }
}

SlicePair sample_pool(const DatasetSlice& pool, const CaseBaseCounts& base, const SamplePlan& plan) {
  if (plan.percent <= 0) throw PreconditionError("sample percent must be positive");
  if (plan.train_parts <= 0 || plan.validation_parts < 0) {
    throw PreconditionError("train/validation parts must be positive");
  }
  check_pool_sufficiency(pool, base, plan.percent);

  bool fully_labeled = true;
  for (std::size_t i = 0; i < pool.size() && fully_labeled; ++i) {
    fully_labeled = pool.label(i).has_value();
  }

  SlicePair out{like(pool, Split::Train), like(pool, Split::Validation)};
  Rng rng(plan.seed);
  const auto by_case = rows_by_case(pool);
  const std::size_t parts = static_cast<std::size_t>(plan.train_parts + plan.validation_parts);
  for (Case c : kAllCases) {
    std::vector<std::size_t> rows = by_case[static_cast<std::size_t>(c)];
    fisher_yates(std::span(rows), rng);
    rows.resize(scaled_count(base[c], plan.percent));

    // Stratify the split by label when labels are known; groups keep the
    // drawn order so the result depends only on (pool, plan).
    std::vector<std::vector<std::size_t>> groups(fully_labeled ? 2 : 1);
    for (std::size_t r : rows) {
      const std::size_t g =
          fully_labeled ? static_cast<std::size_t>(*pool.view->label(pool.corpus->at(r))) : 0;
      groups[g].push_back(r);
    }
    for (const auto& g : groups) {
      const std::size_t n_train =
          round_half_up(g.size() * static_cast<std::size_t>(plan.train_parts), parts);
      out.train.rows.insert(out.train.rows.end(), g.begin(), g.begin() + n_train);
      out.validation.rows.insert(out.validation.rows.end(), g.begin() + n_train, g.end());
    }
  }
  return out;
}

DatasetSlice subsample(const DatasetSlice& slice, int percent, Rng& rng) {
  if (percent <= 0 || percent > 100) {
    throw PreconditionError(fmt::format("subsample percent {} outside (0, 100]", percent));
  }
  std::vector<std::size_t> positions(slice.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  fisher_yates(std::span(positions), rng);
  positions.resize(scaled_count(slice.size(), percent));
  std::sort(positions.begin(), positions.end());

  DatasetSlice out = like(slice, slice.split);
  out.rows.reserve(positions.size());
  for (std::size_t p : positions) out.rows.push_back(slice.rows[p]);
  return out;
}

SlicePair subsample_authentic(const DatasetSlice& train, const DatasetSlice& validation,
                              int percent, std::uint64_t seed) {
  Rng train_rng(mix_seed(seed, 0));
  Rng validation_rng(mix_seed(seed, 1));
  return {subsample(train, percent, train_rng), subsample(validation, percent, validation_rng)};
}

DatasetSlice upsample_minority(const DatasetSlice& train, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_label;
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto l = train.label(i);
    if (!l) {
      throw PreconditionError(
          fmt::format("upsampling: message \"{}\" has no visible label", train.message(i).id));
    }
    by_label[static_cast<std::size_t>(*l)].push_back(train.rows[i]);
  }
  if (by_label[0].empty() || by_label[1].empty()) {
    throw UpsamplingError("upsampling needs both classes in the training slice");
  }
  const std::size_t minority = by_label[0].size() < by_label[1].size() ? 0 : 1;
  std::vector<std::size_t> pool = by_label[minority];
  const std::size_t deficit = by_label[1 - minority].size() - pool.size();

  Rng rng(mix_seed(seed, 2));
  fisher_yates(std::span(pool), rng);
  DatasetSlice out = train;
  out.rows.reserve(train.size() + deficit);
  for (std::size_t k = 0; k < deficit; ++k) out.rows.push_back(pool[k % pool.size()]);
  return out;
}

DatasetSlice labeled_only(const DatasetSlice& slice) {
  DatasetSlice out = like(slice, slice.split);
  for (std::size_t i = 0; i < slice.size(); ++i) {
    if (slice.label(i)) out.rows.push_back(slice.rows[i]);
  }
  return out;
}

}  // namespace cbforge
