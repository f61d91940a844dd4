#include "cbforge/label_view.hpp"

#include "cbforge/corpus.hpp"

namespace cbforge {

std::optional<Label> GoldView::label(const Message& m) const {
  accesses_.fetch_add(1, std::memory_order_relaxed);
  // Synthetic messages were never annotated by humans.
  if (m.provenance.is_synthetic()) return std::nullopt;
  return binarize(m.fine_category.value_or(FineCategory::None), m.role);
}

std::optional<Label> AssignedView::label(const Message& m) const {
  auto it = labels_.find(m.id);
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

}  // namespace cbforge
