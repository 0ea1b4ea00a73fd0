#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace duedl {

// Dense per-pixel class ids, row-major [H, W].
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), labels(h * w, fill) {}

  std::size_t size() const { return labels.size(); }
  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }

  bool operator==(const LabelMap&) const = default;
};

// Sparse scribble annotation. Unlabeled pixels hold the sentinel value
// `num_classes`; annotated pixels hold a class id in [0, num_classes).
class ScribbleMask {
 public:
  ScribbleMask() = default;
  // Throws DataError if any value exceeds the sentinel.
  ScribbleMask(LabelMap labels, std::size_t num_classes);

  const LabelMap& labels() const { return labels_; }
  std::size_t num_classes() const { return num_classes_; }
  std::uint8_t sentinel() const { return static_cast<std::uint8_t>(num_classes_); }
  // Flat indices of annotated pixels, ascending.
  const std::vector<std::size_t>& annotated() const { return annotated_; }
  std::size_t count() const { return annotated_.size(); }
  bool is_annotated(std::size_t flat) const { return labels_.labels[flat] != sentinel(); }

  bool operator==(const ScribbleMask& o) const {
    return num_classes_ == o.num_classes_ && labels_ == o.labels_;
  }

 private:
  LabelMap labels_;
  std::size_t num_classes_ = 0;
  std::vector<std::size_t> annotated_;
};

}  // namespace duedl
