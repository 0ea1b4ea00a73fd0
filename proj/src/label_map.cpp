#include "duedl/label_map.hpp"

#include <string>

#include "duedl/errors.hpp"

namespace duedl {

ScribbleMask::ScribbleMask(LabelMap labels, std::size_t num_classes)
    : labels_(std::move(labels)), num_classes_(num_classes) {
  if (num_classes_ < 1 || num_classes_ > 254) {
    throw DataError("scribble: number of classes must lie in [1, 254]");
  }
  for (std::size_t i = 0; i < labels_.labels.size(); ++i) {
    const auto v = labels_.labels[i];
    if (v > num_classes_) {
      throw DataError("scribble: value " + std::to_string(v) + " at pixel " + std::to_string(i) +
                      " exceeds the unlabeled sentinel " + std::to_string(num_classes_));
    }
    if (v != num_classes_) annotated_.push_back(i);
  }
}

}  // namespace duedl
