#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <vector>

#include "vpr/image.hpp"
#include "vpr/rng.hpp"

namespace vpr::detail {

// Class batches for one epoch: each class's images reshuffled, then taken
// in consecutive windows of `per_class`, wrapping around for short classes.
inline std::vector<std::map<int, std::vector<Image>>> epoch_batches(
    const std::map<int, std::vector<const Image*>>& by_class, std::size_t per_class, Rng& rng) {
  std::size_t n_batches = 0;
  std::map<int, std::vector<const Image*>> order;
  for (const auto& [cls, images] : by_class) {
    auto shuffled = images;
    rng.shuffle(shuffled);
    n_batches = std::max(n_batches, (shuffled.size() + per_class - 1) / per_class);
    order.emplace(cls, std::move(shuffled));
  }
  std::vector<std::map<int, std::vector<Image>>> batches(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    for (const auto& [cls, images] : order) {
      const auto take = std::min(per_class, images.size());
      auto& out = batches[b][cls];
      for (std::size_t k = 0; k < take; ++k) out.push_back(*images[(b * per_class + k) % images.size()]);
    }
  }
  return batches;
}

}  // namespace vpr::detail
