#pragma once

#include <cstddef>
#include <vector>

namespace vpr {

struct InputShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const InputShape&) const = default;
};

// Pixels in [0, 1], channel-major (c, y, x).
struct Image {
  InputShape shape;
  std::vector<double> pixels;
  int label = 0;
  int task = 0;
  int index = 0;

  bool operator==(const Image&) const = default;
};

}  // namespace vpr
