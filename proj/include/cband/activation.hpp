#pragma once

#include <cstdint>
#include <vector>

namespace cband {

// Stage-s feature maps for one frame: C channels of H' x W' floats in
// channel-major layout.
struct ActivationMaps {
  uint32_t channels = 0;
  uint32_t height = 0;
  uint32_t width = 0;
  int64_t frame_index = 0;
  std::vector<float> data;  // size channels*height*width, layout [c][y][x]

  const float* channel(size_t c) const {
    return data.data() + c * size_t(height) * width;
  }
  float at(size_t c, size_t y, size_t x) const {
    return data[(c * height + y) * width + x];
  }
};

}  // namespace cband
