#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedrc/errors.hpp"

namespace fedrc {

/// Interleaved 8-bit RGB image, row-major.
struct ImageTensor {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;

  static constexpr std::size_t kChannels = 3;

  ImageTensor() = default;
  ImageTensor(std::size_t w, std::size_t h)
      : width(w), height(h), data(kChannels * w * h, 0) {}

  std::size_t pixel_count() const { return width * height; }
  std::size_t sample_count() const { return data.size(); }

  std::uint8_t at(std::size_t x, std::size_t y, std::size_t channel) const {
    return data[(y * width + x) * kChannels + channel];
  }

  void validate() const {
    if (width < 1 || height < 1) throw DataError("image has zero extent");
    if (data.size() != kChannels * width * height)
      throw DataError("image payload does not match 3*width*height");
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

/// Per-pixel class indices, row-major.
struct LabelGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> labels;

  LabelGrid() = default;
  LabelGrid(std::size_t w, std::size_t h) : width(w), height(h), labels(w * h, 0) {}

  std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
  std::size_t size() const { return labels.size(); }

  friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

}  // namespace fedrc
