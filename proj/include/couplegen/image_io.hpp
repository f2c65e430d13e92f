#pragma once

#include <filesystem>

#include "couplegen/metric.hpp"

namespace couplegen {

// Binary 8-bit netpbm: P5 for one channel, P6 for three. A byte v maps to v / 255.
ImageGrid read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageGrid& image);

/// Rounds every pixel to the nearest representable 8-bit level.
ImageGrid quantize_8bit(const ImageGrid& image);

/// P5 mask: 0 is background, 255 is entity; any other byte is rejected.
MaskGrid read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const MaskGrid& mask);

} // namespace couplegen
