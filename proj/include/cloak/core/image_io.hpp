#pragma once

#include <filesystem>

#include "cloak/core/tensor.hpp"

namespace cloak {

// Reads an 8- or 16-bit PNG/JPEG as an HxWx3 RGB tensor in [0, 1].
// Throws std::runtime_error for unreadable files and non-RGB sources.
Tensor read_image(const std::filesystem::path& path);

enum class BitDepth { k8, k16 };

// Writes an HxWx3 tensor; values are clamped to [0, 1] and rounded.
void write_image(const std::filesystem::path& path, const Tensor& image,
                 BitDepth depth = BitDepth::k8);

}  // namespace cloak
