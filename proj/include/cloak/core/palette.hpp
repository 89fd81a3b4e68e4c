#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace cloak {

using Rgb = std::array<double, 3>;

// Printable color set; non-empty, no duplicates.
class Palette {
 public:
  explicit Palette(std::vector<Rgb> colors);

  const std::vector<Rgb>& colors() const { return colors_; }
  std::size_t size() const { return colors_.size(); }

  friend bool operator==(const Palette&, const Palette&) = default;

 private:
  std::vector<Rgb> colors_;
};

// 27-point {0, 0.5, 1}^3 lattice plus three extra grays.
Palette default_palette();

// Text file, one "r g b" triple per line; '#' starts a comment.
Palette load_palette(const std::filesystem::path& path);
void save_palette(const std::filesystem::path& path, const Palette& palette);

}  // namespace cloak
