#include "cloak/core/palette.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cloak {

Palette::Palette(std::vector<Rgb> colors) : colors_(std::move(colors)) {
  if (colors_.empty()) throw std::invalid_argument("palette must not be empty");
  for (std::size_t i = 0; i < colors_.size(); ++i) {
    for (double v : colors_[i]) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("palette color outside [0, 1]");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (colors_[i] == colors_[j]) throw std::invalid_argument("duplicate palette color");
    }
  }
}

Palette default_palette() {
  std::vector<Rgb> colors;
  const double levels[] = {0.0, 0.5, 1.0};
  for (double r : levels) {
    for (double g : levels) {
      for (double b : levels) colors.push_back({r, g, b});
    }
  }
  for (double gray : {0.25, 0.75, 0.9}) colors.push_back({gray, gray, gray});
  return Palette(std::move(colors));
}

Palette load_palette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open palette file: " + path.string());
  std::vector<Rgb> colors;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    Rgb c{};
    if (!(fields >> c[0])) continue;
    std::string extra;
    if (!(fields >> c[1] >> c[2]) || (fields >> extra)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 'r g b'");
    }
    colors.push_back(c);
  }
  return Palette(std::move(colors));
}

void save_palette(const std::filesystem::path& path, const Palette& palette) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write palette file: " + path.string());
  out.precision(17);
  for (const auto& c : palette.colors()) out << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
}

}  // namespace cloak
