#include "cloak/core/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cloak/core/hash.hpp"
#include "cloak/core/image_io.hpp"

namespace cloak {
namespace {

constexpr double kBoxSlack = 1e-6;

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

void validate_box(const PersonBox& box) {
  const double values[] = {box.cx, box.cy, box.w, box.h};
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("box coordinate is not finite");
  }
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw std::invalid_argument("box size must be positive");
  const auto inside = [](double lo, double hi) { return lo >= -kBoxSlack && hi <= 1.0 + kBoxSlack; };
  if (!inside(box.cx - box.w / 2, box.cx + box.w / 2) || !inside(box.cy - box.h / 2, box.cy + box.h / 2)) {
    throw std::invalid_argument("box extends outside the image");
  }
}

SplitTag parse_split_tag(const std::string& text) {
  if (text == "train") return SplitTag::kTrain;
  if (text == "test") return SplitTag::kTest;
  throw std::invalid_argument("split tag must be 'train' or 'test', got '" + text + "'");
}

std::size_t SceneSet::box_count() const {
  std::size_t n = 0;
  for (const auto& s : scenes) n += s.person_boxes.size();
  return n;
}

PersonBox parse_annotation_line(const std::string& line) {
  std::istringstream in(line);
  PersonBox box;
  std::string extra;
  if (!(in >> box.label >> box.cx >> box.cy >> box.w >> box.h) || (in >> extra)) {
    throw std::invalid_argument("expected '<class_id> <cx> <cy> <w> <h>'");
  }
  if (box.label < 0) throw std::invalid_argument("negative class id");
  validate_box(box);
  return box;
}

SceneSet load_scene_set(const std::filesystem::path& root, const std::string& split_tag) {
  SceneSet set;
  set.split = parse_split_tag(split_tag);
  const auto image_dir = root / "images";
  const auto ann_dir = root / "annotations";
  if (!std::filesystem::is_directory(image_dir)) {
    throw std::runtime_error("missing images directory: " + image_dir.string());
  }

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(image_dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  if (files.empty()) throw std::runtime_error("empty corpus: " + image_dir.string());
  std::sort(files.begin(), files.end());

  std::set<std::string> seen;
  for (const auto& file : files) {
    Scene scene;
    scene.id = file.stem().string();
    if (!seen.insert(scene.id).second) {
      throw std::runtime_error("duplicate scene id '" + scene.id + "' in " + image_dir.string());
    }
    scene.image = read_image(file);

    const auto ann = ann_dir / (scene.id + ".txt");
    if (std::ifstream in{ann}) {
      std::string line;
      int line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          const PersonBox box = parse_annotation_line(line);
          if (box.label == kPersonClassId) scene.person_boxes.push_back(box);
        } catch (const std::exception& e) {
          throw std::runtime_error(ann.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
    }
    set.scenes.push_back(std::move(scene));
  }
  std::sort(set.scenes.begin(), set.scenes.end(),
            [](const Scene& a, const Scene& b) { return a.id < b.id; });
  return set;
}

void save_scene_set(const std::filesystem::path& root, const SceneSet& set) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "annotations");
  for (const auto& scene : set.scenes) {
    write_image(root / "images" / (scene.id + ".png"), scene.image, BitDepth::k16);
    std::ofstream out(root / "annotations" / (scene.id + ".txt"));
    if (!out) throw std::runtime_error("cannot write annotation for " + scene.id);
    out.precision(17);
    for (const auto& b : scene.person_boxes) {
      out << b.label << ' ' << b.cx << ' ' << b.cy << ' ' << b.w << ' ' << b.h << '\n';
    }
  }
}

std::uint64_t corpus_hash(const SceneSet& set) {
  Fnv1a h;
  for (const auto& scene : set.scenes) {
    h.update(scene.id);
    for (int d : scene.image.shape()) h.update(static_cast<std::int64_t>(d));
    h.update(std::as_bytes(scene.image.data()));
    for (const auto& b : scene.person_boxes) {
      h.update(static_cast<std::int64_t>(b.label));
      for (double v : {b.cx, b.cy, b.w, b.h}) h.update(v);
    }
  }
  return h.digest();
}

}  // namespace cloak
