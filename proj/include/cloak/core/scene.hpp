#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cloak/core/tensor.hpp"

namespace cloak {

inline constexpr int kPersonClassId = 0;

// Normalized center-size box; label is the annotation class id.
struct PersonBox {
  double cx = 0.5, cy = 0.5, w = 0.0, h = 0.0;
  int label = kPersonClassId;

  friend bool operator==(const PersonBox&, const PersonBox&) = default;
};

// Throws std::invalid_argument when the box leaves [0, 1] (1e-6 slack) or
// has non-positive size.
void validate_box(const PersonBox& box);

struct Scene {
  std::string id;
  Tensor image;
  std::vector<PersonBox> person_boxes;

  friend bool operator==(const Scene&, const Scene&) = default;
};

enum class SplitTag { kTrain, kTest };

SplitTag parse_split_tag(const std::string& text);

struct SceneSet {
  std::vector<Scene> scenes;
  SplitTag split = SplitTag::kTrain;

  std::size_t box_count() const;
  friend bool operator==(const SceneSet&, const SceneSet&) = default;
};

// Parses one annotation line "<class_id> <cx> <cy> <w> <h>".
PersonBox parse_annotation_line(const std::string& line);

// Loads <root>/images/* with annotations from <root>/annotations/<stem>.txt.
// Only class 0 lines become person boxes; every line is validated.
SceneSet load_scene_set(const std::filesystem::path& root, const std::string& split_tag);

// Writes a corpus in the layout load_scene_set reads (16-bit PNG images).
void save_scene_set(const std::filesystem::path& root, const SceneSet& set);

std::uint64_t corpus_hash(const SceneSet& set);

}  // namespace cloak
