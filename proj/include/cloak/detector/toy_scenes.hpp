#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cloak/core/scene.hpp"

namespace cloak::detector {

// Synthetic world the toy detector is trained on: textured backgrounds, a
// bright head/torso/legs figure ("person", class 0), and optional
// distractors: a blue wheeled block (class 1) and a green disc (class 2).
enum ToyClass : int { kToyPerson = 0, kToyVehicle = 1, kToyBall = 2 };

struct ToySceneOptions {
  int size = 64;
  int persons = 1;
  double distractor_probability = 0.5;
  // Solid-color rectangle pasted over the person's torso (pre-training
  // augmentation so the detector is not fooled by a plain patch).
  double occluder_probability = 0.0;
  double flat_background_probability = 0.0;
};

struct ToySample {
  Scene scene;                     // person boxes only
  std::vector<PersonBox> objects;  // every drawn object, label = ToyClass
};

ToySample make_toy_sample(std::uint64_t seed, const ToySceneOptions& options = {});

// Deterministic corpus of `count` scenes with ids "<prefix>_0000", ...
SceneSet make_toy_scene_set(std::uint64_t seed, int count, const std::string& prefix,
                            SplitTag split, const ToySceneOptions& options = {});

// Fixed scene with one large unoccluded person centered inside a grid cell.
Scene toy_canonical_scene();

}  // namespace cloak::detector
