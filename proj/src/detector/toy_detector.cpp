#include "cloak/detector/toy_detector.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cloak/autodiff/ops.hpp"
#include "cloak/core/hash.hpp"
#include "cloak/core/rng.hpp"

#ifndef CLOAK_DATA_DIR
#define CLOAK_DATA_DIR "data"
#endif

namespace cloak::detector {

using nlohmann::json;

std::filesystem::path default_toy_fixture_dir() {
  return std::filesystem::path(CLOAK_DATA_DIR) / "toy_detector";
}

ToyDetector::ToyDetector(Descriptor d, std::vector<ConvLayer> layers)
    : descriptor_(std::move(d)), layers_(std::move(layers)) {
  validate(descriptor_);
  if (layers_.empty()) throw std::invalid_argument("toy detector needs at least one layer");
  for (const auto& l : layers_) {
    if (l.weight.shape() != std::vector<int>{l.out_channels, l.kernel, l.kernel, l.in_channels} ||
        l.bias.size() != static_cast<std::size_t>(l.out_channels)) {
      throw std::invalid_argument("toy detector layer '" + l.name + "' has inconsistent shapes");
    }
  }
  if (layers_.back().out_channels != descriptor_.boxes * descriptor_.row_length()) {
    throw std::invalid_argument("toy detector head width does not match descriptor");
  }
}

ToyDetector ToyDetector::initialize(std::uint64_t seed) {
  Descriptor d;
  struct Spec {
    const char* name;
    int in, out, kernel, stride, pad;
    bool leaky;
  };
  const int head = d.boxes * d.row_length();
  const Spec specs[] = {
      {"conv1", 3, 8, 3, 2, 1, true},    {"conv2", 8, 16, 3, 2, 1, true},
      {"conv3", 16, 16, 3, 2, 1, true},  {"conv4", 16, 32, 5, 2, 2, true},
      {"head", 32, head, 1, 1, 0, false},
  };
  SeedableRng rng(seed);
  std::vector<ConvLayer> layers;
  for (const auto& s : specs) {
    ConvLayer l{s.name, s.in, s.out, s.kernel, s.stride, s.pad, s.leaky,
                Tensor({s.out, s.kernel, s.kernel, s.in}), Tensor({s.out})};
    const double bound = std::sqrt(6.0 / (s.kernel * s.kernel * s.in));
    for (double& w : l.weight.data()) w = rng.uniform(-bound, bound);
    layers.push_back(std::move(l));
  }
  return ToyDetector(d, std::move(layers));
}

ad::Var ToyDetector::forward(ad::Tape& tape, ad::Var image) const {
  std::vector<ad::Var> params;
  params.reserve(layers_.size() * 2);
  for (const auto& l : layers_) {
    params.push_back(tape.constant(l.weight));
    params.push_back(tape.constant(l.bias));
  }
  return forward(tape, image, params);
}

ad::Var ToyDetector::forward(ad::Tape& tape, ad::Var image, const std::vector<ad::Var>& params) const {
  const Tensor& in = tape.value(image);
  if (in.rank() != 3 || in.height() != descriptor_.input_height ||
      in.width() != descriptor_.input_width || in.channels() != 3) {
    throw std::invalid_argument("toy detector expects a " + std::to_string(descriptor_.input_height) +
                                "x" + std::to_string(descriptor_.input_width) + "x3 image");
  }
  if (params.size() != layers_.size() * 2) throw std::invalid_argument("toy detector: wrong parameter count");
  ad::Var x = image;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    x = ad::conv2d(tape, x, params[2 * i], params[2 * i + 1], l.stride, l.pad);
    if (l.leaky) x = ad::leaky_relu(tape, x, kLeakySlope);
  }
  return x;
}

std::vector<Tensor> ToyDetector::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

void ToyDetector::set_parameters(const std::vector<Tensor>& params) {
  if (params.size() != layers_.size() * 2) throw std::invalid_argument("wrong parameter count");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (params[2 * i].shape() != layers_[i].weight.shape() ||
        params[2 * i + 1].shape() != layers_[i].bias.shape()) {
      throw std::invalid_argument("parameter shape mismatch for layer " + layers_[i].name);
    }
    layers_[i].weight = params[2 * i];
    layers_[i].bias = params[2 * i + 1];
  }
}

namespace {

void append_f32(std::vector<std::uint8_t>& out, const Tensor& t) {
  for (double v : t.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
}

Tensor read_f32(const std::vector<std::uint8_t>& bytes, std::size_t offset, std::vector<int> shape,
                const std::string& name) {
  Tensor t(std::move(shape));
  if (offset + t.size() * 4 > bytes.size()) {
    throw std::runtime_error("toy fixture: array '" + name + "' runs past end of weights.bin");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[offset + 4 * i + b]) << (8 * b);
    t[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return t;
}

}  // namespace

void ToyDetector::save(const std::filesystem::path& fixture_dir) const {
  std::filesystem::create_directories(fixture_dir);
  std::vector<std::uint8_t> bytes;
  json layers = json::array();
  for (const auto& l : layers_) {
    json jl = {{"name", l.name},       {"in", l.in_channels},   {"out", l.out_channels},
               {"kernel", l.kernel},   {"stride", l.stride},    {"pad", l.pad},
               {"activation", l.leaky ? "leaky" : "linear"}};
    jl["weight"] = {{"offset", bytes.size()}, {"shape", l.weight.shape()}};
    append_f32(bytes, l.weight);
    jl["bias"] = {{"offset", bytes.size()}, {"shape", l.bias.shape()}};
    append_f32(bytes, l.bias);
    layers.push_back(jl);
  }
  Fnv1a h;
  h.update(std::as_bytes(std::span(bytes.data(), bytes.size())));

  json anchors = json::array();
  for (const auto& a : descriptor_.anchors) anchors.push_back({a[0], a[1]});
  const json desc = {
      {"format", "cloak-toy-detector"},
      {"version", kFixtureVersion},
      {"grid", descriptor_.grid},
      {"boxes", descriptor_.boxes},
      {"classes", descriptor_.classes},
      {"input_size", {descriptor_.input_height, descriptor_.input_width}},
      {"person_class", descriptor_.person_class},
      {"anchors", anchors},
      {"leaky_slope", kLeakySlope},
      {"layers", layers},
      {"weights_file", "weights.bin"},
      {"weights_fnv1a", hex64(h.digest())},
  };
  std::ofstream(fixture_dir / "descriptor.json") << desc.dump(2) << '\n';
  std::ofstream bin(fixture_dir / "weights.bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!bin) throw std::runtime_error("cannot write toy fixture to " + fixture_dir.string());
}

ToyDetector ToyDetector::load(const std::filesystem::path& fixture_dir) {
  const auto desc_path = fixture_dir / "descriptor.json";
  std::ifstream desc_in(desc_path);
  if (!desc_in) throw std::runtime_error("toy fixture not found: " + desc_path.string());
  json desc;
  try {
    desc = json::parse(desc_in);
  } catch (const json::exception& e) {
    throw std::runtime_error("toy fixture descriptor is not valid JSON: " + std::string(e.what()));
  }

  try {
    if (desc.at("format") != "cloak-toy-detector" || desc.at("version") != kFixtureVersion) {
      throw std::runtime_error("unsupported toy fixture format/version in " + desc_path.string());
    }
    const auto bin_path = fixture_dir / desc.at("weights_file").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("toy fixture weights not found: " + bin_path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    Fnv1a h;
    h.update(std::as_bytes(std::span(bytes.data(), bytes.size())));
    if (hex64(h.digest()) != desc.at("weights_fnv1a").get<std::string>()) {
      throw std::runtime_error("toy fixture weights checksum mismatch: " + bin_path.string());
    }

    Descriptor d;
    d.grid = desc.at("grid");
    d.boxes = desc.at("boxes");
    d.classes = desc.at("classes");
    d.input_height = desc.at("input_size").at(0);
    d.input_width = desc.at("input_size").at(1);
    d.person_class = desc.at("person_class");
    d.anchors.clear();
    for (const auto& a : desc.at("anchors")) d.anchors.push_back({a.at(0).get<double>(), a.at(1).get<double>()});

    std::vector<ConvLayer> layers;
    for (const auto& jl : desc.at("layers")) {
      ConvLayer l;
      l.name = jl.at("name");
      l.in_channels = jl.at("in");
      l.out_channels = jl.at("out");
      l.kernel = jl.at("kernel");
      l.stride = jl.at("stride");
      l.pad = jl.at("pad");
      l.leaky = jl.at("activation") == "leaky";
      l.weight = read_f32(bytes, jl.at("weight").at("offset"), jl.at("weight").at("shape"), l.name + ".weight");
      l.bias = read_f32(bytes, jl.at("bias").at("offset"), jl.at("bias").at("shape"), l.name + ".bias");
      layers.push_back(std::move(l));
    }
    return ToyDetector(std::move(d), std::move(layers));
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt toy fixture descriptor " + desc_path.string() + ": " + e.what());
  }
}

}  // namespace cloak::detector
