#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cloak/core/hash.hpp"
#include "cloak/trainer/trainer.hpp"

namespace cloak::trainer {
namespace {

constexpr char kStateMagic[8] = {'C', 'L', 'K', 'S', 'T', 'A', 'T', 'E'};
constexpr std::uint32_t kStateVersion = 1;

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return stem.parent_path() / (stem.filename().string() + suffix);
}

class StateWriter {
 public:
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void doubles(std::span<const double> v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class StateReader {
 public:
  explicit StateReader(std::string bytes) : bytes_(std::move(bytes)) {}
  std::uint64_t u64() {
    if (pos_ + 8 > bytes_.size()) throw std::runtime_error("truncated checkpoint state");
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    if (n > (bytes_.size() - pos_) / 8) throw std::runtime_error("truncated checkpoint state");
    std::vector<double> v(n);
    for (double& d : v) d = f64();
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json history_json(const std::vector<EpochRecord>& history) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : history) {
    out.push_back({{"epoch", r.epoch},
                   {"detection", r.mean.detection},
                   {"tv", r.mean.tv},
                   {"nps", r.mean.nps},
                   {"disappear", r.mean.disappear},
                   {"total", r.mean.total},
                   {"seconds", r.seconds},
                   {"rng_seed", hex64(r.rng_seed)}});
  }
  return out;
}

std::vector<EpochRecord> history_from_json(const nlohmann::json& j) {
  std::vector<EpochRecord> out;
  for (const auto& e : j) {
    EpochRecord r;
    r.epoch = e.at("epoch");
    r.mean.detection = e.at("detection");
    r.mean.tv = e.at("tv");
    r.mean.nps = e.at("nps");
    r.mean.disappear = e.at("disappear");
    r.mean.total = e.at("total");
    r.seconds = e.at("seconds");
    r.rng_seed = parse_hex64(e.at("rng_seed").get<std::string>());
    out.push_back(r);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::filesystem::path checkpoint_stem(const std::filesystem::path& dir, int epoch) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04d", epoch);
  return dir / name;
}

void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt) {
  const Tensor& px = ckpt.patch.pixels();
  save_patch_png(with_suffix(stem, ".png"), ckpt.patch);

  StateWriter w;
  w.u64(kStateVersion);
  w.u64(static_cast<std::uint64_t>(px.height()));
  w.u64(static_cast<std::uint64_t>(px.width()));
  w.f64(ckpt.patch.aspect_hint());
  w.doubles(px.data());
  w.u64(static_cast<std::uint64_t>(ckpt.adam_steps));
  w.doubles(ckpt.adam_m);
  w.doubles(ckpt.adam_v);
  Fnv1a h;
  h.update(w.bytes());
  {
    std::ofstream out(with_suffix(stem, ".state.bin"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint state: " + stem.string());
    out.write(kStateMagic, sizeof kStateMagic);
    out << w.bytes();
    StateWriter tail;
    tail.u64(h.digest());
    out << tail.bytes();
    if (!out) throw std::runtime_error("cannot write checkpoint state: " + stem.string());
  }

  const KeyTree tree = to_key_tree(ckpt.config);
  nlohmann::json meta = {
      {"seed", std::to_string(ckpt.config.seed)},
      {"epoch", ckpt.epoch},
      {"objective", ckpt.history.empty() ? 0.0 : ckpt.history.back().mean.total},
      {"config_hash", hex64(tree.hash())},
      {"corpus_hash", hex64(ckpt.corpus_hash)},
      {"finished", ckpt.finished},
      {"rng_algorithm", std::string(SeedableRng::kAlgorithmId)},
      {"config", tree.entries()},
      {"history", history_json(ckpt.history)},
  };
  std::ofstream out(with_suffix(stem, ".meta.json"));
  if (!out) throw std::runtime_error("cannot write checkpoint metadata: " + stem.string());
  out << meta.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write checkpoint metadata: " + stem.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::filesystem::path stem = path;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> metas;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      const std::string name = entry.path().filename().string();
      if (name.starts_with("epoch_") && name.ends_with(".meta.json")) metas.push_back(entry.path());
    }
    if (metas.empty()) throw std::runtime_error("no checkpoint in " + path.string());
    std::sort(metas.begin(), metas.end());
    const std::string name = metas.back().filename().string();
    stem = path / name.substr(0, name.size() - std::string(".meta.json").size());
  } else {
    std::string name = stem.filename().string();
    for (const char* ext : {".meta.json", ".state.bin", ".png"}) {
      if (name.ends_with(ext)) {
        stem = stem.parent_path() / name.substr(0, name.size() - std::string(ext).size());
        break;
      }
    }
  }

  Checkpoint ckpt{Patch(Tensor::image(2, 2)), {}, 0, {}, {}, {}, 0, false, 0};
  try {
    const auto meta = nlohmann::json::parse(read_file(with_suffix(stem, ".meta.json")));
    KeyTree tree;
    for (const auto& [k, v] : meta.at("config").items()) tree.set(k, v.get<std::string>());
    if (hex64(tree.hash()) != meta.at("config_hash").get<std::string>()) {
      throw std::runtime_error("config hash mismatch in " + stem.string());
    }
    ckpt.config = train_config_from(tree);
    if (config_hash(ckpt.config) != tree.hash()) throw std::runtime_error("config keys not canonical in " + stem.string());
    ckpt.epoch = meta.at("epoch");
    ckpt.finished = meta.at("finished");
    ckpt.corpus_hash = parse_hex64(meta.at("corpus_hash").get<std::string>());
    ckpt.history = history_from_json(meta.at("history"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint metadata " + stem.string() + ": " + e.what());
  }

  std::string bytes = read_file(with_suffix(stem, ".state.bin"));
  if (bytes.size() < sizeof kStateMagic + 8 || bytes.compare(0, sizeof kStateMagic, kStateMagic, sizeof kStateMagic) != 0) {
    throw std::runtime_error("corrupt checkpoint state " + stem.string());
  }
  const std::string body = bytes.substr(sizeof kStateMagic, bytes.size() - sizeof kStateMagic - 8);
  Fnv1a h;
  h.update(body);
  if (StateReader(bytes.substr(bytes.size() - 8)).u64() != h.digest()) {
    throw std::runtime_error("checkpoint state checksum mismatch " + stem.string());
  }
  StateReader r(body);
  if (r.u64() != kStateVersion) throw std::runtime_error("unsupported checkpoint state version " + stem.string());
  const int height = static_cast<int>(r.u64());
  const int width = static_cast<int>(r.u64());
  const double aspect = r.f64();
  std::vector<double> pixels = r.doubles();
  ckpt.adam_steps = static_cast<std::int64_t>(r.u64());
  ckpt.adam_m = r.doubles();
  ckpt.adam_v = r.doubles();
  if (!r.done() || pixels.size() != static_cast<std::size_t>(height) * width * 3 ||
      ckpt.adam_m.size() != pixels.size() || ckpt.adam_v.size() != pixels.size()) {
    throw std::runtime_error("corrupt checkpoint state " + stem.string());
  }
  ckpt.patch = Patch(Tensor({height, width, 3}, std::move(pixels)), aspect);
  return ckpt;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,detection,tv,nps,disappear,total,seconds\n";
  char line[256];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.epoch, r.mean.detection, r.mean.tv,
                  r.mean.nps, r.mean.disappear, r.mean.total, r.seconds);
    out << line;
  }
}

std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "epoch,detection,tv,nps,disappear,total,seconds") {
    throw std::runtime_error("unexpected history header in " + path.string());
  }
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.mean.detection, &r.mean.tv, &r.mean.nps,
                    &r.mean.disappear, &r.mean.total, &r.seconds) != 7) {
      throw std::runtime_error("malformed history row in " + path.string() + ": " + line);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace cloak::trainer
