#include "cloak/detector/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cloak/autodiff/ops.hpp"

namespace cloak::detector {

void validate(const Descriptor& d) {
  if (d.grid < 1 || d.boxes < 1 || d.classes < 1) throw std::invalid_argument("descriptor: S, B, C must be >= 1");
  if (d.input_height < 1 || d.input_width < 1) throw std::invalid_argument("descriptor: bad input size");
  if (d.person_class < 0 || d.person_class >= d.classes) {
    throw std::invalid_argument("descriptor: person class index out of range");
  }
  if (static_cast<int>(d.anchors.size()) != d.boxes) {
    throw std::invalid_argument("descriptor: need one anchor per box slot");
  }
  for (const auto& a : d.anchors) {
    if (!(a[0] > 0) || !(a[1] > 0)) throw std::invalid_argument("descriptor: anchors must be positive");
  }
}

namespace {

ad::Var decode_geometry(ad::Tape& tape, ad::Var raw, const Descriptor& d) {
  const Tensor& r = tape.value(raw);
  const int row = d.row_length();
  const int n = d.box_count();
  const double s = d.grid;
  Tensor out({n, 4});
  for (int i = 0; i < n; ++i) {
    const int anchor = i % d.boxes;
    const int cell = i / d.boxes;
    const int gx = cell % d.grid;
    const int gy = cell / d.grid;
    const double* t = r.data().data() + static_cast<std::size_t>(i) * row;
    out[i * 4 + 0] = (gx + 1.0 / (1.0 + std::exp(-t[0]))) / s;
    out[i * 4 + 1] = (gy + 1.0 / (1.0 + std::exp(-t[1]))) / s;
    out[i * 4 + 2] = d.anchors[anchor][0] * std::exp(t[2]) / s;
    out[i * 4 + 3] = d.anchors[anchor][1] * std::exp(t[3]) / s;
  }
  return tape.record(std::move(out), {raw}, [raw, row, n, s](ad::Tape& tape, ad::Var self) {
    const Tensor& g = tape.grad(self);
    const Tensor& y = tape.value(self);
    const Tensor& r = tape.value(raw);
    Tensor& gr = tape.grad(raw);
    for (int i = 0; i < n; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * row;
      for (int k = 0; k < 2; ++k) {
        const double sg = 1.0 / (1.0 + std::exp(-r[base + k]));
        gr[base + k] += g[i * 4 + k] * sg * (1.0 - sg) / s;
      }
      gr[base + 2] += g[i * 4 + 2] * y[i * 4 + 2];
      gr[base + 3] += g[i * 4 + 3] * y[i * 4 + 3];
    }
  });
}

}  // namespace

GridVars decode_grid(ad::Tape& tape, ad::Var raw, const Descriptor& d) {
  validate(d);
  const Tensor& r = tape.value(raw);
  const std::size_t expected = static_cast<std::size_t>(d.box_count()) * d.row_length();
  if (r.size() != expected) {
    throw std::invalid_argument("decode_grid: raw output has " + std::to_string(r.size()) +
                                " values, descriptor expects " + std::to_string(expected));
  }
  for (double v : r.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("decode_grid: non-finite detector output");
  }
  const int row = d.row_length();
  GridVars out;
  out.grid = d.grid;
  out.boxes = d.boxes;
  out.classes = d.classes;
  out.objectness = ad::sigmoid(tape, ad::columns(tape, raw, row, 4, 5));
  out.class_probs = ad::softmax_rows(tape, ad::columns(tape, raw, row, 5, row), d.classes);
  out.geometry = decode_geometry(tape, raw, d);
  return out;
}

DetectionGrid grid_values(const ad::Tape& tape, const GridVars& vars) {
  DetectionGrid g;
  g.grid = vars.grid;
  g.boxes = vars.boxes;
  g.classes = vars.classes;
  const Tensor& obj = tape.value(vars.objectness);
  g.objectness.assign(obj.data().begin(), obj.data().end());
  const Tensor& cls = tape.value(vars.class_probs);
  g.class_probs.assign(cls.data().begin(), cls.data().end());
  const Tensor& geo = tape.value(vars.geometry);
  g.geometry.resize(g.objectness.size());
  for (std::size_t i = 0; i < g.geometry.size(); ++i) {
    g.geometry[i] = {geo[i * 4], geo[i * 4 + 1], geo[i * 4 + 2], geo[i * 4 + 3]};
  }
  return g;
}

DetectionGrid decode_grid(const Tensor& raw, const Descriptor& d) {
  ad::Tape tape;
  const ad::Var r = tape.constant(raw);
  return grid_values(tape, decode_grid(tape, r, d));
}

double extract_person_score(const DetectionGrid& grid, int person_class, ScoreMode mode) {
  if (person_class < 0 || person_class >= grid.classes) {
    throw std::out_of_range("person class index out of range");
  }
  double best = 0.0;
  for (std::size_t i = 0; i < grid.box_count(); ++i) {
    const double p = grid.class_prob(i, person_class);
    const double score = mode == ScoreMode::kClassOnly ? p : grid.objectness[i] * p;
    if (i == 0 || score > best) best = score;
  }
  return best;
}

ad::Var extract_person_score(ad::Tape& tape, const GridVars& grid, int person_class, ScoreMode mode) {
  if (person_class < 0 || person_class >= grid.classes) {
    throw std::out_of_range("person class index out of range");
  }
  ad::Var person = ad::columns(tape, grid.class_probs, grid.classes, person_class, person_class + 1);
  if (mode == ScoreMode::kObjectnessTimesClass) person = ad::mul(tape, grid.objectness, person);
  return ad::max_all(tape, person);
}

}  // namespace cloak::detector
