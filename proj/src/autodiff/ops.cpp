#include "cloak/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cloak::ad {
namespace {

void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": operand sizes differ (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

void accumulate(Tape& t, Var target, const Tensor& g, double factor = 1.0) {
  if (!t.requires_grad(target)) return;
  auto dst = t.grad(target).data();
  const auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

std::size_t row_count(const Tensor& a, int row_len, const char* op) {
  if (row_len <= 0 || a.size() % static_cast<std::size_t>(row_len) != 0) {
    throw std::invalid_argument(std::string(op) + ": size is not a multiple of the row length");
  }
  return a.size() / static_cast<std::size_t>(row_len);
}

Tensor scalar(double v) { return Tensor({1}, v); }

}  // namespace

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_size(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Tensor g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_size(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Tensor g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, g, -1.0);
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_size(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      auto ga = t.grad(a).data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      auto gb = t.grad(b).data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Tape& t, Var a, double factor) {
  Tensor out = t.value(a);
  for (double& v : out.data()) v *= factor;
  return t.record(std::move(out), {a}, [a, factor](Tape& t, Var self) {
    accumulate(t, a, t.grad(self), factor);
  });
}

Var add_scalar(Tape& t, Var a, double offset) {
  Tensor out = t.value(a);
  for (double& v : out.data()) v += offset;
  return t.record(std::move(out), {a}, [a](Tape& t, Var self) { accumulate(t, a, t.grad(self)); });
}

Var mul_const(Tape& t, Var a, const Tensor& factors) {
  const Tensor& av = t.value(a);
  require_same_size(av, factors, "mul_const");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factors[i];
  return t.record(std::move(out), {a}, [a, factors](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    auto ga = t.grad(a).data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factors[i];
  });
}

Var add_const(Tape& t, Var a, const Tensor& offsets) {
  const Tensor& av = t.value(a);
  require_same_size(av, offsets, "add_const");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += offsets[i];
  return t.record(std::move(out), {a}, [a](Tape& t, Var self) { accumulate(t, a, t.grad(self)); });
}

Var clamp_unit(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (double& v : out.data()) v = std::min(1.0, std::max(0.0, v));
  return t.record(std::move(out), {a}, [a](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a);
    auto ga = t.grad(a).data();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (av[i] > 0.0 && av[i] < 1.0) ga[i] += g[i];
    }
  });
}

Var sigmoid(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (double& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  return t.record(std::move(out), {a}, [a](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    auto ga = t.grad(a).data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var exp(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (double& v : out.data()) v = std::exp(v);
  return t.record(std::move(out), {a}, [a](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    auto ga = t.grad(a).data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var leaky_relu(Tape& t, Var a, double slope) {
  Tensor out = t.value(a);
  for (double& v : out.data()) v = v > 0.0 ? v : slope * v;
  return t.record(std::move(out), {a}, [a, slope](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a);
    auto ga = t.grad(a).data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += av[i] > 0.0 ? g[i] : slope * g[i];
  });
}

Var add_n(Tape& t, const std::vector<Var>& terms) {
  if (terms.empty()) throw std::invalid_argument("add_n: no terms");
  Tensor out = t.value(terms.front());
  for (std::size_t k = 1; k < terms.size(); ++k) {
    const Tensor& v = t.value(terms[k]);
    require_same_size(out, v, "add_n");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return t.record(std::move(out), terms, [terms](Tape& t, Var self) {
    const Tensor g = t.grad(self);
    for (Var v : terms) accumulate(t, v, g);
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).data()) s += v;
  return t.record(scalar(s), {a}, [a](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(a).data()) v += g;
  });
}

Var mean(Tape& t, Var a) {
  const auto n = static_cast<double>(t.value(a).size());
  if (n == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(t, sum(t, a), 1.0 / n);
}

Var max_all(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  if (av.empty()) throw std::invalid_argument("max of empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < av.size(); ++i) {
    if (av[i] > av[best]) best = i;
  }
  return t.record(scalar(av[best]), {a}, [a, best](Tape& t, Var self) {
    t.grad(a)[best] += t.grad(self)[0];
  });
}

Var softmax_rows(Tape& t, Var a, int row_len) {
  const Tensor& av = t.value(a);
  const std::size_t rows = row_count(av, row_len, "softmax_rows");
  Tensor out = av;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * row_len;
    const double peak = *std::max_element(row, row + row_len);
    double z = 0.0;
    for (int k = 0; k < row_len; ++k) z += (row[k] = std::exp(row[k] - peak));
    for (int k = 0; k < row_len; ++k) row[k] /= z;
  }
  return t.record(std::move(out), {a}, [a, rows, row_len](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    auto ga = t.grad(a).data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * row_len;
      double dot = 0.0;
      for (int k = 0; k < row_len; ++k) dot += g[off + k] * y[off + k];
      for (int k = 0; k < row_len; ++k) ga[off + k] += y[off + k] * (g[off + k] - dot);
    }
  });
}

Var row_max(Tape& t, Var a, int row_len) {
  const Tensor& av = t.value(a);
  const std::size_t rows = row_count(av, row_len, "row_max");
  Tensor out({static_cast<int>(rows)});
  std::vector<std::size_t> arg(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = r * row_len;
    for (int k = 1; k < row_len; ++k) {
      if (av[r * row_len + k] > av[best]) best = r * row_len + k;
    }
    arg[r] = best;
    out[r] = av[best];
  }
  return t.record(std::move(out), {a}, [a, arg](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t r = 0; r < arg.size(); ++r) ga[arg[r]] += g[r];
  });
}

Var columns(Tape& t, Var a, int row_len, int begin, int end) {
  const Tensor& av = t.value(a);
  const std::size_t rows = row_count(av, row_len, "columns");
  if (begin < 0 || end > row_len || begin >= end) throw std::invalid_argument("columns: bad range");
  const int width = end - begin;
  Tensor out({static_cast<int>(rows), width});
  for (std::size_t r = 0; r < rows; ++r) {
    for (int k = 0; k < width; ++k) out[r * width + k] = av[r * row_len + begin + k];
  }
  return t.record(std::move(out), {a}, [a, rows, row_len, begin, width](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t r = 0; r < rows; ++r) {
      for (int k = 0; k < width; ++k) ga[r * row_len + begin + k] += g[r * width + k];
    }
  });
}

Var gather(Tape& t, Var a, const std::vector<int>& indices) {
  const Tensor& av = t.value(a);
  Tensor out({static_cast<int>(indices.size())});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= av.size()) {
      throw std::out_of_range("gather: index out of range");
    }
    out[i] = av[static_cast<std::size_t>(indices[i])];
  }
  return t.record(std::move(out), {a}, [a, indices](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < indices.size(); ++i) ga[static_cast<std::size_t>(indices[i])] += g[i];
  });
}

Var conv2d(Tape& t, Var input, Var weight, Var bias, int stride, int pad) {
  const Tensor& x = t.value(input);
  const Tensor& w = t.value(weight);
  const Tensor& b = t.value(bias);
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != w.dim(2) || w.dim(3) != x.channels() ||
      b.size() != static_cast<std::size_t>(w.dim(0)) || stride < 1 || pad < 0) {
    throw std::invalid_argument("conv2d: incompatible shapes");
  }
  const int h = x.height(), wd = x.width(), cin = x.channels();
  const int cout = w.dim(0), k = w.dim(1);
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: input smaller than kernel");

  Tensor out = Tensor::image(ho, wo, cout);
  const double* xp = x.data().data();
  const double* wp = w.data().data();
  double* op = out.data().data();
  const std::size_t wstride = static_cast<std::size_t>(k) * k * cin;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      double* acc = op + (static_cast<std::size_t>(oy) * wo + ox) * cout;
      for (int co = 0; co < cout; ++co) acc[co] = b[co];
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= wd) continue;
          const double* xi = xp + (static_cast<std::size_t>(iy) * wd + ix) * cin;
          const double* wk = wp + (static_cast<std::size_t>(ky) * k + kx) * cin;
          for (int co = 0; co < cout; ++co) {
            const double* wc = wk + co * wstride;
            double s = 0.0;
            for (int ci = 0; ci < cin; ++ci) s += wc[ci] * xi[ci];
            acc[co] += s;
          }
        }
      }
    }
  }

  return t.record(std::move(out), {input, weight, bias},
                  [=](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(input);
    const Tensor& w = t.value(weight);
    const bool want_x = t.requires_grad(input);
    const bool want_w = t.requires_grad(weight);
    const bool want_b = t.requires_grad(bias);
    double* gx = want_x ? t.grad(input).data().data() : nullptr;
    double* gw = want_w ? t.grad(weight).data().data() : nullptr;
    double* gb = want_b ? t.grad(bias).data().data() : nullptr;
    const double* xp = x.data().data();
    const double* wp = w.data().data();
    const double* gp = g.data().data();
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const double* go = gp + (static_cast<std::size_t>(oy) * wo + ox) * cout;
        if (gb) {
          for (int co = 0; co < cout; ++co) gb[co] += go[co];
        }
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= wd) continue;
            const std::size_t xoff = (static_cast<std::size_t>(iy) * wd + ix) * cin;
            const std::size_t koff = (static_cast<std::size_t>(ky) * k + kx) * cin;
            for (int co = 0; co < cout; ++co) {
              const double gv = go[co];
              if (gv == 0.0) continue;
              const std::size_t woff = co * wstride + koff;
              if (gx) {
                for (int ci = 0; ci < cin; ++ci) gx[xoff + ci] += gv * wp[woff + ci];
              }
              if (gw) {
                for (int ci = 0; ci < cin; ++ci) gw[woff + ci] += gv * xp[xoff + ci];
              }
            }
          }
        }
      }
    }
  });
}

Var resample(Tape& t, Var src, const Warp& warp) {
  Tensor out = warp.apply(t.value(src));
  return t.record(std::move(out), {src}, [src, warp](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    Tensor& gs = t.grad(src);
    const int ch = gs.channels();
    for (std::size_t p = 0; p < warp.taps.size(); ++p) {
      const Warp::Taps& tp = warp.taps[p];
      for (int k = 0; k < tp.count; ++k) {
        const std::size_t base = static_cast<std::size_t>(tp.index[k]) * ch;
        for (int c = 0; c < ch; ++c) gs[base + c] += tp.weight[k] * g[p * ch + c];
      }
    }
  });
}

Var select(Tape& t, Var base, Var over, const Tensor& mask) {
  const Tensor& bv = t.value(base);
  const Tensor& ov = t.value(over);
  require_same_size(bv, ov, "select");
  if (bv.rank() != 3 || mask.size() != static_cast<std::size_t>(bv.height()) * bv.width()) {
    throw std::invalid_argument("select: mask does not match image");
  }
  const int ch = bv.channels();
  Tensor out = bv;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (mask[p] >= 0.5) {
      for (int c = 0; c < ch; ++c) out[p * ch + c] = ov[p * ch + c];
    }
  }
  return t.record(std::move(out), {base, over}, [base, over, mask, ch](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    const bool want_base = t.requires_grad(base);
    const bool want_over = t.requires_grad(over);
    for (std::size_t p = 0; p < mask.size(); ++p) {
      const bool on = mask[p] >= 0.5;
      if (on && want_over) {
        Tensor& go = t.grad(over);
        for (int c = 0; c < ch; ++c) go[p * ch + c] += g[p * ch + c];
      } else if (!on && want_base) {
        Tensor& gb = t.grad(base);
        for (int c = 0; c < ch; ++c) gb[p * ch + c] += g[p * ch + c];
      }
    }
  });
}

Var bce_with_logits(Tape& t, Var logits, const Tensor& targets, const Tensor& weights) {
  const Tensor& z = t.value(logits);
  require_same_size(z, targets, "bce_with_logits");
  require_same_size(z, weights, "bce_with_logits");
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    // log(1 + e^z) - y z, written to stay finite for large |z|.
    const double softplus = std::max(z[i], 0.0) + std::log1p(std::exp(-std::abs(z[i])));
    total += weights[i] * (softplus - targets[i] * z[i]);
  }
  return t.record(scalar(total), {logits}, [logits, targets, weights](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    const Tensor& z = t.value(logits);
    Tensor& gz = t.grad(logits);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-z[i]));
      gz[i] += g * weights[i] * (p - targets[i]);
    }
  });
}

Var softmax_cross_entropy(Tape& t, Var logits, int row_len, const std::vector<int>& targets,
                          const Tensor& row_weights) {
  const Tensor& z = t.value(logits);
  const std::size_t rows = row_count(z, row_len, "softmax_cross_entropy");
  if (targets.size() != rows || row_weights.size() != rows) {
    throw std::invalid_argument("softmax_cross_entropy: target count mismatch");
  }
  Tensor probs = z;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = probs.data().data() + r * row_len;
    const double peak = *std::max_element(row, row + row_len);
    double zsum = 0.0;
    for (int k = 0; k < row_len; ++k) zsum += (row[k] = std::exp(row[k] - peak));
    for (int k = 0; k < row_len; ++k) row[k] /= zsum;
    if (row_weights[r] != 0.0) total -= row_weights[r] * std::log(std::max(row[targets[r]], 1e-300));
  }
  return t.record(scalar(total), {logits}, [=](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    Tensor& gz = t.grad(logits);
    for (std::size_t r = 0; r < rows; ++r) {
      if (row_weights[r] == 0.0) continue;
      for (int k = 0; k < row_len; ++k) {
        const double y = k == targets[r] ? 1.0 : 0.0;
        gz[r * row_len + k] += g * row_weights[r] * (probs[r * row_len + k] - y);
      }
    }
  });
}

Var weighted_squared_error(Tape& t, Var a, const Tensor& targets, const Tensor& weights) {
  const Tensor& av = t.value(a);
  require_same_size(av, targets, "weighted_squared_error");
  require_same_size(av, weights, "weighted_squared_error");
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - targets[i];
    total += weights[i] * d * d;
  }
  return t.record(scalar(total), {a}, [a, targets, weights](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    const Tensor& av = t.value(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += 2.0 * g * weights[i] * (av[i] - targets[i]);
  });
}

}  // namespace cloak::ad
