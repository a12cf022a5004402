#include "tsa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsa/errors.hpp"

namespace tsa {

namespace {

bool should_record(const Tensor& a) { return active_tape() && a.requires_grad(); }

bool should_record(const Tensor& a, const Tensor& b) {
  return active_tape() && (a.requires_grad() || b.requires_grad());
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) +
                           " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` aligned right against `out`; 0 where `in` broadcasts.
std::vector<std::size_t> bcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::vector<std::size_t> own(in.size(), 1);
  for (std::size_t i = in.size(); i-- > 1;) own[i - 1] = own[i] * in[i];
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    strides[offset + i] = (in[i] == 1 && out[offset + i] != 1) ? 0 : own[i];
  }
  return strides;
}

// Maps a flat index over `out` to flat offsets in the two broadcast inputs.
void map_offsets(std::size_t flat, const Shape& out, const std::vector<std::size_t>& sa,
                 const std::vector<std::size_t>& sb, std::size_t& ia, std::size_t& ib) {
  ia = 0;
  ib = 0;
  for (std::size_t k = out.size(); k-- > 0;) {
    const std::size_t idx = flat % out[k];
    flat /= out[k];
    ia += idx * sa[k];
    ib += idx * sb[k];
  }
}

struct Bcast {
  Shape out;
  std::vector<std::size_t> sa, sb;
  bool trivial;  // both inputs already have the output shape
};

Bcast make_bcast(const Shape& a, const Shape& b, const char* op) {
  Bcast bc;
  bc.out = broadcast_shapes(a, b, op);
  bc.sa = bcast_strides(a, bc.out);
  bc.sb = bcast_strides(b, bc.out);
  bc.trivial = (a == bc.out && b == bc.out);
  return bc;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast bc = make_bcast(a.shape(), b.shape(), "add");
  const bool rec = should_record(a, b);
  Tensor out = Tensor::zeros(bc.out, rec);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  const std::size_t n = ov.size();
  if (bc.trivial) {
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t ia, ib;
      map_offsets(i, bc.out, bc.sa, bc.sb, ia, ib);
      ov[i] = av[ia] + bv[ib];
    }
  }
  if (rec) {
    active_tape()->record([a, b, out, bc]() {
      const auto& gy = out.grad();
      const std::size_t m = gy.size();
      if (bc.trivial) {
        if (a.requires_grad()) {
          auto& ga = a.grad();
          for (std::size_t i = 0; i < m; ++i) ga[i] += gy[i];
        }
        if (b.requires_grad()) {
          auto& gb = b.grad();
          for (std::size_t i = 0; i < m; ++i) gb[i] += gy[i];
        }
        return;
      }
      for (std::size_t i = 0; i < m; ++i) {
        std::size_t ia, ib;
        map_offsets(i, bc.out, bc.sa, bc.sb, ia, ib);
        if (a.requires_grad()) a.grad()[ia] += gy[i];
        if (b.requires_grad()) b.grad()[ib] += gy[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Bcast bc = make_bcast(a.shape(), b.shape(), "sub");
  const bool rec = should_record(a, b);
  Tensor out = Tensor::zeros(bc.out, rec);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    std::size_t ia, ib;
    map_offsets(i, bc.out, bc.sa, bc.sb, ia, ib);
    ov[i] = av[ia] - bv[ib];
  }
  if (rec) {
    active_tape()->record([a, b, out, bc]() {
      const auto& gy = out.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        std::size_t ia, ib;
        map_offsets(i, bc.out, bc.sa, bc.sb, ia, ib);
        if (a.requires_grad()) a.grad()[ia] += gy[i];
        if (b.requires_grad()) b.grad()[ib] -= gy[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bcast bc = make_bcast(a.shape(), b.shape(), "mul");
  const bool rec = should_record(a, b);
  Tensor out = Tensor::zeros(bc.out, rec);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  const std::size_t n = ov.size();
  if (bc.trivial) {
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t ia, ib;
      map_offsets(i, bc.out, bc.sa, bc.sb, ia, ib);
      ov[i] = av[ia] * bv[ib];
    }
  }
  if (rec) {
    active_tape()->record([a, b, out, bc]() {
      const auto& gy = out.grad();
      const auto& av2 = a.values();
      const auto& bv2 = b.values();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        std::size_t ia, ib;
        if (bc.trivial) {
          ia = ib = i;
        } else {
          map_offsets(i, bc.out, bc.sa, bc.sb, ia, ib);
        }
        if (a.requires_grad()) a.grad()[ia] += gy[i] * bv2[ib];
        if (b.requires_grad()) b.grad()[ib] += gy[i] * av2[ia];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(x.shape(), rec);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * xv[i];
  if (rec) {
    active_tape()->record([x, out, c]() {
      const auto& gy = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += c * gy[i];
    });
  }
  return out;
}

Tensor pow_scalar(const Tensor& x, double p) {
  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(x.shape(), rec);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::pow(xv[i], p);
  if (rec) {
    active_tape()->record([x, out, p]() {
      const auto& gy = out.grad();
      const auto& xv2 = x.values();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        gx[i] += gy[i] * p * std::pow(xv2[i], p - 1.0);
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(as) +
                         " x " + shape_str(bs));
  }
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as[as.size() - 1];
  const std::size_t k2 = bs[bs.size() - 2];
  const std::size_t n = bs[bs.size() - 1];
  if (k != k2) {
    throw DimensionError("matmul inner extents differ: " + shape_str(as) + " x " +
                         shape_str(bs));
  }
  const Shape a_batch(as.begin(), as.end() - 2);
  const Shape b_batch(bs.begin(), bs.end() - 2);
  Shape out_batch;
  try {
    out_batch = broadcast_shapes(a_batch, b_batch, "matmul");
  } catch (const DimensionError&) {
    throw DimensionError("matmul batch extents incompatible: " + shape_str(as) +
                         " x " + shape_str(bs));
  }
  const auto sa = bcast_strides(a_batch, out_batch);
  const auto sb = bcast_strides(b_batch, out_batch);
  Shape out_shape = out_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);

  const bool rec = should_record(a, b);
  Tensor out = Tensor::zeros(out_shape, rec);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  const std::size_t nbatch = numel(out_batch);
  const std::size_t mk = m * k, kn = k * n, mn = m * n;
  for (std::size_t ob = 0; ob < nbatch; ++ob) {
    std::size_t ia, ib;
    map_offsets(ob, out_batch, sa, sb, ia, ib);
    const double* pa = av.data() + ia * mk;
    const double* pb = bv.data() + ib * kn;
    double* pc = ov.data() + ob * mn;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = pa[i * k + kk];
        const double* brow = pb + kk * n;
        double* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    }
  }
  if (rec) {
    active_tape()->record([a, b, out, out_batch, sa, sb, m, k, n]() {
      const auto& gy = out.grad();
      const auto& av2 = a.values();
      const auto& bv2 = b.values();
      const std::size_t mk = m * k, kn = k * n, mn = m * n;
      const std::size_t nbatch = numel(out_batch);
      for (std::size_t ob = 0; ob < nbatch; ++ob) {
        std::size_t ia, ib;
        map_offsets(ob, out_batch, sa, sb, ia, ib);
        const double* pgy = gy.data() + ob * mn;
        if (a.requires_grad()) {
          double* pga = a.grad().data() + ia * mk;
          const double* pb = bv2.data() + ib * kn;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) {
              double s = 0.0;
              const double* gyrow = pgy + i * n;
              const double* brow = pb + kk * n;
              for (std::size_t j = 0; j < n; ++j) s += gyrow[j] * brow[j];
              pga[i * k + kk] += s;
            }
          }
        }
        if (b.requires_grad()) {
          double* pgb = b.grad().data() + ib * kn;
          const double* pa = av2.data() + ia * mk;
          for (std::size_t i = 0; i < m; ++i) {
            const double* gyrow = pgy + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double aik = pa[i * k + kk];
              double* gbrow = pgb + kk * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * gyrow[j];
            }
          }
        }
      }
    });
  }
  return out;
}

namespace {

std::vector<std::size_t> dense_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

Tensor transpose(const Tensor& x, std::size_t dim_a, std::size_t dim_b) {
  const Shape& xs = x.shape();
  if (dim_a >= xs.size() || dim_b >= xs.size()) {
    throw DimensionError("transpose axes out of range for shape " + shape_str(xs));
  }
  Shape out_shape = xs;
  std::swap(out_shape[dim_a], out_shape[dim_b]);
  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(out_shape, rec);
  const auto in_strides = dense_strides(xs);
  const auto& xv = x.values();
  auto& ov = out.values();
  const std::size_t total = ov.size();
  const std::size_t rank = xs.size();
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t d = rank; d-- > 0;) {
      idx[d] = rem % out_shape[d];
      rem /= out_shape[d];
    }
    std::swap(idx[dim_a], idx[dim_b]);
    std::size_t in_flat = 0;
    for (std::size_t d = 0; d < rank; ++d) in_flat += idx[d] * in_strides[d];
    ov[flat] = xv[in_flat];
  }
  if (rec) {
    active_tape()->record([x, out, out_shape, in_strides, dim_a, dim_b]() {
      const auto& gy = out.grad();
      auto& gx = x.grad();
      const std::size_t rank = out_shape.size();
      std::vector<std::size_t> idx(rank, 0);
      for (std::size_t flat = 0; flat < gy.size(); ++flat) {
        std::size_t rem = flat;
        for (std::size_t d = rank; d-- > 0;) {
          idx[d] = rem % out_shape[d];
          rem /= out_shape[d];
        }
        std::swap(idx[dim_a], idx[dim_b]);
        std::size_t in_flat = 0;
        for (std::size_t d = 0; d < rank; ++d) in_flat += idx[d] * in_strides[d];
        gx[in_flat] += gy[flat];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size()) {
    throw DimensionError("reshape from " + shape_str(x.shape()) + " to " +
                         shape_str(new_shape) + " changes element count");
  }
  const bool rec = should_record(x);
  Tensor out = Tensor::from_data(std::move(new_shape), x.values(), rec);
  if (rec) {
    active_tape()->record([x, out]() {
      const auto& gy = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(x.shape(), rec);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (rec) {
    active_tape()->record([x, out]() {
      const auto& gy = out.grad();
      const auto& xv2 = x.values();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        if (xv2[i] > 0.0) gx[i] += gy[i];
      }
    });
  }
  return out;
}

Tensor tanh_op(const Tensor& x) {
  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(x.shape(), rec);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
  if (rec) {
    active_tape()->record([x, out]() {
      const auto& gy = out.grad();
      const auto& yv = out.values();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (1.0 - yv[i] * yv[i]);
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(x.shape(), rec);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      const double e = std::exp(-v);
      ov[i] = 1.0 / (1.0 + e);
    } else {
      const double e = std::exp(v);
      ov[i] = e / (1.0 + e);
    }
  }
  if (rec) {
    active_tape()->record([x, out]() {
      const auto& gy = out.grad();
      const auto& yv = out.values();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
    });
  }
  return out;
}

namespace {

// Expands a broadcastable mask to one flag per element of `shape`.
std::vector<std::uint8_t> expand_mask(const Mask& mask, const Shape& shape) {
  const Shape merged = broadcast_shapes(shape, mask.shape, "mask");
  if (merged != shape) {
    throw DimensionError("mask shape " + shape_str(mask.shape) +
                         " does not broadcast to " + shape_str(shape));
  }
  if (mask.valid.size() != numel(mask.shape)) {
    throw DimensionError("mask data does not match its shape " + shape_str(mask.shape));
  }
  const auto sm = bcast_strides(mask.shape, shape);
  const auto sx = bcast_strides(shape, shape);
  std::vector<std::uint8_t> out(numel(shape), 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t im, ix;
    map_offsets(i, shape, sm, sx, im, ix);
    out[i] = mask.valid[im];
  }
  return out;
}

}  // namespace

Tensor softmax_masked(const Tensor& x, const Mask* mask) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw DimensionError("softmax needs rank >= 1, got a scalar");
  const std::size_t n = xs.back();
  const std::size_t rows = x.size() / n;
  std::vector<std::uint8_t> flags;
  if (mask) flags = expand_mask(*mask, xs);

  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(xs, rec);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    double mx = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!flags.empty() && !flags[base + j]) continue;
      if (!any || xv[base + j] > mx) mx = xv[base + j];
      any = true;
    }
    if (!any) {
      throw InvalidMaskError("softmax row " + std::to_string(r) + " is fully masked");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!flags.empty() && !flags[base + j]) continue;
      sum += std::exp(xv[base + j] - mx);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!flags.empty() && !flags[base + j]) {
        ov[base + j] = 0.0;  // exact zero on masked positions
      } else {
        ov[base + j] = std::exp(xv[base + j] - mx) / sum;
      }
    }
  }
  if (rec) {
    auto shared_flags = std::make_shared<std::vector<std::uint8_t>>(std::move(flags));
    active_tape()->record([x, out, shared_flags, n, rows]() {
      const auto& gy = out.grad();
      const auto& yv = out.values();
      auto& gx = x.grad();
      const auto& fl = *shared_flags;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (!fl.empty() && !fl[base + j]) continue;
          dot += gy[base + j] * yv[base + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          if (!fl.empty() && !fl[base + j]) continue;
          gx[base + j] += yv[base + j] * (gy[base + j] - dot);
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw DimensionError("layer_norm needs rank >= 1 input");
  const std::size_t d = xs.back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm gain/bias must have shape [" + std::to_string(d) +
                         "], got " + shape_str(gain.shape()) + " and " +
                         shape_str(bias.shape()));
  }
  const std::size_t axis = xs.size() - 1;
  Tensor mean = scale(sum_axis(x, axis, /*keepdim=*/true), 1.0 / static_cast<double>(d));
  Tensor centered = sub(x, mean);
  Tensor var = scale(sum_axis(mul(centered, centered), axis, true),
                     1.0 / static_cast<double>(d));
  Tensor inv = pow_scalar(add(var, Tensor::scalar(eps)), -0.5);
  Tensor normed = mul(centered, inv);
  return add(mul(normed, gain), bias);
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng* rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::eval || p == 0.0) return x;
  if (!rng) throw UsageError("dropout in train mode requires an rng");
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor gate = Tensor::zeros(x.shape());
  auto& gv = gate.values();
  for (std::size_t i = 0; i < gv.size(); ++i) {
    gv[i] = rng->uniform() < p ? 0.0 : keep_scale;
  }
  return mul(x, gate);
}

Tensor label_smoothed_ce(const Tensor& logits, const std::vector<int>& labels,
                         double eps_ls) {
  if (eps_ls < 0.0 || eps_ls >= 1.0) {
    throw ConfigError("label smoothing must be in [0, 1), got " + std::to_string(eps_ls));
  }
  const Shape& ls = logits.shape();
  if (ls.size() != 2) {
    throw DimensionError("label_smoothed_ce expects logits [B x C], got " + shape_str(ls));
  }
  const std::size_t b = ls[0], c = ls[1];
  if (labels.size() != b) {
    throw DimensionError("label count " + std::to_string(labels.size()) +
                         " does not match batch size " + std::to_string(b));
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DataError("label index " + std::to_string(labels[i]) +
                      " out of range for " + std::to_string(c) + " classes");
    }
  }
  const bool rec = should_record(logits);
  const auto& lv = logits.values();
  auto probs = std::make_shared<std::vector<double>>(b * c, 0.0);
  const double off_target = eps_ls / static_cast<double>(c);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t base = i * c;
    double mx = lv[base];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lv[base + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(lv[base + j] - mx);
    const double lse = mx + std::log(sum);
    double dot = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      (*probs)[base + j] = std::exp(lv[base + j] - lse);
      const double target =
          off_target + (static_cast<std::size_t>(labels[i]) == j ? 1.0 - eps_ls : 0.0);
      dot += target * lv[base + j];
    }
    total += lse - dot;
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(b), rec);
  if (rec) {
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    active_tape()->record([logits, out, probs, labels_copy, b, c, eps_ls, off_target]() {
      const double gy = out.grad()[0];
      auto& gx = logits.grad();
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t base = i * c;
        for (std::size_t j = 0; j < c; ++j) {
          const double target =
              off_target +
              (static_cast<std::size_t>((*labels_copy)[i]) == j ? 1.0 - eps_ls : 0.0);
          gx[base + j] += gy * ((*probs)[base + j] - target) / static_cast<double>(b);
        }
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  const bool rec = should_record(x);
  const auto& xv = x.values();
  double s = 0.0;
  for (double v : xv) s += v;
  Tensor out = Tensor::scalar(s, rec);
  if (rec) {
    active_tape()->record([x, out]() {
      const double gy = out.grad()[0];
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
    });
  }
  return out;
}

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  const Shape& xs = x.shape();
  if (axis >= xs.size()) {
    throw DimensionError("sum_axis axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(xs));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
  const std::size_t extent = xs[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i == axis) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(xs[i]);
    }
  }
  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(out_shape, rec);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < extent; ++k) {
      const std::size_t base = (o * extent + k) * inner;
      const std::size_t obase = o * inner;
      for (std::size_t i = 0; i < inner; ++i) ov[obase + i] += xv[base + i];
    }
  }
  if (rec) {
    active_tape()->record([x, out, outer, extent, inner]() {
      const auto& gy = out.grad();
      auto& gx = x.grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < extent; ++k) {
          const std::size_t base = (o * extent + k) * inner;
          const std::size_t obase = o * inner;
          for (std::size_t i = 0; i < inner; ++i) gx[base + i] += gy[obase + i];
        }
      }
    });
  }
  return out;
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last needs at least one part");
  const Shape& first = parts[0].shape();
  if (first.empty()) throw DimensionError("concat_last needs rank >= 1 parts");
  std::size_t total_last = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() ||
        !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw DimensionError("concat_last parts disagree: " + shape_str(first) + " vs " +
                           shape_str(s));
    }
    total_last += s.back();
    any_grad = any_grad || p.requires_grad();
  }
  Shape out_shape = first;
  out_shape.back() = total_last;
  const bool rec = active_tape() && any_grad;
  Tensor out = Tensor::zeros(out_shape, rec);
  const std::size_t outer = numel(out_shape) / total_last;
  auto& ov = out.values();
  std::size_t col = 0;
  for (const Tensor& p : parts) {
    const std::size_t d = p.shape().back();
    const auto& pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < d; ++i) ov[o * total_last + col + i] = pv[o * d + i];
    }
    col += d;
  }
  if (rec) {
    active_tape()->record([parts, out, outer, total_last]() {
      const auto& gy = out.grad();
      std::size_t col = 0;
      for (const Tensor& p : parts) {
        const std::size_t d = p.shape().back();
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < d; ++i) gp[o * d + i] += gy[o * total_last + col + i];
          }
        }
        col += d;
      }
    });
  }
  return out;
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw DimensionError("slice_last needs rank >= 1 input");
  const std::size_t d = xs.back();
  if (len == 0 || start + len > d) {
    throw DimensionError("slice_last [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of range for last extent " +
                         std::to_string(d));
  }
  Shape out_shape = xs;
  out_shape.back() = len;
  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(out_shape, rec);
  const std::size_t outer = x.size() / d;
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < len; ++i) ov[o * len + i] = xv[o * d + start + i];
  }
  if (rec) {
    active_tape()->record([x, out, outer, d, start, len]() {
      const auto& gy = out.grad();
      auto& gx = x.grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < len; ++i) gx[o * d + start + i] += gy[o * len + i];
      }
    });
  }
  return out;
}

Tensor slice_time(const Tensor& x, std::size_t t) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw DimensionError("slice_time needs rank >= 2, got " + shape_str(xs));
  const std::size_t b = xs[0], steps = xs[1];
  if (t >= steps) {
    throw DimensionError("time index " + std::to_string(t) + " out of range for " +
                         shape_str(xs));
  }
  std::size_t rest = 1;
  for (std::size_t i = 2; i < xs.size(); ++i) rest *= xs[i];
  Shape out_shape{b};
  out_shape.insert(out_shape.end(), xs.begin() + 2, xs.end());
  const bool rec = should_record(x);
  Tensor out = Tensor::zeros(out_shape, rec);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t base = (i * steps + t) * rest;
    for (std::size_t j = 0; j < rest; ++j) ov[i * rest + j] = xv[base + j];
  }
  if (rec) {
    active_tape()->record([x, out, b, steps, t, rest]() {
      const auto& gy = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t base = (i * steps + t) * rest;
        for (std::size_t j = 0; j < rest; ++j) gx[base + j] += gy[i * rest + j];
      }
    });
  }
  return out;
}

Tensor stack_time(const std::vector<Tensor>& steps) {
  if (steps.empty()) throw DimensionError("stack_time needs at least one step");
  const Shape& first = steps[0].shape();
  if (first.empty()) throw DimensionError("stack_time needs rank >= 1 steps");
  bool any_grad = false;
  for (const Tensor& s : steps) {
    if (s.shape() != first) {
      throw DimensionError("stack_time steps disagree: " + shape_str(first) + " vs " +
                           shape_str(s.shape()));
    }
    any_grad = any_grad || s.requires_grad();
  }
  const std::size_t b = first[0];
  std::size_t rest = 1;
  for (std::size_t i = 1; i < first.size(); ++i) rest *= first[i];
  const std::size_t t_max = steps.size();
  Shape out_shape{b, t_max};
  out_shape.insert(out_shape.end(), first.begin() + 1, first.end());
  const bool rec = active_tape() && any_grad;
  Tensor out = Tensor::zeros(out_shape, rec);
  auto& ov = out.values();
  for (std::size_t t = 0; t < t_max; ++t) {
    const auto& sv = steps[t].values();
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t base = (i * t_max + t) * rest;
      for (std::size_t j = 0; j < rest; ++j) ov[base + j] = sv[i * rest + j];
    }
  }
  if (rec) {
    active_tape()->record([steps, out, b, t_max, rest]() {
      const auto& gy = out.grad();
      for (std::size_t t = 0; t < t_max; ++t) {
        if (!steps[t].requires_grad()) continue;
        auto& gs = steps[t].grad();
        for (std::size_t i = 0; i < b; ++i) {
          const std::size_t base = (i * t_max + t) * rest;
          for (std::size_t j = 0; j < rest; ++j) gs[i * rest + j] += gy[base + j];
        }
      }
    });
  }
  return out;
}

}  // namespace tsa
