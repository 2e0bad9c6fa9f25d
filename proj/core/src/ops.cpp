#include "hcbm/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <memory>

namespace hcbm::ad {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void require_same_shape(const char* op, const BasicVar<T>& a, const BasicVar<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const BasicVar<T>& a, std::size_t rank) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(a.shape()));
  }
}

template <typename T>
void require_same_tape(const char* op, const BasicVar<T>& a, const BasicVar<T>& b) {
  if (&a.tape() != &b.tape()) throw GraphError(std::string(op) + ": operands on different tapes");
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// col[(c*K + ky)*K + kx, y*W + x] = in[c, y + ky - pad, x + kx - pad] (zero outside)
template <typename T>
void im2col(const T* in, std::size_t C, std::size_t H, std::size_t W, std::size_t K, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(K / 2);
  const auto h = static_cast<std::ptrdiff_t>(H);
  const auto w = static_cast<std::ptrdiff_t>(W);
  for (std::size_t c = 0; c < C; ++c) {
    const T* plane = in + c * H * W;
    for (std::size_t ky = 0; ky < K; ++ky) {
      for (std::size_t kx = 0; kx < K; ++kx) {
        T* row = col + ((c * K + ky) * K + kx) * H * W;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - dx);
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          T* out = row + y * w;
          const std::ptrdiff_t iy = y + dy;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + w, T(0));
            continue;
          }
          std::fill(out, out + x0, T(0));
          const T* src = plane + iy * w + dx;
          std::copy(src + x0, src + x1, out + x0);
          std::fill(out + x1, out + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t C, std::size_t H, std::size_t W, std::size_t K, T* out) {
  const auto pad = static_cast<std::ptrdiff_t>(K / 2);
  const auto h = static_cast<std::ptrdiff_t>(H);
  const auto w = static_cast<std::ptrdiff_t>(W);
  for (std::size_t c = 0; c < C; ++c) {
    T* plane = out + c * H * W;
    for (std::size_t ky = 0; ky < K; ++ky) {
      for (std::size_t kx = 0; kx < K; ++kx) {
        const T* row = col + ((c * K + ky) * K + kx) * H * W;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - dx);
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = y + dy;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + y * w;
          T* dst = plane + iy * w + dx;
          for (std::ptrdiff_t x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicVar<T> add(BasicVar<T> a, BasicVar<T> b) {
  require_same_tape("add", a, b);
  require_same_shape("add", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  BasicTensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](BasicTape<T>& t, std::uint32_t self) {
    const auto& g = t.grad_ref(self);
    for (auto id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      auto& acc = t.grad_accumulator(id);
      for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
    }
  });
}

template <typename T>
BasicVar<T> mul(BasicVar<T> a, BasicVar<T> b) {
  require_same_tape("mul", a, b);
  require_same_shape("mul", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  BasicTensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](BasicTape<T>& t, std::uint32_t self) {
    const auto& g = t.grad_ref(self);
    if (t.requires_grad(ia)) {
      const auto& other = t.value(ib);
      auto& acc = t.grad_accumulator(ia);
      for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i] * other[i];
    }
    if (t.requires_grad(ib)) {
      const auto& other = t.value(ia);
      auto& acc = t.grad_accumulator(ib);
      for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i] * other[i];
    }
  });
}

template <typename T>
BasicVar<T> scale(BasicVar<T> a, T factor) {
  const auto& av = a.value();
  BasicTensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * factor;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, factor](BasicTape<T>& t, std::uint32_t self) {
    const auto& g = t.grad_ref(self);
    auto& acc = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i] * factor;
  });
}

template <typename T>
BasicVar<T> sum(BasicVar<T> a) {
  const auto& av = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += static_cast<double>(av[i]);
  const auto ia = a.id();
  return a.tape().record(BasicTensor<T>::scalar(static_cast<T>(s)), {ia},
                         [ia](BasicTape<T>& t, std::uint32_t self) {
                           const T g = t.grad_ref(self)[0];
                           auto& acc = t.grad_accumulator(ia);
                           for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g;
                         });
}

template <typename T>
BasicVar<T> mean(BasicVar<T> a) {
  const auto n = a.value().numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), static_cast<T>(1.0 / static_cast<double>(n)));
}

template <typename T>
BasicVar<T> relu(BasicVar<T> a) {
  const auto& av = a.value();
  BasicTensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](BasicTape<T>& t, std::uint32_t self) {
    const auto& g = t.grad_ref(self);
    const auto& x = t.value(ia);
    auto& acc = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (x[i] > T(0)) acc[i] += g[i];
    }
  });
}

template <typename T>
BasicVar<T> sigmoid(BasicVar<T> a) {
  const auto& av = a.value();
  BasicTensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = stable_sigmoid(av[i]);
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](BasicTape<T>& t, std::uint32_t self) {
    const auto& g = t.grad_ref(self);
    const auto& s = t.value(self);
    auto& acc = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i] * s[i] * (T(1) - s[i]);
  });
}

template <typename T>
BasicVar<T> threshold_ste(BasicVar<T> p) {
  const auto& pv = p.value();
  BasicTensor<T> out(pv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = pv[i] > T(0.5) ? T(1) : T(0);
  const auto ip = p.id();
  return p.tape().record(std::move(out), {ip}, [ip](BasicTape<T>& t, std::uint32_t self) {
    const auto& g = t.grad_ref(self);
    auto& acc = t.grad_accumulator(ip);
    for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
  });
}

template <typename T>
BasicVar<T> dropout(BasicVar<T> a, double p, Mode mode, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidConfigError("dropout probability must be in [0, 1)");
  if (mode == Mode::eval || p == 0.0) return a;
  const auto& av = a.value();
  auto mask = std::make_shared<BasicTensor<T>>(av.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  BasicTensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    (*mask)[i] = u < p ? T(0) : keep_scale;
    out[i] = av[i] * (*mask)[i];
  }
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, mask](BasicTape<T>& t, std::uint32_t self) {
    const auto& g = t.grad_ref(self);
    auto& acc = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i] * (*mask)[i];
  });
}

template <typename T>
BasicVar<T> concat(std::span<const BasicVar<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + to_string(first));
  if (parts.size() == 1) return parts[0];

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_same_tape("concat", parts[0], p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw ShapeError("concat: shape " + to_string(s) + " vs " + to_string(first));
    out_shape[axis] += s[axis];
    ids.push_back(p.id());
    widths.push_back(s[axis] * inner);
  }
  const std::size_t row = out_shape[axis] * inner;
  BasicTensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * widths[k], widths[k], out.data() + o * row + offset);
    }
    offset += widths[k];
  }
  return parts[0].tape().record(
      std::move(out), ids, [ids, widths, outer, row](BasicTape<T>& t, std::uint32_t self) {
        const auto& g = t.grad_ref(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.requires_grad(ids[k])) {
            auto& acc = t.grad_accumulator(ids[k]);
            for (std::size_t o = 0; o < outer; ++o) {
              const T* src = g.data() + o * row + off;
              T* dst = acc.data() + o * widths[k];
              for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
            }
          }
          off += widths[k];
        }
      });
}

template <typename T>
BasicVar<T> reshape(BasicVar<T> a, Shape shape) {
  if (shape_numel(shape) != a.value().numel()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " to " + to_string(shape));
  }
  const auto ia = a.id();
  return a.tape().record(a.value().reshaped(std::move(shape)), {ia},
                         [ia](BasicTape<T>& t, std::uint32_t self) {
                           const auto& g = t.grad_ref(self);
                           auto& acc = t.grad_accumulator(ia);
                           for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
                         });
}

template <typename T>
BasicVar<T> flatten(BasicVar<T> a) {
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("flatten of a rank-0 tensor");
  return reshape(a, Shape{s[0], a.value().numel() / std::max<std::size_t>(s[0], 1)});
}

template <typename T>
BasicVar<T> linear(BasicVar<T> x, BasicVar<T> weight, BasicVar<T> bias) {
  require_same_tape("linear", x, weight);
  require_same_tape("linear", x, bias);
  require_rank("linear input", x, 2);
  require_rank("linear weight", weight, 2);
  const std::size_t B = x.shape()[0], in = x.shape()[1];
  const std::size_t out_dim = weight.shape()[0];
  if (weight.shape()[1] != in) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " vs weight " +
                     to_string(weight.shape()));
  }
  if (bias.shape() != Shape{out_dim}) {
    throw ShapeError("linear: weight " + to_string(weight.shape()) + " vs bias " +
                     to_string(bias.shape()));
  }
  BasicTensor<T> out(Shape{B, out_dim});
  {
    ConstMatMap<T> X(x.value().data(), B, in);
    ConstMatMap<T> Wm(weight.value().data(), out_dim, in);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value().data(), out_dim);
    MatMap<T> Y(out.data(), B, out_dim);
    Y.noalias() = X * Wm.transpose();
    Y.rowwise() += b;
  }
  const auto ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {ix, iw, ib}, [ix, iw, ib, B, in, out_dim](BasicTape<T>& t, std::uint32_t self) {
        ConstMatMap<T> G(t.grad_ref(self).data(), B, out_dim);
        if (t.requires_grad(ix)) {
          ConstMatMap<T> Wm(t.value(iw).data(), out_dim, in);
          MatMap<T> dX(t.grad_accumulator(ix).data(), B, in);
          dX.noalias() += G * Wm;
        }
        if (t.requires_grad(iw)) {
          ConstMatMap<T> X(t.value(ix).data(), B, in);
          MatMap<T> dW(t.grad_accumulator(iw).data(), out_dim, in);
          dW.noalias() += G.transpose() * X;
        }
        if (t.requires_grad(ib)) {
          auto& db = t.grad_accumulator(ib);
          for (std::size_t r = 0; r < B; ++r) {
            for (std::size_t c = 0; c < out_dim; ++c) db[c] += G(r, c);
          }
        }
      });
}

template <typename T>
BasicVar<T> conv2d(BasicVar<T> x, BasicVar<T> kernel, BasicVar<T> bias) {
  require_same_tape("conv2d", x, kernel);
  require_same_tape("conv2d", x, bias);
  require_rank("conv2d input", x, 4);
  require_rank("conv2d kernel", kernel, 4);
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::size_t O = ks[0], K = ks[2];
  if (ks[1] != C || ks[3] != K || K % 2 == 0) {
    throw ShapeError("conv2d: input " + to_string(xs) + " vs kernel " + to_string(ks));
  }
  if (bias.shape() != Shape{O}) {
    throw ShapeError("conv2d: kernel " + to_string(ks) + " vs bias " + to_string(bias.shape()));
  }
  const std::size_t HW = H * W, CKK = C * K * K;
  // Columns are rebuilt per sample in backward instead of keeping B of them.
  std::vector<T> cols(CKK * HW);

  BasicTensor<T> out(Shape{B, O, H, W});
  ConstMatMap<T> Wm(kernel.value().data(), O, CKK);
  const T* bv = bias.value().data();
  for (std::size_t b = 0; b < B; ++b) {
    im2col(x.value().data() + b * C * HW, C, H, W, K, cols.data());
    MatMap<T> Y(out.data() + b * O * HW, O, HW);
    Y.noalias() = Wm * ConstMatMap<T>(cols.data(), CKK, HW);
    for (std::size_t o = 0; o < O; ++o) Y.row(o).array() += bv[o];
  }

  const auto ix = x.id(), ik = kernel.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {ix, ik, ib},
      [ix, ik, ib, B, C, H, W, O, K, HW, CKK](BasicTape<T>& t, std::uint32_t self) {
        const auto& g = t.grad_ref(self);
        ConstMatMap<T> Wm(t.value(ik).data(), O, CKK);
        if (t.requires_grad(ik)) {
          MatMap<T> dW(t.grad_accumulator(ik).data(), O, CKK);
          std::vector<T> col(CKK * HW);
          const T* xv = t.value(ix).data();
          for (std::size_t b = 0; b < B; ++b) {
            im2col(xv + b * C * HW, C, H, W, K, col.data());
            ConstMatMap<T> G(g.data() + b * O * HW, O, HW);
            dW.noalias() += G * ConstMatMap<T>(col.data(), CKK, HW).transpose();
          }
        }
        if (t.requires_grad(ib)) {
          auto& db = t.grad_accumulator(ib);
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t o = 0; o < O; ++o) {
              const T* row = g.data() + (b * O + o) * HW;
              double s = 0.0;
              for (std::size_t i = 0; i < HW; ++i) s += static_cast<double>(row[i]);
              db[o] += static_cast<T>(s);
            }
          }
        }
        if (t.requires_grad(ix)) {
          auto& dx = t.grad_accumulator(ix);
          RowMatrix<T> dcol(CKK, HW);
          for (std::size_t b = 0; b < B; ++b) {
            ConstMatMap<T> G(g.data() + b * O * HW, O, HW);
            dcol.noalias() = Wm.transpose() * G;
            col2im_add(dcol.data(), C, H, W, K, dx.data() + b * C * HW);
          }
        }
      });
}

template <typename T>
BasicVar<T> maxpool2d(BasicVar<T> x, std::size_t window) {
  require_rank("maxpool2d", x, 4);
  if (window == 0) throw ShapeError("maxpool2d: window must be positive");
  const auto& s = x.shape();
  const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
  const std::size_t OH = H / window, OW = W / window;
  if (OH == 0 || OW == 0) throw ShapeError("maxpool2d: input " + to_string(s) + " smaller than window");
  BasicTensor<T> out(Shape{B, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.numel());
  const T* in = x.value().data();
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const std::size_t base = bc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox, ++o) {
        std::size_t best = base + oy * window * W + ox * window;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = base + (oy * window + dy) * W + ox * window + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        out[o] = in[best];
        (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, argmax](BasicTape<T>& t, std::uint32_t self) {
    const auto& g = t.grad_ref(self);
    auto& acc = t.grad_accumulator(ix);
    for (std::size_t i = 0; i < g.numel(); ++i) acc[(*argmax)[i]] += g[i];
  });
}

template <typename T>
BasicVar<T> global_avg_pool(BasicVar<T> x) {
  require_rank("global_avg_pool", x, 4);
  const auto& s = x.shape();
  const std::size_t B = s[0], C = s[1], HW = s[2] * s[3];
  BasicTensor<T> out(Shape{B, C});
  const T* in = x.value().data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    double acc = 0.0;
    for (std::size_t i = 0; i < HW; ++i) acc += static_cast<double>(in[bc * HW + i]);
    out[bc] = static_cast<T>(acc / static_cast<double>(HW));
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, B, C, HW](BasicTape<T>& t, std::uint32_t self) {
    const auto& g = t.grad_ref(self);
    auto& acc = t.grad_accumulator(ix);
    const T inv = static_cast<T>(1.0 / static_cast<double>(HW));
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const T v = g[bc] * inv;
      for (std::size_t i = 0; i < HW; ++i) acc[bc * HW + i] += v;
    }
  });
}

template <typename T>
BasicVar<T> softmax_cross_entropy(BasicVar<T> logits, std::span<const int> labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t B = logits.shape()[0], P = logits.shape()[1];
  if (labels.size() != B) {
    throw ShapeError("softmax_cross_entropy: logits " + to_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (B == 0 || P == 0) throw ShapeError("softmax_cross_entropy: empty logits");
  const auto& z = logits.value();
  auto probs = std::make_shared<std::vector<double>>(B * P);
  auto targets = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < B; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= P) {
      throw InvalidConfigError("softmax_cross_entropy: label " + std::to_string(y) +
                               " out of range for " + std::to_string(P) + " classes");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < P; ++c) {
      const double v = z[r * P + c];
      if (!std::isfinite(v)) throw NumericError("softmax_cross_entropy: non-finite logit");
      mx = std::max(mx, v);
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < P; ++c) {
      const double e = std::exp(static_cast<double>(z[r * P + c]) - mx);
      (*probs)[r * P + c] = e;
      denom += e;
    }
    for (std::size_t c = 0; c < P; ++c) (*probs)[r * P + c] /= denom;
    total += mx + std::log(denom) - static_cast<double>(z[r * P + static_cast<std::size_t>(y)]);
  }
  const auto il = logits.id();
  return logits.tape().record(
      BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(B))), {il},
      [il, probs, targets, B, P](BasicTape<T>& t, std::uint32_t self) {
        const double g = static_cast<double>(t.grad_ref(self)[0]) / static_cast<double>(B);
        auto& acc = t.grad_accumulator(il);
        for (std::size_t r = 0; r < B; ++r) {
          for (std::size_t c = 0; c < P; ++c) {
            double d = (*probs)[r * P + c];
            if (static_cast<int>(c) == (*targets)[r]) d -= 1.0;
            acc[r * P + c] += static_cast<T>(g * d);
          }
        }
      });
}

template <typename T>
BasicVar<T> binary_cross_entropy(BasicVar<T> logits, const BasicTensor<T>& targets) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("binary_cross_entropy: logits " + to_string(logits.shape()) + " vs targets " +
                     to_string(targets.shape()));
  }
  const auto& z = logits.value();
  const std::size_t N = z.numel();
  if (N == 0) throw ShapeError("binary_cross_entropy: empty logits");
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double x = z[i];
    if (!std::isfinite(x)) throw NumericError("binary_cross_entropy: non-finite logit");
    const double y = targets[i];
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  const auto il = logits.id();
  auto tgt = std::make_shared<BasicTensor<T>>(targets);
  return logits.tape().record(
      BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(N))), {il},
      [il, tgt, N](BasicTape<T>& t, std::uint32_t self) {
        const double g = static_cast<double>(t.grad_ref(self)[0]) / static_cast<double>(N);
        const auto& z = t.value(il);
        auto& acc = t.grad_accumulator(il);
        for (std::size_t i = 0; i < N; ++i) {
          const double s = stable_sigmoid(static_cast<double>(z[i]));
          acc[i] += static_cast<T>(g * (s - static_cast<double>((*tgt)[i])));
        }
      });
}

#define HCBM_INSTANTIATE(T)                                                                  \
  template BasicVar<T> add(BasicVar<T>, BasicVar<T>);                                        \
  template BasicVar<T> mul(BasicVar<T>, BasicVar<T>);                                        \
  template BasicVar<T> scale(BasicVar<T>, T);                                                \
  template BasicVar<T> sum(BasicVar<T>);                                                     \
  template BasicVar<T> mean(BasicVar<T>);                                                    \
  template BasicVar<T> relu(BasicVar<T>);                                                    \
  template BasicVar<T> sigmoid(BasicVar<T>);                                                 \
  template BasicVar<T> threshold_ste(BasicVar<T>);                                           \
  template BasicVar<T> dropout(BasicVar<T>, double, Mode, std::mt19937_64&);                 \
  template BasicVar<T> concat(std::span<const BasicVar<T>>, std::size_t);                    \
  template BasicVar<T> reshape(BasicVar<T>, Shape);                                          \
  template BasicVar<T> flatten(BasicVar<T>);                                                 \
  template BasicVar<T> linear(BasicVar<T>, BasicVar<T>, BasicVar<T>);                        \
  template BasicVar<T> conv2d(BasicVar<T>, BasicVar<T>, BasicVar<T>);                        \
  template BasicVar<T> maxpool2d(BasicVar<T>, std::size_t);                                  \
  template BasicVar<T> global_avg_pool(BasicVar<T>);                                         \
  template BasicVar<T> softmax_cross_entropy(BasicVar<T>, std::span<const int>);             \
  template BasicVar<T> binary_cross_entropy(BasicVar<T>, const BasicTensor<T>&);

HCBM_INSTANTIATE(float)
HCBM_INSTANTIATE(double)
#undef HCBM_INSTANTIATE

}  // namespace hcbm::ad
