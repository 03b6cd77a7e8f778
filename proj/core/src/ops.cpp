#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "node.hpp"
#include "vpr/tensor.hpp"

namespace vpr {

using detail::make_result;
using detail::Node;

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                to_string(t.shape()));
  }
}

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

// Row broadcast: b is [1, m] against a of [n, m].
enum class Broadcast { none, row };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (a.rank() == 2 && b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1)) return Broadcast::row;
  shape_error(op, a.shape(), b.shape());
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, GradA ga, GradB gb) {
  const auto mode = broadcast_kind(op, a, b);
  const auto n = a.numel();
  const auto cols = mode == Broadcast::row ? b.numel() : n;
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[i % cols]);
  return make_result(op, a.shape(), std::move(out), {a, b}, [=](Node& self) {
    const auto& g = self.grad;
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    if (na.requires_grad) {
      auto& gA = na.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) gA[i] += g[i] * ga(na.data[i], nb.data[i % cols]);
    }
    if (nb.requires_grad) {
      auto& gB = nb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) gB[i % cols] += g[i] * gb(na.data[i], nb.data[i % cols]);
    }
  });
}

// y = f(x) elementwise with dy/dx = df(x, y).
template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv df) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [df](Node& self) {
    Node& nx = input(self, 0);
    auto& gx = nx.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(nx.data[i], self.data[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const auto n = a.dim(0), k = a.dim(1), m = b.dim(1);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> C(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &B[p * m];
      double* crow = &C[i * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
  return make_result("matmul", {n, m}, std::move(C), {a, b}, [n, k, m](Node& self) {
    const auto& G = self.grad;
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    if (na.requires_grad) {
      // dA = G * B^T
      auto& gA = na.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += G[i * m + j] * nb.data[p * m + j];
          gA[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      // dB = A^T * G
      auto& gB = nb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = na.data[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gB[p * m + j] += aip * G[i * m + j];
        }
      }
    }
  });
}

Tensor conv2d(const Tensor& input_t, const Tensor& kernel, const Tensor& bias, std::size_t padding) {
  require_rank("conv2d", input_t, 4);
  require_rank("conv2d", kernel, 4);
  const auto n = input_t.dim(0), cin = input_t.dim(1), h = input_t.dim(2), w = input_t.dim(3);
  const auto cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin || kh != kw) shape_error("conv2d", input_t.shape(), kernel.shape());
  if (h + 2 * padding < kh || w + 2 * padding < kw) shape_error("conv2d", input_t.shape(), kernel.shape());
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout)) shape_error("conv2d", kernel.shape(), bias.shape());

  const auto oh = h + 2 * padding - kh + 1;
  const auto ow = w + 2 * padding - kw + 1;
  const auto X = input_t.data();
  const auto K = kernel.data();
  std::vector<double> Y(n * cout * oh * ow, 0.0);
  const auto pad = static_cast<std::ptrdiff_t>(padding);

  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* yplane = &Y[((b * cout) + co) * oh * ow];
      if (has_bias) std::fill(yplane, yplane + oh * ow, bias.data()[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xplane = &X[((b * cin) + ci) * h * w];
        const double* kplane = &K[((co * cin) + ci) * kh * kw];
        for (std::size_t u = 0; u < kh; ++u) {
          for (std::size_t v = 0; v < kw; ++v) {
            const double kv = kplane[u * kw + v];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy + u) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              const double* xrow = xplane + iy * static_cast<std::ptrdiff_t>(w);
              double* yrow = yplane + oy * ow;
              const auto ox_lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, pad - static_cast<std::ptrdiff_t>(v)));
              const auto ox_hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                  static_cast<std::ptrdiff_t>(w) + pad - static_cast<std::ptrdiff_t>(v), 0,
                  static_cast<std::ptrdiff_t>(ow)));
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                yrow[ox] += kv * xrow[static_cast<std::ptrdiff_t>(ox + v) - pad];
              }
            }
          }
        }
      }
    }
  }

  std::vector<Tensor> inputs{input_t, kernel};
  if (has_bias) inputs.push_back(bias);
  return make_result(
      "conv2d", {n, cout, oh, ow}, std::move(Y), std::move(inputs),
      [=](Node& self) {
        const auto& G = self.grad;
        Node& nx = input(self, 0);
        Node& nk = input(self, 1);
        double* gX = nx.requires_grad ? nx.ensure_grad().data() : nullptr;
        double* gK = nk.requires_grad ? nk.ensure_grad().data() : nullptr;
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t co = 0; co < cout; ++co) {
            const double* gplane = &G[((b * cout) + co) * oh * ow];
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const std::size_t xoff = ((b * cin) + ci) * h * w;
              const std::size_t koff = ((co * cin) + ci) * kh * kw;
              for (std::size_t u = 0; u < kh; ++u) {
                for (std::size_t v = 0; v < kw; ++v) {
                  const double kv = nk.data[koff + u * kw + v];
                  double kacc = 0.0;
                  for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy + u) - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                      const auto ix = static_cast<std::ptrdiff_t>(ox + v) - pad;
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                      const double g = gplane[oy * ow + ox];
                      const auto xi = xoff + static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
                      if (gK) kacc += g * nx.data[xi];
                      if (gX) gX[xi] += g * kv;
                    }
                  }
                  if (gK) gK[koff + u * kw + v] += kacc;
                }
              }
            }
          }
        }
        if (self.inputs.size() > 2 && input(self, 2).requires_grad) {
          auto& gB = input(self, 2).ensure_grad();
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t co = 0; co < cout; ++co) {
              const double* gplane = &G[((b * cout) + co) * oh * ow];
              double acc = 0.0;
              for (std::size_t i = 0; i < oh * ow; ++i) acc += gplane[i];
              gB[co] += acc;
            }
          }
        }
      });
}

Tensor maxpool2x2(const Tensor& x) {
  require_rank("maxpool2x2", x, 4);
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw std::invalid_argument("maxpool2x2: spatial extent below 2 in shape " + to_string(x.shape()));
  const auto oh = h / 2, ow = w / 2;
  const auto X = x.data();
  std::vector<double> Y(n * c * oh * ow);
  std::vector<std::size_t> argmax(Y.size());
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
            if (X[idx] > X[best]) best = idx;
          }
        }
        const std::size_t o = p * oh * ow + oy * ow + ox;
        Y[o] = X[best];
        argmax[o] = best;
      }
    }
  }
  return make_result("maxpool2x2", {n, c, oh, ow}, std::move(Y), {x},
                     [argmax = std::move(argmax)](Node& self) {
                       auto& gx = input(self, 0).ensure_grad();
                       for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
                     });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
                [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
                [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("elementwise_mul", a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input");
  }
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (v < 0.0) throw std::domain_error("sqrt: negative input");
  }
  return unary("sqrt", x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result("sum", {1}, {acc}, {x}, [](Node& self) {
    auto& gx = input(self, 0).ensure_grad();
    const double g = self.grad[0];
    for (auto& v : gx) v += g;
  });
}

namespace {

// Sum along `axis`, optionally scaled, keeping the axis with extent 1.
Tensor reduce_axis(const char* op, const Tensor& x, std::size_t axis, bool average) {
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                                to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const double factor = average ? 1.0 / static_cast<double>(len) : 1.0;
  Shape out_shape = s;
  out_shape[axis] = 1;
  const auto X = x.data();
  std::vector<double> Y(outer * inner, 0.0);
  if (average) {
    // Mean as first + average offset from first: exact for identical rows.
    for (std::size_t o = 0; o < outer; ++o) {
      const double* first = &X[o * len * inner];
      double* dst = &Y[o * inner];
      for (std::size_t k = 1; k < len; ++k) {
        const double* src = &X[(o * len + k) * inner];
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] - first[i];
      }
      for (std::size_t i = 0; i < inner; ++i) dst[i] = first[i] + dst[i] * factor;
    }
  } else {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < len; ++k) {
        const double* src = &X[(o * len + k) * inner];
        double* dst = &Y[o * inner];
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
  }
  return make_result(op, std::move(out_shape), std::move(Y), {x}, [=](Node& self) {
    auto& gx = input(self, 0).ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < len; ++k) {
        for (std::size_t i = 0; i < inner; ++i) gx[(o * len + k) * inner + i] += factor * self.grad[o * inner + i];
      }
    }
  });
}

}  // namespace

Tensor sum_over_axis(const Tensor& x, std::size_t axis) { return reduce_axis("sum_over_axis", x, axis, false); }

Tensor mean_over_axis(const Tensor& x, std::size_t axis) { return reduce_axis("mean_over_axis", x, axis, true); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  auto d = x.data();
  return make_result("reshape", std::move(shape), {d.begin(), d.end()}, {x}, [](Node& self) {
    auto& gx = input(self, 0).ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const auto n = x.dim(0), m = x.dim(1);
  if (begin >= end || end > m) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") invalid for shape " + to_string(x.shape()));
  }
  const auto w = end - begin;
  const auto X = x.data();
  std::vector<double> Y(n * w);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(&X[i * m + begin], w, &Y[i * w]);
  return make_result("slice_cols", {n, w}, std::move(Y), {x}, [=](Node& self) {
    auto& gx = input(self, 0).ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) gx[i * m + begin + j] += self.grad[i * w + j];
    }
  });
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> indices) {
  require_rank("select_rows", x, 2);
  const auto n = x.dim(0), m = x.dim(1);
  if (indices.empty()) throw std::invalid_argument("select_rows: empty index list");
  for (auto r : indices) {
    if (r >= n) {
      throw std::invalid_argument("select_rows: row " + std::to_string(r) + " out of range for shape " +
                                  to_string(x.shape()));
    }
  }
  const auto X = x.data();
  std::vector<double> Y(indices.size() * m);
  for (std::size_t i = 0; i < indices.size(); ++i) std::copy_n(&X[indices[i] * m], m, &Y[i * m]);
  const Shape out_shape{indices.size(), m};
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result("select_rows", out_shape, std::move(Y), {x}, [idx = std::move(idx), m](Node& self) {
    auto& gx = input(self, 0).ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < m; ++j) gx[idx[i] * m + j] += self.grad[i * m + j];
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank("concat", p, 2);
  const auto other = 1 - axis;
  const auto fixed = parts[0].dim(other);
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(other) != fixed) shape_error("concat", parts[0].shape(), p.shape());
    extents.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  const std::size_t rows = axis == 0 ? total : fixed;
  const std::size_t cols = axis == 0 ? fixed : total;
  std::vector<double> Y(rows * cols);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto P = parts[k].data();
    if (axis == 0) {
      std::copy(P.begin(), P.end(), Y.begin() + static_cast<std::ptrdiff_t>(offset * cols));
    } else {
      const auto w = extents[k];
      for (std::size_t i = 0; i < rows; ++i) std::copy_n(&P[i * w], w, &Y[i * cols + offset]);
    }
    offset += extents[k];
  }
  return make_result("concat", {rows, cols}, std::move(Y), {parts.begin(), parts.end()},
                     [=](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         Node& in = input(self, k);
                         const auto e = extents[k];
                         if (in.requires_grad) {
                           auto& g = in.ensure_grad();
                           if (axis == 0) {
                             for (std::size_t i = 0; i < e * cols; ++i) g[i] += self.grad[off * cols + i];
                           } else {
                             for (std::size_t i = 0; i < rows; ++i) {
                               for (std::size_t j = 0; j < e; ++j) g[i * e + j] += self.grad[i * cols + off + j];
                             }
                           }
                         }
                         off += e;
                       }
                     });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank("log_softmax_rows", x, 2);
  const auto n = x.dim(0), m = x.dim(1);
  const auto X = x.data();
  std::vector<double> Y(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &X[i * m];
    const double mx = *std::max_element(row, row + m);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += std::exp(row[j] - mx);
    const double lse = mx + std::log(acc);
    for (std::size_t j = 0; j < m; ++j) Y[i * m + j] = row[j] - lse;
  }
  return make_result("log_softmax_rows", {n, m}, std::move(Y), {x}, [n, m](Node& self) {
    auto& gx = input(self, 0).ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < m; ++j) gsum += self.grad[i * m + j];
      for (std::size_t j = 0; j < m; ++j) {
        gx[i * m + j] += self.grad[i * m + j] - std::exp(self.data[i * m + j]) * gsum;
      }
    }
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lower bound exceeds upper bound");
  return unary("clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

}  // namespace vpr
