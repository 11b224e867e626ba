#include "tnt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "kernels.hpp"
#include "tnt/parallel.hpp"

namespace tnt {

namespace {

using autodiff::make_result;
using ImplPtr = std::shared_ptr<TensorImpl>;

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank, const Shape& shape) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError("axis out of range for shape " + shape_str(shape));
  }
  return axis;
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Product of extents in [begin, end).
std::int64_t extent_product(const Shape& s, std::int64_t begin, std::int64_t end) {
  std::int64_t p = 1;
  for (auto i = begin; i < end; ++i) p *= s[static_cast<std::size_t>(i)];
  return p;
}

// Gradient buffer of an input, or nullptr when it does not take gradients.
double* grad_of(const ImplPtr& t) {
  return t->requires_grad ? t->grad_buffer().data() : nullptr;
}

std::vector<double> permute_data(std::span<const double> src, const Shape& in_shape,
                                 const std::vector<std::int64_t>& order) {
  const auto rank = in_shape.size();
  std::vector<std::int64_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::int64_t> strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[static_cast<std::size_t>(order[i])];
    strides[i] = in_strides[static_cast<std::size_t>(order[i])];
  }
  std::vector<double> out(src.size());
  if (out.empty()) return out;
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t offset = 0;
  const std::int64_t last = rank ? out_shape[rank - 1] : 1;
  const std::int64_t last_stride = rank ? strides[rank - 1] : 0;
  std::size_t o = 0;
  while (o < out.size()) {
    for (std::int64_t j = 0; j < last; ++j) out[o++] = src[static_cast<std::size_t>(offset + j * last_stride)];
    // Advance the odometer over all but the last axis.
    std::size_t a = rank >= 1 ? rank - 1 : 0;
    while (a > 0) {
      --a;
      ++idx[a];
      offset += strides[a];
      if (idx[a] < out_shape[a]) break;
      offset -= strides[a] * out_shape[a];
      idx[a] = 0;
    }
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result("add", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    for (const auto& t : {ai, bi}) {
      if (double* g = grad_of(t)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result("sub", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    if (double* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (double* g = grad_of(bi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result("mul", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    if (double* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bi->data[i];
    }
    if (double* g = grad_of(bi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * ai->data[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  ImplPtr xi = x.impl();
  return make_result("scale", x.shape(), std::move(out), {x}, [xi, factor](const TensorImpl& o) {
    if (double* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * factor;
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
  };
  if (a.rank() < 2 || b.rank() < 2) throw mismatch();
  const std::int64_t rows = a.dim(-2), inner = a.dim(-1), cols = b.dim(-1);
  if (b.dim(-2) != inner) throw mismatch();
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  bool bcast_a = false, bcast_b = false;
  if (batch_a == batch_b) {
    batch = batch_a;
  } else if (batch_b.empty()) {
    batch = batch_a;
    bcast_b = true;
  } else if (batch_a.empty()) {
    batch = batch_b;
    bcast_a = true;
  } else {
    throw mismatch();
  }
  const std::int64_t nb = shape_numel(batch);
  const std::int64_t sa = bcast_a ? 0 : rows * inner;
  const std::int64_t sb = bcast_b ? 0 : inner * cols;
  const std::int64_t sc = rows * cols;
  Shape out_shape = batch;
  out_shape.push_back(rows);
  out_shape.push_back(cols);

  std::vector<double> out(static_cast<std::size_t>(nb * sc), 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  const std::int64_t work = nb * rows * inner * cols;
  parallel::for_range(nb, work, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t bi = b0; bi < b1; ++bi) {
      const double* A = ad + bi * sa;
      const double* B = bd + bi * sb;
      double* C = out.data() + bi * sc;
      kernels::gemm_acc(rows, cols, inner, A, B, C);
    }
  });

  ImplPtr ai = a.impl(), bi_ = b.impl();
  return make_result(
      "matmul", std::move(out_shape), std::move(out), {a, b},
      [ai, bi_, nb, rows, inner, cols, sa, sb, sc, work](const TensorImpl& o) {
        const double* G = o.grad.data();
        if (double* ga = grad_of(ai)) {
          auto body = [&](std::int64_t b0, std::int64_t b1) {
            for (std::int64_t bi = b0; bi < b1; ++bi) {
              const auto bt = kernels::transposed(inner, cols, bi_->data.data() + bi * sb);
              kernels::gemm_acc(rows, inner, cols, G + bi * sc, bt.data(), ga + bi * sa);
            }
          };
          if (sa == 0) body(0, nb); else parallel::for_range(nb, work, body);
        }
        if (double* gb = grad_of(bi_)) {
          auto body = [&](std::int64_t b0, std::int64_t b1) {
            for (std::int64_t bi = b0; bi < b1; ++bi) {
              const auto at = kernels::transposed(rows, inner, ai->data.data() + bi * sa);
              kernels::gemm_acc(inner, cols, rows, at.data(), G + bi * sc, gb + bi * sb);
            }
          };
          if (sb == 0) body(0, nb); else parallel::for_range(nb, work, body);
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() < 1 || weight.rank() != 2 || x.dim(-1) != weight.dim(0) ||
      (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(1)))) {
    throw DimensionError("linear: incompatible shapes x " + shape_str(x.shape()) + ", W " +
                         shape_str(weight.shape()) +
                         (bias.defined() ? ", b " + shape_str(bias.shape()) : std::string()));
  }
  const std::int64_t in = weight.dim(0), outd = weight.dim(1);
  const std::int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  std::vector<double> out(static_cast<std::size_t>(rows * outd));
  const double* xd = x.data().data();
  const double* wd = weight.data().data();
  const double* bd = bias.defined() ? bias.data().data() : nullptr;
  const std::int64_t work = rows * in * outd;
  parallel::for_range(rows, work, [&](std::int64_t r0, std::int64_t r1) {
    if (bd) {
      for (std::int64_t r = r0; r < r1; ++r) std::copy(bd, bd + outd, out.data() + r * outd);
    }
    kernels::gemm_acc(r1 - r0, outd, in, xd + r0 * in, wd, out.data() + r0 * outd);
  });

  ImplPtr xi = x.impl(), wi = weight.impl();
  ImplPtr bi = bias.defined() ? bias.impl() : nullptr;
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      "linear", std::move(out_shape), std::move(out), std::move(inputs),
      [xi, wi, bi, rows, in, outd, work](const TensorImpl& o) {
        const double* G = o.grad.data();
        if (double* gx = grad_of(xi)) {
          const auto wt = kernels::transposed(in, outd, wi->data.data());
          parallel::for_range(rows, work, [&](std::int64_t r0, std::int64_t r1) {
            kernels::gemm_acc(r1 - r0, in, outd, G + r0 * outd, wt.data(), gx + r0 * in);
          });
        }
        if (double* gw = grad_of(wi)) {
          const auto xt = kernels::transposed(rows, in, xi->data.data());
          parallel::for_range(in, work, [&](std::int64_t k0, std::int64_t k1) {
            kernels::gemm_acc(k1 - k0, outd, rows, xt.data() + k0 * rows, G, gw + k0 * outd);
          });
        }
        if (bi) {
          if (double* gb = grad_of(bi)) {
            for (std::int64_t r = 0; r < rows; ++r) {
              for (std::int64_t j = 0; j < outd; ++j) gb[j] += G[r * outd + j];
            }
          }
        }
      });
}

namespace {

struct AxisSplit {
  std::int64_t outer, n, inner;
};

AxisSplit split_at(const Tensor& x, std::int64_t axis) {
  const auto& s = x.shape();
  axis = normalize_axis(axis, x.rank(), s);
  return {extent_product(s, 0, axis), s[static_cast<std::size_t>(axis)],
          extent_product(s, axis + 1, x.rank())};
}

}  // namespace

Tensor softmax(const Tensor& x, std::int64_t axis) {
  const auto [outer, n, inner] = split_at(x, axis);
  const double* xd = x.data().data();
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      double mx = -INFINITY;
      for (std::int64_t i = 0; i < n; ++i) mx = std::max(mx, xd[base + i * inner]);
      double total = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double e = std::exp(xd[base + i * inner] - mx);
        out[static_cast<std::size_t>(base + i * inner)] = e;
        total += e;
      }
      for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(base + i * inner)] /= total;
    }
  }
  ImplPtr xi = x.impl();
  return make_result("softmax", x.shape(), std::move(out), {x},
                     [xi, outer, n, inner](const TensorImpl& o) {
                       double* g = grad_of(xi);
                       if (!g) return;
                       const double* y = o.data.data();
                       const double* go = o.grad.data();
                       for (std::int64_t ou = 0; ou < outer; ++ou) {
                         for (std::int64_t in = 0; in < inner; ++in) {
                           const std::int64_t base = ou * n * inner + in;
                           double dot = 0.0;
                           for (std::int64_t i = 0; i < n; ++i) {
                             dot += go[base + i * inner] * y[base + i * inner];
                           }
                           for (std::int64_t i = 0; i < n; ++i) {
                             const auto k = base + i * inner;
                             g[k] += y[k] * (go[k] - dot);
                           }
                         }
                       }
                     });
}

Tensor log_softmax(const Tensor& x, std::int64_t axis) {
  const auto [outer, n, inner] = split_at(x, axis);
  const double* xd = x.data().data();
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      double mx = -INFINITY;
      for (std::int64_t i = 0; i < n; ++i) mx = std::max(mx, xd[base + i * inner]);
      double total = 0.0;
      for (std::int64_t i = 0; i < n; ++i) total += std::exp(xd[base + i * inner] - mx);
      const double lse = mx + std::log(total);
      for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(base + i * inner)] = xd[base + i * inner] - lse;
      }
    }
  }
  ImplPtr xi = x.impl();
  return make_result("log_softmax", x.shape(), std::move(out), {x},
                     [xi, outer, n, inner](const TensorImpl& o) {
                       double* g = grad_of(xi);
                       if (!g) return;
                       const double* y = o.data.data();
                       const double* go = o.grad.data();
                       for (std::int64_t ou = 0; ou < outer; ++ou) {
                         for (std::int64_t in = 0; in < inner; ++in) {
                           const std::int64_t base = ou * n * inner + in;
                           double total = 0.0;
                           for (std::int64_t i = 0; i < n; ++i) total += go[base + i * inner];
                           for (std::int64_t i = 0; i < n; ++i) {
                             const auto k = base + i * inner;
                             g[k] += go[k] - std::exp(y[k]) * total;
                           }
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1 || gamma.shape() != Shape{x.dim(-1)} || beta.shape() != Shape{x.dim(-1)}) {
    throw DimensionError("layer_norm: x " + shape_str(x.shape()) + " with gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  const std::int64_t d = x.dim(-1);
  const std::int64_t rows = x.numel() / d;
  const double* xd = x.data().data();
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  auto xhat = std::make_shared<std::vector<double>>(out.size());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = xd + r * d;
    double mu = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[static_cast<std::size_t>(r)] = rs;
    for (std::int64_t j = 0; j < d; ++j) {
      const auto k = static_cast<std::size_t>(r * d + j);
      (*xhat)[k] = (row[j] - mu) * rs;
      out[k] = (*xhat)[k] * gd[j] + bd[j];
    }
  }
  ImplPtr xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [xi, gi, bi, xhat, rstd, rows, d](const TensorImpl& o) {
        const double* go = o.grad.data();
        const double* xh = xhat->data();
        if (double* gg = grad_of(gi)) {
          for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t j = 0; j < d; ++j) gg[j] += go[r * d + j] * xh[r * d + j];
          }
        }
        if (double* gb = grad_of(bi)) {
          for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t j = 0; j < d; ++j) gb[j] += go[r * d + j];
          }
        }
        if (double* gx = grad_of(xi)) {
          const double* gam = gi->data.data();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::int64_t r = 0; r < rows; ++r) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
              const double dxh = go[r * d + j] * gam[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[r * d + j];
            }
            mean_dxh *= inv_d;
            mean_dxh_xh *= inv_d;
            const double rs = (*rstd)[static_cast<std::size_t>(r)];
            for (std::int64_t j = 0; j < d; ++j) {
              const double dxh = go[r * d + j] * gam[j];
              gx[r * d + j] += rs * (dxh - mean_dxh - xh[r * d + j] * mean_dxh_xh);
            }
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  ImplPtr xi = x.impl();
  return make_result("gelu", x.shape(), std::move(out), {x}, [xi](const TensorImpl& o) {
    double* g = grad_of(xi);
    if (!g) return;
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double v = xi->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += o.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  ImplPtr xi = x.impl();
  return make_result("sigmoid", x.shape(), std::move(out), {x}, [xi](const TensorImpl& o) {
    double* g = grad_of(xi);
    if (!g) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double y = o.data[i];
      g[i] += o.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1 && infer < 0) {
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0 && x.numel() % known == 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (shape_numel(shape) != x.numel() ||
      std::any_of(shape.begin(), shape.end(), [](auto e) { return e <= 0; })) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  ImplPtr xi = x.impl();
  return make_result("reshape", std::move(shape), std::move(out), {x}, [xi](const TensorImpl& o) {
    if (double* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor permute(const Tensor& x, const std::vector<std::int64_t>& order) {
  const auto rank = x.rank();
  std::vector<bool> used(static_cast<std::size_t>(rank), false);
  if (static_cast<std::int64_t>(order.size()) != rank) {
    throw DimensionError("permute: order size does not match shape " + shape_str(x.shape()));
  }
  std::vector<std::int64_t> ord(order);
  for (auto& a : ord) {
    a = normalize_axis(a, rank, x.shape());
    if (used[static_cast<std::size_t>(a)]) {
      throw DimensionError("permute: repeated axis for shape " + shape_str(x.shape()));
    }
    used[static_cast<std::size_t>(a)] = true;
  }
  Shape out_shape(static_cast<std::size_t>(rank));
  std::vector<std::int64_t> inverse(static_cast<std::size_t>(rank));
  for (std::size_t i = 0; i < ord.size(); ++i) {
    out_shape[i] = x.shape()[static_cast<std::size_t>(ord[i])];
    inverse[static_cast<std::size_t>(ord[i])] = static_cast<std::int64_t>(i);
  }
  auto out = permute_data(x.data(), x.shape(), ord);
  ImplPtr xi = x.impl();
  Shape grad_shape = out_shape;
  return make_result("permute", std::move(out_shape), std::move(out), {x},
                     [xi, inverse, grad_shape](const TensorImpl& o) {
                       double* g = grad_of(xi);
                       if (!g) return;
                       auto back = permute_data(o.grad, grad_shape, inverse);
                       for (std::size_t i = 0; i < back.size(); ++i) g[i] += back[i];
                     });
}

Tensor transpose(const Tensor& x, std::int64_t axis0, std::int64_t axis1) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(x.rank()));
  std::iota(order.begin(), order.end(), 0);
  axis0 = normalize_axis(axis0, x.rank(), x.shape());
  axis1 = normalize_axis(axis1, x.rank(), x.shape());
  std::swap(order[static_cast<std::size_t>(axis0)], order[static_cast<std::size_t>(axis1)]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Tensor& first = parts.front();
  axis = normalize_axis(axis, first.rank(), first.shape());
  Shape out_shape = first.shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (p.rank() != first.rank()) {
      throw DimensionError("concat: shape mismatch " + shape_str(first.shape()) + " vs " + shape_str(p.shape()));
    }
    probe[static_cast<std::size_t>(axis)] = first.shape()[static_cast<std::size_t>(axis)];
    if (probe != first.shape()) {
      throw DimensionError("concat: shape mismatch " + shape_str(first.shape()) + " vs " + shape_str(p.shape()));
    }
    out_shape[static_cast<std::size_t>(axis)] += p.shape()[static_cast<std::size_t>(axis)];
  }
  const std::int64_t outer = extent_product(first.shape(), 0, axis);
  const std::int64_t inner = extent_product(first.shape(), axis + 1, first.rank());
  const std::int64_t total = out_shape[static_cast<std::size_t>(axis)];
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::vector<std::int64_t> widths;
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t w = p.shape()[static_cast<std::size_t>(axis)] * inner;
    widths.push_back(w);
    const double* src = p.data().data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy(src + o * w, src + (o + 1) * w, out.begin() + o * total * inner + offset);
    }
    offset += w;
  }
  std::vector<ImplPtr> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result("concat", std::move(out_shape), std::move(out), parts,
                     [impls, widths, outer, total, inner](const TensorImpl& o) {
                       std::int64_t off = 0;
                       for (std::size_t p = 0; p < impls.size(); ++p) {
                         const std::int64_t w = widths[p];
                         if (double* g = grad_of(impls[p])) {
                           for (std::int64_t ou = 0; ou < outer; ++ou) {
                             const double* src = o.grad.data() + ou * total * inner + off;
                             for (std::int64_t k = 0; k < w; ++k) g[ou * w + k] += src[k];
                           }
                         }
                         off += w;
                       }
                     });
}

Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, x.rank(), x.shape());
  const std::int64_t n = x.shape()[static_cast<std::size_t>(axis)];
  if (start < 0 || length <= 0 || start + length > n) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const std::int64_t outer = extent_product(x.shape(), 0, axis);
  const std::int64_t inner = extent_product(x.shape(), axis + 1, x.rank());
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  std::vector<double> out(static_cast<std::size_t>(outer * length * inner));
  const double* src = x.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy(src + (o * n + start) * inner, src + (o * n + start + length) * inner,
              out.begin() + o * length * inner);
  }
  ImplPtr xi = x.impl();
  return make_result("slice", std::move(out_shape), std::move(out), {x},
                     [xi, outer, n, inner, start, length](const TensorImpl& o) {
                       double* g = grad_of(xi);
                       if (!g) return;
                       for (std::int64_t ou = 0; ou < outer; ++ou) {
                         const double* src = o.grad.data() + ou * length * inner;
                         double* dst = g + (ou * n + start) * inner;
                         for (std::int64_t k = 0; k < length * inner; ++k) dst[k] += src[k];
                       }
                     });
}

std::vector<Tensor> split(const Tensor& x, std::int64_t axis, const std::vector<std::int64_t>& sizes) {
  const auto ax = normalize_axis(axis, x.rank(), x.shape());
  const std::int64_t total = std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0});
  if (total != x.shape()[static_cast<std::size_t>(ax)]) {
    throw DimensionError("split: sizes do not cover axis " + std::to_string(ax) + " of " + shape_str(x.shape()));
  }
  std::vector<Tensor> parts;
  std::int64_t start = 0;
  for (auto s : sizes) {
    parts.push_back(slice(x, ax, start, s));
    start += s;
  }
  return parts;
}

Tensor sum(const Tensor& x, std::int64_t axis) {
  const auto [outer, n, inner] = split_at(x, axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + normalize_axis(axis, x.rank(), x.shape()));
  std::vector<double> out(static_cast<std::size_t>(outer * inner), 0.0);
  const double* xd = x.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t in = 0; in < inner; ++in) {
        out[static_cast<std::size_t>(o * inner + in)] += xd[(o * n + i) * inner + in];
      }
    }
  }
  ImplPtr xi = x.impl();
  return make_result("sum", std::move(out_shape), std::move(out), {x},
                     [xi, outer, n, inner](const TensorImpl& o) {
                       double* g = grad_of(xi);
                       if (!g) return;
                       for (std::int64_t ou = 0; ou < outer; ++ou) {
                         for (std::int64_t i = 0; i < n; ++i) {
                           for (std::int64_t in = 0; in < inner; ++in) {
                             g[(ou * n + i) * inner + in] += o.grad[static_cast<std::size_t>(ou * inner + in)];
                           }
                         }
                       }
                     });
}

Tensor mean(const Tensor& x, std::int64_t axis) {
  const double n = static_cast<double>(x.dim(axis));
  return scale(sum(x, axis), 1.0 / n);
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  ImplPtr xi = x.impl();
  return make_result("sum_all", {}, {total}, {x}, [xi](const TensorImpl& o) {
    if (double* g = grad_of(xi)) {
      const double go = o.grad[0];
      for (std::size_t i = 0; i < xi->data.size(); ++i) g[i] += go;
    }
  });
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor expand(const Tensor& x, std::int64_t axis, std::int64_t size) {
  if (axis < 0) axis += x.rank() + 1;
  if (axis < 0 || axis > x.rank() || size <= 0) {
    throw DimensionError("expand: invalid axis/size for shape " + shape_str(x.shape()));
  }
  const std::int64_t outer = extent_product(x.shape(), 0, axis);
  const std::int64_t inner = extent_product(x.shape(), axis, x.rank());
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin() + axis, size);
  std::vector<double> out(static_cast<std::size_t>(outer * size * inner));
  const double* src = x.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t s = 0; s < size; ++s) {
      std::copy(src + o * inner, src + (o + 1) * inner, out.begin() + (o * size + s) * inner);
    }
  }
  ImplPtr xi = x.impl();
  return make_result("expand", std::move(out_shape), std::move(out), {x},
                     [xi, outer, size, inner](const TensorImpl& o) {
                       double* g = grad_of(xi);
                       if (!g) return;
                       for (std::int64_t ou = 0; ou < outer; ++ou) {
                         for (std::int64_t s = 0; s < size; ++s) {
                           const double* src = o.grad.data() + (ou * size + s) * inner;
                           for (std::int64_t k = 0; k < inner; ++k) g[ou * inner + k] += src[k];
                         }
                       }
                     });
}

Tensor vectorize(const Tensor& x) {
  if (x.rank() < 3) {
    throw DimensionError("vectorize: need a trailing (rows, cols, channels) block, got " + shape_str(x.shape()));
  }
  Shape out_shape(x.shape().begin(), x.shape().end() - 3);
  out_shape.push_back(x.dim(-3) * x.dim(-2) * x.dim(-1));
  return reshape(x, std::move(out_shape));
}

}  // namespace tnt
