#include "smdris/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "smdris/simd/kernels.hpp"

namespace smdris {

namespace {

thread_local bool t_grad_enabled = true;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void accumulate(Node& parent, const Tensor& delta) {
  if (!parent.requires_grad) return;
  Tensor& g = parent.grad_buffer();
  simd::kernels().axpy(g.numel(), 1.0, delta.data(), g.data());
}

bool broadcastable(const Shape& a, const Shape& b) {
  auto ok = [](int x, int y) { return y == x || y == 1; };
  return ok(a.n, b.n) && ok(a.c, b.c) && ok(a.h, b.h) && ok(a.w, b.w);
}

// Calls fn(i_a, i_b) for every element of a with its broadcast partner in b.
template <typename Fn>
void for_each_broadcast(const Shape& a, const Shape& b, Fn&& fn) {
  const std::size_t sw = b.w == 1 ? 0 : 1;
  const std::size_t sh = b.h == 1 ? 0 : static_cast<std::size_t>(b.w);
  const std::size_t sc = b.c == 1 ? 0 : b.plane();
  const std::size_t sn = b.n == 1 ? 0 : static_cast<std::size_t>(b.c) * b.plane();
  std::size_t ia = 0;
  for (int n = 0; n < a.n; ++n) {
    for (int c = 0; c < a.c; ++c) {
      for (int h = 0; h < a.h; ++h) {
        const std::size_t base = n * sn + c * sc + h * sh;
        for (int w = 0; w < a.w; ++w, ++ia) fn(ia, base + w * sw);
      }
    }
  }
}

void im2col(const Real* x, int C, int H, int W, int kh, int kw, ConvGeometry g, int Ho, int Wo,
            Real* col) {
  const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    const Real* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        Real* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * P;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          Real* out = row + static_cast<std::size_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(out, out + Wo, 0.0);
            continue;
          }
          const Real* xrow = xc + static_cast<std::size_t>(iy) * W;
          const int off = kx * g.dilation - g.pad;
          if (g.stride == 1) {
            // valid ox range: 0 <= ox + off < W
            const int lo = std::clamp(-off, 0, Wo);
            const int hi = std::clamp(W - off, lo, Wo);
            std::fill(out, out + lo, 0.0);
            std::copy(xrow + lo + off, xrow + hi + off, out + lo);
            std::fill(out + hi, out + Wo, 0.0);
          } else {
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * g.stride + off;
              out[ox] = (ix >= 0 && ix < W) ? xrow[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im(const Real* col, int C, int H, int W, int kh, int kw, ConvGeometry g, int Ho, int Wo,
            Real* x) {
  const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    Real* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const Real* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * P;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= H) continue;
          Real* xrow = xc + static_cast<std::size_t>(iy) * W;
          const Real* in = row + static_cast<std::size_t>(oy) * Wo;
          const int off = kx * g.dilation - g.pad;
          if (g.stride == 1) {
            const int lo = std::clamp(-off, 0, Wo);
            const int hi = std::clamp(W - off, lo, Wo);
            for (int ox = lo; ox < hi; ++ox) xrow[ox + off] += in[ox];
          } else {
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * g.stride + off;
              if (ix >= 0 && ix < W) xrow[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

inline Real logistic(Real v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const Real e = std::exp(v);
  return e / (1.0 + e);
}

struct ResampleTap {
  int i0;
  int i1;
  Real w0;
  Real w1;
};

std::vector<ResampleTap> resample_taps(int in, int out, Resample mode) {
  std::vector<ResampleTap> taps(static_cast<std::size_t>(out));
  const Real scale = static_cast<Real>(in) / static_cast<Real>(out);
  for (int o = 0; o < out; ++o) {
    if (mode == Resample::nearest) {
      const int i = std::min(static_cast<int>(std::floor(o * scale)), in - 1);
      taps[static_cast<std::size_t>(o)] = {i, i, 1.0, 0.0};
      continue;
    }
    Real src = (static_cast<Real>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const Real l = src - i0;
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - l, l};
  }
  return taps;
}

Var scalar_result(Real v, std::vector<Var> parents, std::function<void(Node&)> bw) {
  return make_result(Tensor({1, 1, 1, 1}, v), std::move(parents), std::move(bw));
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && value.numel() > 0) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

void Var::backward() const {
  if (!node_ || !node_->requires_grad) {
    throw std::logic_error("backward() on a value that does not require gradients");
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  Tensor& seed = node_->grad_buffer();
  for (std::size_t i = 0; i < seed.numel(); ++i) seed[i] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool needs = t_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                   [](const Var& p) { return p.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Var& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Var::from_node(std::move(node));
}

Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, ConvGeometry g) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.c == xs.c, "conv2d: weight expects " + std::to_string(ws.c) + " input channels, got " +
                            xs.str());
  require(g.stride >= 1 && g.dilation >= 1 && g.pad >= 0, "conv2d: invalid geometry");
  const int Cout = ws.n;
  const int kh = ws.h;
  const int kw = ws.w;
  const int Ho = (xs.h + 2 * g.pad - g.dilation * (kh - 1) - 1) / g.stride + 1;
  const int Wo = (xs.w + 2 * g.pad - g.dilation * (kw - 1) - 1) / g.stride + 1;
  require(Ho >= 1 && Wo >= 1, "conv2d: input " + xs.str() + " too small for kernel");
  if (bias) {
    require(bias->shape() == Shape{1, Cout, 1, 1}, "conv2d: bias shape " + bias->shape().str());
  }
  const int K = xs.c * kh * kw;
  const int P = Ho * Wo;
  const bool direct = kh == 1 && kw == 1 && g.stride == 1 && g.pad == 0;

  Tensor out({xs.n, Cout, Ho, Wo}, 0.0);
  const auto& kern = simd::kernels();
  std::vector<Real> col(direct ? 0 : static_cast<std::size_t>(K) * P);
  for (int n = 0; n < xs.n; ++n) {
    Real* o = out.plane(n, 0);
    if (bias) {
      const Real* b = bias->value().data();
      for (int co = 0; co < Cout; ++co) std::fill(o + static_cast<std::size_t>(co) * P, o + static_cast<std::size_t>(co + 1) * P, b[co]);
    }
    const Real* src = x.value().plane(n, 0);
    if (!direct) {
      im2col(src, xs.c, xs.h, xs.w, kh, kw, g, Ho, Wo, col.data());
      src = col.data();
    }
    kern.gemm_nn(Cout, P, K, weight.value().data(), K, src, P, o, P);
  }

  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return make_result(std::move(out), std::move(parents), [xs, ws, g, Ho, Wo, K, P, direct](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    const auto& kern = simd::kernels();
    const int Cout = ws.n;
    std::vector<Real> col(direct ? 0 : static_cast<std::size_t>(K) * P);
    std::vector<Real> dcol(xn.requires_grad && !direct ? static_cast<std::size_t>(K) * P : 0);
    for (int n = 0; n < xs.n; ++n) {
      const Real* dout = self.grad.plane(n, 0);
      if (bn && bn->requires_grad) {
        Real* db = bn->grad_buffer().data();
        for (int co = 0; co < Cout; ++co) {
          const Real* d = dout + static_cast<std::size_t>(co) * P;
          Real s = 0.0;
          for (int p = 0; p < P; ++p) s += d[p];
          db[co] += s;
        }
      }
      if (wn.requires_grad) {
        const Real* src = xn.value.plane(n, 0);
        if (!direct) {
          im2col(src, xs.c, xs.h, xs.w, ws.h, ws.w, g, Ho, Wo, col.data());
          src = col.data();
        }
        kern.gemm_nt(Cout, K, P, dout, P, src, P, wn.grad_buffer().data(), K);
      }
      if (xn.requires_grad) {
        Real* dx = xn.grad_buffer().plane(n, 0);
        if (direct) {
          kern.gemm_tn(K, P, Cout, wn.value.data(), K, dout, P, dx, P);
        } else {
          std::fill(dcol.begin(), dcol.end(), 0.0);
          kern.gemm_tn(K, P, Cout, wn.value.data(), K, dout, P, dcol.data(), P);
          col2im(dcol.data(), xs.c, xs.h, xs.w, ws.h, ws.w, g, Ho, Wo, dx);
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  require(broadcastable(as, bs), "add: cannot broadcast " + bs.str() + " to " + as.str());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  if (as == bs) {
    simd::kernels().axpy(out.numel(), 1.0, bv.data(), out.data());
  } else {
    for_each_broadcast(as, bs, [&](std::size_t i, std::size_t j) { out[i] += bv[j]; });
  }
  return make_result(std::move(out), {a, b}, [as, bs](Node& self) {
    accumulate(*self.parents[0], self.grad);
    Node& bn = *self.parents[1];
    if (!bn.requires_grad) return;
    if (as == bs) {
      accumulate(bn, self.grad);
      return;
    }
    Tensor& gb = bn.grad_buffer();
    for_each_broadcast(as, bs, [&](std::size_t i, std::size_t j) { gb[j] += self.grad[i]; });
  });
}

Var mul(const Var& a, const Var& b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  require(broadcastable(as, bs), "mul: cannot broadcast " + bs.str() + " to " + as.str());
  Tensor out(as);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for_each_broadcast(as, bs, [&](std::size_t i, std::size_t j) { out[i] = av[i] * bv[j]; });
  return make_result(std::move(out), {a, b}, [as, bs](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad) {
      Tensor& ga = an.grad_buffer();
      for_each_broadcast(as, bs, [&](std::size_t i, std::size_t j) { ga[i] += self.grad[i] * bn.value[j]; });
    }
    if (bn.requires_grad) {
      Tensor& gb = bn.grad_buffer();
      for_each_broadcast(as, bs, [&](std::size_t i, std::size_t j) { gb[j] += self.grad[i] * an.value[i]; });
    }
  });
}

Var scale(const Var& a, Real s) {
  Tensor out = a.value();
  for (Real& v : out.values()) v *= s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    Node& an = *self.parents[0];
    if (an.requires_grad) simd::kernels().axpy(self.grad.numel(), s, self.grad.data(), an.grad_buffer().data());
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (Real& v : out.values()) v = v > 0 ? v : 0.0;
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& xn = *self.parents[0];
    Tensor& gx = xn.grad_buffer();
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      if (xn.value[i] > 0) gx[i] += self.grad[i];
    }
  });
}

Var silu(const Var& x) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * logistic(xv[i]);
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& xn = *self.parents[0];
    Tensor& gx = xn.grad_buffer();
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      const Real s = logistic(xn.value[i]);
      gx[i] += self.grad[i] * s * (1.0 + xn.value[i] * (1.0 - s));
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = logistic(xv[i]);
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      const Real s = self.value[i];
      gx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor concat_channels_tensor(const std::vector<const Tensor*>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  Shape s = parts.front()->shape();
  int channels = 0;
  for (const Tensor* t : parts) {
    const Shape& ts = t->shape();
    require(ts.n == s.n && ts.h == s.h && ts.w == s.w,
            "concat_channels: shape mismatch " + ts.str() + " vs " + s.str());
    channels += ts.c;
  }
  s.c = channels;
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    Real* dst = out.plane(n, 0);
    for (const Tensor* t : parts) {
      const std::size_t count = static_cast<std::size_t>(t->shape().c) * s.plane();
      std::copy(t->plane(n, 0), t->plane(n, 0) + count, dst);
      dst += count;
    }
  }
  return out;
}

Var concat_channels(const std::vector<Var>& parts) {
  std::vector<const Tensor*> tensors;
  tensors.reserve(parts.size());
  for (const Var& p : parts) tensors.push_back(&p.value());
  Tensor out = concat_channels_tensor(tensors);
  return make_result(std::move(out), parts, [](Node& self) {
    const Shape s = self.value.shape();
    for (int n = 0; n < s.n; ++n) {
      const Real* src = self.grad.plane(n, 0);
      for (auto& p : self.parents) {
        const std::size_t count = static_cast<std::size_t>(p->value.shape().c) * s.plane();
        if (p->requires_grad) {
          Real* dst = p->grad_buffer().plane(n, 0);
          for (std::size_t i = 0; i < count; ++i) dst[i] += src[i];
        }
        src += count;
      }
    }
  });
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, Real eps) {
  const Shape s = x.shape();
  require(gamma.shape() == Shape{1, s.c, 1, 1} && beta.shape() == Shape{1, s.c, 1, 1},
          "layer_norm_channels: affine parameters must be {1, C, 1, 1} for input " + s.str());
  const std::size_t P = s.plane();
  Tensor out(s);
  Tensor xhat(s);
  std::vector<Real> rstd(static_cast<std::size_t>(s.n) * P);
  const Tensor& xv = x.value();
  const Real* g = gamma.value().data();
  const Real* b = beta.value().data();
  for (int n = 0; n < s.n; ++n) {
    const Real* xp = xv.plane(n, 0);
    for (std::size_t p = 0; p < P; ++p) {
      Real mean = 0.0;
      for (int c = 0; c < s.c; ++c) mean += xp[c * P + p];
      mean /= s.c;
      Real var = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const Real d = xp[c * P + p] - mean;
        var += d * d;
      }
      var /= s.c;
      const Real r = 1.0 / std::sqrt(var + eps);
      rstd[static_cast<std::size_t>(n) * P + p] = r;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t i = xv.offset(n, c, 0, 0) + p;
        const Real xh = (xv[i] - mean) * r;
        xhat[i] = xh;
        out[i] = g[c] * xh + b[c];
      }
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [s, P, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
    Node& xn = *self.parents[0];
    Node& gn = *self.parents[1];
    Node& bn = *self.parents[2];
    const Real* g = gn.value.data();
    Real* dg = gn.requires_grad ? gn.grad_buffer().data() : nullptr;
    Real* db = bn.requires_grad ? bn.grad_buffer().data() : nullptr;
    Real* dx = xn.requires_grad ? xn.grad_buffer().data() : nullptr;
    std::vector<Real> dxh(static_cast<std::size_t>(s.c));
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t p = 0; p < P; ++p) {
        Real sum_d = 0.0;
        Real sum_dx = 0.0;
        for (int c = 0; c < s.c; ++c) {
          const std::size_t i = xhat.offset(n, c, 0, 0) + p;
          const Real dy = self.grad[i];
          if (dg) dg[c] += dy * xhat[i];
          if (db) db[c] += dy;
          dxh[static_cast<std::size_t>(c)] = dy * g[c];
          sum_d += dxh[static_cast<std::size_t>(c)];
          sum_dx += dxh[static_cast<std::size_t>(c)] * xhat[i];
        }
        if (!dx) continue;
        const Real r = rstd[static_cast<std::size_t>(n) * P + p];
        for (int c = 0; c < s.c; ++c) {
          const std::size_t i = xhat.offset(n, c, 0, 0) + p;
          dx[i] += r * (dxh[static_cast<std::size_t>(c)] - (sum_d + xhat[i] * sum_dx) / s.c);
        }
      }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x.shape();
  Tensor out({s.n, s.c, 1, 1});
  const std::size_t P = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const Real* p = x.value().plane(n, c);
      Real acc = 0.0;
      for (std::size_t i = 0; i < P; ++i) acc += p[i];
      out.at(n, c, 0, 0) = acc / static_cast<Real>(P);
    }
  }
  return make_result(std::move(out), {x}, [s, P](Node& self) {
    Tensor& gx = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const Real d = self.grad.at(n, c, 0, 0) / static_cast<Real>(P);
        Real* p = gx.plane(n, c);
        for (std::size_t i = 0; i < P; ++i) p[i] += d;
      }
    }
  });
}

Var avg_pool(const Var& x, int k) {
  const Shape s = x.shape();
  require(k >= 1, "avg_pool: factor must be positive");
  require(s.h % k == 0 && s.w % k == 0,
          "avg_pool: " + s.str() + " not divisible by " + std::to_string(k));
  const int Ho = s.h / k;
  const int Wo = s.w / k;
  const Real inv = 1.0 / (static_cast<Real>(k) * k);
  Tensor out({s.n, s.c, Ho, Wo}, 0.0);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const Real* src = x.value().plane(n, c);
      Real* dst = out.plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        Real* drow = dst + static_cast<std::size_t>(y / k) * Wo;
        const Real* srow = src + static_cast<std::size_t>(y) * s.w;
        for (int xx = 0; xx < s.w; ++xx) drow[xx / k] += srow[xx];
      }
      for (int i = 0; i < Ho * Wo; ++i) dst[i] *= inv;
    }
  }
  return make_result(std::move(out), {x}, [s, k, Wo, inv](Node& self) {
    Tensor& gx = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const Real* g = self.grad.plane(n, c);
        Real* d = gx.plane(n, c);
        for (int y = 0; y < s.h; ++y) {
          const Real* grow = g + static_cast<std::size_t>(y / k) * Wo;
          Real* drow = d + static_cast<std::size_t>(y) * s.w;
          for (int xx = 0; xx < s.w; ++xx) drow[xx] += grow[xx / k] * inv;
        }
      }
    }
  });
}

Var pad_replicate(const Var& x, PadAmounts p) {
  const Shape s = x.shape();
  require(p.top >= 0 && p.bottom >= 0 && p.left >= 0 && p.right >= 0,
          "pad_replicate: negative padding");
  if (p.top == 0 && p.bottom == 0 && p.left == 0 && p.right == 0) return x;
  const int H = s.h + p.top + p.bottom;
  const int W = s.w + p.left + p.right;
  auto src_y = [=](int y) { return std::clamp(y - p.top, 0, s.h - 1); };
  auto src_x = [=](int xx) { return std::clamp(xx - p.left, 0, s.w - 1); };
  Tensor out({s.n, s.c, H, W});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const Real* src = x.value().plane(n, c);
      Real* dst = out.plane(n, c);
      for (int y = 0; y < H; ++y) {
        const Real* srow = src + static_cast<std::size_t>(src_y(y)) * s.w;
        for (int xx = 0; xx < W; ++xx) dst[static_cast<std::size_t>(y) * W + xx] = srow[src_x(xx)];
      }
    }
  }
  return make_result(std::move(out), {x}, [s, H, W, src_y, src_x](Node& self) {
    Tensor& gx = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const Real* g = self.grad.plane(n, c);
        Real* d = gx.plane(n, c);
        for (int y = 0; y < H; ++y) {
          Real* drow = d + static_cast<std::size_t>(src_y(y)) * s.w;
          for (int xx = 0; xx < W; ++xx) drow[src_x(xx)] += g[static_cast<std::size_t>(y) * W + xx];
        }
      }
    }
  });
}

Var crop(const Var& x, int top, int left, int h, int w) {
  const Shape s = x.shape();
  require(top >= 0 && left >= 0 && h >= 1 && w >= 1 && top + h <= s.h && left + w <= s.w,
          "crop: window out of bounds for " + s.str());
  if (top == 0 && left == 0 && h == s.h && w == s.w) return x;
  Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < h; ++y) {
        const Real* srow = x.value().plane(n, c) + static_cast<std::size_t>(y + top) * s.w + left;
        std::copy(srow, srow + w, out.plane(n, c) + static_cast<std::size_t>(y) * w);
      }
    }
  }
  return make_result(std::move(out), {x}, [s, top, left, h, w](Node& self) {
    Tensor& gx = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < h; ++y) {
          const Real* g = self.grad.plane(n, c) + static_cast<std::size_t>(y) * w;
          Real* d = gx.plane(n, c) + static_cast<std::size_t>(y + top) * s.w + left;
          for (int xx = 0; xx < w; ++xx) d[xx] += g[xx];
        }
      }
    }
  });
}

Tensor resize_tensor(const Tensor& x, int h, int w, Resample mode) {
  const Shape s = x.shape();
  require(h >= 1 && w >= 1, "resize: target extent must be positive");
  if (s.h == h && s.w == w) return x;
  const auto ty = resample_taps(s.h, h, mode);
  const auto tx = resample_taps(s.w, w, mode);
  Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const Real* src = x.plane(n, c);
      Real* dst = out.plane(n, c);
      for (int y = 0; y < h; ++y) {
        const ResampleTap& a = ty[static_cast<std::size_t>(y)];
        const Real* r0 = src + static_cast<std::size_t>(a.i0) * s.w;
        const Real* r1 = src + static_cast<std::size_t>(a.i1) * s.w;
        for (int xx = 0; xx < w; ++xx) {
          const ResampleTap& b = tx[static_cast<std::size_t>(xx)];
          dst[static_cast<std::size_t>(y) * w + xx] =
              a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
        }
      }
    }
  }
  return out;
}

Var resize(const Var& x, int h, int w, Resample mode) {
  const Shape s = x.shape();
  if (s.h == h && s.w == w) return x;
  Tensor out = resize_tensor(x.value(), h, w, mode);
  return make_result(std::move(out), {x}, [s, h, w, mode](Node& self) {
    const auto ty = resample_taps(s.h, h, mode);
    const auto tx = resample_taps(s.w, w, mode);
    Tensor& gx = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const Real* g = self.grad.plane(n, c);
        Real* d = gx.plane(n, c);
        for (int y = 0; y < h; ++y) {
          const ResampleTap& a = ty[static_cast<std::size_t>(y)];
          Real* r0 = d + static_cast<std::size_t>(a.i0) * s.w;
          Real* r1 = d + static_cast<std::size_t>(a.i1) * s.w;
          for (int xx = 0; xx < w; ++xx) {
            const ResampleTap& b = tx[static_cast<std::size_t>(xx)];
            const Real v = g[static_cast<std::size_t>(y) * w + xx];
            r0[b.i0] += a.w0 * b.w0 * v;
            r0[b.i1] += a.w0 * b.w1 * v;
            r1[b.i0] += a.w1 * b.w0 * v;
            r1[b.i1] += a.w1 * b.w1 * v;
          }
        }
      }
    }
  });
}

Var mean_abs_diff(const Var& pred, const Tensor& target) {
  require(pred.shape() == target.shape(),
          "mean_abs_diff: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  const std::size_t N = target.numel();
  const Real v = simd::kernels().sum_abs_diff(N, pred.value().data(), target.data()) / static_cast<Real>(N);
  return scalar_result(v, {pred}, [target, N](Node& self) {
    Node& pn = *self.parents[0];
    Tensor& gp = pn.grad_buffer();
    const Real d = self.grad[0] / static_cast<Real>(N);
    for (std::size_t i = 0; i < N; ++i) {
      const Real diff = pn.value[i] - target[i];
      gp[i] += diff > 0 ? d : (diff < 0 ? -d : 0.0);
    }
  });
}

Var mean_sq_diff(const Var& pred, const Tensor& target) {
  require(pred.shape() == target.shape(),
          "mean_sq_diff: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  const std::size_t N = target.numel();
  const Real v = simd::kernels().sum_sq_diff(N, pred.value().data(), target.data()) / static_cast<Real>(N);
  return scalar_result(v, {pred}, [target, N](Node& self) {
    Node& pn = *self.parents[0];
    Tensor& gp = pn.grad_buffer();
    const Real d = 2.0 * self.grad[0] / static_cast<Real>(N);
    for (std::size_t i = 0; i < N; ++i) gp[i] += d * (pn.value[i] - target[i]);
  });
}

Var sum_sq_diff(const Var& pred, const Tensor& target) {
  require(pred.shape() == target.shape(),
          "sum_sq_diff: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  const std::size_t N = target.numel();
  const Real v = simd::kernels().sum_sq_diff(N, pred.value().data(), target.data());
  return scalar_result(v, {pred}, [target, N](Node& self) {
    Node& pn = *self.parents[0];
    Tensor& gp = pn.grad_buffer();
    const Real d = 2.0 * self.grad[0];
    for (std::size_t i = 0; i < N; ++i) gp[i] += d * (pn.value[i] - target[i]);
  });
}

Var sum_all(const Var& x) {
  return scalar_result(x.value().sum(), {x}, [](Node& self) {
    Tensor& gx = self.parents[0]->grad_buffer();
    const Real d = self.grad[0];
    for (Real& v : gx.values()) v += d;
  });
}

Var weighted_sum(const std::vector<Var>& scalars, const std::vector<Real>& weights) {
  require(scalars.size() == weights.size(), "weighted_sum: size mismatch");
  Real total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require(scalars[i].shape() == Shape{1, 1, 1, 1}, "weighted_sum: inputs must be scalars");
    total += weights[i] * scalars[i].value()[0];
  }
  return scalar_result(total, scalars, [weights](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (self.parents[i]->requires_grad) self.parents[i]->grad_buffer()[0] += weights[i] * self.grad[0];
    }
  });
}

}  // namespace smdris
