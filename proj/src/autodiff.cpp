#include "fsap/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace fsap {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.value().shape_str() + " vs " + b.value().shape_str());
}

Var make_node(Tensor value, std::vector<NodePtr> parents, const char* op,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  bool req = false;
  for (const auto& p : parents) req = req || p->requires_grad;
  n->requires_grad = req;
  if (req) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(n));
}

void ensure_grad(Node& n) {
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
}

}  // namespace

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

const Tensor& Var::grad() const {
  if (!n_ || n_->grad.size() != n_->value.size())
    throw std::runtime_error("gradient not available; run backward first");
  return n_->grad;
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_node(std::move(out), {a.node(), b.node()}, "add", [](Node& n) {
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      ensure_grad(*p);
      for (int i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
    }
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_node(std::move(out), {a.node(), b.node()}, "sub", [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (int i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_node(std::move(out), {a.node(), b.node()}, "mul", [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (int i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (int i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i] * pa->value[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  return make_node(std::move(out), {a.node()}, "scale", [c](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] * c;
  });
}

Var mul_const(Var a, const Tensor& c) {
  if (!a.value().same_shape(c))
    throw std::invalid_argument("mul_const: shape mismatch");
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c[i];
  Tensor cc = c;
  return make_node(std::move(out), {a.node()}, "mul_const", [cc = std::move(cc)](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] * cc[i];
  });
}

Var vlog(Var a) {
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = std::log(a.value()[i]);
  return make_node(std::move(out), {a.node()}, "log", [](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] / p->value[i];
  });
}

Var clamp(Var a, double lo, double hi) {
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, a.value()[i]));
  return make_node(std::move(out), {a.node()}, "clamp", [lo, hi](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i) {
      double x = p->value[i];
      if (x >= lo && x <= hi) p->grad[i] += n.grad[i];
    }
  });
}

Var relu(Var a) {
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = a.value()[i] > 0 ? a.value()[i] : 0.0;
  return make_node(std::move(out), {a.node()}, "relu", [](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i)
      if (p->value[i] > 0) p->grad[i] += n.grad[i];
  });
}

Var leaky_relu(Var a, double slope) {
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) {
    double x = a.value()[i];
    out[i] = x > 0 ? x : slope * x;
  }
  return make_node(std::move(out), {a.node()}, "leaky_relu", [slope](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i)
      p->grad[i] += n.grad[i] * (p->value[i] > 0 ? 1.0 : slope);
  });
}

Var sigmoid(Var a) {
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
  return make_node(std::move(out), {a.node()}, "sigmoid", [](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i) {
      double y = n.value[i];
      p->grad[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

Var vsum(Var a) {
  Tensor out = Tensor::scalar(a.value().sum());
  return make_node(std::move(out), {a.node()}, "sum", [](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    double g = n.grad[0];
    for (int i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
  });
}

Var vmean(Var a) {
  int n_el = a.value().size();
  Tensor out = Tensor::scalar(a.value().sum() / n_el);
  return make_node(std::move(out), {a.node()}, "mean", [n_el](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    double g = n.grad[0] / n_el;
    for (int i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
  });
}

Var gather(Var a, std::vector<int> indices) {
  Tensor out({static_cast<int>(indices.size())});
  for (size_t i = 0; i < indices.size(); ++i) {
    int idx = indices[i];
    if (idx < 0 || idx >= a.value().size())
      throw std::invalid_argument("gather: index out of range");
    out[static_cast<int>(i)] = a.value()[idx];
  }
  return make_node(std::move(out), {a.node()}, "gather",
                   [idx = std::move(indices)](Node& n) {
                     auto& p = n.parents[0];
                     ensure_grad(*p);
                     for (size_t i = 0; i < idx.size(); ++i)
                       p->grad[idx[i]] += n.grad[static_cast<int>(i)];
                   });
}

Var sqrt_guarded(Var a) {
  Tensor out(a.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = std::sqrt(a.value()[i]);
  return make_node(std::move(out), {a.node()}, "sqrt", [](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i) {
      double y = n.value[i];
      if (y > 0) p->grad[i] += n.grad[i] * 0.5 / y;
      // zero subgradient at 0
    }
  });
}

Var reshape(Var a, std::vector<int> shape) {
  if (shape_size(shape) != a.value().size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out = a.value();
  out.set_shape(std::move(shape));
  return make_node(std::move(out), {a.node()}, "reshape", [](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
  });
}

Var channel_sum(Var a) {
  const auto& s = a.value().shape();
  if (s.size() != 3) throw std::invalid_argument("channel_sum: expected rank-3 input");
  int H = s[0], W = s[1], C = s[2];
  Tensor out({H, W});
  const double* ad = a.value().data();
  for (int p = 0; p < H * W; ++p) {
    double acc = 0.0;
    for (int c = 0; c < C; ++c) acc += ad[p * C + c];
    out[p] = acc;
  }
  return make_node(std::move(out), {a.node()}, "channel_sum", [C](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int i = 0; i < n.grad.size(); ++i) {
      double g = n.grad[i];
      for (int c = 0; c < C; ++c) p->grad[i * C + c] += g;
    }
  });
}

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();
  if (xs.size() != 3 || ws.size() != 4)
    throw std::invalid_argument("conv2d: expected x HxWxC and w KHxKWxCinxCout");
  int H = xs[0], W = xs[1], Ci = xs[2];
  int KH = ws[0], KW = ws[1], WCi = ws[2], Co = ws[3];
  if (WCi != Ci) throw std::invalid_argument("conv2d: channel mismatch");
  if (b.value().size() != Co) throw std::invalid_argument("conv2d: bias size mismatch");
  int Ho = (H + 2 * pad - KH) / stride + 1;
  int Wo = (W + 2 * pad - KW) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");

  Tensor out({Ho, Wo, Co});
  const double* xd = x.value().data();
  const double* wd = w.value().data();
  const double* bd = b.value().data();
  double* od = out.data();
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      double* op = od + (oy * Wo + ox) * Co;
      for (int co = 0; co < Co; ++co) op[co] = bd[co];
      for (int ky = 0; ky < KH; ++ky) {
        int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < KW; ++kx) {
          int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= W) continue;
          const double* xp = xd + (iy * W + ix) * Ci;
          const double* wp = wd + ((ky * KW + kx) * Ci) * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            double xv = xp[ci];
            const double* wrow = wp + ci * Co;
            for (int co = 0; co < Co; ++co) op[co] += xv * wrow[co];
          }
        }
      }
    }
  }

  return make_node(std::move(out), {x.node(), w.node(), b.node()}, "conv2d",
                   [H, W, Ci, KH, KW, Co, Ho, Wo, stride, pad](Node& n) {
    auto& px = n.parents[0];
    auto& pw = n.parents[1];
    auto& pb = n.parents[2];
    const double* gd = n.grad.data();
    if (pb->requires_grad) {
      ensure_grad(*pb);
      double* gb = pb->grad.data();
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const double* gp = gd + (oy * Wo + ox) * Co;
          for (int co = 0; co < Co; ++co) gb[co] += gp[co];
        }
    }
    if (pw->requires_grad) {
      ensure_grad(*pw);
      double* gw = pw->grad.data();
      const double* xd = px->value.data();
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          const double* gp = gd + (oy * Wo + ox) * Co;
          for (int ky = 0; ky < KH; ++ky) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < KW; ++kx) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= W) continue;
              const double* xp = xd + (iy * W + ix) * Ci;
              double* wp = gw + ((ky * KW + kx) * Ci) * Co;
              for (int ci = 0; ci < Ci; ++ci) {
                double xv = xp[ci];
                double* wrow = wp + ci * Co;
                for (int co = 0; co < Co; ++co) wrow[co] += xv * gp[co];
              }
            }
          }
        }
      }
    }
    if (px->requires_grad) {
      ensure_grad(*px);
      double* gx = px->grad.data();
      const double* wd = pw->value.data();
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          const double* gp = gd + (oy * Wo + ox) * Co;
          for (int ky = 0; ky < KH; ++ky) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < KW; ++kx) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= W) continue;
              double* xp = gx + (iy * W + ix) * Ci;
              const double* wp = wd + ((ky * KW + kx) * Ci) * Co;
              for (int ci = 0; ci < Ci; ++ci) {
                const double* wrow = wp + ci * Co;
                double acc = 0;
                for (int co = 0; co < Co; ++co) acc += wrow[co] * gp[co];
                xp[ci] += acc;
              }
            }
          }
        }
      }
    }
  });
}

Var softmax_channels(Var x) {
  const auto& xs = x.value().shape();
  if (xs.size() != 3) throw std::invalid_argument("softmax_channels: expected HxWxC");
  int H = xs[0], W = xs[1], C = xs[2];
  Tensor out(xs);
  for (int p = 0; p < H * W; ++p) {
    const double* xp = x.value().data() + p * C;
    double* op = out.data() + p * C;
    double mx = xp[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xp[c]);
    double s = 0;
    for (int c = 0; c < C; ++c) {
      op[c] = std::exp(xp[c] - mx);
      s += op[c];
    }
    for (int c = 0; c < C; ++c) op[c] /= s;
  }
  return make_node(std::move(out), {x.node()}, "softmax", [H, W, C](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int px = 0; px < H * W; ++px) {
      const double* y = n.value.data() + px * C;
      const double* g = n.grad.data() + px * C;
      double dot = 0;
      for (int c = 0; c < C; ++c) dot += g[c] * y[c];
      double* gp = p->grad.data() + px * C;
      for (int c = 0; c < C; ++c) gp[c] += y[c] * (g[c] - dot);
    }
  });
}

namespace {
struct LerpCoord {
  int i0, i1;
  double w0, w1;
};
LerpCoord lerp_coord(int out_i, int in_n, int out_n) {
  double src = (out_i + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
  if (src < 0) src = 0;
  if (src > in_n - 1) src = in_n - 1;
  int i0 = static_cast<int>(std::floor(src));
  int i1 = std::min(i0 + 1, in_n - 1);
  double f = src - i0;
  return {i0, i1, 1.0 - f, f};
}
}  // namespace

Var upsample_bilinear(Var x, int out_h, int out_w) {
  const auto& xs = x.value().shape();
  if (xs.size() != 3) throw std::invalid_argument("upsample_bilinear: expected HxWxC");
  int H = xs[0], W = xs[1], C = xs[2];
  Tensor out({out_h, out_w, C});
  for (int oy = 0; oy < out_h; ++oy) {
    LerpCoord ly = lerp_coord(oy, H, out_h);
    for (int ox = 0; ox < out_w; ++ox) {
      LerpCoord lx = lerp_coord(ox, W, out_w);
      double* op = out.data() + (oy * out_w + ox) * C;
      const double* p00 = x.value().data() + (ly.i0 * W + lx.i0) * C;
      const double* p01 = x.value().data() + (ly.i0 * W + lx.i1) * C;
      const double* p10 = x.value().data() + (ly.i1 * W + lx.i0) * C;
      const double* p11 = x.value().data() + (ly.i1 * W + lx.i1) * C;
      for (int c = 0; c < C; ++c)
        op[c] = ly.w0 * (lx.w0 * p00[c] + lx.w1 * p01[c]) +
                ly.w1 * (lx.w0 * p10[c] + lx.w1 * p11[c]);
    }
  }
  return make_node(std::move(out), {x.node()}, "upsample",
                   [H, W, C, out_h, out_w](Node& n) {
    auto& p = n.parents[0];
    ensure_grad(*p);
    for (int oy = 0; oy < out_h; ++oy) {
      LerpCoord ly = lerp_coord(oy, H, out_h);
      for (int ox = 0; ox < out_w; ++ox) {
        LerpCoord lx = lerp_coord(ox, W, out_w);
        const double* gp = n.grad.data() + (oy * out_w + ox) * C;
        double* g00 = p->grad.data() + (ly.i0 * W + lx.i0) * C;
        double* g01 = p->grad.data() + (ly.i0 * W + lx.i1) * C;
        double* g10 = p->grad.data() + (ly.i1 * W + lx.i0) * C;
        double* g11 = p->grad.data() + (ly.i1 * W + lx.i1) * C;
        for (int c = 0; c < C; ++c) {
          double g = gp[c];
          g00[c] += ly.w0 * lx.w0 * g;
          g01[c] += ly.w0 * lx.w1 * g;
          g10[c] += ly.w1 * lx.w0 * g;
          g11[c] += ly.w1 * lx.w1 * g;
        }
      }
    }
  });
}

namespace {

// Post-order topological sort, iterative to keep deep graphs safe.
std::vector<Node*> topo_from(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      Node* next = node->parents[child].get();
      ++child;
      if (next->requires_grad && !visited.count(next)) {
        visited.insert(next);
        stack.emplace_back(next, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children; reverse for backprop
}

}  // namespace

void backward(Var root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (!root.value().is_scalar())
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                root.value().shape_str());
  Node* r = root.node().get();
  if (!r->requires_grad) return;  // nothing to do
  std::vector<Node*> order = topo_from(r);
  for (Node* n : order) {
    n->grad = Tensor(n->value.shape());
  }
  r->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

Tensor grad_of(Var loss, Var wrt) {
  if (!loss.defined() || !wrt.defined())
    throw std::invalid_argument("grad_of: undefined argument");
  if (!loss.value().is_scalar())
    throw std::invalid_argument("grad_of: loss must be scalar");
  if (!wrt.requires_grad())
    throw std::invalid_argument("grad_of: no gradient path (input is detached)");
  Node* r = loss.node().get();
  bool reachable = false;
  if (r->requires_grad) {
    for (Node* n : topo_from(r)) {
      if (n == wrt.node().get()) {
        reachable = true;
        break;
      }
    }
  }
  if (!reachable)
    throw std::invalid_argument("grad_of: no gradient path from loss to input");
  backward(loss);
  return wrt.grad();
}

}  // namespace fsap
