#include "pairdis/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "pairdis/error.hpp"

namespace pairdis {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Graph& graph_of(Var v) {
  require(v.graph != nullptr, ErrorKind::contract_violation, "use of a detached Var");
  return *v.graph;
}

Graph& graph_of(Var a, Var b) {
  require(a.graph != nullptr && a.graph == b.graph, ErrorKind::contract_violation,
          "operands belong to different graphs");
  return *a.graph;
}

void same_shape(const char* op, Var a, Var b) {
  require(a.shape() == b.shape(), ErrorKind::shape_error,
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// cols [C*k*k, Ho*Wo] from src [C,H,W].
void im2col(const double* src, std::size_t C, std::size_t H, std::size_t W, std::size_t k, double* cols) {
  const std::size_t Ho = H - k + 1, Wo = W - k + 1, HoWo = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((c * k + ki) * k + kj) * HoWo;
        const double* base = src + c * H * W + ki * W + kj;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          std::copy_n(base + oy * W, Wo, row + oy * Wo);
        }
      }
    }
  }
}

// Adjoint of im2col: dst [C,H,W] += scatter(cols).
void col2im(const double* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k, double* dst) {
  const std::size_t Ho = H - k + 1, Wo = W - k + 1, HoWo = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((c * k + ki) * k + kj) * HoWo;
        double* base = dst + c * H * W + ki * W + kj;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          double* out = base + oy * W;
          const double* in = row + oy * Wo;
          for (std::size_t ox = 0; ox < Wo; ++ox) out[ox] += in[ox];
        }
      }
    }
  }
}

template <typename F, typename D>
Var unary(const char* op, Var x, F forward, D derivative) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
  return g.push(op, std::move(out), {x.id}, [xi = x.id, derivative](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    const Tensor& xv = g.value(xi);
    const Tensor& yv = g.value(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * derivative(xv[i], yv[i]);
  });
}

// Splits a shape around `axis` into (outer, len, inner).
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace

const Tensor& Var::value() const { return graph_of(*this).value(id); }
const Shape& Var::shape() const { return value().shape(); }

Var Graph::constant(Tensor value) {
  require(value.all_finite(), ErrorKind::non_finite, "constant leaf contains NaN/Inf");
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, false});
  return make_var(static_cast<int>(nodes_.size()) - 1);
}

Var Graph::variable(Tensor value) {
  require(value.all_finite(), ErrorKind::non_finite, "variable leaf contains NaN/Inf");
  nodes_.push_back(Node{"variable", std::move(value), {}, {}, {}, true});
  return make_var(static_cast<int>(nodes_.size()) - 1);
}

Var Graph::push(std::string op, Tensor value, std::vector<int> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    fail(ErrorKind::non_finite, op + " produced a non-finite value");
  }
  bool needs = false;
  for (int in : inputs) needs = needs || nodes_.at(in).requires_grad;
  Node node{std::move(op), std::move(value), {}, std::move(inputs), {}, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return make_var(static_cast<int>(nodes_.size()) - 1);
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.shape() == n.value.shape() && n.grad.size() == n.value.size()) return n.grad;
  return Tensor(n.value.shape());
}

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_.at(id);
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) {
    n.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  require(loss.graph == this, ErrorKind::contract_violation, "backward target belongs to another graph");
  require(value(loss).size() == 1, ErrorKind::contract_violation,
          "backward requires a scalar output, got shape " + shape_str(value(loss).shape()));
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id).fill(1.0);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.size() != n.value.size()) continue;
    // Inputs not requiring gradients are skipped inside each rule via requires_grad().
    n.backward(*this, id);
  }
}

// ---------------------------------------------------------------------------

Var conv2d(Var x, Var w, Var b) {
  Graph& g = graph_of(x, w);
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4 && ws[2] == ws[3] && xs[1] == ws[1] && ws[2] <= xs[2] &&
              ws[2] <= xs[3],
          ErrorKind::shape_error, "conv2d: input " + shape_str(xs) + " incompatible with kernel " + shape_str(ws));
  require(b.shape() == Shape{ws[0]}, ErrorKind::shape_error,
          "conv2d: bias " + shape_str(b.shape()) + " vs kernel " + shape_str(ws));
  const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3], O = ws[0], k = ws[2];
  const std::size_t Ho = H - k + 1, Wo = W - k + 1, CKK = C * k * k, HoWo = Ho * Wo;

  Tensor out({B, O, Ho, Wo});
  AlignedBuffer cols(CKK * HoWo);
  ConstMatMap wm(w.value().ptr(), O, CKK);
  const Tensor& bv = b.value();
  for (std::size_t n = 0; n < B; ++n) {
    im2col(x.value().ptr() + n * C * H * W, C, H, W, k, cols.data());
    MatMap om(out.ptr() + n * O * HoWo, O, HoWo);
    om.noalias() = wm * ConstMatMap(cols.data(), CKK, HoWo);
    for (std::size_t o = 0; o < O; ++o) om.row(o).array() += bv[o];
  }
  return g.push("conv2d", std::move(out), {x.id, w.id, b.id},
                [xi = x.id, wi = w.id, bi = b.id, B, C, H, W, O, k, Ho, Wo](Graph& g, int self) {
                  const std::size_t CKK = C * k * k, HoWo = Ho * Wo;
                  const Tensor& gy = g.grad_of(self);
                  if (g.requires_grad(bi)) {
                    Tensor& gb = g.grad_buffer(bi);
                    for (std::size_t n = 0; n < B; ++n)
                      for (std::size_t o = 0; o < O; ++o) {
                        const double* p = gy.ptr() + (n * O + o) * HoWo;
                        double s = 0.0;
                        for (std::size_t i = 0; i < HoWo; ++i) s += p[i];
                        gb[o] += s;
                      }
                  }
                  const bool need_w = g.requires_grad(wi), need_x = g.requires_grad(xi);
                  if (!need_w && !need_x) return;
                  AlignedBuffer cols(CKK * HoWo);
                  ConstMatMap wm(g.value(wi).ptr(), O, CKK);
                  for (std::size_t n = 0; n < B; ++n) {
                    ConstMatMap gym(gy.ptr() + n * O * HoWo, O, HoWo);
                    if (need_w) {
                      im2col(g.value(xi).ptr() + n * C * H * W, C, H, W, k, cols.data());
                      MatMap gw(g.grad_buffer(wi).ptr(), O, CKK);
                      gw.noalias() += gym * ConstMatMap(cols.data(), CKK, HoWo).transpose();
                    }
                    if (need_x) {
                      MatMap cm(cols.data(), CKK, HoWo);
                      cm.noalias() = wm.transpose() * gym;
                      col2im(cols.data(), C, H, W, k, g.grad_buffer(xi).ptr() + n * C * H * W);
                    }
                  }
                });
}

Var conv2d_transpose(Var x, Var w, Var b) {
  Graph& g = graph_of(x, w);
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4 && ws[2] == ws[3] && xs[1] == ws[0], ErrorKind::shape_error,
          "conv2d_transpose: input " + shape_str(xs) + " incompatible with kernel " + shape_str(ws));
  require(b.shape() == Shape{ws[1]}, ErrorKind::shape_error,
          "conv2d_transpose: bias " + shape_str(b.shape()) + " vs kernel " + shape_str(ws));
  const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3], O = ws[1], k = ws[2];
  const std::size_t Ho = H + k - 1, Wo = W + k - 1, OKK = O * k * k, HW = H * W;

  Tensor out({B, O, Ho, Wo});
  AlignedBuffer cols(OKK * HW);
  ConstMatMap wm(w.value().ptr(), C, OKK);
  const Tensor& bv = b.value();
  for (std::size_t n = 0; n < B; ++n) {
    MatMap cm(cols.data(), OKK, HW);
    cm.noalias() = wm.transpose() * ConstMatMap(x.value().ptr() + n * C * HW, C, HW);
    double* on = out.ptr() + n * O * Ho * Wo;
    for (std::size_t o = 0; o < O; ++o) std::fill_n(on + o * Ho * Wo, Ho * Wo, bv[o]);
    col2im(cols.data(), O, Ho, Wo, k, on);
  }
  return g.push("conv2d_transpose", std::move(out), {x.id, w.id, b.id},
                [xi = x.id, wi = w.id, bi = b.id, B, C, H, W, O, k, Ho, Wo](Graph& g, int self) {
                  const std::size_t OKK = O * k * k, HW = H * W, HoWo = Ho * Wo;
                  const Tensor& gy = g.grad_of(self);
                  if (g.requires_grad(bi)) {
                    Tensor& gb = g.grad_buffer(bi);
                    for (std::size_t n = 0; n < B; ++n)
                      for (std::size_t o = 0; o < O; ++o) {
                        const double* p = gy.ptr() + (n * O + o) * HoWo;
                        double s = 0.0;
                        for (std::size_t i = 0; i < HoWo; ++i) s += p[i];
                        gb[o] += s;
                      }
                  }
                  const bool need_w = g.requires_grad(wi), need_x = g.requires_grad(xi);
                  if (!need_w && !need_x) return;
                  AlignedBuffer cols(OKK * HW);
                  ConstMatMap wm(g.value(wi).ptr(), C, OKK);
                  for (std::size_t n = 0; n < B; ++n) {
                    im2col(gy.ptr() + n * O * HoWo, O, Ho, Wo, k, cols.data());
                    ConstMatMap cm(cols.data(), OKK, HW);
                    if (need_w) {
                      MatMap gw(g.grad_buffer(wi).ptr(), C, OKK);
                      gw.noalias() += ConstMatMap(g.value(xi).ptr() + n * C * HW, C, HW) * cm.transpose();
                    }
                    if (need_x) {
                      MatMap gx(g.grad_buffer(xi).ptr() + n * C * HW, C, HW);
                      gx.noalias() += wm * cm;
                    }
                  }
                });
}

Var maxpool2x2(Var x) {
  Graph& g = graph_of(x);
  const Shape& xs = x.shape();
  require(xs.size() == 4 && xs[2] % 2 == 0 && xs[3] % 2 == 0, ErrorKind::shape_error,
          "maxpool2x2: expected [B,C,H,W] with even H and W, got " + shape_str(xs));
  const std::size_t planes = xs[0] * xs[1], H = xs[2], W = xs[3], Ho = H / 2, Wo = W / 2;
  Tensor out({xs[0], xs[1], Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* in = x.value().ptr();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j) {
        const std::size_t cand[4] = {p * H * W + 2 * i * W + 2 * j, p * H * W + 2 * i * W + 2 * j + 1,
                                     p * H * W + (2 * i + 1) * W + 2 * j, p * H * W + (2 * i + 1) * W + 2 * j + 1};
        std::size_t best = cand[0];
        for (int c = 1; c < 4; ++c) {
          if (in[cand[c]] > in[best]) best = cand[c];
        }
        const std::size_t o = (p * Ho + i) * Wo + j;
        out[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  return g.push("maxpool2x2", std::move(out), {x.id}, [xi = x.id, argmax](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t o = 0; o < gy.size(); ++o) gx[(*argmax)[o]] += gy[o];
  });
}

Var upsample2x(Var x) {
  Graph& g = graph_of(x);
  const Shape& xs = x.shape();
  require(xs.size() == 4, ErrorKind::shape_error, "upsample2x: expected [B,C,H,W], got " + shape_str(xs));
  const std::size_t planes = xs[0] * xs[1], H = xs[2], W = xs[3];
  Tensor out({xs[0], xs[1], 2 * H, 2 * W});
  const double* in = x.value().ptr();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < 2 * H; ++i)
      for (std::size_t j = 0; j < 2 * W; ++j)
        out[(p * 2 * H + i) * 2 * W + j] = in[(p * H + i / 2) * W + j / 2];
  return g.push("upsample2x", std::move(out), {x.id}, [xi = x.id, planes, H, W](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < 2 * H; ++i)
        for (std::size_t j = 0; j < 2 * W; ++j)
          gx[(p * H + i / 2) * W + j / 2] += gy[(p * 2 * H + i) * 2 * W + j];
  });
}

Var dense(Var x, Var w, Var b) {
  Graph& g = graph_of(x, w);
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1], ErrorKind::shape_error,
          "dense: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  require(b.shape() == Shape{ws[0]}, ErrorKind::shape_error,
          "dense: bias " + shape_str(b.shape()) + " vs weight " + shape_str(ws));
  const std::size_t B = xs[0], I = xs[1], O = ws[0];
  Tensor out({B, O});
  MatMap om(out.ptr(), B, O);
  om.noalias() = ConstMatMap(x.value().ptr(), B, I) * ConstMatMap(w.value().ptr(), O, I).transpose();
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o) out[n * O + o] += b.value()[o];
  return g.push("dense", std::move(out), {x.id, w.id, b.id}, [xi = x.id, wi = w.id, bi = b.id, B, I, O](Graph& g, int self) {
    ConstMatMap gy(g.grad_of(self).ptr(), B, O);
    if (g.requires_grad(xi)) {
      MatMap gx(g.grad_buffer(xi).ptr(), B, I);
      gx.noalias() += gy * ConstMatMap(g.value(wi).ptr(), O, I);
    }
    if (g.requires_grad(wi)) {
      MatMap gw(g.grad_buffer(wi).ptr(), O, I);
      gw.noalias() += gy.transpose() * ConstMatMap(g.value(xi).ptr(), B, I);
    }
    if (g.requires_grad(bi)) {
      Tensor& gb = g.grad_buffer(bi);
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < O; ++o) gb[o] += gy(n, o);
    }
  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = graph_of(x);
  Tensor out = x.value().reshaped(std::move(shape));
  return g.push("reshape", std::move(out), {x.id}, [xi = x.id](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sqrt(Var x) {
  return unary("sqrt", x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Var abs(Var x) {
  return unary("abs", x, [](double v) { return std::abs(v); },
               [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(Var x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp(Var x, double lo, double hi) {
  require(lo <= hi, ErrorKind::invalid_argument, "clamp: lo > hi");
  return unary("clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var sigmoid(Var x) { return add_scalar(mul_scalar(tanh(mul_scalar(x, 0.5)), 0.5), 0.5); }

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return g.push("add", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    if (g.requires_grad(ai)) {
      Tensor& ga = g.grad_buffer(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (g.requires_grad(bi)) {
      Tensor& gb = g.grad_buffer(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return g.push("sub", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    if (g.requires_grad(ai)) {
      Tensor& ga = g.grad_buffer(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (g.requires_grad(bi)) {
      Tensor& gb = g.grad_buffer(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  same_shape("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return g.push("mul", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    if (g.requires_grad(ai)) {
      Tensor& ga = g.grad_buffer(ai);
      const Tensor& bv = g.value(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(bi)) {
      Tensor& gb = g.grad_buffer(bi);
      const Tensor& av = g.value(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var scale(Var x, Var s) {
  Graph& g = graph_of(x, s);
  require(s.value().size() == 1, ErrorKind::shape_error, "scale: factor must have one element, got " + shape_str(s.shape()));
  const double c = s.value()[0];
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * c;
  return g.push("scale", std::move(out), {x.id, s.id}, [xi = x.id, si = s.id](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    const Tensor& xv = g.value(xi);
    const double c = g.value(si)[0];
    if (g.requires_grad(xi)) {
      Tensor& gx = g.grad_buffer(xi);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * c;
    }
    if (g.requires_grad(si)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * xv[i];
      g.grad_buffer(si)[0] += acc;
    }
  });
}

Var div(Var a, Var b) {
  Graph& g = graph_of(a, b);
  same_shape("div", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return g.push("div", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    const Tensor& bv = g.value(bi);
    if (g.requires_grad(ai)) {
      Tensor& ga = g.grad_buffer(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / bv[i];
    }
    if (g.requires_grad(bi)) {
      Tensor& gb = g.grad_buffer(bi);
      const Tensor& yv = g.value(self);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i] * yv[i] / bv[i];
    }
  });
}

Var add_scalar(Var x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var mul_scalar(Var x, double c) {
  return unary("mul_scalar", x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Var rdiv_scalar(double c, Var x) {
  return unary("rdiv_scalar", x, [c](double v) { return c / v; }, [](double v, double y) { return -y / v; });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  require(!parts.empty(), ErrorKind::invalid_argument, "concat of zero tensors");
  Graph& g = graph_of(parts.front());
  Shape out_shape = parts.front().shape();
  require(axis < out_shape.size(), ErrorKind::shape_error, "concat: axis out of range for " + shape_str(out_shape));
  out_shape[axis] = 0;
  std::vector<int> ids;
  std::vector<std::size_t> lens;
  for (const Var& p : parts) {
    graph_of(parts.front(), p);
    Shape s = p.shape();
    Shape ref = parts.front().shape();
    require(s.size() == ref.size(), ErrorKind::shape_error,
            "concat: rank mismatch " + shape_str(ref) + " vs " + shape_str(s));
    for (std::size_t d = 0; d < s.size(); ++d) {
      require(d == axis || s[d] == ref[d], ErrorKind::shape_error,
              "concat: shape mismatch " + shape_str(ref) + " vs " + shape_str(s));
    }
    out_shape[axis] += s[axis];
    ids.push_back(p.id);
    lens.push_back(s[axis]);
  }
  Tensor out(out_shape);
  const AxisView ov = axis_view(out_shape, axis);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    const std::size_t chunk = lens[k] * ov.inner;
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(pv.ptr() + o * chunk, chunk, out.ptr() + o * ov.len * ov.inner + offset * ov.inner);
    }
    offset += lens[k];
  }
  return g.push("concat", std::move(out), ids, [ids, lens, ov](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t chunk = lens[k] * ov.inner;
      if (g.requires_grad(ids[k])) {
        Tensor& gp = g.grad_buffer(ids[k]);
        for (std::size_t o = 0; o < ov.outer; ++o) {
          const double* src = gy.ptr() + o * ov.len * ov.inner + offset * ov.inner;
          double* dst = gp.ptr() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += lens[k];
    }
  });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(x);
  const Shape& xs = x.shape();
  require(axis < xs.size() && begin < end && end <= xs[axis], ErrorKind::shape_error,
          "slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " + std::to_string(axis) +
              " of " + shape_str(xs));
  Shape out_shape = xs;
  out_shape[axis] = end - begin;
  const AxisView iv = axis_view(xs, axis);
  const std::size_t chunk = (end - begin) * iv.inner;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < iv.outer; ++o) {
    std::copy_n(x.value().ptr() + o * iv.len * iv.inner + begin * iv.inner, chunk, out.ptr() + o * chunk);
  }
  return g.push("slice", std::move(out), {x.id}, [xi = x.id, iv, begin, chunk](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t o = 0; o < iv.outer; ++o) {
      double* dst = gx.ptr() + o * iv.len * iv.inner + begin * iv.inner;
      const double* src = gy.ptr() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return g.push("sum", Tensor::scalar(s), {x.id}, [xi = x.id](Graph& g, int self) {
    const double gy = g.grad_of(self)[0];
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
  });
}

Var mean(Var x) {
  require(x.value().size() > 0, ErrorKind::invalid_argument, "mean of an empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var sum_axis(Var x, std::size_t axis) {
  Graph& g = graph_of(x);
  const Shape& xs = x.shape();
  require(xs.size() == 2 && axis < 2, ErrorKind::shape_error, "sum_axis expects rank 2, got " + shape_str(xs));
  const std::size_t R = xs[0], C = xs[1];
  Tensor out(Shape{axis == 0 ? C : R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[axis == 0 ? c : r] += x.value()[r * C + c];
  return g.push("sum_axis", std::move(out), {x.id}, [xi = x.id, axis, R, C](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += gy[axis == 0 ? c : r];
  });
}

Var mean_axis(Var x, std::size_t axis) {
  const std::size_t n = x.shape().at(axis);
  require(n > 0, ErrorKind::invalid_argument, "mean_axis over an empty axis");
  return mul_scalar(sum_axis(x, axis), 1.0 / static_cast<double>(n));
}

Var max_axis(Var x, std::size_t axis) {
  Graph& g = graph_of(x);
  const Shape& xs = x.shape();
  require(xs.size() == 2 && axis < 2 && xs[axis] > 0, ErrorKind::shape_error,
          "max_axis expects non-empty rank 2, got " + shape_str(xs));
  const std::size_t R = xs[0], C = xs[1];
  const std::size_t n_out = axis == 0 ? C : R;
  Tensor out(Shape{n_out});
  auto arg = std::make_shared<std::vector<std::size_t>>(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    std::size_t best = axis == 0 ? o : o * C;
    const std::size_t len = axis == 0 ? R : C;
    for (std::size_t k = 1; k < len; ++k) {
      const std::size_t idx = axis == 0 ? k * C + o : o * C + k;
      if (x.value()[idx] > x.value()[best]) best = idx;
    }
    out[o] = x.value()[best];
    (*arg)[o] = best;
  }
  return g.push("max_axis", std::move(out), {x.id}, [xi = x.id, arg](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t o = 0; o < gy.size(); ++o) gx[(*arg)[o]] += gy[o];
  });
}

Var sq_dist_matrix(Var x, Var y) {
  Graph& g = graph_of(x, y);
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  require(xs.size() == 2 && ys.size() == 2 && xs[1] == ys[1], ErrorKind::shape_error,
          "sq_dist_matrix: shape mismatch " + shape_str(xs) + " vs " + shape_str(ys));
  const std::size_t n = xs[0], m = ys[0], d = xs[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x.value()[i * d + k] - y.value()[j * d + k];
        s += diff * diff;
      }
      out[i * m + j] = s;
    }
  return g.push("sq_dist_matrix", std::move(out), {x.id, y.id}, [xi = x.id, yi = y.id, n, m, d](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    const Tensor& xv = g.value(xi);
    const Tensor& yv = g.value(yi);
    const bool nx = g.requires_grad(xi), ny = g.requires_grad(yi);
    Tensor* gx = nx ? &g.grad_buffer(xi) : nullptr;
    Tensor* gyy = ny ? &g.grad_buffer(yi) : nullptr;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double w = 2.0 * gy[i * m + j];
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = xv[i * d + k] - yv[j * d + k];
          if (gx) (*gx)[i * d + k] += w * diff;
          if (gyy) (*gyy)[j * d + k] -= w * diff;
        }
      }
  });
}

}  // namespace pairdis
