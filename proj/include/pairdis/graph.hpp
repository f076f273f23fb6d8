#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pairdis/tensor.hpp"

namespace pairdis {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid as long as the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const;
};

// Tape for reverse-mode differentiation. Nodes are appended in evaluation
// order, so the node list is already a topological order and backward() walks
// it in reverse. Every op output is checked for NaN/Inf.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that never receives a gradient (inputs, noise, targets).
  Var constant(Tensor value);
  // Leaf that receives a gradient in backward().
  Var variable(Tensor value);

  // Appends an op node. `backward` may be empty for ops without inputs that need gradients.
  Var push(std::string op, Tensor value, std::vector<int> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& value(int id) const { return nodes_.at(id).value; }
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  // Gradient of the last backward() target with respect to v. Zero-filled if
  // v did not influence the target.
  Tensor grad(Var v) const;

  // Incoming gradient of node `id` (valid inside a BackwardFn).
  const Tensor& grad_of(int id) const { return nodes_.at(id).grad; }
  // Accumulation buffer for node `id`, allocated on first use.
  Tensor& grad_buffer(int id);

  // Reverse accumulation from a scalar node.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var make_var(int id) { return Var{this, id}; }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitive ops. Shapes are checked; mismatches raise shape-error naming both.

// x [B,C,H,W], w [O,C,k,k], b [O] -> [B,O,H-k+1,W-k+1]; valid padding, stride 1.
Var conv2d(Var x, Var w, Var b);
// x [B,C,H,W], w [C,O,k,k], b [O] -> [B,O,H+k-1,W+k-1]; adjoint of conv2d.
Var conv2d_transpose(Var x, Var w, Var b);
// 2x2 window, stride 2. Gradient is routed to the first maximum in row-major order.
Var maxpool2x2(Var x);
// Nearest-neighbour 2x upsampling on the two trailing axes.
Var upsample2x(Var x);
// x [B,I], w [O,I], b [O] -> x w^T + b.
Var dense(Var x, Var w, Var b);
Var reshape(Var x, Shape shape);

Var relu(Var x);
Var exp(Var x);
Var log(Var x);
Var tanh(Var x);
Var sqrt(Var x);
Var abs(Var x);
Var square(Var x);
// Elementwise clamp to [lo, hi]; gradient passes only inside the interval.
Var clamp(Var x, double lo, double hi);
// 1 / (1 + exp(-x)) written through tanh for stability.
Var sigmoid(Var x);

// Elementwise binary ops; shapes must be identical.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

// x times the single element of s.
Var scale(Var x, Var s);

Var add_scalar(Var x, double c);
Var mul_scalar(Var x, double c);
// c / x
Var rdiv_scalar(double c, Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator-(Var a, double c) { return add_scalar(a, -c); }
inline Var operator*(Var a, double c) { return mul_scalar(a, c); }
inline Var operator*(double c, Var a) { return mul_scalar(a, c); }

// Concatenate / slice along `axis`.
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);

// Full reductions to a scalar.
Var sum(Var x);
Var mean(Var x);
// Reductions of a rank-2 tensor along axis 0 or 1; the reduced axis is removed.
Var sum_axis(Var x, std::size_t axis);
Var mean_axis(Var x, std::size_t axis);
Var max_axis(Var x, std::size_t axis);

// Squared Euclidean distances between the rows of x [n,d] and y [m,d] -> [n,m].
Var sq_dist_matrix(Var x, Var y);

}  // namespace pairdis
