#pragma once

// Minimal reverse-mode differentiation over dense matrices. A Graph is a tape
// that lives for one forward/backward pass; Vars are indices into it.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace viralbench::ag {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

class Graph;
/// Receives the node's own handle and its accumulated output gradient.
using BackwardFn = std::function<void(Graph&, Var self, const Matrix& out_grad)>;

class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);

  /// Leaf that reads `storage` in place; the storage must outlive the graph
  /// and must not be modified while the graph is alive.
  Var parameter(const Matrix& storage);

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }

  /// Accumulated gradient; a zero matrix of the value's shape if none flowed.
  Matrix grad(Var v) const;

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and runs the tape in reverse. `loss` must be 1x1.
  void backward(Var loss);

  // Used by op implementations.
  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Matrix value, std::span<const Var> inputs, BackwardFn fn);
  Matrix& grad_slot(Var v);

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// -- elementwise and linear algebra ------------------------------------------

Var matmul(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
/// a + broadcast of the 1xN row `bias` onto every row of a.
Var add_row(Graph& g, Var a, Var bias);
Var scale(Graph& g, Var a, double c);
Var one_minus(Graph& g, Var a);
Var sigmoid(Graph& g, Var a);
Var tanh(Graph& g, Var a);
/// Exact GELU, x * Phi(x).
Var gelu(Graph& g, Var a);
Var sum_all(Graph& g, Var a);

// -- shape ---------------------------------------------------------------------

Var concat_cols(Graph& g, std::span<const Var> parts);
Var slice_cols(Graph& g, Var a, Eigen::Index start, Eigen::Index count);
Var row_block(Graph& g, Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Graph& g, Var table, std::span<const int> indices);

// -- sequence helpers (time-major layout: row t * batch + b) ------------------

/// out block t = in block t + offset, zero where t + offset is out of range.
Var time_shift(Graph& g, Var a, Eigen::Index batch, Eigen::Index offset);
/// Multiplies row r by the constant weight w[r].
Var scale_rows(Graph& g, Var a, const Vector& w);
/// Row r of the result is a.row(r) if keep[r] != 0, else b.row(r).
Var select_rows(Graph& g, Var a, Var b, const Vector& keep);
/// Per-sample max over the unmasked time steps. mask is batch x len.
Var masked_max_pool(Graph& g, Var a, Eigen::Index batch, const Matrix& mask);

// -- transformer pieces --------------------------------------------------------

Var layer_norm(Graph& g, Var a, Var gamma, Var beta, double eps = 1e-5);

/// Scaled dot-product attention with key padding mask. q, k, v are
/// (len*batch) x width in time-major layout; width must divide by heads.
Var multi_head_attention(Graph& g, Var q, Var k, Var v, Eigen::Index batch, Eigen::Index heads,
                         const Matrix& mask);

/// Attention probabilities for sample b and head h (len x len); masked key
/// columns are exactly zero.
std::vector<Matrix> attention_probabilities(const Matrix& q, const Matrix& k, Eigen::Index batch,
                                            Eigen::Index heads, const Matrix& mask);

// -- loss ------------------------------------------------------------------------

/// Mean over rows of -[w_pos*y*log s(z) + (1-y)*log(1-s(z))]; logits is Bx1.
Var weighted_bce(Graph& g, Var logits, const Vector& labels, double w_pos);

// scalar helpers shared with non-graph code
double sigmoid(double x);
double softplus(double x);
double gelu(double x);

}  // namespace viralbench::ag
