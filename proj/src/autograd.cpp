#include "viralbench/autograd.hpp"

#include "viralbench/common.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace viralbench::ag {

namespace {

template <typename Expr>
void accumulate(Graph& g, Var v, const Expr& e) {
  if (g.requires_grad(v)) g.grad_slot(v) += e;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw config_error(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()) + ")");
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Graph::parameter(const Matrix& storage) {
  Node n;
  n.external = &storage;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Matrix Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Matrix& val = value(v);
    return Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

Matrix& Graph::grad_slot(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Matrix& val = n.external ? *n.external : n.value;
    n.grad.setZero(val.rows(), val.cols());
  }
  return n.grad;
}

Var Graph::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Graph::push(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (Var in : inputs) {
      if (nodes_[in.id].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1) throw config_error("backward: loss must be a 1x1 value");
  if (!nodes_[loss.id].requires_grad) return;
  grad_slot(loss).setOnes();
  for (std::int32_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, Var{i}, n.grad);
  }
}

Var matmul(Graph& g, Var a, Var b) {
  const Matrix& A = g.value(a);
  const Matrix& B = g.value(b);
  if (A.cols() != B.rows()) {
    throw config_error("matmul: inner dimension mismatch (" + std::to_string(A.cols()) + " vs " +
                       std::to_string(B.rows()) + ")");
  }
  return g.push(A * B, {a, b}, [a, b](Graph& g, Var, const Matrix& G) {
    if (g.requires_grad(a)) g.grad_slot(a).noalias() += G * g.value(b).transpose();
    if (g.requires_grad(b)) g.grad_slot(b).noalias() += g.value(a).transpose() * G;
  });
}

Var add(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "add");
  return g.push(g.value(a) + g.value(b), {a, b}, [a, b](Graph& g, Var, const Matrix& G) {
    accumulate(g, a, G);
    accumulate(g, b, G);
  });
}

Var sub(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "sub");
  return g.push(g.value(a) - g.value(b), {a, b}, [a, b](Graph& g, Var, const Matrix& G) {
    accumulate(g, a, G);
    accumulate(g, b, -G);
  });
}

Var mul(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "mul");
  return g.push(g.value(a).cwiseProduct(g.value(b)), {a, b}, [a, b](Graph& g, Var, const Matrix& G) {
    accumulate(g, a, G.cwiseProduct(g.value(b)));
    accumulate(g, b, G.cwiseProduct(g.value(a)));
  });
}

Var add_row(Graph& g, Var a, Var bias) {
  const Matrix& A = g.value(a);
  const Matrix& bv = g.value(bias);
  if (bv.rows() != 1 || bv.cols() != A.cols()) throw config_error("add_row: bias must be 1 x cols");
  Matrix out = A.rowwise() + bv.row(0);
  return g.push(std::move(out), {a, bias}, [a, bias](Graph& g, Var, const Matrix& G) {
    accumulate(g, a, G);
    accumulate(g, bias, G.colwise().sum());
  });
}

Var scale(Graph& g, Var a, double c) {
  return g.push(g.value(a) * c, {a}, [a, c](Graph& g, Var, const Matrix& G) { accumulate(g, a, G * c); });
}

Var one_minus(Graph& g, Var a) {
  Matrix out = (1.0 - g.value(a).array()).matrix();
  return g.push(std::move(out), {a}, [a](Graph& g, Var, const Matrix& G) { accumulate(g, a, -G); });
}

Var sigmoid(Graph& g, Var a) {
  Matrix out = g.value(a).unaryExpr([](double x) { return sigmoid(x); });
  return g.push(std::move(out), {a}, [a](Graph& g, Var self, const Matrix& G) {
    const Matrix& s = g.value(self);
    accumulate(g, a, (G.array() * s.array() * (1.0 - s.array())).matrix());
  });
}

Var tanh(Graph& g, Var a) {
  Matrix out = g.value(a).array().tanh().matrix();
  return g.push(std::move(out), {a}, [a](Graph& g, Var self, const Matrix& G) {
    const Matrix& t = g.value(self);
    accumulate(g, a, (G.array() * (1.0 - t.array().square())).matrix());
  });
}

Var gelu(Graph& g, Var a) {
  Matrix out = g.value(a).unaryExpr([](double x) { return gelu(x); });
  return g.push(std::move(out), {a}, [a](Graph& g, Var, const Matrix& G) {
    if (!g.requires_grad(a)) return;
    const Matrix& x = g.value(a);
    Matrix d = x.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      return cdf + v * pdf;
    });
    g.grad_slot(a) += G.cwiseProduct(d);
  });
}

Var sum_all(Graph& g, Var a) {
  Matrix out(1, 1);
  out(0, 0) = g.value(a).sum();
  return g.push(std::move(out), {a}, [a](Graph& g, Var, const Matrix& G) {
    if (!g.requires_grad(a)) return;
    g.grad_slot(a).array() += G(0, 0);
  });
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw config_error("concat_cols: no inputs");
  const Eigen::Index rows = g.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (g.value(p).rows() != rows) throw config_error("concat_cols: row count mismatch");
    cols += g.value(p).cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index off = 0;
  for (Var p : parts) {
    const Matrix& v = g.value(p);
    out.middleCols(off, v.cols()) = v;
    offsets.push_back(off);
    off += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.push(std::move(out), parts, [inputs, offsets](Graph& g, Var, const Matrix& G) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!g.requires_grad(inputs[i])) continue;
      const Eigen::Index c = g.value(inputs[i]).cols();
      g.grad_slot(inputs[i]) += G.middleCols(offsets[i], c);
    }
  });
}

Var slice_cols(Graph& g, Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& A = g.value(a);
  if (start < 0 || count < 0 || start + count > A.cols()) throw config_error("slice_cols: out of range");
  return g.push(A.middleCols(start, count), {a}, [a, start, count](Graph& g, Var, const Matrix& G) {
    if (g.requires_grad(a)) g.grad_slot(a).middleCols(start, count) += G;
  });
}

Var row_block(Graph& g, Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& A = g.value(a);
  if (start < 0 || count < 0 || start + count > A.rows()) throw config_error("row_block: out of range");
  return g.push(A.middleRows(start, count), {a}, [a, start, count](Graph& g, Var, const Matrix& G) {
    if (g.requires_grad(a)) g.grad_slot(a).middleRows(start, count) += G;
  });
}

Var gather_rows(Graph& g, Var table, std::span<const int> indices) {
  const Matrix& T = g.value(table);
  Matrix out(static_cast<Eigen::Index>(indices.size()), T.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= T.rows()) throw lookup_error("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = T.row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return g.push(std::move(out), {table}, [table, idx](Graph& g, Var, const Matrix& G) {
    if (!g.requires_grad(table)) return;
    Matrix& slot = g.grad_slot(table);
    for (std::size_t i = 0; i < idx.size(); ++i) slot.row(idx[i]) += G.row(static_cast<Eigen::Index>(i));
  });
}

Var time_shift(Graph& g, Var a, Eigen::Index batch, Eigen::Index offset) {
  const Matrix& A = g.value(a);
  const Eigen::Index len = A.rows() / batch;
  Matrix out = Matrix::Zero(A.rows(), A.cols());
  for (Eigen::Index t = 0; t < len; ++t) {
    const Eigen::Index src = t + offset;
    if (src < 0 || src >= len) continue;
    out.middleRows(t * batch, batch) = A.middleRows(src * batch, batch);
  }
  return g.push(std::move(out), {a}, [a, batch, offset, len](Graph& g, Var, const Matrix& G) {
    if (!g.requires_grad(a)) return;
    Matrix& slot = g.grad_slot(a);
    for (Eigen::Index t = 0; t < len; ++t) {
      const Eigen::Index src = t + offset;
      if (src < 0 || src >= len) continue;
      slot.middleRows(src * batch, batch) += G.middleRows(t * batch, batch);
    }
  });
}

Var scale_rows(Graph& g, Var a, const Vector& w) {
  const Matrix& A = g.value(a);
  if (w.size() != A.rows()) throw config_error("scale_rows: weight length mismatch");
  Matrix out = w.asDiagonal() * A;
  return g.push(std::move(out), {a}, [a, w](Graph& g, Var, const Matrix& G) {
    if (g.requires_grad(a)) g.grad_slot(a) += w.asDiagonal() * G;
  });
}

Var select_rows(Graph& g, Var a, Var b, const Vector& keep) {
  const Matrix& A = g.value(a);
  const Matrix& B = g.value(b);
  require_same_shape(A, B, "select_rows");
  if (keep.size() != A.rows()) throw config_error("select_rows: mask length mismatch");
  Matrix out(A.rows(), A.cols());
  for (Eigen::Index r = 0; r < A.rows(); ++r) out.row(r) = keep[r] != 0.0 ? A.row(r) : B.row(r);
  return g.push(std::move(out), {a, b}, [a, b, keep](Graph& g, Var, const Matrix& G) {
    const bool ga = g.requires_grad(a);
    const bool gb = g.requires_grad(b);
    for (Eigen::Index r = 0; r < G.rows(); ++r) {
      if (keep[r] != 0.0) {
        if (ga) g.grad_slot(a).row(r) += G.row(r);
      } else if (gb) {
        g.grad_slot(b).row(r) += G.row(r);
      }
    }
  });
}

Var masked_max_pool(Graph& g, Var a, Eigen::Index batch, const Matrix& mask) {
  const Matrix& A = g.value(a);
  const Eigen::Index len = A.rows() / batch;
  if (mask.rows() != batch || mask.cols() != len) throw config_error("masked_max_pool: mask shape mismatch");
  const Eigen::Index width = A.cols();
  Matrix out(batch, width);
  auto argmax = std::make_shared<std::vector<Eigen::Index>>(static_cast<std::size_t>(batch * width), -1);
  for (Eigen::Index b = 0; b < batch; ++b) {
    bool any = false;
    for (Eigen::Index t = 0; t < len; ++t) {
      if (mask(b, t) == 0.0) continue;
      const Eigen::Index row = t * batch + b;
      for (Eigen::Index c = 0; c < width; ++c) {
        auto& best = (*argmax)[static_cast<std::size_t>(b * width + c)];
        if (!any || A(row, c) > out(b, c)) {
          out(b, c) = A(row, c);
          best = row;
        }
      }
      any = true;
    }
    if (!any) throw validation_error("masked_max_pool: sample " + std::to_string(b) + " has an all-zero mask");
  }
  return g.push(std::move(out), {a}, [a, argmax, width](Graph& g, Var, const Matrix& G) {
    if (!g.requires_grad(a)) return;
    Matrix& slot = g.grad_slot(a);
    for (Eigen::Index b = 0; b < G.rows(); ++b) {
      for (Eigen::Index c = 0; c < width; ++c) slot((*argmax)[static_cast<std::size_t>(b * width + c)], c) += G(b, c);
    }
  });
}

Var layer_norm(Graph& g, Var a, Var gamma, Var beta, double eps) {
  const Matrix& X = g.value(a);
  const Matrix& gm = g.value(gamma);
  const Matrix& bt = g.value(beta);
  if (gm.cols() != X.cols() || bt.cols() != X.cols()) throw config_error("layer_norm: affine width mismatch");
  const Eigen::Index n = X.cols();
  auto xhat = std::make_shared<Matrix>(X.rows(), n);
  auto inv_std = std::make_shared<Vector>(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    xhat->row(r) = (X.row(r).array() - mu) * inv;
  }
  Matrix out = (xhat->array().rowwise() * gm.row(0).array()).rowwise() + bt.row(0).array();
  return g.push(std::move(out), {a, gamma, beta}, [a, gamma, beta, xhat, inv_std, n](Graph& g, Var, const Matrix& G) {
    if (g.requires_grad(gamma)) g.grad_slot(gamma) += G.cwiseProduct(*xhat).colwise().sum();
    if (g.requires_grad(beta)) g.grad_slot(beta) += G.colwise().sum();
    if (!g.requires_grad(a)) return;
    const Matrix& gm = g.value(gamma);
    Matrix& slot = g.grad_slot(a);
    for (Eigen::Index r = 0; r < G.rows(); ++r) {
      const RowVector dxhat = G.row(r).cwiseProduct(gm.row(0));
      const double mean_d = dxhat.sum() / static_cast<double>(n);
      const double mean_dx = dxhat.cwiseProduct(xhat->row(r)).sum() / static_cast<double>(n);
      slot.row(r) += ((dxhat.array() - mean_d - xhat->row(r).array() * mean_dx) * (*inv_std)[r]).matrix();
    }
  });
}

namespace {

Matrix gather_head(const Matrix& m, Eigen::Index batch, Eigen::Index b, Eigen::Index col, Eigen::Index width) {
  const Eigen::Index len = m.rows() / batch;
  Matrix out(len, width);
  for (Eigen::Index t = 0; t < len; ++t) out.row(t) = m.block(t * batch + b, col, 1, width);
  return out;
}

void scatter_head(Matrix& dst, const Matrix& src, Eigen::Index batch, Eigen::Index b, Eigen::Index col) {
  for (Eigen::Index t = 0; t < src.rows(); ++t) dst.block(t * batch + b, col, 1, src.cols()) += src.row(t);
}

Matrix masked_softmax_scores(const Matrix& qh, const Matrix& kh, const Matrix& mask, Eigen::Index b, double scale) {
  const Eigen::Index len = qh.rows();
  Matrix s = (qh * kh.transpose()) * scale;
  Matrix p = Matrix::Zero(len, len);
  for (Eigen::Index i = 0; i < len; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < len; ++j) {
      if (mask(b, j) != 0.0) mx = std::max(mx, s(i, j));
    }
    if (!std::isfinite(mx)) throw validation_error("attention: sample " + std::to_string(b) + " has an all-zero mask");
    double z = 0.0;
    for (Eigen::Index j = 0; j < len; ++j) {
      if (mask(b, j) == 0.0) continue;
      p(i, j) = std::exp(s(i, j) - mx);
      z += p(i, j);
    }
    p.row(i) /= z;
  }
  return p;
}

}  // namespace

std::vector<Matrix> attention_probabilities(const Matrix& q, const Matrix& k, Eigen::Index batch, Eigen::Index heads,
                                            const Matrix& mask) {
  const Eigen::Index width = q.cols();
  if (width % heads != 0) throw config_error("attention: width not divisible by head count");
  const Eigen::Index dk = width / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Matrix> probs;
  probs.reserve(static_cast<std::size_t>(batch * heads));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      probs.push_back(
          masked_softmax_scores(gather_head(q, batch, b, h * dk, dk), gather_head(k, batch, b, h * dk, dk), mask, b, sc));
    }
  }
  return probs;
}

Var multi_head_attention(Graph& g, Var q, Var k, Var v, Eigen::Index batch, Eigen::Index heads, const Matrix& mask) {
  const Matrix& Q = g.value(q);
  const Matrix& K = g.value(k);
  const Matrix& V = g.value(v);
  require_same_shape(Q, K, "attention");
  require_same_shape(Q, V, "attention");
  const Eigen::Index len = Q.rows() / batch;
  if (mask.rows() != batch || mask.cols() != len) throw config_error("attention: mask shape mismatch");
  const Eigen::Index width = Q.cols();
  const Eigen::Index dk = width / heads;
  auto probs = std::make_shared<std::vector<Matrix>>(attention_probabilities(Q, K, batch, heads, mask));
  Matrix out = Matrix::Zero(Q.rows(), width);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      const Matrix& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
      scatter_head(out, p * gather_head(V, batch, b, h * dk, dk), batch, b, h * dk);
    }
  }
  return g.push(std::move(out), {q, k, v}, [q, k, v, probs, batch, heads, dk](Graph& g, Var, const Matrix& G) {
    const Matrix& Q = g.value(q);
    const Matrix& K = g.value(k);
    const Matrix& V = g.value(v);
    const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
    const bool gq = g.requires_grad(q), gk = g.requires_grad(k), gv = g.requires_grad(v);
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index h = 0; h < heads; ++h) {
        const Matrix& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
        const Matrix dout = gather_head(G, batch, b, h * dk, dk);
        const Matrix vh = gather_head(V, batch, b, h * dk, dk);
        if (gv) scatter_head(g.grad_slot(v), p.transpose() * dout, batch, b, h * dk);
        if (!gq && !gk) continue;
        const Matrix dp = dout * vh.transpose();
        const Vector rowdot = dp.cwiseProduct(p).rowwise().sum();
        const Matrix ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * sc;
        if (gq) scatter_head(g.grad_slot(q), ds * gather_head(K, batch, b, h * dk, dk), batch, b, h * dk);
        if (gk) scatter_head(g.grad_slot(k), ds.transpose() * gather_head(Q, batch, b, h * dk, dk), batch, b, h * dk);
      }
    }
  });
}

Var weighted_bce(Graph& g, Var logits, const Vector& labels, double w_pos) {
  const Matrix& Z = g.value(logits);
  if (Z.cols() != 1 || Z.rows() != labels.size()) throw config_error("weighted_bce: logits must be Bx1 matching labels");
  const auto n = static_cast<double>(Z.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double z = Z(i, 0), y = labels[i];
    total += w_pos * y * softplus(-z) + (1.0 - y) * softplus(z);
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return g.push(std::move(out), {logits}, [logits, labels, w_pos, n](Graph& g, Var, const Matrix& G) {
    if (!g.requires_grad(logits)) return;
    const Matrix& Z = g.value(logits);
    Matrix& slot = g.grad_slot(logits);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      const double s = sigmoid(Z(i, 0)), y = labels[i];
      slot(i, 0) += G(0, 0) * (w_pos * y * (s - 1.0) + (1.0 - y) * s) / n;
    }
  });
}

}  // namespace viralbench::ag
