#include "viralbench/nn.hpp"

#include <cmath>

namespace viralbench::nn {

std::size_t ParameterSet::add(const std::string& name, Matrix value) {
  if (index_.count(name)) throw config_error("duplicate parameter name '" + name + "'");
  index_[name] = values_.size();
  names_.push_back(name);
  grads_.push_back(Matrix::Zero(value.rows(), value.cols()));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::size_t ParameterSet::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw lookup_error("unknown parameter '" + name + "'");
  return it->second;
}

Bound ParameterSet::bind(ag::Graph& g) const {
  Bound b;
  b.reserve(values_.size());
  for (const auto& v : values_) b.push_back(g.parameter(v));
  return b;
}

void ParameterSet::collect_grads(const ag::Graph& g, const Bound& bound) {
  for (std::size_t i = 0; i < values_.size(); ++i) grads_[i] = g.grad(bound[i]);
}

void ParameterSet::assign(const ParameterSet& other) {
  if (other.size() != size()) throw config_error("parameter set size mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    if (other.names_[i] != names_[i] || other.values_[i].rows() != values_[i].rows() ||
        other.values_[i].cols() != values_[i].cols()) {
      throw config_error("parameter '" + names_[i] + "' does not match");
    }
    values_[i] = other.values_[i];
  }
}

AdamW::AdamW(const ParameterSet& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
    v_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
  }
}

void AdamW::step(ParameterSet& params, double lr, double weight_decay) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = params.value(i);
    const Matrix& grad = params.grad(i);
    w *= (1.0 - lr * weight_decay);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad.cwiseProduct(grad);
    w.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

Matrix orthogonal_blocks(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  if (cols % rows != 0) throw config_error("orthogonal_blocks: cols must be a multiple of rows");
  Matrix out(rows, cols);
  for (Eigen::Index blk = 0; blk < cols / rows; ++blk) {
    Matrix a(rows, rows);
    for (Eigen::Index c = 0; c < rows; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) a(r, c) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, rows);
    // sign fix so the distribution is uniform over the orthogonal group
    const Matrix rmat = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < rows; ++c) {
      if (rmat(c, c) < 0) q.col(c) *= -1.0;
    }
    out.middleCols(blk * rows, rows) = q;
  }
  return out;
}

Linear::Linear(ParameterSet& ps, const std::string& prefix, Eigen::Index in_dim, Eigen::Index out_dim, Rng& rng)
    : in(in_dim), out(out_dim) {
  const auto fan_in = static_cast<std::size_t>(in_dim);
  weight = ps.add(prefix + ".weight", uniform_fan_in(in_dim, out_dim, fan_in, rng));
  bias = ps.add(prefix + ".bias", uniform_fan_in(1, out_dim, fan_in, rng));
}

Var Linear::operator()(ag::Graph& g, const Bound& p, Var x) const {
  return ag::add_row(g, ag::matmul(g, x, p[weight]), p[bias]);
}

Var dropout(ag::Graph& g, Var x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  const Matrix& v = g.value(x);
  const double keep = 1.0 - rate;
  Matrix mask(v.rows(), v.cols());
  for (Eigen::Index c = 0; c < v.cols(); ++c)
    for (Eigen::Index r = 0; r < v.rows(); ++r) mask(r, c) = rng->uniform() < keep ? 1.0 / keep : 0.0;
  return ag::mul(g, x, g.constant(std::move(mask)));
}

MlpHead::MlpHead(ParameterSet& ps, const std::string& prefix, Eigen::Index in_dim, Eigen::Index hidden_dim, Rng& rng)
    : hidden(ps, prefix + ".hidden", in_dim, hidden_dim, rng), output(ps, prefix + ".output", hidden_dim, 1, rng) {}

Var MlpHead::operator()(ag::Graph& g, const Bound& p, Var x, double dropout_rate, Rng* rng) const {
  Var h = ag::gelu(g, hidden(g, p, x));
  h = dropout(g, h, dropout_rate, rng);
  return output(g, p, h);
}

}  // namespace viralbench::nn
