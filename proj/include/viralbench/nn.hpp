#pragma once

#include "viralbench/autograd.hpp"
#include "viralbench/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace viralbench::nn {

using ag::Matrix;
using ag::Var;

/// Graph handles for every parameter of a ParameterSet, indexed like the set.
using Bound = std::vector<Var>;

/// Ordered, named parameter tensors plus their most recent gradients.
class ParameterSet {
 public:
  std::size_t add(const std::string& name, Matrix value);

  std::size_t size() const { return values_.size(); }
  std::size_t scalar_count() const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const;

  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  Matrix& value(const std::string& name) { return values_[index(name)]; }
  const Matrix& value(const std::string& name) const { return values_[index(name)]; }
  const Matrix& grad(std::size_t i) const { return grads_[i]; }

  /// Registers every tensor as a graph leaf.
  Bound bind(ag::Graph& g) const;
  /// Copies d(loss)/d(param) out of a graph that has run backward().
  void collect_grads(const ag::Graph& g, const Bound& bound);

  /// Replaces all values; names and shapes must match.
  void assign(const ParameterSet& other);

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::vector<Matrix> grads_;
  std::map<std::string, std::size_t> index_;
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(const ParameterSet& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParameterSet& params, double lr, double weight_decay);
  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, std::size_t fan_in, Rng& rng);
/// cols must be a multiple of rows; each rows x rows block is orthogonal.
Matrix orthogonal_blocks(Eigen::Index rows, Eigen::Index cols, Rng& rng);

struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  Eigen::Index in = 0;
  Eigen::Index out = 0;

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& prefix, Eigen::Index in_dim, Eigen::Index out_dim, Rng& rng);
  Var operator()(ag::Graph& g, const Bound& p, Var x) const;
};

/// Inverted dropout; identity when rng is null (evaluation) or rate is 0.
Var dropout(ag::Graph& g, Var x, double rate, Rng* rng);

/// Two affine layers with GELU and dropout between them, one logit out.
struct MlpHead {
  Linear hidden;
  Linear output;

  MlpHead() = default;
  MlpHead(ParameterSet& ps, const std::string& prefix, Eigen::Index in_dim, Eigen::Index hidden_dim, Rng& rng);
  Var operator()(ag::Graph& g, const Bound& p, Var x, double dropout_rate, Rng* rng) const;
};

}  // namespace viralbench::nn
