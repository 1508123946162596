#include "viralbench/models.hpp"

#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace viralbench::models {

namespace {

void check_inputs(const Matrix& x_train, std::span<const int> y_train, const Matrix& x_test) {
  if (x_train.rows() == 0) throw validation_error("baseline training set is empty");
  if (static_cast<std::size_t>(x_train.rows()) != y_train.size()) {
    throw validation_error("baseline: feature rows and labels differ in length");
  }
  if (x_test.rows() > 0 && x_test.cols() != x_train.cols()) {
    throw config_error("baseline: train and test widths differ");
  }
  for (int y : y_train)
    if (y != 0 && y != 1) throw validation_error("labels must be 0 or 1");
}

void require_both_classes(std::span<const int> y, Family kind) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) {
    throw validation_error(to_string(kind) + " needs both classes in the training data");
  }
}

BaselinePrediction dummy_stratified(std::span<const int> y_train, Eigen::Index n_test, std::uint64_t seed) {
  const double prior =
      static_cast<double>(std::count(y_train.begin(), y_train.end(), 1)) / static_cast<double>(y_train.size());
  Rng rng(seed);
  BaselinePrediction out;
  for (Eigen::Index i = 0; i < n_test; ++i) {
    const int y = rng.bernoulli(prior) ? 1 : 0;
    out.labels.push_back(y);
    out.scores.push_back(static_cast<double>(y));
  }
  return out;
}

// -- L2 logistic regression ----------------------------------------------------

/// 0.5 |w|^2 + C * sum_i s_i * loss_i with an unpenalized intercept in the last slot.
class LogisticObjective : public ceres::FirstOrderFunction {
 public:
  LogisticObjective(const Matrix& x, std::span<const int> y, double c, double w_pos) : x_(x), c_(c) {
    y_.resize(x.rows());
    s_.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      y_[i] = y[static_cast<std::size_t>(i)];
      s_[i] = y_[i] == 1.0 ? w_pos : 1.0;
    }
  }

  bool Evaluate(const double* params, double* cost, double* gradient) const override {
    const Eigen::Index d = x_.cols();
    Eigen::Map<const Vector> w(params, d);
    const double b = params[d];
    const Vector z = (x_ * w).array() + b;
    double loss = 0.5 * w.squaredNorm();
    Vector r(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      // -log s(z) for y=1, -log(1-s(z)) for y=0
      const double signed_z = y_[i] == 1.0 ? -z[i] : z[i];
      loss += c_ * s_[i] * ag::softplus(signed_z);
      r[i] = c_ * s_[i] * (ag::sigmoid(z[i]) - y_[i]);
    }
    *cost = loss;
    if (gradient != nullptr) {
      Eigen::Map<Vector> g(gradient, d);
      g = w + x_.transpose() * r;
      gradient[d] = r.sum();
    }
    return true;
  }

  int NumParameters() const override { return static_cast<int>(x_.cols()) + 1; }

 private:
  const Matrix& x_;
  Vector y_;
  Vector s_;
  double c_;
};

BaselinePrediction logistic(const Matrix& x_train, std::span<const int> y_train, const Matrix& x_test,
                            const BaselineOptions& options) {
  std::vector<double> params(static_cast<std::size_t>(x_train.cols()) + 1, 0.0);
  ceres::GradientProblem problem(
      new LogisticObjective(x_train, y_train, options.inverse_regularization, options.positive_weight));
  ceres::GradientProblemSolver::Options solver;
  solver.line_search_direction_type = ceres::LBFGS;
  solver.max_num_iterations = 1000;
  solver.function_tolerance = 1e-12;
  solver.gradient_tolerance = 1e-10;
  solver.parameter_tolerance = 1e-12;
  solver.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(solver, problem, params.data(), &summary);
  if (!std::isfinite(summary.final_cost)) throw run_error("logistic regression diverged");

  const Eigen::Map<const Vector> w(params.data(), x_train.cols());
  const double b = params.back();
  BaselinePrediction out;
  for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
    const double p = ag::sigmoid(x_test.row(i).dot(w) + b);
    out.scores.push_back(p);
    out.labels.push_back(p >= options.threshold ? 1 : 0);
  }
  return out;
}

// -- random forest -----------------------------------------------------------------

struct TreeNode {
  Eigen::Index feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  int vote = 0;
};

class Cart {
 public:
  Cart(const Matrix& x, std::span<const int> y, Rng& rng) : x_(x), y_(y), rng_(rng) {
    mtry_ = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::sqrt(static_cast<double>(x.cols()))));
  }

  void fit(std::vector<std::size_t> rows) {
    nodes_.clear();
    grow(std::move(rows));
  }

  int predict(const Eigen::Ref<const ag::RowVector>& row) const {
    std::size_t n = 0;
    while (nodes_[n].feature >= 0) n = row[nodes_[n].feature] <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
    return nodes_[n].vote;
  }

 private:
  struct Split {
    Eigen::Index feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  std::size_t grow(std::vector<std::size_t> rows) {
    const std::size_t id = nodes_.size();
    nodes_.emplace_back();
    std::size_t pos = 0;
    for (std::size_t r : rows) pos += static_cast<std::size_t>(y_[r]);
    nodes_[id].vote = 2 * pos > rows.size() ? 1 : 0;
    if (pos == 0 || pos == rows.size()) return id;

    const Split best = find_split(rows, pos);
    if (best.feature < 0) return id;
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (x_(static_cast<Eigen::Index>(r), best.feature) <= best.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes_[id].feature = best.feature;
    nodes_[id].threshold = best.threshold;
    const std::size_t l = grow(std::move(left));
    nodes_[id].left = l;
    const std::size_t r = grow(std::move(right));
    nodes_[id].right = r;
    return id;
  }

  /// Gini over mtry randomly drawn features; keeps drawing past mtry while
  /// every feature so far was constant on this node.
  Split find_split(const std::vector<std::size_t>& rows, std::size_t pos) {
    const auto d = x_.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    const double n = static_cast<double>(rows.size());
    const double total_pos = static_cast<double>(pos);
    Split best;
    best.impurity = std::numeric_limits<double>::infinity();
    Eigen::Index informative = 0;
    std::vector<std::pair<double, int>> vals(rows.size());
    for (Eigen::Index k = 0; k < d && informative < mtry_; ++k) {
      const auto j = static_cast<std::size_t>(k) + static_cast<std::size_t>(rng_.below(static_cast<std::uint64_t>(d - k)));
      std::swap(order[static_cast<std::size_t>(k)], order[j]);
      const Eigen::Index f = order[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {x_(static_cast<Eigen::Index>(rows[i]), f), y_[rows[i]]};
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;
      ++informative;
      double left_pos = 0.0;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        left_pos += vals[i].second;
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        const double pl = left_pos / nl;
        const double pr = (total_pos - left_pos) / nr;
        const double impurity = nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr);
        if (impurity < best.impurity) {
          best.impurity = impurity;
          best.feature = f;
          best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
          if (best.threshold == vals[i + 1].first) best.threshold = vals[i].first;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const int> y_;
  Rng& rng_;
  Eigen::Index mtry_ = 1;
  std::vector<TreeNode> nodes_;
};

BaselinePrediction forest(const Matrix& x_train, std::span<const int> y_train, const Matrix& x_test,
                          const BaselineOptions& options) {
  if (options.trees < 1) throw config_error("tree_ensemble needs at least one tree");
  Rng rng(options.seed);
  const auto n = static_cast<std::size_t>(x_train.rows());
  std::vector<int> votes(static_cast<std::size_t>(x_test.rows()), 0);
  for (int t = 0; t < options.trees; ++t) {
    std::vector<std::size_t> sample(n);
    for (auto& s : sample) s = static_cast<std::size_t>(rng.below(n));
    Cart tree(x_train, y_train, rng);
    tree.fit(std::move(sample));
    for (Eigen::Index i = 0; i < x_test.rows(); ++i) votes[static_cast<std::size_t>(i)] += tree.predict(x_test.row(i));
  }
  BaselinePrediction out;
  for (int v : votes) {
    const double score = static_cast<double>(v) / options.trees;
    out.scores.push_back(score);
    out.labels.push_back(score >= options.threshold ? 1 : 0);
  }
  return out;
}

}  // namespace

BaselinePrediction fit_predict_baseline(Family kind, const Matrix& x_train, std::span<const int> y_train,
                                        const Matrix& x_test, const BaselineOptions& options) {
  check_inputs(x_train, y_train, x_test);
  switch (kind) {
    case Family::dummy_stratified:
      return dummy_stratified(y_train, x_test.rows(), options.seed);
    case Family::linear:
      require_both_classes(y_train, kind);
      return logistic(x_train, y_train, x_test, options);
    case Family::tree_ensemble:
      require_both_classes(y_train, kind);
      return forest(x_train, y_train, x_test, options);
    default:
      break;
  }
  throw config_error(to_string(kind) + " is not a classical baseline");
}

}  // namespace viralbench::models
