#pragma once

// Independent reference computations used as test oracles. They follow the
// textbook definitions directly (counting, pairwise comparison, brute-force
// search) and share no code with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] == 1) {
      (pred[i] == 1 ? c.tp : c.fn) += 1;
    } else {
      (pred[i] == 1 ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

/// Compares every (positive, negative) pair.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
  double correct = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truth[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truth[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) correct += 1.0;
      if (scores[i] == scores[j]) correct += 0.5;
    }
  }
  return pairs == 0.0 ? 0.0 : correct / pairs;
}

struct Metrics {
  double accuracy, balanced_accuracy, precision, recall, f1, auc;
};

inline double safe_ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline Metrics metrics(const std::vector<int>& pred, const std::vector<double>& scores,
                       const std::vector<int>& truth) {
  const Confusion c = confusion(pred, truth);
  Metrics m{};
  m.accuracy = safe_ratio(c.tp + c.tn, pred.size());
  m.precision = safe_ratio(c.tp, c.tp + c.fp);
  m.recall = safe_ratio(c.tp, c.tp + c.fn);
  const double tnr = safe_ratio(c.tn, c.tn + c.fp);
  m.balanced_accuracy = (m.recall + tnr) / 2.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.auc = pairwise_auc(scores, truth);
  return m;
}

/// Smallest sorted value whose rank k satisfies k / n >= p / 100, found by
/// scanning ranks.
inline double nearest_rank(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  for (std::size_t k = 1; k <= values.size(); ++k) {
    if (static_cast<double>(k) * 100.0 >= p * n - 1e-9) return values[k - 1];
  }
  return values.back();
}

inline std::vector<int> median_split(const std::vector<double>& totals) {
  std::vector<double> s = totals;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const double m = n % 2 ? s[n / 2] : (s[n / 2 - 1] + s[n / 2]) / 2.0;
  std::vector<int> out;
  for (double t : totals) out.push_back(t > m ? 1 : 0);
  return out;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

/// Central difference of f with respect to every entry of `param`; the entry
/// is restored afterwards.
inline Eigen::MatrixXd numeric_gradient(const std::function<double()>& f, Eigen::MatrixXd& param, double eps = 1e-5) {
  Eigen::MatrixXd g(param.rows(), param.cols());
  for (Eigen::Index c = 0; c < param.cols(); ++c) {
    for (Eigen::Index r = 0; r < param.rows(); ++r) {
      const double saved = param(r, c);
      param(r, c) = saved + eps;
      const double up = f();
      param(r, c) = saved - eps;
      const double down = f();
      param(r, c) = saved;
      g(r, c) = (up - down) / (2.0 * eps);
    }
  }
  return g;
}

inline double sample_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

}  // namespace oracle
