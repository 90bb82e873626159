#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dcc/errors.hpp"
#include "dcc/random.hpp"
#include "dcc/sufficiency.hpp"

namespace dcc {

namespace {

void check_binary(std::span<const int> labels) {
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("labels must be 0 or 1");
  }
}

// Average 1-based ranks, ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

double gini(double pos, double n) {
  if (n <= 0) return 0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

struct TreeBuilder {
  const Tensor& x;
  std::span<const int> y;
  TreeSpec spec;
  std::vector<TreeModel::Node> nodes;

  int build(std::vector<std::size_t> rows, int depth) {
    double pos = 0;
    for (std::size_t r : rows) pos += y[r];
    const double n = static_cast<double>(rows.size());
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[id].value = n > 0 ? pos / n : 0.5;
    if (depth >= spec.max_depth || pos == 0 || pos == n ||
        rows.size() < 2 * static_cast<std::size_t>(spec.min_leaf)) {
      return id;
    }

    const std::size_t d = x.cols();
    const double parent = gini(pos, n);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0;
    std::vector<std::pair<float, int>> column(rows.size());
    for (std::size_t f = 0; f < d; ++f) {
      for (std::size_t i = 0; i < rows.size(); ++i) column[i] = {x(rows[i], f), y[rows[i]]};
      std::sort(column.begin(), column.end());
      double left_pos = 0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left_pos += column[i].second;
        if (column[i].first == column[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        if (nl < spec.min_leaf || nr < spec.min_leaf) continue;
        const double impurity =
            (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
        const double gain = parent - impurity;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (static_cast<double>(column[i].first) +
                                  static_cast<double>(column[i + 1].first));
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      (x(r, best_feature) <= best_threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(std::move(left), depth + 1);
    const int rr = build(std::move(right), depth + 1);
    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    nodes[id].left = l;
    nodes[id].right = rr;
    return id;
  }
};

LogisticModel fit_logistic(const LogisticSpec& spec, const Tensor& x, std::span<const int> y,
                           std::span<const std::size_t> rows) {
  const std::size_t d = x.cols();
  const double n = static_cast<double>(rows.size());
  LogisticModel m;
  m.mean.assign(d, 0.0);
  m.inv_std.assign(d, 1.0);
  m.weights.assign(d, 0.0);
  for (std::size_t r : rows) {
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += x(r, j);
  }
  for (auto& v : m.mean) v /= n;
  std::vector<double> var(d, 0.0);
  for (std::size_t r : rows) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(r, j) - m.mean[j];
      var[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / n);
    m.inv_std[j] = sd > 1e-12 ? 1.0 / sd : 0.0;
  }

  // Standardized design matrix, built once.
  std::vector<double> z(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      z[i * d + j] = (x(rows[i], j) - m.mean[j]) * m.inv_std[j];
    }
  }

  // Full-batch Adam on mean log loss + l2/2 |w|^2.
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> mw(d, 0.0), vw(d, 0.0), g(d);
  double mb = 0, vb = 0;
  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    std::fill(g.begin(), g.end(), 0.0);
    double gb = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double* zi = &z[i * d];
      double s = m.bias;
      for (std::size_t j = 0; j < d; ++j) s += m.weights[j] * zi[j];
      const double err = sigmoid(s) - y[rows[i]];
      for (std::size_t j = 0; j < d; ++j) g[j] += err * zi[j];
      gb += err;
    }
    const double c1 = 1.0 / (1.0 - std::pow(b1, epoch));
    const double c2 = 1.0 / (1.0 - std::pow(b2, epoch));
    for (std::size_t j = 0; j < d; ++j) {
      const double gj = g[j] / n + spec.l2 * m.weights[j];
      mw[j] = b1 * mw[j] + (1 - b1) * gj;
      vw[j] = b2 * vw[j] + (1 - b2) * gj * gj;
      m.weights[j] -= spec.lr * (mw[j] * c1) / (std::sqrt(vw[j] * c2) + eps);
    }
    gb /= n;
    mb = b1 * mb + (1 - b1) * gb;
    vb = b2 * vb + (1 - b2) * gb * gb;
    m.bias -= spec.lr * (mb * c1) / (std::sqrt(vb * c2) + eps);
  }
  return m;
}

}  // namespace

std::vector<int> stratified_kfold(std::span<const int> labels, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ParameterError("n_folds must be >= 2");
  check_binary(labels);
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& members : by_class) {
    if (members.size() < static_cast<std::size_t>(n_folds)) {
      throw ParameterError("stratified_kfold: a class has fewer members than folds");
    }
  }
  Rng rng(derive_seed(seed, "kfold"));
  std::vector<int> fold(labels.size(), 0);
  const std::size_t k = static_cast<std::size_t>(n_folds);
  std::size_t offset = 0;
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t i = 0; i < members.size(); ++i) {
      fold[members[i]] = static_cast<int>((offset + i) % k);
    }
    // Start the next class where this one stopped so small folds even out.
    offset = members.size() % k;
  }
  return fold;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("auc: size mismatch");
  check_binary(labels);
  double n1 = 0;
  for (int y : labels) n1 += y;
  const double n0 = static_cast<double>(labels.size()) - n1;
  if (n1 == 0 || n0 == 0) throw UndefinedMetricError("auc needs both classes");
  const auto ranks = average_ranks(scores);
  double rank_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  return (rank_sum - n1 * (n1 + 1) / 2) / (n1 * n0);
}

std::string learner_name(const LearnerSpec& spec) {
  std::ostringstream os;
  if (const auto* l = std::get_if<LogisticSpec>(&spec)) {
    os << "logistic(l2=" << l->l2 << ")";
  } else {
    const auto& t = std::get<TreeSpec>(spec);
    os << "tree(depth=" << t.max_depth << ")";
  }
  return os.str();
}

double LogisticModel::predict(std::span<const float> x) const {
  if (x.size() != weights.size()) throw ShapeError("logistic: feature width mismatch");
  double s = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    s += weights[j] * (x[j] - mean[j]) * inv_std[j];
  }
  return sigmoid(s);
}

double TreeModel::predict(std::span<const float> x) const {
  if (nodes.empty()) throw ContractError("tree has no nodes");
  int i = 0;
  while (nodes[i].feature >= 0) {
    const auto f = static_cast<std::size_t>(nodes[i].feature);
    if (f >= x.size()) throw ShapeError("tree: feature index out of range");
    i = x[f] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  }
  return nodes[i].value;
}

LearnerModel fit_learner(const LearnerSpec& spec, const Tensor& x, std::span<const int> y,
                         std::span<const std::size_t> rows) {
  if (x.rows() != y.size()) throw ShapeError("fit_learner: rows and labels differ");
  if (rows.empty()) throw ContractError("fit_learner: no rows");
  check_binary(y);
  if (const auto* l = std::get_if<LogisticSpec>(&spec)) return fit_logistic(*l, x, y, rows);
  TreeBuilder builder{x, y, std::get<TreeSpec>(spec), {}};
  builder.build(std::vector<std::size_t>(rows.begin(), rows.end()), 0);
  return TreeModel{std::move(builder.nodes)};
}

double predict_learner(const LearnerModel& model, std::span<const float> x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

std::vector<LearnerSpec> default_pool(std::size_t pool_size) {
  std::vector<LearnerSpec> pool;
  double l2 = 1e-4;
  int depth = 2;
  for (std::size_t i = 0; i < pool_size; ++i) {
    if (i % 2 == 0) {
      pool.emplace_back(LogisticSpec{l2, 0.05, 300});
      l2 *= 10;
    } else {
      pool.emplace_back(TreeSpec{depth, 5});
      ++depth;
    }
  }
  return pool;
}

}  // namespace dcc
