#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dcc/errors.hpp"
#include "dcc/metrics.hpp"
#include "dcc/random.hpp"
#include "dcc/sufficiency.hpp"

namespace dcc {

namespace {

std::size_t tap_index(const ActivationSet& set, const HeadTap& h) {
  const auto it = std::find(set.taps.begin(), set.taps.end(), h);
  if (it == set.taps.end()) {
    throw ContractError("head L" + std::to_string(h.layer) + "H" + std::to_string(h.head) +
                        " was not collected");
  }
  return static_cast<std::size_t>(it - set.taps.begin());
}

double probe_f1(const ProbeParams& params, const Tensor& x, std::span<const int> y) {
  std::vector<int> pred(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) pred[r] = params.predict(x.row(r)) >= 0.5 ? 1 : 0;
  return f1(pred, y).f1;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out(Shape{rows.size(), x.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

ActivationSet collect_activations(const Transformer& model, const std::vector<TaskInstance>& tasks,
                                  const ChunkingSpec& chunking, std::span<const HeadTap> taps) {
  if (taps.empty()) throw ContractError("collect_activations: no taps");
  chunking.validate();
  ActivationSet set;
  set.taps.assign(taps.begin(), taps.end());
  for (const auto& task : tasks) {
    auto cache = model.make_cache();
    model.forward(query_header(task), cache, {}, LogitsMode::none);
    const auto plan = plan_chunks(task.context.size(), chunking, task.context);
    const auto labels = derive_labels(task, plan);
    const std::span<const int> ctx(task.context);
    for (std::size_t i = 1; i <= plan.num_chunks(); ++i) {
      const auto r = delta(plan, i);
      auto out = model.forward(ctx.subspan(r.begin, r.size()), cache, taps, LogitsMode::none);
      ActivationExample ex;
      ex.task_id = task.id;
      ex.chunk_index = i;
      ex.label = labels[i - 1];
      for (const auto& h : taps) ex.features.push_back(std::move(out.taps.at(h)));
      set.examples.push_back(std::move(ex));
    }
  }
  return set;
}

Tensor feature_matrix(const ActivationSet& set, std::span<const HeadTap> heads) {
  std::vector<std::size_t> idx;
  for (const auto& h : heads) idx.push_back(tap_index(set, h));
  std::size_t width = 0;
  if (!set.examples.empty()) {
    for (std::size_t i : idx) width += set.examples.front().features[i].size();
  }
  Tensor out(Shape{set.examples.size(), width});
  for (std::size_t r = 0; r < set.examples.size(); ++r) {
    auto dst = out.row(r).begin();
    for (std::size_t i : idx) {
      const auto& f = set.examples[r].features[i];
      dst = std::copy(f.begin(), f.end(), dst);
    }
  }
  return out;
}

std::vector<int> labels_of(const ActivationSet& set) {
  std::vector<int> out;
  out.reserve(set.examples.size());
  for (const auto& ex : set.examples) out.push_back(ex.label);
  return out;
}

double ProbeParams::predict(std::span<const float> x) const {
  if (x.size() != theta.size()) throw ShapeError("probe: feature width mismatch");
  double s = 0;
  for (std::size_t j = 0; j < theta.size(); ++j) s += theta[j] * x[j];
  return sigmoid(s);
}

ProbeLoss probe_loss(std::span<const double> theta, const Tensor& x, std::span<const int> y) {
  if (x.cols() != theta.size()) throw ShapeError("probe_loss: feature width mismatch");
  if (x.rows() != y.size()) throw ShapeError("probe_loss: rows and labels differ");
  if (x.rows() == 0) throw ContractError("probe_loss: no rows");
  const std::size_t d = theta.size();
  ProbeLoss out{0.0, std::vector<double>(d, 0.0)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += theta[j] * row[j];
    // -log sigmoid(s) for y = 1, -log sigmoid(-s) for y = 0, overflow-safe.
    const double z = y[r] == 1 ? s : -s;
    out.loss += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    const double err = sigmoid(s) - y[r];
    for (std::size_t j = 0; j < d; ++j) out.grad[j] += err * row[j];
  }
  const double n = static_cast<double>(x.rows());
  out.loss /= n;
  for (auto& g : out.grad) g /= n;
  return out;
}

ProbeResult train_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& val_x,
                        std::span<const int> val_y, const ProbeOptions& options) {
  if (train_x.rows() != train_y.size() || val_x.rows() != val_y.size()) {
    throw ShapeError("train_probe: rows and labels differ");
  }
  if (train_x.rows() == 0 || val_x.rows() == 0) throw ContractError("train_probe: empty split");
  const auto pos = std::count(train_y.begin(), train_y.end(), 1);
  if (pos == 0 || pos == static_cast<long>(train_y.size())) {
    throw DegenerateDataError("probe training split holds a single class");
  }

  const std::size_t d = train_x.cols();
  ProbeResult result;
  result.params.theta.assign(d, 0.0);
  result.initial_loss = probe_loss(result.params.theta, train_x, train_y).loss;

  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m(d, 0.0), v(d, 0.0);
  auto& theta = result.params.theta;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto g = probe_loss(theta, train_x, train_y).grad;
    const double c1 = 1.0 / (1.0 - std::pow(b1, epoch));
    const double c2 = 1.0 / (1.0 - std::pow(b2, epoch));
    for (std::size_t j = 0; j < d; ++j) {
      const double gj = g[j];
      m[j] = b1 * m[j] + (1 - b1) * gj;
      v[j] = b2 * v[j] + (1 - b2) * gj * gj;
      theta[j] -= options.lr * (m[j] * c1) / (std::sqrt(v[j] * c2) + eps);
    }
  }
  result.final_loss = probe_loss(theta, train_x, train_y).loss;
  result.train_f1 = probe_f1(result.params, train_x, train_y);
  result.validation_f1 = probe_f1(result.params, val_x, val_y);
  return result;
}

ProbeResult train_probe(const Tensor& features, std::span<const int> labels,
                        std::span<const std::string> groups, const ProbeOptions& options) {
  if (features.rows() != labels.size() || groups.size() != labels.size()) {
    throw ShapeError("train_probe: rows, labels and groups differ");
  }
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw ParameterError("train_fraction must be in (0, 1)");
  }
  std::vector<std::string> unique;
  std::set<std::string> seen;
  for (const auto& g : groups) {
    if (seen.insert(g).second) unique.push_back(g);
  }
  if (unique.size() < 2) throw ContractError("train_probe: need at least two groups");
  Rng rng(derive_seed(options.seed, "probe-split"));
  rng.shuffle(std::span<std::string>(unique));
  auto n_train = static_cast<std::size_t>(std::floor(options.train_fraction * unique.size()));
  n_train = std::clamp<std::size_t>(n_train, 1, unique.size() - 1);
  const std::set<std::string> train_groups(unique.begin(), unique.begin() + n_train);

  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    (train_groups.count(groups[i]) ? tr : va).push_back(i);
  }
  std::vector<int> ytr, yva;
  for (auto i : tr) ytr.push_back(labels[i]);
  for (auto i : va) yva.push_back(labels[i]);
  return train_probe(gather_rows(features, tr), ytr, gather_rows(features, va), yva, options);
}

std::vector<HeadScore> probe_heads(const ActivationSet& set, const ProbeOptions& options) {
  const auto labels = labels_of(set);
  std::vector<std::string> groups;
  for (const auto& ex : set.examples) groups.push_back(ex.task_id);
  std::vector<HeadScore> scores;
  for (const auto& h : set.taps) {
    const HeadTap one[] = {h};
    const auto x = feature_matrix(set, one);
    const auto r = train_probe(x, labels, groups, options);
    scores.push_back({h.layer, h.head, r.validation_f1});
  }
  return scores;
}

std::vector<HeadScore> probe_all_heads(const Transformer& model,
                                       const std::vector<TaskInstance>& tasks,
                                       const ChunkingSpec& chunking, const ProbeOptions& options) {
  const auto heads = all_heads(model.config());
  return probe_heads(collect_activations(model, tasks, chunking, heads), options);
}

std::vector<HeadTap> select_heads(std::vector<HeadScore> scores, std::size_t k) {
  if (k == 0 || k > scores.size()) throw ParameterError("select_heads: k out of range");
  std::stable_sort(scores.begin(), scores.end(), [](const HeadScore& a, const HeadScore& b) {
    if (a.validation_f1 != b.validation_f1) return a.validation_f1 > b.validation_f1;
    return HeadTap{a.layer, a.head} < HeadTap{b.layer, b.head};
  });
  std::vector<HeadTap> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({scores[i].layer, scores[i].head});
  return out;
}

void write_head_heatmap(const std::vector<HeadScore>& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "layer\thead\tvalidation_f1\n";
  char buf[64];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%d\t%d\t%.6f\n", s.layer, s.head, s.validation_f1);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<HeadScore> read_head_heatmap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "layer\thead\tvalidation_f1") {
    throw FormatError(path.string() + ": missing heatmap header");
  }
  std::vector<HeadScore> scores;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    HeadScore s;
    if (!(is >> s.layer >> s.head >> s.validation_f1)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    scores.push_back(s);
  }
  return scores;
}

}  // namespace dcc
