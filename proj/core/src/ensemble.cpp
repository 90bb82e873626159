#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "dcc/errors.hpp"
#include "dcc/random.hpp"
#include "dcc/sufficiency.hpp"

namespace dcc {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kFormat = "dcc-ensemble-1";

std::string fingerprint(const Tensor& x, std::span<const int> y) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  feed(x.raw(), x.size() * sizeof(float));
  for (int v : y) feed(&v, sizeof v);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json spec_to_json(const LearnerSpec& spec) {
  if (const auto* l = std::get_if<LogisticSpec>(&spec)) {
    return {{"kind", "logistic"}, {"l2", l->l2}, {"lr", l->lr}, {"epochs", l->epochs}};
  }
  const auto& t = std::get<TreeSpec>(spec);
  return {{"kind", "tree"}, {"max_depth", t.max_depth}, {"min_leaf", t.min_leaf}};
}

LearnerSpec spec_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "logistic") {
    return LogisticSpec{j.at("l2").get<double>(), j.at("lr").get<double>(),
                        j.at("epochs").get<int>()};
  }
  if (kind == "tree") return TreeSpec{j.at("max_depth").get<int>(), j.at("min_leaf").get<int>()};
  throw FormatError("unknown learner kind '" + kind + "'");
}

json model_to_json(const LearnerModel& model) {
  if (const auto* l = std::get_if<LogisticModel>(&model)) {
    return {{"mean", l->mean}, {"inv_std", l->inv_std}, {"weights", l->weights}, {"bias", l->bias}};
  }
  json nodes = json::array();
  for (const auto& n : std::get<TreeModel>(model).nodes) {
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
  }
  return {{"nodes", nodes}};
}

LearnerModel model_from_json(const LearnerSpec& spec, const json& j) {
  if (std::holds_alternative<LogisticSpec>(spec)) {
    LogisticModel m;
    m.mean = j.at("mean").get<std::vector<double>>();
    m.inv_std = j.at("inv_std").get<std::vector<double>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    if (m.mean.size() != m.weights.size() || m.inv_std.size() != m.weights.size()) {
      throw FormatError("logistic member has inconsistent widths");
    }
    return m;
  }
  TreeModel t;
  for (const auto& n : j.at("nodes")) {
    t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                       n.at(3).get<int>(), n.at(4).get<double>()});
  }
  const int count = static_cast<int>(t.nodes.size());
  if (count == 0) throw FormatError("tree member has no nodes");
  for (const auto& n : t.nodes) {
    if (n.feature >= 0 && (n.left <= 0 || n.left >= count || n.right <= 0 || n.right >= count)) {
      throw FormatError("tree member has an invalid child index");
    }
  }
  return t;
}

}  // namespace

double EnsembleModel::confidence(std::span<const float> features) const {
  const auto probs = member_probabilities(features);
  const double mean = std::accumulate(probs.begin(), probs.end(), 0.0) /
                      static_cast<double>(probs.size());
  return std::clamp(mean, 0.0, 1.0);
}

std::vector<double> EnsembleModel::member_probabilities(std::span<const float> features) const {
  if (members.empty()) throw ContractError("ensemble has no members");
  if (features.size() != width) {
    throw ShapeError("ensemble expects " + std::to_string(width) + " features, got " +
                     std::to_string(features.size()));
  }
  std::vector<double> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(predict_learner(m.model, features));
  return out;
}

EnsembleModel build_ensemble(const Tensor& x, std::span<const int> y,
                             std::span<const HeadTap> heads, const EnsembleOptions& options) {
  if (x.rows() != y.size()) throw ShapeError("build_ensemble: rows and labels differ");
  if (heads.empty()) throw ContractError("build_ensemble: no heads");
  if (options.select == 0 || options.select > options.pool_size) {
    throw ParameterError("ensemble select must be in [1, pool_size]");
  }
  const auto positives = std::count(y.begin(), y.end(), 1);
  if (positives == 0 || positives == static_cast<long>(y.size())) {
    throw DegenerateDataError("sufficiency training data holds a single class");
  }

  const auto specs = default_pool(options.pool_size);
  const auto folds = stratified_kfold(y, options.n_folds, options.seed);

  EnsembleModel model;
  model.heads.assign(heads.begin(), heads.end());
  model.width = x.cols();
  model.seed = options.seed;
  model.data_fingerprint = fingerprint(x, y);

  std::vector<double> scores;
  for (const auto& spec : specs) {
    double total = 0;
    for (int f = 0; f < options.n_folds; ++f) {
      std::vector<std::size_t> train_rows, test_rows;
      for (std::size_t i = 0; i < y.size(); ++i) {
        (folds[i] == f ? test_rows : train_rows).push_back(i);
      }
      const auto fitted = fit_learner(spec, x, y, train_rows);
      std::vector<double> s;
      std::vector<int> g;
      for (std::size_t r : test_rows) {
        s.push_back(predict_learner(fitted, x.row(r)));
        g.push_back(y[r]);
      }
      total += auc(s, g);
    }
    scores.push_back(total / options.n_folds);
    model.pool.push_back({learner_name(spec), scores.back(), false});
  }

  std::vector<std::size_t> order(specs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> all_rows(y.size());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  for (std::size_t i = 0; i < options.select; ++i) {
    const std::size_t idx = order[i];
    model.pool[idx].selected = true;
    model.members.push_back({specs[idx], fit_learner(specs[idx], x, y, all_rows), scores[idx]});
  }
  return model;
}

int decide(double confidence, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ParameterError("tau must be in [0, 1]");
  return confidence >= tau ? 1 : 0;
}

void save_ensemble(const EnsembleModel& model, const std::filesystem::path& path) {
  json heads = json::array();
  for (const auto& h : model.heads) heads.push_back({h.layer, h.head});
  json pool = json::array();
  for (const auto& p : model.pool) {
    pool.push_back({{"name", p.name}, {"cv_auc", p.cv_auc}, {"selected", p.selected}});
  }
  json members = json::array();
  for (const auto& m : model.members) {
    members.push_back(
        {{"spec", spec_to_json(m.spec)}, {"cv_auc", m.cv_auc}, {"model", model_to_json(m.model)}});
  }
  const json j = {{"format", kFormat},         {"heads", heads},
                  {"width", model.width},       {"seed", model.seed},
                  {"data_fingerprint", model.data_fingerprint},
                  {"pool", pool},               {"members", members}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

EnsembleModel load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    const auto j = json::parse(buf.str());
    if (j.at("format").get<std::string>() != kFormat) {
      throw FormatError(path.string() + ": unsupported ensemble format");
    }
    EnsembleModel m;
    for (const auto& h : j.at("heads")) m.heads.push_back({h.at(0).get<int>(), h.at(1).get<int>()});
    m.width = j.at("width").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.data_fingerprint = j.at("data_fingerprint").get<std::string>();
    for (const auto& p : j.at("pool")) {
      m.pool.push_back(
          {p.at("name").get<std::string>(), p.at("cv_auc").get<double>(), p.at("selected").get<bool>()});
    }
    for (const auto& e : j.at("members")) {
      auto spec = spec_from_json(e.at("spec"));
      auto fitted = model_from_json(spec, e.at("model"));
      if (const auto* l = std::get_if<LogisticModel>(&fitted); l && l->weights.size() != m.width) {
        throw FormatError("logistic member width differs from ensemble width");
      }
      m.members.push_back({std::move(spec), std::move(fitted), e.at("cv_auc").get<double>()});
    }
    if (m.members.empty()) throw FormatError("ensemble has no members");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace dcc
