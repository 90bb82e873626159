#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dcc/chunking.hpp"
#include "dcc/model.hpp"
#include "dcc/tasks.hpp"

namespace dcc {

// ---------------------------------------------------------------------------
// Activation collection

/// Activations of one cumulative context C_i, tapped at its final token.
struct ActivationExample {
  std::string task_id;
  std::size_t chunk_index = 0;  // 1-based i
  int label = 0;
  /// One vector of d_head floats per tap, in ActivationSet::taps order.
  std::vector<std::vector<float>> features;
};

struct ActivationSet {
  std::vector<HeadTap> taps;
  std::vector<ActivationExample> examples;
};

/// For each task: forward the query header, then every chunk delta with the
/// cache reused, tapping `taps` at the end of each C_i. Labels come from
/// derive_labels. Throws ContractError for an empty tap set.
ActivationSet collect_activations(const Transformer& model, const std::vector<TaskInstance>& tasks,
                                  const ChunkingSpec& chunking, std::span<const HeadTap> taps);

/// Rows = examples, columns = the concatenated activations of `heads` (each
/// must be present in the set).
Tensor feature_matrix(const ActivationSet& set, std::span<const HeadTap> heads);
std::vector<int> labels_of(const ActivationSet& set);

// ---------------------------------------------------------------------------
// Linear probes: p(x) = sigmoid(<theta, x>), no bias term

struct ProbeParams {
  std::vector<double> theta;

  double predict(std::span<const float> x) const;
};

struct ProbeLoss {
  double loss = 0;
  std::vector<double> grad;
};

/// Mean logistic loss of sigmoid(<theta, x_r>) against y_r, and its gradient
/// with respect to theta.
ProbeLoss probe_loss(std::span<const double> theta, const Tensor& x, std::span<const int> y);

struct ProbeOptions {
  int epochs = 300;
  double lr = 0.01;
  /// Share of tasks (not examples) used for training; the rest validates.
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  ProbeParams params;
  double initial_loss = 0;
  double final_loss = 0;
  double train_f1 = 0;
  double validation_f1 = 0;
};

/// Full-batch Adam on the mean logistic loss from theta = 0, on rows of
/// `features`. Rows are split by `groups` (task ids) into train/validation
/// with train_fraction. Throws DegenerateDataError when the training split
/// holds a single class.
ProbeResult train_probe(const Tensor& features, std::span<const int> labels,
                        std::span<const std::string> groups, const ProbeOptions& options);

/// Same, with an explicit train/validation partition.
ProbeResult train_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& val_x,
                        std::span<const int> val_y, const ProbeOptions& options);

struct HeadScore {
  int layer = 0;
  int head = 0;
  double validation_f1 = 0;
};

/// One probe per head over the examples in `set` (which must tap every head
/// to be scored).
std::vector<HeadScore> probe_heads(const ActivationSet& set, const ProbeOptions& options);

/// collect_activations over all L*H heads followed by probe_heads.
std::vector<HeadScore> probe_all_heads(const Transformer& model,
                                       const std::vector<TaskInstance>& tasks,
                                       const ChunkingSpec& chunking, const ProbeOptions& options);

/// Top-k by F1 descending; ties go to the lower (layer, head).
std::vector<HeadTap> select_heads(std::vector<HeadScore> scores, std::size_t k);

/// Text table "layer<TAB>head<TAB>validation_f1".
void write_head_heatmap(const std::vector<HeadScore>& scores, const std::filesystem::path& path);
std::vector<HeadScore> read_head_heatmap(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cross-validation and ranking metrics

/// Fold index per example. Within each class, folds differ in size by at
/// most one. Throws ParameterError when a class has fewer than n_folds members.
std::vector<int> stratified_kfold(std::span<const int> labels, int n_folds, std::uint64_t seed);

/// Rank-sum AUC with ties counted one half. Throws UndefinedMetricError
/// unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Base learners

struct LogisticSpec {
  double l2 = 1e-3;
  double lr = 0.05;
  int epochs = 300;
};

struct TreeSpec {
  int max_depth = 3;
  int min_leaf = 5;
};

using LearnerSpec = std::variant<LogisticSpec, TreeSpec>;

std::string learner_name(const LearnerSpec& spec);

/// Logistic regression on standardized features, with bias and L2 penalty.
struct LogisticModel {
  std::vector<double> mean;
  std::vector<double> inv_std;
  std::vector<double> weights;
  double bias = 0;

  double predict(std::span<const float> x) const;
};

/// CART classifier with Gini splits; leaves hold the positive fraction.
struct TreeModel {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0;
    int left = -1;
    int right = -1;
    double value = 0;
  };
  std::vector<Node> nodes;

  double predict(std::span<const float> x) const;
};

using LearnerModel = std::variant<LogisticModel, TreeModel>;

LearnerModel fit_learner(const LearnerSpec& spec, const Tensor& x, std::span<const int> y,
                         std::span<const std::size_t> rows);
double predict_learner(const LearnerModel& model, std::span<const float> x);

/// The first `pool_size` entries of the alternating logistic/tree pool:
/// logistic l2 in {1e-4, 1e-3, 1e-2, 1e-1, ...}, tree depth in {2, 3, 4, 5, ...}.
std::vector<LearnerSpec> default_pool(std::size_t pool_size);

// ---------------------------------------------------------------------------
// Ensemble

struct EnsembleOptions {
  std::size_t pool_size = 8;
  std::size_t select = 4;
  int n_folds = 5;
  std::uint64_t seed = 0;
};

struct PoolEntry {
  std::string name;
  double cv_auc = 0;
  bool selected = false;
};

struct EnsembleMember {
  LearnerSpec spec;
  LearnerModel model;
  double cv_auc = 0;
};

struct EnsembleModel {
  std::vector<HeadTap> heads;
  std::vector<EnsembleMember> members;
  std::vector<PoolEntry> pool;
  std::size_t width = 0;  // feature vector length
  std::string data_fingerprint;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return members.size(); }
  std::size_t feature_width() const noexcept { return width; }
  /// Arithmetic mean of member probabilities; always in [0, 1].
  double confidence(std::span<const float> features) const;
  std::vector<double> member_probabilities(std::span<const float> features) const;
};

/// Scores every pool learner by mean stratified k-fold AUC on (x, y), keeps
/// the `select` best (ties to the earlier pool entry) and refits them on all
/// rows.
EnsembleModel build_ensemble(const Tensor& x, std::span<const int> y,
                             std::span<const HeadTap> heads, const EnsembleOptions& options);

/// S(C_i) = 1 iff confidence >= tau. Throws ParameterError for tau outside [0, 1].
int decide(double confidence, double tau);

void save_ensemble(const EnsembleModel& model, const std::filesystem::path& path);
EnsembleModel load_ensemble(const std::filesystem::path& path);

}  // namespace dcc
