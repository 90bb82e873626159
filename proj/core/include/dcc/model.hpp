#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "dcc/tensor.hpp"
#include "dcc/vocab.hpp"

namespace dcc {

struct ModelConfig {
  int n_layers = 4;
  int n_heads = 8;
  int d_model = 128;
  int d_ff = 512;
  int vocab_size = 512;
  int max_positions = 2048;
  std::uint64_t seed = 0;

  int d_head() const noexcept { return d_model / n_heads; }
  /// Throws ParameterError for non-positive sizes or d_model % n_heads != 0.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Identifies one attention head.
struct HeadTap {
  int layer = 0;
  int head = 0;

  friend auto operator<=>(const HeadTap&, const HeadTap&) = default;
};

/// Every head of a model, in (layer, head) order.
std::vector<HeadTap> all_heads(const ModelConfig& cfg);

/// Per-layer keys and values of every processed position. Layout of each
/// buffer is [cached_len × n_heads × d_head]. Append-only within an episode.
template <typename T>
struct BasicKvCache {
  std::vector<std::vector<T>> keys;
  std::vector<std::vector<T>> values;
  std::size_t cached_len = 0;
  /// Token at position cached_len - 1 (PAD before the first call).
  int last_token = vocab::kPad;
  /// Running count of tokens pushed through forward() with this cache.
  std::size_t tokens_forwarded = 0;
};

using KvCache = BasicKvCache<float>;

enum class LogitsMode { all, last, none };

template <typename T>
struct BasicForwardOutput {
  BasicTensor<T> logits;  // [new_len × V], or [1 × V] / empty per LogitsMode
  /// Attention output of each requested head (before the output projection)
  /// at the last new position; length d_head.
  std::map<HeadTap, std::vector<T>> taps;
};

using ForwardOutput = BasicForwardOutput<float>;

/// One training sequence: the loss covers predictions of tokens[answer_begin..).
struct TrainingSequence {
  std::vector<int> tokens;
  std::size_t answer_begin = 0;
};

template <typename T>
struct LayerParams {
  BasicParameter<T> ln1_gain, ln1_bias;
  BasicParameter<T> w_q, b_q, w_k, b_k, w_v, b_v;
  BasicParameter<T> w_o, b_o;
  BasicParameter<T> ln2_gain, ln2_bias;
  BasicParameter<T> w_fc1, b_fc1, w_fc2, b_fc2;
};

/// Decoder-only pre-norm transformer with learned absolute positions, a GELU
/// feed-forward and an output projection tied to the token embedding. The
/// input at position t also adds a learned embedding of token t-1 (token
/// shift), which lets a single attention layer match keys to values.
/// Instantiated for float (inference/training) and double (gradient checks).
template <typename T>
class BasicTransformer {
 public:
  explicit BasicTransformer(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }

  BasicKvCache<T> make_cache() const;

  /// Processes `tokens` after whatever the cache already holds, extends the
  /// cache, and returns logits for the new positions plus the requested taps.
  /// Throws ContractError for empty input and CapacityError on overflow.
  BasicForwardOutput<T> forward(std::span<const int> tokens, BasicKvCache<T>& cache,
                                std::span<const HeadTap> taps = {},
                                LogitsMode mode = LogitsMode::all) const;

  /// Greedy decoding: forwards `prompt_tail`, then emits argmax tokens until
  /// `terminator` (included in the output) or `max_new` tokens.
  std::vector<int> generate(BasicKvCache<T>& cache, std::span<const int> prompt_tail, int max_new,
                            int terminator = vocab::kEnd) const;

  /// Mean cross-entropy of one sequence's answer tokens; when `grad_scale`
  /// is nonzero, adds grad_scale * dLoss/dParam into every Parameter::grad.
  double loss_and_grad(const TrainingSequence& seq, double grad_scale);
  /// Batched form: returns the mean over sequences of their answer loss and
  /// adds grad_scale * (sum over sequences of dLoss/dParam).
  double loss_and_grad(std::span<const TrainingSequence> batch, double grad_scale);

  /// Parameters in declaration order (the checkpoint order).
  std::vector<BasicParameter<T>*> parameters();
  std::vector<const BasicParameter<T>*> parameters() const;
  std::size_t parameter_count() const;

  void zero_grad();

 private:
  ModelConfig cfg_;
  BasicParameter<T> tok_emb_;
  BasicParameter<T> pos_emb_;
  BasicParameter<T> prev_emb_;  // embedding of the preceding token
  std::vector<LayerParams<T>> layers_;
  BasicParameter<T> lnf_gain_, lnf_bias_;
  BasicParameter<T> b_head_;  // output weights are tied to tok_emb_
};

using Transformer = BasicTransformer<float>;

struct TrainHyper {
  int steps = 5000;
  int batch_size = 16;
  double lr = 1e-3;
  int warmup_steps = 100;
  /// Final learning rate as a fraction of lr (cosine decay).
  double min_lr_ratio = 0.1;
  double grad_clip = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> loss_curve;  // mean batch loss, one entry per step
};

/// Minimizes answer-token cross entropy over `corpus` with Adam. Batches are
/// drawn with the hyper.seed stream; gradient accumulation order is fixed.
/// `on_step(step, loss)` is called after every step when set.
TrainReport train(Transformer& model, std::span<const TrainingSequence> corpus,
                  const TrainHyper& hyper,
                  const std::function<void(int, double)>& on_step = {});

/// Writes "DCCM1", a length-prefixed UTF-8 metadata block, then every
/// parameter as little-endian float32 in declaration order.
void save_checkpoint(const Transformer& model, const std::filesystem::path& path);

/// Throws FormatError on a bad magic/version and IoError on truncation.
Transformer load_checkpoint(const std::filesystem::path& path);

/// Index of the largest entry (lowest index on ties).
std::size_t argmax(std::span<const float> row);

}  // namespace dcc
