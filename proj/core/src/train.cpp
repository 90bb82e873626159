#include <cmath>
#include <numbers>

#include "dcc/errors.hpp"
#include "dcc/model.hpp"
#include "dcc/random.hpp"

namespace dcc {

namespace {

double scheduled_lr(const TrainHyper& h, int step) {
  if (h.warmup_steps > 0 && step < h.warmup_steps) {
    return h.lr * static_cast<double>(step + 1) / static_cast<double>(h.warmup_steps);
  }
  const int decay_steps = std::max(1, h.steps - h.warmup_steps);
  const double progress =
      std::min(1.0, static_cast<double>(step - h.warmup_steps) / static_cast<double>(decay_steps));
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return h.lr * (h.min_lr_ratio + (1.0 - h.min_lr_ratio) * cosine);
}

}  // namespace

TrainReport train(Transformer& model, std::span<const TrainingSequence> corpus,
                  const TrainHyper& hyper, const std::function<void(int, double)>& on_step) {
  if (corpus.empty()) throw ContractError("train: empty corpus");
  if (hyper.batch_size <= 0) throw ParameterError("train: batch_size must be positive");
  for (const auto& seq : corpus) {
    if (seq.tokens.size() > static_cast<std::size_t>(model.config().max_positions)) {
      throw CapacityError("train: sequence longer than max_positions");
    }
  }

  Rng rng(derive_seed(hyper.seed, "train-batches"));
  auto params = model.parameters();
  model.zero_grad();
  TrainReport report;
  report.loss_curve.reserve(static_cast<std::size_t>(hyper.steps));
  const double scale = 1.0 / hyper.batch_size;

  for (int step = 0; step < hyper.steps; ++step) {
    std::vector<TrainingSequence> batch;
    batch.reserve(static_cast<std::size_t>(hyper.batch_size));
    for (int b = 0; b < hyper.batch_size; ++b) {
      batch.push_back(corpus[static_cast<std::size_t>(rng.uniform_index(corpus.size()))]);
    }
    const double loss = model.loss_and_grad(std::span<const TrainingSequence>(batch), scale);

    if (hyper.grad_clip > 0) {
      double sq = 0;
      for (const auto* p : params)
        for (float g : p->grad.data()) sq += static_cast<double>(g) * g;
      const double norm = std::sqrt(sq);
      if (norm > hyper.grad_clip) {
        const auto f = static_cast<float>(hyper.grad_clip / norm);
        for (auto* p : params)
          for (float& g : p->grad.data()) g *= f;
      }
    }

    const AdamHyper adam{scheduled_lr(hyper, step), hyper.beta1, hyper.beta2, 1e-8};
    for (auto* p : params) adam_step(*p, adam);

    report.loss_curve.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return report;
}

}  // namespace dcc
