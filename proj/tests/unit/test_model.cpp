#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "dcc/errors.hpp"
#include "dcc/model.hpp"
#include "dcc/sufficiency.hpp"
#include "gradcheck.hpp"

using namespace dcc;
using namespace dcc::testing;

namespace {

ModelConfig small_config(std::uint64_t seed = 3) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.vocab_size = 40;
  cfg.max_positions = 64;
  cfg.seed = seed;
  return cfg;
}

std::vector<int> random_tokens(std::size_t n, int vocab, Rng& rng) {
  std::vector<int> t(n);
  for (auto& v : t) v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(vocab)));
  return t;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dcc_unit_" + name);
}

}  // namespace

TEST_CASE("parameter count matches the architecture") {
  const auto cfg = small_config();
  const Transformer m(cfg);
  const std::size_t d = 8, ff = 16, v = 40, p = 64;
  const std::size_t per_layer = 2 * d + 4 * (d * d + d) + 2 * d + d * ff + ff + ff * d + d;
  CHECK(m.parameter_count() == v * d + p * d + v * d + 2 * per_layer + 2 * d + v);
}

TEST_CASE("gradcheck: transformer answer loss") {
  for (std::uint64_t seed : {3u, 8u}) {
    const auto errors = check_transformer(seed);
    for (std::size_t i = 0; i < errors.size(); ++i) {
      INFO("parameter " << i);
      CHECK(errors[i] < kTol);
    }
  }
}

TEST_CASE("gradcheck: probe loss") {
  Rng rng(6);
  for (std::size_t n : {3u, 8u, 20u})
    for (std::size_t d : {1u, 4u, 9u}) CHECK(check_probe_loss(rng, n, d) < kTol);
  // theta = 0 predicts 0.5 everywhere.
  Tensor x({2, 3});
  const std::vector<double> zero(3, 0.0);
  const std::vector<int> y{0, 1};
  CHECK(probe_loss(zero, x, y).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("forward bookkeeping and errors") {
  const auto cfg = small_config();
  const Transformer m(cfg);
  auto cache = m.make_cache();
  const std::vector<int> one{1};
  m.forward(one, cache);
  CHECK(cache.cached_len == 1);

  const auto heads = all_heads(cfg);
  const std::vector<int> more{5, 6, 7};
  const auto out = m.forward(more, cache, heads);
  CHECK(out.taps.size() == 4);
  for (const auto& [tap, act] : out.taps) CHECK(act.size() == static_cast<std::size_t>(cfg.d_head()));
  CHECK(out.logits.rows() == 3);
  CHECK(out.logits.cols() == 40);

  CHECK_THROWS_AS(m.forward(std::vector<int>{}, cache), ContractError);
  auto full = m.make_cache();
  CHECK_THROWS_AS(m.forward(std::vector<int>(65, 1), full), CapacityError);
}

TEST_CASE("chunked forwarding equals a single pass") {
  Rng rng(7);
  const auto cfg = small_config(9);
  const Transformer m(cfg);
  const auto heads = all_heads(cfg);
  for (int trial = 0; trial < 10; ++trial) {
    const auto tokens = random_tokens(1 + rng.uniform_index(60), 40, rng);
    auto single = m.make_cache();
    const auto ref = m.forward(tokens, single, heads, LogitsMode::last);

    auto cache = m.make_cache();
    BasicForwardOutput<float> out;
    std::size_t pos = 0;
    while (pos < tokens.size()) {
      const std::size_t len = 1 + rng.uniform_index(std::min<std::size_t>(9, tokens.size() - pos));
      out = m.forward(std::span<const int>(tokens).subspan(pos, len), cache, heads, LogitsMode::last);
      pos += len;
    }
    CHECK(cache.tokens_forwarded == tokens.size());
    double worst = 0;
    for (std::size_t i = 0; i < ref.logits.size(); ++i)
      worst = std::max(worst, double(std::abs(ref.logits[i] - out.logits[i])));
    for (const auto& h : heads)
      for (std::size_t i = 0; i < ref.taps.at(h).size(); ++i)
        worst = std::max(worst, double(std::abs(ref.taps.at(h)[i] - out.taps.at(h)[i])));
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("logits are causal") {
  Rng rng(8);
  const Transformer m(small_config());
  auto tokens = random_tokens(12, 40, rng);
  auto c1 = m.make_cache();
  const auto a = m.forward(tokens, c1);
  tokens[9] = (tokens[9] + 1) % 40;
  tokens[11] = (tokens[11] + 7) % 40;
  auto c2 = m.make_cache();
  const auto b = m.forward(tokens, c2);
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 40; ++c) CHECK(a.logits(r, c) == b.logits(r, c));
}

TEST_CASE("greedy generation") {
  const Transformer m(small_config());
  const std::vector<int> prompt{1, 3, 9, 2};
  auto c1 = m.make_cache();
  auto c2 = m.make_cache();
  CHECK(m.generate(c1, prompt, 5) == m.generate(c2, prompt, 5));
  auto c3 = m.make_cache();
  CHECK(m.generate(c3, prompt, 0).empty());
  auto c4 = m.make_cache();
  CHECK(m.generate(c4, prompt, 5).size() <= 5);
}

TEST_CASE("checkpoint round trip and errors") {
  const auto cfg = small_config(11);
  const Transformer m(cfg);
  const auto path = temp_path("ckpt.bin");
  save_checkpoint(m, path);
  const auto size = std::filesystem::file_size(path);
  CHECK(size >= 4 * m.parameter_count());
  CHECK(size < 4 * m.parameter_count() + 4096);

  const auto loaded = load_checkpoint(path);
  CHECK(loaded.config() == cfg);
  const std::vector<int> tokens{1, 3, 9, 2, 11, 12, 2};
  auto a = m.make_cache();
  auto b = loaded.make_cache();
  CHECK(m.forward(tokens, a).logits == loaded.forward(tokens, b).logits);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto bad = temp_path("ckpt_bad.bin");
  {
    std::ofstream out(bad, std::ios::binary);
    out << "XXXX" << bytes.substr(4);
  }
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  {
    std::ofstream out(bad, std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(bad), IoError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist.bin")), IoError);
  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}

TEST_CASE("training lowers the loss on a copy task") {
  ModelConfig cfg = small_config(2);
  cfg.d_model = 16;
  cfg.d_ff = 32;
  Transformer m(cfg);
  std::vector<TrainingSequence> corpus;
  Rng rng(3);
  for (int i = 0; i < 64; ++i) {
    const int t = 8 + static_cast<int>(rng.uniform_index(8));
    corpus.push_back({{1, t, 4, t, 5}, 3});
  }
  TrainHyper h;
  h.steps = 150;
  h.batch_size = 8;
  h.lr = 3e-3;
  h.warmup_steps = 10;
  const auto report = train(m, corpus, h);
  REQUIRE(report.loss_curve.size() == 150);
  CHECK(report.loss_curve.back() < 0.5 * report.loss_curve.front());

  Transformer again(cfg);
  CHECK(train(again, corpus, h).loss_curve == report.loss_curve);
}
