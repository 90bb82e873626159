#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dcc {

enum class ChunkStrategy { percent, fixed, boundary };

/// How a context is cut into chunks. `value` is the fraction p in (0, 1] for
/// percent, the chunk size in tokens for fixed, and the separator token id
/// for boundary.
struct ChunkingSpec {
  ChunkStrategy strategy = ChunkStrategy::percent;
  double value = 0.10;

  static ChunkingSpec percent(double p) { return {ChunkStrategy::percent, p}; }
  static ChunkingSpec fixed(std::size_t tokens) {
    return {ChunkStrategy::fixed, static_cast<double>(tokens)};
  }
  static ChunkingSpec boundary(int separator) {
    return {ChunkStrategy::boundary, static_cast<double>(separator)};
  }

  /// Throws ParameterError when `value` is outside the strategy's range.
  void validate() const;
  /// "percent", "fixed" or "boundary".
  std::string strategy_name() const;
  /// Human label, e.g. "10%", "fixed-32", "boundary".
  std::string label() const;

  friend bool operator==(const ChunkingSpec&, const ChunkingSpec&) = default;
};

ChunkStrategy parse_strategy(const std::string& name);

/// Strictly increasing chunk end offsets; the last equals the context length.
struct ChunkPlan {
  std::vector<std::size_t> boundaries;

  std::size_t num_chunks() const noexcept { return boundaries.size(); }
  std::size_t length() const noexcept { return boundaries.empty() ? 0 : boundaries.back(); }
};

struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

/// C_i: the first i chunks (1-based i).
struct CumulativeContext {
  const ChunkPlan* plan = nullptr;
  std::size_t index = 0;
  TokenRange range;
};

/// Percent(p): ceil(1/p) chunks of round(p*len) tokens (half to even, clamped
/// so the last chunk stays non-empty) with the remainder absorbed by the last
/// chunk; a context shorter than ceil(1/p) gets one chunk per token.
/// FixedTokens(t): chunks of t tokens, the last may be short.
/// Boundary(sep): a chunk ends after every separator; a trailing remainder
/// forms the final chunk. Needs the token stream.
ChunkPlan plan_chunks(std::size_t context_len, const ChunkingSpec& spec,
                      std::span<const int> context = {});

/// Throws ContractError unless 1 <= i <= m.
CumulativeContext cumulative(const ChunkPlan& plan, std::size_t i);

/// Tokens added at step i: C_i minus C_{i-1}.
TokenRange delta(const ChunkPlan& plan, std::size_t i);

/// Index (0-based) of the chunk that contains token `pos`.
std::size_t chunk_of(const ChunkPlan& plan, std::size_t pos);

}  // namespace dcc
