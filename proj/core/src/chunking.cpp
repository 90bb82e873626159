#include "dcc/chunking.hpp"

#include <algorithm>
#include <cmath>

#include "dcc/errors.hpp"

namespace dcc {

void ChunkingSpec::validate() const {
  switch (strategy) {
    case ChunkStrategy::percent:
      if (!(value > 0.0 && value <= 1.0)) {
        throw ParameterError("percent chunking: p must lie in (0, 1], got " +
                             std::to_string(value));
      }
      break;
    case ChunkStrategy::fixed:
      if (!(value >= 1.0) || value != std::floor(value)) {
        throw ParameterError("fixed chunking: token count must be an integer >= 1, got " +
                             std::to_string(value));
      }
      break;
    case ChunkStrategy::boundary:
      if (!(value >= 0.0) || value != std::floor(value)) {
        throw ParameterError("boundary chunking: separator must be a token id, got " +
                             std::to_string(value));
      }
      break;
  }
}

std::string ChunkingSpec::strategy_name() const {
  switch (strategy) {
    case ChunkStrategy::percent: return "percent";
    case ChunkStrategy::fixed: return "fixed";
    case ChunkStrategy::boundary: return "boundary";
  }
  return "percent";
}

std::string ChunkingSpec::label() const {
  switch (strategy) {
    case ChunkStrategy::percent: {
      const double pct = value * 100.0;
      if (pct == std::floor(pct)) return std::to_string(static_cast<long long>(pct)) + "%";
      return std::to_string(pct) + "%";
    }
    case ChunkStrategy::fixed: return "fixed-" + std::to_string(static_cast<long long>(value));
    case ChunkStrategy::boundary: return "boundary";
  }
  return "";
}

ChunkStrategy parse_strategy(const std::string& name) {
  if (name == "percent") return ChunkStrategy::percent;
  if (name == "fixed") return ChunkStrategy::fixed;
  if (name == "boundary") return ChunkStrategy::boundary;
  throw ParameterError("unknown chunking strategy '" + name + "' (percent|fixed|boundary)");
}

ChunkPlan plan_chunks(std::size_t context_len, const ChunkingSpec& spec,
                      std::span<const int> context) {
  spec.validate();
  if (context_len == 0) throw ContractError("plan_chunks: empty context");
  ChunkPlan plan;
  switch (spec.strategy) {
    case ChunkStrategy::percent: {
      // 1e-9 keeps 1/0.1 from landing on 10.000000000000002.
      const auto m = static_cast<std::size_t>(std::ceil(1.0 / spec.value - 1e-9));
      if (context_len < m) {
        for (std::size_t i = 1; i <= context_len; ++i) plan.boundaries.push_back(i);
        break;
      }
      auto size = static_cast<std::size_t>(std::nearbyint(spec.value * static_cast<double>(context_len)));
      if (m > 1) size = std::min(size, (context_len - 1) / (m - 1));
      size = std::max<std::size_t>(size, 1);
      for (std::size_t i = 1; i < m; ++i) plan.boundaries.push_back(i * size);
      plan.boundaries.push_back(context_len);
      break;
    }
    case ChunkStrategy::fixed: {
      const auto t = static_cast<std::size_t>(spec.value);
      for (std::size_t end = t; end < context_len; end += t) plan.boundaries.push_back(end);
      plan.boundaries.push_back(context_len);
      break;
    }
    case ChunkStrategy::boundary: {
      if (context.size() != context_len) {
        throw ContractError("plan_chunks: boundary strategy needs the full token stream");
      }
      const int sep = static_cast<int>(spec.value);
      for (std::size_t i = 0; i < context_len; ++i) {
        if (context[i] == sep) plan.boundaries.push_back(i + 1);
      }
      if (plan.boundaries.empty() || plan.boundaries.back() != context_len) {
        plan.boundaries.push_back(context_len);
      }
      break;
    }
  }
  return plan;
}

CumulativeContext cumulative(const ChunkPlan& plan, std::size_t i) {
  if (i < 1 || i > plan.num_chunks()) {
    throw ContractError("cumulative: index " + std::to_string(i) + " outside [1, " +
                        std::to_string(plan.num_chunks()) + "]");
  }
  return {&plan, i, {0, plan.boundaries[i - 1]}};
}

TokenRange delta(const ChunkPlan& plan, std::size_t i) {
  if (i < 1 || i > plan.num_chunks()) {
    throw ContractError("delta: index " + std::to_string(i) + " outside [1, " +
                        std::to_string(plan.num_chunks()) + "]");
  }
  return {i == 1 ? 0 : plan.boundaries[i - 2], plan.boundaries[i - 1]};
}

std::size_t chunk_of(const ChunkPlan& plan, std::size_t pos) {
  const auto it = std::upper_bound(plan.boundaries.begin(), plan.boundaries.end(), pos);
  if (it == plan.boundaries.end()) {
    throw ContractError("chunk_of: position " + std::to_string(pos) + " beyond plan");
  }
  return static_cast<std::size_t>(it - plan.boundaries.begin());
}

}  // namespace dcc
