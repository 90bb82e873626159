#pragma once

namespace dcc::vocab {

// Closed token vocabulary shared by the task generator, the model driver and
// the cutoff engine. Keys and values occupy disjoint id ranges.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kSep = 2;   // statement separator; also the Boundary chunking token
inline constexpr int kQuery = 3;
inline constexpr int kAnswer = 4;
inline constexpr int kEnd = 5;   // answer terminator
inline constexpr int kNone = 6;  // "fact not present" answer
inline constexpr int kFill = 7;  // pads a context to its exact length

inline constexpr int kFirstKey = 8;
inline constexpr int kNumKeys = 256;
inline constexpr int kFirstValue = kFirstKey + kNumKeys;  // 264
inline constexpr int kNumValues = 248;
inline constexpr int kSize = kFirstValue + kNumValues;    // 512

constexpr bool is_key(int t) noexcept { return t >= kFirstKey && t < kFirstKey + kNumKeys; }
constexpr bool is_value(int t) noexcept { return t >= kFirstValue && t < kSize; }

}  // namespace dcc::vocab
