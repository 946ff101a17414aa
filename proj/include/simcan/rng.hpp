#pragma once

#include <cstdint>
#include <random>

#include "simcan/bytes.hpp"

namespace simcan {

/// Seedable deterministic random source. Every byte of randomness in a
/// simulation flows through one of these; no OS entropy is ever used, so a
/// (scenario, seed) pair replays to an identical run.
///
/// Byte extraction and range reduction are pinned to explicit constructions
/// (mt19937_64 words, modulo reduction) rather than std distributions, whose
/// outputs are not specified identically across standard library versions.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform-ish value in [0, n). Modulo bias is irrelevant at simulation
  /// scale and keeps the mapping trivially reproducible.
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  std::uint8_t next_byte() {
    if (pool_left_ == 0) {
      pool_ = engine_();
      pool_left_ = 8;
    }
    std::uint8_t b = static_cast<std::uint8_t>(pool_ & 0xff);
    pool_ >>= 8;
    --pool_left_;
    return b;
  }

  Bytes bytes(std::size_t n) {
    Bytes out(n);
    for (auto& b : out) b = next_byte();
    return out;
  }

  /// Derive an independent child stream; used to give each agent its own
  /// stream so event ordering changes cannot perturb unrelated draws.
  RandomSource fork() { return RandomSource(next_u64() ^ 0x9e3779b97f4a7c15ull); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t pool_ = 0;
  int pool_left_ = 0;
};

}  // namespace simcan
