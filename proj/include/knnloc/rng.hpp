#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace knnloc {

//! Seeded pseudo-random source used everywhere randomness is needed.
//!
//! The engine is std::mt19937_64, whose output sequence is fixed by the C++
//! standard. The distributions are implemented here rather than taken from
//! <random> because the standard distributions are not portable bit-for-bit:
//!  - uniform(): top 53 bits of one engine output scaled by 2^-53, in [0, 1).
//!  - below(b): rejection sampling on one engine output, unbiased in [0, b).
//!  - normal(): Box-Muller on two uniforms; the second variate is cached and
//!    returned by the next call.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::uint64_t below(std::uint64_t bound);

  double normal();

private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

//! SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

//! Derives an independent stream seed from a master seed and a stream id:
//! mix64(master ^ mix64(stream + 0x9e3779b97f4a7c15)).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

} // namespace knnloc
