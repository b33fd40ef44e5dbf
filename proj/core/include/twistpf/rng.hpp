#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace twistpf {

namespace detail {

// SplitMix64 step; used for seeding and key derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// xoshiro256** (Blackman & Vigna). Small state, cheap to construct, which
// matters because one generator is created per logical substream.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed = 0) noexcept {
    std::uint64_t x = seed;
    for (auto& w : state_) w = detail::splitmix64(x);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~std::uint64_t{0}; }

  result_type operator()() noexcept {
    const std::uint64_t out = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return out;
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); safe to take logs of.
  double uniform_open() noexcept {
    double u = uniform01();
    while (u == 0.0) u = uniform01();
    return u;
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) noexcept {
    return (v << k) | (v >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

using Rng = Xoshiro256;

// Mixes one word into a key. Non-commutative so (a,b) and (b,a) differ.
inline std::uint64_t mix_key(std::uint64_t key, std::uint64_t word) noexcept {
  std::uint64_t x = key ^ (word + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2));
  return detail::splitmix64(x);
}

// Substream purposes. Counter-based keying gives every (lane, time, purpose)
// triple its own generator, so changing the particle count or adding draws in
// one place never perturbs draws elsewhere.
enum class StreamPurpose : std::uint64_t {
  Init = 1,
  Kernel = 2,
  Potential = 3,
  Resample = 4,
  RunSetup = 5,
  Learn = 6,
  Simulate = 7,
};

// Lane used for per-run shared draws (resampling, run setup).
inline constexpr std::uint64_t kSharedLane = ~std::uint64_t{0};

// A keyed family of independent substreams for one filter run (or one
// learning sweep). Typically constructed from (master seed, repetition).
struct StreamSet {
  std::uint64_t key = 0;
  // Test hook: remaps particle lanes (identity when null). Lets tests check
  // that permuting per-particle substreams leaves run distributions unchanged.
  const std::vector<std::uint32_t>* lane_permutation = nullptr;

  static StreamSet derive(std::uint64_t master_seed, std::uint64_t repetition) {
    return StreamSet{mix_key(mix_key(0x7769737470665f31ULL, master_seed), repetition)};
  }

  Rng at(std::uint64_t lane, std::uint64_t time, StreamPurpose purpose) const {
    if (lane_permutation != nullptr && lane < lane_permutation->size()) {
      lane = (*lane_permutation)[static_cast<std::size_t>(lane)];
    }
    std::uint64_t k = mix_key(key, lane);
    k = mix_key(k, time);
    k = mix_key(k, static_cast<std::uint64_t>(purpose));
    return Rng(k);
  }

  Rng shared(std::uint64_t time, StreamPurpose purpose) const {
    return at(kSharedLane, time, purpose);
  }
};

}  // namespace twistpf
