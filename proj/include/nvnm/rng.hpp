#ifndef NVNM_RNG_HPP
#define NVNM_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace nvnm {

// Counter-based RNG: Philox4x32-10 (Salmon et al., SC11), the 10-round
// variant with multipliers 0xD2511F53 / 0xCD9E8D57 and Weyl constants
// 0x9E3779B9 / 0xBB67AE85. Output is a pure function of (seed, stream,
// counter): the raw stream and uniform deviates are integer-exact on any
// platform, and normal deviates are deterministic given the platform's
// log/sin/cos rounding (Box-Muller, no rejection loop). Each (seed, stream)
// pair is an independent stream; samplers hand one stream per chain.
class Philox {
 public:
  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

  // One 10-round block permutation; exposed for the known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t prod0 = 0xD2511F53ull * ctr[0];
      const std::uint64_t prod1 = 0xCD9E8D57ull * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(prod0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(prod0);
      const auto hi1 = static_cast<std::uint32_t>(prod1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(prod1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

  std::uint32_t next_u32() {
    if (idx_ == 4) refill();
    return buf_[idx_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform on the open interval (0, 1); never returns 0 or 1, so logs and
  // Box-Muller are always finite.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  void refill() {
    buf_ = block({static_cast<std::uint32_t>(block_count_),
                  static_cast<std::uint32_t>(block_count_ >> 32), stream_lo_, stream_hi_},
                 key_);
    ++block_count_;
    idx_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_lo_ = 0;
  std::uint32_t stream_hi_ = 0;
  std::uint64_t block_count_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int idx_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace nvnm

#endif  // NVNM_RNG_HPP
