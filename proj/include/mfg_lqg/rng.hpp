#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mfg_lqg {

/// Philox4x32-10 counter-based generator: a pure function of (counter, key).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }
};

/// Standard normals addressed by (step, agent, path); independent of the
/// order in which they are requested.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)} {}

  /// Writes `count` normals for the given address into out[0..count).
  void normals(std::uint32_t step, std::uint32_t agent, std::uint32_t path,
               double* out, int count) const {
    for (int block = 0; 2 * block < count; ++block) {
      const auto w = Philox4x32::generate(
          {step, agent, path, static_cast<std::uint32_t>(block)}, key_);
      const double u1 = to_unit(w[0], w[1]);
      const double u2 = to_unit(w[2], w[3]);
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      out[2 * block] = r * std::cos(angle);
      if (2 * block + 1 < count) out[2 * block + 1] = r * std::sin(angle);
    }
  }

 private:
  // 53-bit uniform in (0, 1).
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits =
        ((std::uint64_t{hi} << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
};

}  // namespace mfg_lqg
