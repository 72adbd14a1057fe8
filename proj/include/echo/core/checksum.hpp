#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string_view>

namespace echo::core {

/// FNV-1a folded over 64-bit words; bit-exact parameter fingerprints.
class Checksum {
 public:
  Checksum& add(std::uint64_t word) noexcept {
    h_ ^= word;
    h_ *= 0x100000001b3ULL;
    return *this;
  }
  Checksum& add(double x) noexcept { return add(std::bit_cast<std::uint64_t>(x)); }
  /// Four interleaved lanes so long parameter blocks hash at memory speed;
  /// the lanes and the length are folded back into the running value.
  Checksum& add(std::span<const double> xs) noexcept {
    std::uint64_t lane[4] = {h_, h_ ^ 0x9e3779b97f4a7c15ULL, h_ ^ 0xc2b2ae3d27d4eb4fULL,
                             h_ ^ 0x165667b19e3779f9ULL};
    std::size_t i = 0;
    for (; i + 4 <= xs.size(); i += 4)
      for (std::size_t l = 0; l < 4; ++l)
        lane[l] = (lane[l] ^ std::bit_cast<std::uint64_t>(xs[i + l])) * 0x100000001b3ULL;
    for (; i < xs.size(); ++i) lane[0] = (lane[0] ^ std::bit_cast<std::uint64_t>(xs[i])) * 0x100000001b3ULL;
    for (auto v : lane) add(v);
    return add(static_cast<std::uint64_t>(xs.size()));
  }
  Checksum& add(std::string_view s) noexcept {
    for (unsigned char c : s) add(static_cast<std::uint64_t>(c));
    return add(static_cast<std::uint64_t>(s.size()));
  }
  std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace echo::core
