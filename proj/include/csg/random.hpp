// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sys/random.h>

#include <array>
#include <cerrno>
#include <cstdint>
#include <span>

#include "csg/error.hpp"

namespace csg {

class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  template <std::size_t N>
  std::array<std::uint8_t, N> array() {
    std::array<std::uint8_t, N> out{};
    fill(out);
    return out;
  }
};

// Kernel CSPRNG via getrandom(2). Stateless, so one instance may serve every thread.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override {
    std::size_t done = 0;
    while (done < out.size()) {
      ssize_t n = ::getrandom(out.data() + done, out.size() - done, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::entropy, "getrandom failed");
      }
      done += static_cast<std::size_t>(n);
    }
  }
};

inline RandomSource& system_random() {
  static SystemRandom rng;
  return rng;
}

}  // namespace csg
