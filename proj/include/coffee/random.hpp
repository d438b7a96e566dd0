#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace coffee {

// std::uniform_int_distribution and std::shuffle are implementation-defined;
// these are not, so seeded outputs are identical across standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::mt19937_64::max() -
                              (std::mt19937_64::max() % n + 1) % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return x % n;
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace coffee
