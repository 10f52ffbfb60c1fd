#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace conic {

// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots so the outcome is independent of scheduling.
// If any call throws, the exception from the lowest index is rethrown.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& body);

// Mixes a base seed with unit coordinates (splitmix64 finalizer), giving
// every parallel work unit its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b = 0);

}  // namespace conic
