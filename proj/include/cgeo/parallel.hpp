#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace cgeo {

// 0 means "all available"; result is always >= 1.
int resolve_threads(int requested);

// Runs body(i) for i in [0, n). If any call throws, the exception raised by
// the smallest index is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

// SplitMix64 step; used to derive independent per-batch seeds.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace cgeo
