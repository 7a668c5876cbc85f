#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace abc {

// Worker count: ABC_THREADS if set to a positive integer, else hardware concurrency.
int worker_count();

// Runs body(i) for i in [0, n) on the worker pool. Results must be written to
// per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Samples are generated in fixed-size chunks; chunk j of stream s under seed
// uses its own generator, so any sample index maps to the same value no matter
// how the range is split across workers.
inline constexpr std::size_t kSampleChunk = 1 << 14;

std::mt19937_64 chunk_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t chunk);

double uniform01(std::mt19937_64& rng);

}  // namespace abc
