#ifndef EBSHRINK_PARALLEL_HPP
#define EBSHRINK_PARALLEL_HPP

#include <cstddef>
#include <cstdint>
#include <functional>

namespace ebshrink {

/// Worker count from EBSHRINK_THREADS; all hardware threads when unset or invalid.
std::size_t thread_count();

/// Runs body(i) for i in [0, count) on up to thread_count() workers. Each
/// index runs exactly once; callers write results into per-index slots and
/// reduce in index order, so output never depends on scheduling. The first
/// exception thrown by a body is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

/// Stream-splitting seed derivation (splitmix64 over base and index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace ebshrink

#endif
