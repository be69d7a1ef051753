#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace radner {

// Worker count used when a caller passes 0. Reads RADNER_THREADS, falling
// back to the hardware concurrency.
std::size_t default_thread_count();

// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
// depend only on n and the thread count, and every body writes disjoint
// output slots, so results never depend on scheduling. The exception from
// the lowest-indexed failing chunk is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t threads = 0);

// Pairwise (tree) summation with a fixed split order.
double pairwise_sum(std::span<const double> values);

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

// Sample mean and standard error of the mean, both via pairwise sums.
Estimate mc_estimate(std::span<const double> samples);

} // namespace radner
