#include "radner/parallel.hpp"

#include "radner/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace radner {

std::size_t default_thread_count() {
    if (const char* env = std::getenv("RADNER_THREADS")) {
        try {
            const long n = std::stol(env);
            if (n > 0) return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
        }
        throw ConfigError("RADNER_THREADS must be a positive integer");
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t threads) {
    if (n == 0) return;
    if (threads == 0) threads = default_thread_count();
    threads = std::min(threads, n);
    if (threads == 1) {
        body(0, n);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end] {
            try {
                body(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double pairwise_sum(std::span<const double> values) {
    constexpr std::size_t leaf = 16;
    if (values.size() <= leaf) {
        double acc = 0.0;
        for (double v : values) acc += v;
        return acc;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Estimate mc_estimate(std::span<const double> samples) {
    Estimate est;
    est.n = samples.size();
    if (samples.empty()) return est;
    est.mean = pairwise_sum(samples) / static_cast<double>(est.n);
    if (est.n < 2) return est;
    std::vector<double> sq(samples.size());
    std::transform(samples.begin(), samples.end(), sq.begin(),
                   [m = est.mean](double v) { return (v - m) * (v - m); });
    const double var = pairwise_sum(sq) / static_cast<double>(est.n - 1);
    est.std_error = std::sqrt(var / static_cast<double>(est.n));
    return est;
}

} // namespace radner
