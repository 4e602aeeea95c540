#ifndef SERBF_PARALLEL_HPP
#define SERBF_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace serbf {

namespace detail {
inline std::atomic<unsigned>& thread_count_slot()
{
    static std::atomic<unsigned> count{1};
    return count;
}
} // namespace detail

/// Caps the number of worker threads used by the batched kernels. Zero selects
/// the hardware concurrency.
inline void set_thread_count(unsigned n)
{
    if (n == 0)
        n = std::max(1u, std::thread::hardware_concurrency());
    detail::thread_count_slot().store(n);
}

inline unsigned thread_count() { return detail::thread_count_slot().load(); }

/// Runs fn(begin, end) over [0, n) split into contiguous static chunks. Chunk
/// boundaries depend only on n and the thread count, and callers write to
/// disjoint output slots, so results do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_chunk = 256)
{
    const std::size_t workers =
        std::min<std::size_t>(thread_count(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
    if (workers <= 1) {
        if (n > 0)
            fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            if (begin >= end)
                break;
            pool.emplace_back([&, begin, end] {
                try {
                    fn(begin, end);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                }
            });
        }
    }
    if (error)
        std::rethrow_exception(error);
}

} // namespace serbf

#endif // SERBF_PARALLEL_HPP
