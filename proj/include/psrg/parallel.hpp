#pragma once

#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace psrg {

// Deterministic fork-join helper. Work is split into fixed contiguous chunks,
// each element is computed by exactly one worker with the same per-element
// arithmetic order, so results are bit-identical for any worker count.
// PSRG_THREADS caps the pool size (0 or unset -> hardware concurrency).
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    int size() const { return static_cast<int>(workers_.size()) + 1; }

    // fn(begin, end) over [0, n) split into one chunk per worker plus the
    // calling thread. Blocks until all chunks are done.
    void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
        const std::size_t parts = static_cast<std::size_t>(size());
        if (n == 0) return;
        if (parts <= 1 || n == 1) {
            fn(0, n);
            return;
        }
        const std::size_t chunk = (n + parts - 1) / parts;
        std::size_t launched = 0;
        {
            std::unique_lock<std::mutex> lock(mutex_);
            pending_ = 0;
            for (std::size_t p = 1; p < parts; ++p) {
                const std::size_t lo = p * chunk;
                if (lo >= n) break;
                const std::size_t hi = std::min(n, lo + chunk);
                tasks_.emplace_back([fn, lo, hi] { fn(lo, hi); });
                ++pending_;
                ++launched;
            }
        }
        if (launched > 0) wake_.notify_all();
        fn(0, std::min(n, chunk));
        if (launched > 0) {
            std::unique_lock<std::mutex> lock(mutex_);
            done_.wait(lock, [this] { return pending_ == 0 && tasks_.empty(); });
        }
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mutex_);
            stop_ = true;
        }
        wake_.notify_all();
        for (auto& t : workers_) t.join();
    }

private:
    ThreadPool() {
        int n = 0;
        if (const char* env = std::getenv("PSRG_THREADS")) n = std::atoi(env);
        if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
        if (n <= 0) n = 1;
        for (int i = 1; i < n; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    void worker_loop() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                wake_.wait(lock, [this] { return stop_ || !tasks_.empty(); });
                if (stop_ && tasks_.empty()) return;
                task = std::move(tasks_.back());
                tasks_.pop_back();
            }
            task();
            {
                std::unique_lock<std::mutex> lock(mutex_);
                if (--pending_ == 0 && tasks_.empty()) done_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::vector<std::function<void()>> tasks_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    std::size_t pending_ = 0;
    bool stop_ = false;
};

inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    ThreadPool::instance().parallel_for(n, fn);
}

}  // namespace psrg
