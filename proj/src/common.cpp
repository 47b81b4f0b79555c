#include "hit/common.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace hit {
namespace detail {

namespace {

thread_local bool t_inside_worker = false;

class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    int workers() const { return n_workers_; }

    void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
        const int chunks = n_workers_;
        // completion latch: the counter is mutated under the mutex so the
        // waiter cannot observe zero and destroy these locals while a worker
        // is still inside the notify critical section
        std::mutex done_mutex;
        std::condition_variable done_cv;
        int remaining = chunks - 1;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            job_ = [&, n, chunks](int c) {
                const std::int64_t lo = n * c / chunks;
                const std::int64_t hi = n * (c + 1) / chunks;
                if (lo < hi) body(lo, hi);
                std::lock_guard<std::mutex> dl(done_mutex);
                if (--remaining == 0) done_cv.notify_one();
            };
            next_chunk_ = 1;  // chunk 0 runs on the caller
            pending_ = chunks - 1;
            ++generation_;
        }
        cv_.notify_all();
        // caller's share
        const std::int64_t hi0 = n / chunks;
        if (hi0 > 0) body(0, hi0);
        {
            std::unique_lock<std::mutex> dl(done_mutex);
            done_cv.wait(dl, [&] { return remaining == 0; });
        }
        std::lock_guard<std::mutex> lock(mutex_);
        job_ = nullptr;
    }

private:
    Pool() {
        int n = 0;
        if (const char* env = std::getenv("HIT_THREADS")) n = std::atoi(env);
        if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
        if (n <= 0) n = 1;
        n_workers_ = n;
        for (int i = 1; i < n; ++i)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void worker_loop() {
        t_inside_worker = true;
        std::uint64_t seen = 0;
        for (;;) {
            std::function<void(int)> job;
            int chunk = -1;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_.wait(lock, [&] { return stop_ || (job_ && pending_ > 0 && generation_ != seen); });
                if (stop_) return;
                chunk = next_chunk_++;
                --pending_;
                if (pending_ == 0) seen = generation_;
                job = job_;
            }
            job(chunk);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::function<void(int)> job_;
    int next_chunk_ = 0;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
    int n_workers_ = 1;
};

}  // namespace

int worker_count() { return Pool::instance().workers(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
    if (n <= 0) return;
    // Nested calls and tiny ranges run inline.
    if (t_inside_worker || n < 64 || Pool::instance().workers() == 1) {
        body(0, n);
        return;
    }
    Pool::instance().run(n, body);
}

}  // namespace detail
}  // namespace hit
