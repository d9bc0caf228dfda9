#include "core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace groupreg {

namespace {

int g_threads = []() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}();

// Small persistent pool. Workers pull chunk indices from a shared
// counter; the caller participates as well.
class Pool {
public:
    static Pool& instance()
    {
        static Pool p;
        return p;
    }

    void run(int workers, std::size_t chunks, const std::function<void(std::size_t)>& chunk_fn)
    {
        std::unique_lock lock(mutex_);
        ensure_workers(workers - 1);
        chunk_fn_ = &chunk_fn;
        next_chunk_.store(0, std::memory_order_relaxed);
        total_chunks_ = chunks;
        pending_ = static_cast<int>(started_.size());
        ++generation_;
        cv_.notify_all();
        lock.unlock();

        work();

        std::unique_lock wait_lock(mutex_);
        done_cv_.wait(wait_lock, [this] { return pending_ == 0; });
        chunk_fn_ = nullptr;
    }

private:
    Pool() = default;
    ~Pool()
    {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
            cv_.notify_all();
        }
        for (auto& t : started_)
            t.join();
    }

    void ensure_workers(int n)
    {
        while (static_cast<int>(started_.size()) < n) {
            started_.emplace_back([this, gen = generation_] {
                std::size_t my_gen = gen;
                for (;;) {
                    {
                        std::unique_lock lock(mutex_);
                        cv_.wait(lock, [&] { return stop_ || generation_ != my_gen; });
                        if (stop_)
                            return;
                        my_gen = generation_;
                    }
                    work();
                    {
                        std::lock_guard lock(mutex_);
                        if (--pending_ == 0)
                            done_cv_.notify_all();
                    }
                }
            });
        }
    }

    void work()
    {
        const auto* fn = chunk_fn_;
        if (!fn)
            return;
        for (;;) {
            std::size_t c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
            if (c >= total_chunks_)
                return;
            (*fn)(c);
        }
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> started_;
    std::atomic<std::size_t> next_chunk_{0};
    std::size_t total_chunks_ = 0;
    const std::function<void(std::size_t)>* chunk_fn_ = nullptr;
    std::size_t generation_ = 0;
    int pending_ = 0;
    bool stop_ = false;
};

constexpr std::size_t kBlock = 4096;

} // namespace

void set_thread_count(int n)
{
    g_threads = std::max(1, n);
}

int thread_count()
{
    return g_threads;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn)
{
    if (n == 0)
        return;
    int workers = g_threads;
    if (workers <= 1 || n < 2 * kBlock) {
        fn(0, n);
        return;
    }
    std::size_t chunks = (n + kBlock - 1) / kBlock;
    Pool::instance().run(workers, chunks, [&](std::size_t c) {
        std::size_t b = c * kBlock;
        fn(b, std::min(n, b + kBlock));
    });
}

double parallel_sum(std::size_t n, const std::function<double(std::size_t, std::size_t)>& block_sum)
{
    if (n == 0)
        return 0.0;
    std::size_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks);
    int workers = g_threads;
    auto eval_block = [&](std::size_t c) {
        std::size_t b = c * kBlock;
        partial[c] = block_sum(b, std::min(n, b + kBlock));
    };
    if (workers <= 1 || blocks < 2) {
        for (std::size_t c = 0; c < blocks; ++c)
            eval_block(c);
    } else {
        Pool::instance().run(workers, blocks, eval_block);
    }
    double total = 0.0;
    for (double p : partial)
        total += p;
    return total;
}

double symmetric_sum(const double* values, int n)
{
    if (n <= 0)
        return 0.0;
    if (n == 1)
        return values[0];
    if (n == 2)
        return values[0] <= values[1] ? values[0] + values[1] : values[1] + values[0];
    if (n == 3) {
        double a = values[0], b = values[1], c = values[2];
        if (a > b)
            std::swap(a, b);
        if (b > c)
            std::swap(b, c);
        if (a > b)
            std::swap(a, b);
        return (a + b) + c;
    }
    std::vector<double> sorted(values, values + n);
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (double v : sorted)
        total += v;
    return total;
}

} // namespace groupreg
