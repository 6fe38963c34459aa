#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace dlflow::runtime {

/// Fixed set of worker threads, each with its own task queue so a partition
/// always runs on the worker that owns it.
class WorkerPool {
public:
    explicit WorkerPool(int workers);
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;
    ~WorkerPool();

    int size() const { return static_cast<int>(workers_.size()); }
    void submit(int worker, std::function<void()> task);
    /// Blocks until every submitted task finished; rethrows the first task
    /// exception.
    void wait();

private:
    struct Worker {
        std::mutex mu;
        std::condition_variable cv;
        std::deque<std::function<void()>> tasks;
        std::thread thread;
    };

    void loop(Worker& w);

    std::vector<std::unique_ptr<Worker>> workers_;
    std::mutex done_mu_;
    std::condition_variable done_cv_;
    std::size_t pending_ = 0;
    std::exception_ptr error_;
    bool stop_ = false;
};

}  // namespace dlflow::runtime
