#include <stdexcept>

#include "dlflow/runtime/worker_pool.hpp"

namespace dlflow::runtime {

WorkerPool::WorkerPool(int workers) {
    if (workers < 1) throw std::invalid_argument("worker pool needs at least one worker");
    for (int i = 0; i < workers; ++i) workers_.push_back(std::make_unique<Worker>());
    for (auto& w : workers_) w->thread = std::thread([this, p = w.get()] { loop(*p); });
}

WorkerPool::~WorkerPool() {
    {
        std::lock_guard<std::mutex> g(done_mu_);
        stop_ = true;
    }
    for (auto& w : workers_) {
        {
            std::lock_guard<std::mutex> g(w->mu);
        }
        w->cv.notify_all();
    }
    for (auto& w : workers_) w->thread.join();
}

void WorkerPool::submit(int worker, std::function<void()> task) {
    Worker& w = *workers_.at(static_cast<std::size_t>(worker));
    {
        std::lock_guard<std::mutex> g(done_mu_);
        ++pending_;
    }
    {
        std::lock_guard<std::mutex> g(w.mu);
        w.tasks.push_back(std::move(task));
    }
    w.cv.notify_one();
}

void WorkerPool::wait() {
    std::unique_lock<std::mutex> g(done_mu_);
    done_cv_.wait(g, [&] { return pending_ == 0; });
    if (error_) {
        auto e = error_;
        error_ = nullptr;
        std::rethrow_exception(e);
    }
}

void WorkerPool::loop(Worker& w) {
    for (;;) {
        std::function<void()> task;
        {
            std::unique_lock<std::mutex> g(w.mu);
            w.cv.wait(g, [&] {
                if (!w.tasks.empty()) return true;
                std::lock_guard<std::mutex> d(done_mu_);
                return stop_;
            });
            if (w.tasks.empty()) return;
            task = std::move(w.tasks.front());
            w.tasks.pop_front();
        }
        std::exception_ptr err;
        try {
            task();
        } catch (...) {
            err = std::current_exception();
        }
        std::lock_guard<std::mutex> g(done_mu_);
        if (err && !error_) error_ = err;
        if (--pending_ == 0) done_cv_.notify_all();
    }
}

}  // namespace dlflow::runtime
