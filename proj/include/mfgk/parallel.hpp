#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace mfgk {

/// Worker count: explicit request, else MFG_KINETIC_THREADS, else hardware.
inline std::size_t resolve_threads(std::optional<std::size_t> requested = std::nullopt) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("MFG_KINETIC_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Fixed-size pool running blocked parallel loops. The calling thread takes
/// block 0; parallel_for returns after every block has finished. Work is split
/// into contiguous index ranges, so callers that write disjoint outputs get
/// results independent of the thread count.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t threads) : size_(std::max<std::size_t>(1, threads)) {
    for (std::size_t w = 1; w < size_; ++w) workers_.emplace_back([this, w] { worker_loop(w); });
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& t : workers_) t.join();
  }

  std::size_t size() const noexcept { return size_; }

  /// Calls fn(begin, end) on a partition of [0, n).
  template <class Fn>
  void parallel_for(std::size_t n, Fn&& fn) {
    if (n == 0) return;
    const std::size_t blocks = std::min(size_, n);
    if (blocks == 1) {
      fn(std::size_t{0}, n);
      return;
    }
    auto block = [&, n, blocks](std::size_t w) {
      if (w >= blocks) return;
      const std::size_t begin = n * w / blocks;
      const std::size_t end = n * (w + 1) / blocks;
      fn(begin, end);
    };
    {
      std::lock_guard lock(mutex_);
      job_ = block;
      pending_ = size_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    std::exception_ptr local;
    try {
      block(0);
    } catch (...) {
      local = std::current_exception();
    }
    std::unique_lock lock(mutex_);
    done_.wait(lock, [&] { return pending_ == 0; });
    job_ = nullptr;
    if (local) std::rethrow_exception(local);
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void worker_loop(std::size_t w) {
    std::size_t seen = 0;
    while (true) {
      std::function<void(std::size_t)> job;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = job_;
      }
      try {
        job(w);
      } catch (...) {
        std::lock_guard lock(mutex_);
        if (!error_) error_ = std::current_exception();
      }
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  std::size_t size_;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::function<void(std::size_t)> job_;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  std::exception_ptr error_;
  bool stop_ = false;
};

}  // namespace mfgk
