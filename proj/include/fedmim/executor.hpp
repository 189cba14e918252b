#pragma once

#include <cstddef>
#include <functional>

namespace fedmim {

// Runs independent work items on up to `threads` threads and joins before
// returning. Items write to their own output slots, so the thread count is
// unobservable in results. If several items throw, the exception of the
// lowest index is rethrown.
class Executor {
public:
    explicit Executor(std::size_t threads = 1) : threads_(threads == 0 ? 1 : threads) {}

    std::size_t threads() const { return threads_; }
    void for_each(std::size_t n, const std::function<void(std::size_t)>& fn) const;

private:
    std::size_t threads_;
};

}  // namespace fedmim
