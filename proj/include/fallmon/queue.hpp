#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>

namespace fallmon {

enum class Overflow { Block, DropOldest };

/// FIFO shared between threads. `close()` wakes every waiter; pops drain what
/// is left and then report the end.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity, Overflow policy = Overflow::Block)
        : capacity_(capacity == 0 ? 1 : capacity), policy_(policy) {}

    /// False once the queue is closed.
    bool push(T item) {
        std::unique_lock lock(mutex_);
        if (policy_ == Overflow::Block) {
            not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        } else if (items_.size() >= capacity_) {
            items_.pop_front();
            ++dropped_;
        }
        if (closed_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        return take(lock);
    }

    template <typename Rep, typename Period>
    std::optional<T> pop_for(std::chrono::duration<Rep, Period> timeout) {
        std::unique_lock lock(mutex_);
        not_empty_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
        return take(lock);
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    bool closed() const {
        std::lock_guard lock(mutex_);
        return closed_;
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return items_.size();
    }

    std::size_t dropped() const {
        std::lock_guard lock(mutex_);
        return dropped_;
    }

private:
    std::optional<T> take(std::unique_lock<std::mutex>&) {
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    const std::size_t capacity_;
    const Overflow policy_;
    mutable std::mutex mutex_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
    std::deque<T> items_;
    std::size_t dropped_ = 0;
    bool closed_ = false;
};

}  // namespace fallmon
