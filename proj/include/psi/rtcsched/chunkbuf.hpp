#pragma once

#include <atomic>
#include <cstdint>

namespace psi::rtcsched {

/// Wait-free single-producer single-consumer exchange cell for whole values.
///
/// Triple buffering: the producer owns one slot, the consumer owns one slot,
/// and the third sits in an atomic "mailbox" word together with a freshness
/// bit. publish() copies the value into the producer slot and swaps it into
/// the mailbox; try_read() swaps the mailbox into the consumer slot when the
/// freshness bit is set. Neither side ever waits, and a reader can only ever
/// observe a value that was completely written before its publication.
template <typename T>
class ExchangeCell {
public:
    ExchangeCell() : state_(kEmpty) {}

    /// Producer side. Copies `value` and makes it visible atomically.
    void publish(const T& value) {
        slots_[back_] = value;
        uint32_t prev = state_.exchange(static_cast<uint32_t>(back_) | kFresh,
                                        std::memory_order_acq_rel);
        back_ = static_cast<int>(prev & kIndexMask);
    }

    /// Consumer side. Returns true and fills `out` if a publication newer
    /// than the last read is available; returns false without blocking
    /// otherwise. Each publication is observed at most once.
    bool try_read(T& out) {
        uint32_t cur = state_.load(std::memory_order_acquire);
        if (!(cur & kFresh)) return false;
        uint32_t prev = state_.exchange(static_cast<uint32_t>(front_),
                                        std::memory_order_acq_rel);
        front_ = static_cast<int>(prev & kIndexMask);
        out = slots_[front_];
        return true;
    }

    bool has_fresh() const {
        return (state_.load(std::memory_order_acquire) & kFresh) != 0;
    }

private:
    static constexpr uint32_t kIndexMask = 0x3;
    static constexpr uint32_t kFresh = 0x4;
    static constexpr uint32_t kEmpty = 2;  // mailbox starts at slot 2, stale

    T slots_[3]{};
    std::atomic<uint32_t> state_;
    int back_ = 0;   // producer-owned slot index
    int front_ = 1;  // consumer-owned slot index
};

}  // namespace psi::rtcsched
