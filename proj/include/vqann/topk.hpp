#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace vqann {

/// Bounded selection of the `capacity` smallest (score, id) pairs under
/// lexicographic order, so equal scores keep the lower id.
class TopK {
public:
    using Entry = std::pair<double, std::uint32_t>;

    explicit TopK(std::size_t capacity) : capacity_(capacity) { heap_.reserve(capacity + 1); }

    void push(double score, std::uint32_t id) {
        if (capacity_ == 0) {
            return;
        }
        const Entry e{score, id};
        if (heap_.size() < capacity_) {
            heap_.push_back(e);
            std::push_heap(heap_.begin(), heap_.end());
        } else if (e < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = e;
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    void merge(const TopK& other) {
        for (const auto& [s, id] : other.heap_) {
            push(s, id);
        }
    }

    bool full() const { return heap_.size() == capacity_; }
    /// Worst retained score; meaningful only when full().
    double worst() const { return heap_.front().first; }

    /// Drains into ascending order.
    std::vector<Entry> sorted() const {
        std::vector<Entry> out = heap_;
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::size_t capacity_;
    std::vector<Entry> heap_;
};

}  // namespace vqann
