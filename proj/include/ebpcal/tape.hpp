// SPDX-License-Identifier: Apache-2.0
//
// Append-only sample tape with bounded retention, used to stream long signals
// block by block while keeping exactly as much history as the filters need.
// Indices are absolute (global sample count since stream start). Reads before
// index 0 return zero (streams start from rest); reads into dropped history
// are a programming error.

#pragma once

#include <cassert>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace ebpcal {

template <typename T>
class Tape {
  public:
    Tape() = default;

    std::int64_t begin_index() const { return base_; }
    std::int64_t end_index() const { return base_ + static_cast<std::int64_t>(data_.size()); }

    T at(std::int64_t n) const {
        if (n < 0) return T{};
        assert(n >= base_ && "Tape: read into dropped history");
        assert(n < end_index() && "Tape: read past end");
        return data_[static_cast<std::size_t>(n - base_)];
    }

    void push_back(T v) { data_.push_back(v); }

    void append(std::span<const T> block) { data_.insert(data_.end(), block.begin(), block.end()); }

    // Drop samples before n_keep (clamped to the current range).
    void drop_before(std::int64_t n_keep) {
        if (n_keep <= base_) return;
        if (n_keep > end_index()) n_keep = end_index();
        data_.erase(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(n_keep - base_));
        base_ = n_keep;
    }

    std::size_t size() const { return data_.size(); }

  private:
    std::vector<T> data_;
    std::int64_t base_ = 0;
};

} // namespace ebpcal
