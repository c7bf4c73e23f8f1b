#pragma once

#include <cstdint>

#include "scan/embedding.hpp"

namespace scan {

enum class BankInit { Random, Empty };

// Fixed-capacity FIFO of unit-normalized key features. Single writer; reads
// go through negatives_view(), which returns an immutable snapshot.
class MemoryBank {
public:
    // Random mode fills all L slots with seeded random unit rows so the
    // denominator is well defined from the first step; Empty starts at
    // occupancy 0.
    MemoryBank(std::size_t capacity, std::size_t dim, BankInit init, std::uint64_t seed = 0);

    // Appends rows at the write cursor with wraparound, evicting the oldest
    // rows once full. keys.n must not exceed the capacity.
    void enqueue(const EmbeddingMatrix& keys);

    // Snapshot of the current contents in storage order.
    EmbeddingMatrix negatives_view() const;

    std::size_t capacity() const { return capacity_; }
    std::size_t dim() const { return dim_; }
    std::size_t occupancy() const { return occupancy_; }

private:
    std::size_t capacity_ = 0;
    std::size_t dim_ = 0;
    std::size_t cursor_ = 0;
    std::size_t occupancy_ = 0;
    std::vector<double> rows_;
};

}  // namespace scan
