#include "scan/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "scan/rng.hpp"

namespace scan {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim, BankInit init, std::uint64_t seed)
    : capacity_(capacity), dim_(dim), rows_(capacity * dim, 0.0) {
    if (capacity == 0 || dim == 0) throw BadShape("memory bank needs capacity >= 1 and dim >= 1");
    if (init == BankInit::Empty) return;

    Rng rng(seed);
    std::vector<double> row(dim);
    for (std::size_t i = 0; i < capacity; ++i) {
        double norm = 0.0;
        do {
            for (double& v : row) v = rng.gaussian();
            norm = row_norm(row);
        } while (norm <= 1e-12);
        for (std::size_t j = 0; j < dim; ++j) rows_[i * dim + j] = row[j] / norm;
    }
    occupancy_ = capacity;
}

void MemoryBank::enqueue(const EmbeddingMatrix& keys) {
    if (keys.d != dim_) {
        throw DimensionMismatch("enqueue: keys of dimension " + std::to_string(keys.d) +
                                " into a bank of dimension " + std::to_string(dim_));
    }
    if (keys.n > capacity_) {
        throw BatchTooLarge("enqueue: " + std::to_string(keys.n) + " keys exceed capacity " +
                            std::to_string(capacity_));
    }
    require_unit_rows(keys, "enqueue");

    for (std::size_t r = 0; r < keys.n; ++r) {
        std::memcpy(rows_.data() + cursor_ * dim_, keys.values.data() + r * keys.d,
                    dim_ * sizeof(double));
        cursor_ = (cursor_ + 1) % capacity_;
    }
    occupancy_ = std::min(capacity_, occupancy_ + keys.n);
}

EmbeddingMatrix MemoryBank::negatives_view() const {
    EmbeddingMatrix view(occupancy_, dim_);
    std::memcpy(view.values.data(), rows_.data(), occupancy_ * dim_ * sizeof(double));
    view.normalized = true;
    return view;
}

}  // namespace scan
