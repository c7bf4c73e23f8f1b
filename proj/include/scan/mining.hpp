#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "scan/embedding.hpp"

namespace scan {

struct NeighborEntry {
    std::uint32_t index = 0;
    float score = 0.0f;

    bool operator==(const NeighborEntry&) const = default;
};

// Per-query ordered positive-neighbor lists: every listed neighbor shares the
// query's class, scores are strictly positive and non-increasing, equal
// scores are ordered by ascending gallery index, and a query never lists
// itself. Lists shorter than k record the missing count in `shortfall`.
struct NeighborTable {
    std::uint32_t k = 0;
    std::vector<std::vector<NeighborEntry>> entries;
    std::vector<std::uint32_t> shortfall;

    std::size_t size() const { return entries.size(); }
    bool operator==(const NeighborTable&) const = default;
};

// Reference miner: full double-loop ranking of each query against the whole
// gallery under the combined similarity. Ties break toward the lower index.
NeighborTable mine_bruteforce(const EmbeddingMatrix& matrix, const LabelVector& labels,
                              std::uint32_t k);

// Production miner: class-partitioned candidate lists, queries sharded over
// `workers` threads. Output is exactly equal to mine_bruteforce for any
// worker count (same scores, same indices, same order).
NeighborTable mine_fast(const EmbeddingMatrix& matrix, const LabelVector& labels, std::uint32_t k,
                        unsigned workers);

// SCNT file format: magic "SCNT", version byte 0x01, little-endian u32 n,
// u32 k, then per query a u16 list length followed by (u32 index, f32 score)
// pairs. Bit-exact across platforms.
void save_table(const NeighborTable& table, const std::filesystem::path& path);
NeighborTable load_table(const std::filesystem::path& path);

}  // namespace scan
