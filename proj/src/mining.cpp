#include "scan/mining.hpp"

#include <algorithm>
#include <fstream>
#include <string>
#include <thread>
#include <unordered_map>

#include "scan/binio.hpp"

namespace scan {

namespace {

constexpr char kTableMagic[5] = "SCNT";
constexpr std::uint8_t kTableVersion = 0x01;

struct Candidate {
    double score;
    std::uint32_t index;
};

// Strict total order: higher score first, ties toward the lower index.
bool better(const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
}

void check_inputs(const EmbeddingMatrix& matrix, const LabelVector& labels) {
    if (labels.size() != matrix.n) {
        throw LabelMismatch("mine: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(matrix.n) + " rows");
    }
    require_unit_rows(matrix, "mine");
}

// Ranks one query against a candidate index list (ascending order, may
// include the query itself). Selection happens at full double precision;
// scores narrow to f32 only when stored in the table.
void rank_query(const EmbeddingMatrix& matrix, std::size_t query,
                std::span<const std::uint32_t> candidates, std::uint32_t k,
                std::vector<NeighborEntry>& out, std::vector<Candidate>& scratch) {
    scratch.clear();
    const auto q = matrix.row(query);
    for (std::uint32_t j : candidates) {
        if (j == query) continue;
        const double score = (row_dot(q, matrix.row(j)) + 1.0) / 2.0;
        if (score > 0.0) scratch.push_back({score, j});
    }
    const std::size_t take = std::min<std::size_t>(k, scratch.size());
    std::partial_sort(scratch.begin(), scratch.begin() + take, scratch.end(), better);
    out.clear();
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.push_back({scratch[i].index, static_cast<float>(scratch[i].score)});
    }
}

std::uint32_t list_shortfall(std::uint32_t k, std::size_t len) {
    return k - static_cast<std::uint32_t>(len);
}

}  // namespace

NeighborTable mine_bruteforce(const EmbeddingMatrix& matrix, const LabelVector& labels,
                              std::uint32_t k) {
    check_inputs(matrix, labels);

    NeighborTable table;
    table.k = k;
    table.entries.resize(matrix.n);
    table.shortfall.resize(matrix.n);

    std::vector<Candidate> scratch;
    for (std::size_t i = 0; i < matrix.n; ++i) {
        scratch.clear();
        const auto q = matrix.row(i);
        for (std::size_t j = 0; j < matrix.n; ++j) {
            if (j == i) continue;
            // Combined similarity; the semantic factor zeroes cross-class pairs.
            if (labels.labels[i] != labels.labels[j]) continue;
            const double score = (row_dot(q, matrix.row(j)) + 1.0) / 2.0;
            if (score > 0.0) scratch.push_back({score, static_cast<std::uint32_t>(j)});
        }
        std::sort(scratch.begin(), scratch.end(), better);
        const std::size_t take = std::min<std::size_t>(k, scratch.size());
        auto& list = table.entries[i];
        list.reserve(take);
        for (std::size_t r = 0; r < take; ++r) {
            list.push_back({scratch[r].index, static_cast<float>(scratch[r].score)});
        }
        table.shortfall[i] = list_shortfall(k, list.size());
    }
    return table;
}

NeighborTable mine_fast(const EmbeddingMatrix& matrix, const LabelVector& labels, std::uint32_t k,
                        unsigned workers) {
    check_inputs(matrix, labels);

    // Candidate lists per class, ascending index order.
    std::unordered_map<std::int32_t, std::vector<std::uint32_t>> by_class;
    for (std::size_t i = 0; i < matrix.n; ++i) {
        by_class[labels.labels[i]].push_back(static_cast<std::uint32_t>(i));
    }

    NeighborTable table;
    table.k = k;
    table.entries.resize(matrix.n);
    table.shortfall.resize(matrix.n);

    const std::size_t n = matrix.n;
    const unsigned shard_count =
        std::max<unsigned>(1, std::min<unsigned>(workers, n == 0 ? 1 : static_cast<unsigned>(n)));

    auto run_shard = [&](std::size_t begin, std::size_t end) {
        std::vector<Candidate> scratch;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& candidates = by_class.at(labels.labels[i]);
            rank_query(matrix, i, candidates, k, table.entries[i], scratch);
            table.shortfall[i] = list_shortfall(k, table.entries[i].size());
        }
    };

    if (shard_count == 1) {
        run_shard(0, n);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(shard_count);
        const std::size_t chunk = (n + shard_count - 1) / shard_count;
        for (unsigned s = 0; s < shard_count; ++s) {
            const std::size_t begin = s * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            if (begin >= end) break;
            threads.emplace_back(run_shard, begin, end);
        }
        for (auto& t : threads) t.join();
    }
    return table;
}

void save_table(const NeighborTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Io("cannot open " + path.string() + " for writing");

    io::write_magic(out, kTableMagic);
    io::write_u8(out, kTableVersion);
    io::write_u32(out, static_cast<std::uint32_t>(table.entries.size()));
    io::write_u32(out, table.k);
    for (const auto& list : table.entries) {
        if (list.size() > 0xFFFF) throw Io("neighbor list too long for SCNT format");
        io::write_u16(out, static_cast<std::uint16_t>(list.size()));
        for (const auto& e : list) {
            io::write_u32(out, e.index);
            io::write_f32(out, e.score);
        }
    }
    out.flush();
    if (!out) throw Io("write failed: " + path.string());
}

NeighborTable load_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Io("cannot open " + path.string());

    io::expect_magic(in, kTableMagic);
    io::expect_version(in, kTableVersion);
    const std::uint32_t n = io::read_u32(in);
    const std::uint32_t k = io::read_u32(in);

    NeighborTable table;
    table.k = k;
    table.entries.resize(n);
    table.shortfall.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint16_t len = io::read_u16(in);
        if (len > k) throw Io("neighbor list longer than table k");
        auto& list = table.entries[i];
        list.resize(len);
        float prev_score = 0.0f;
        for (std::uint16_t r = 0; r < len; ++r) {
            list[r].index = io::read_u32(in);
            list[r].score = io::read_f32(in);
            if (list[r].index >= n) throw Io("neighbor index out of range");
            if (list[r].index == i) throw Io("query listed as its own neighbor");
            if (!(list[r].score > 0.0f)) throw Io("non-positive neighbor score");
            if (r > 0 && list[r].score > prev_score) throw Io("scores not non-increasing");
            prev_score = list[r].score;
        }
        table.shortfall[i] = list_shortfall(k, len);
    }
    io::expect_eof(in);
    return table;
}

}  // namespace scan
