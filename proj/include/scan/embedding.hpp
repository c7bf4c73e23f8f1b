#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scan/errors.hpp"

namespace scan {

// Row-major matrix of feature vectors, 64-bit in memory (file formats store
// 32-bit, see dataset.hpp). `normalized` marks that every row is unit length;
// it is set by l2_normalize_rows / the encoder and trusted downstream.
struct EmbeddingMatrix {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> values;
    bool normalized = false;

    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows, std::size_t dim)
        : n(rows), d(dim), values(rows * dim, 0.0) {}

    std::span<double> row(std::size_t i) { return {values.data() + i * d, d}; }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * d, d}; }
};

// Class ids (and optional latent mode ids, synthetic data only) aligned with
// an EmbeddingMatrix.
struct LabelVector {
    std::vector<std::int32_t> labels;
    std::vector<std::int32_t> modes;

    std::size_t size() const { return labels.size(); }
    bool has_modes() const { return !modes.empty(); }
};

// Exact inner product of two rows. Every similarity path in the project goes
// through this one non-inlined function so independently optimized call sites
// produce bitwise-identical scores.
double row_dot(std::span<const double> a, std::span<const double> b);

double row_norm(std::span<const double> r);

// Throws NotNormalized when any row norm deviates from 1 by more than 1e-6.
void require_unit_rows(const EmbeddingMatrix& m, const char* what);

bool all_finite(const EmbeddingMatrix& m);

// Returns a copy with every row scaled to unit length and the `normalized`
// flag set. Throws ZeroRow for rows with norm <= 1e-12.
EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m);

// 1 when the two class ids are equal, else 0.
double semantic_similarity(std::int32_t y_i, std::int32_t y_j);

// (a_i . a_j + 1) / 2 for unit vectors; result in [0, 1].
double appearance_similarity(std::span<const double> a_i, std::span<const double> a_j);

// Product of the semantic and appearance similarities: zero whenever the
// class ids differ, otherwise equal to the appearance term.
double combined_similarity(std::span<const double> a_i, std::int32_t y_i,
                           std::span<const double> a_j, std::int32_t y_j);

// Combined-similarity scores of one query row against the whole gallery.
// scores[j] with j == query is the query against itself (flagged self).
struct ScoreRow {
    std::size_t query = 0;
    std::vector<double> scores;

    bool is_self(std::size_t j) const { return j == query; }
};

std::vector<ScoreRow> pairwise_combined(const EmbeddingMatrix& m, const LabelVector& labels,
                                        std::span<const std::size_t> queries);

}  // namespace scan
