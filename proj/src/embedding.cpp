#include "scan/embedding.hpp"

#include <cmath>
#include <string>

namespace scan {

namespace {
constexpr double kZeroRowTolerance = 1e-12;
constexpr double kUnitTolerance = 1e-6;
}  // namespace

__attribute__((noinline)) double row_dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

double row_norm(std::span<const double> r) { return std::sqrt(row_dot(r, r)); }

void require_unit_rows(const EmbeddingMatrix& m, const char* what) {
    for (std::size_t i = 0; i < m.n; ++i) {
        if (std::fabs(row_norm(m.row(i)) - 1.0) > kUnitTolerance) {
            throw NotNormalized(std::string(what) + ": row " + std::to_string(i) +
                                " is not unit length");
        }
    }
}

bool all_finite(const EmbeddingMatrix& m) {
    for (double v : m.values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m) {
    EmbeddingMatrix out(m.n, m.d);
    for (std::size_t i = 0; i < m.n; ++i) {
        const double norm = row_norm(m.row(i));
        if (norm <= kZeroRowTolerance) throw ZeroRow(i);
        const auto src = m.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < m.d; ++j) dst[j] = src[j] / norm;
    }
    out.normalized = true;
    return out;
}

double semantic_similarity(std::int32_t y_i, std::int32_t y_j) {
    return y_i == y_j ? 1.0 : 0.0;
}

double appearance_similarity(std::span<const double> a_i, std::span<const double> a_j) {
    if (a_i.size() != a_j.size()) {
        throw DimensionMismatch("appearance_similarity: vectors of dimension " +
                                std::to_string(a_i.size()) + " and " + std::to_string(a_j.size()));
    }
    if (std::fabs(row_norm(a_i) - 1.0) > kUnitTolerance ||
        std::fabs(row_norm(a_j) - 1.0) > kUnitTolerance) {
        throw NotNormalized("appearance_similarity: inputs must be unit vectors");
    }
    return (row_dot(a_i, a_j) + 1.0) / 2.0;
}

double combined_similarity(std::span<const double> a_i, std::int32_t y_i,
                           std::span<const double> a_j, std::int32_t y_j) {
    return semantic_similarity(y_i, y_j) * appearance_similarity(a_i, a_j);
}

std::vector<ScoreRow> pairwise_combined(const EmbeddingMatrix& m, const LabelVector& labels,
                                        std::span<const std::size_t> queries) {
    if (labels.size() != m.n) {
        throw LabelMismatch("pairwise_combined: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(m.n) + " rows");
    }
    require_unit_rows(m, "pairwise_combined");

    std::vector<ScoreRow> table;
    table.reserve(queries.size());
    for (std::size_t q : queries) {
        if (q >= m.n) {
            throw IndexOutOfRange("pairwise_combined: query " + std::to_string(q) +
                                  " out of range for gallery of " + std::to_string(m.n));
        }
        ScoreRow row;
        row.query = q;
        row.scores.resize(m.n);
        const auto qr = m.row(q);
        for (std::size_t j = 0; j < m.n; ++j) {
            row.scores[j] = labels.labels[q] == labels.labels[j]
                                ? (row_dot(qr, m.row(j)) + 1.0) / 2.0
                                : 0.0;
        }
        table.push_back(std::move(row));
    }
    return table;
}

}  // namespace scan
