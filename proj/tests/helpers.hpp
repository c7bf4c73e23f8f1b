#pragma once

// Shared test utilities: matrix builders, a temp-dir guard, and the
// independent scalar-loop loss oracle used to cross-check the production
// losses. The oracle works from raw dot products with naive exp/log, so it
// shares no code path with the implementation.

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "scan/embedding.hpp"
#include "scan/losses.hpp"
#include "scan/rng.hpp"

namespace scan::test {

inline EmbeddingMatrix matrix_from(std::vector<std::vector<double>> rows) {
    EmbeddingMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < m.d; ++j) m.values[i * m.d + j] = rows[i][j];
    }
    return m;
}

inline EmbeddingMatrix random_unit_rows(std::size_t n, std::size_t d, Rng& rng) {
    EmbeddingMatrix m(n, d);
    for (double& v : m.values) v = rng.gaussian();
    return l2_normalize_rows(m);
}

// Unique per-process temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("scan_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::filesystem::path file(const std::string& name) const { return path / name; }
};

// ---------------------------------------------------------------------------
// Scalar loss oracle
// ---------------------------------------------------------------------------

// Per-anchor grouped-batch loss evaluated with plain double loops over raw
// dot products: for every positive j of anchor i,
//   -log( exp(dot_fg[i][j]/tau) / denom_i ),
// averaged over the positives, where denom_i sums exp over different-group
// batch members and all bank rows (plus the current positive for infonce).
struct OracleResult {
    std::vector<double> anchor_losses;
    double mean = 0.0;
};

inline OracleResult scalar_group_loss(const std::vector<std::vector<double>>& dot_fg,
                                      const std::vector<std::vector<double>>& dot_fz,
                                      const std::vector<std::int32_t>& labels,
                                      const std::vector<std::uint8_t>& is_anchor, double tau,
                                      bool infonce) {
    const std::size_t n = labels.size();
    OracleResult result;
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_anchor[i]) continue;
        double denom_base = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            if (labels[t] != labels[i]) denom_base += std::exp(dot_fg[i][t] / tau);
        }
        for (double z : dot_fz[i]) denom_base += std::exp(z / tau);

        double loss = 0.0;
        std::size_t positives = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[j] != labels[i]) continue;
            ++positives;
            const double numerator = std::exp(dot_fg[i][j] / tau);
            const double denom = infonce ? denom_base + numerator : denom_base;
            loss += -std::log(numerator / denom);
        }
        result.anchor_losses.push_back(loss / static_cast<double>(positives));
    }
    for (double v : result.anchor_losses) result.mean += v;
    result.mean /= static_cast<double>(result.anchor_losses.size());
    return result;
}

// Convenience wrapper that extracts the dot tables from embeddings with
// plain loops (no shared similarity code).
inline OracleResult scalar_group_loss(const PseudoLabeledBatch& batch,
                                      const EmbeddingMatrix& bank, double tau, bool infonce) {
    const std::size_t n = batch.size();
    std::vector<std::vector<double>> dot_fg(n, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> dot_fz(n, std::vector<double>(bank.n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < batch.f.d; ++t) {
                s += batch.f.values[i * batch.f.d + t] * batch.g.values[j * batch.g.d + t];
            }
            dot_fg[i][j] = s;
        }
        for (std::size_t l = 0; l < bank.n; ++l) {
            double s = 0.0;
            for (std::size_t t = 0; t < batch.f.d; ++t) {
                s += batch.f.values[i * batch.f.d + t] * bank.values[l * bank.d + t];
            }
            dot_fz[i][l] = s;
        }
    }
    return scalar_group_loss(dot_fg, dot_fz, batch.pseudo_labels, batch.is_anchor, tau, infonce);
}

// Central finite differences of a scalar function of one embedding matrix.
template <typename LossValueFn>
inline EmbeddingMatrix finite_difference_grad(const EmbeddingMatrix& at, LossValueFn fn,
                                              double step = 1e-6) {
    EmbeddingMatrix grad(at.n, at.d);
    EmbeddingMatrix probe = at;
    for (std::size_t i = 0; i < at.values.size(); ++i) {
        const double saved = probe.values[i];
        probe.values[i] = saved + step;
        const double up = fn(probe);
        probe.values[i] = saved - step;
        const double down = fn(probe);
        probe.values[i] = saved;
        grad.values[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

inline double max_rel_error(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double scale = std::max({1.0, std::fabs(a.values[i]), std::fabs(b.values[i])});
        worst = std::max(worst, std::fabs(a.values[i] - b.values[i]) / scale);
    }
    return worst;
}

}  // namespace scan::test
