#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "scan/embedding.hpp"

namespace scan {

// Cosine k-NN majority vote on frozen embeddings. Neighbor ties break toward
// the lower train index, vote ties toward the lower class id.
double knn_probe(const EmbeddingMatrix& train, const std::vector<std::int32_t>& train_labels,
                 const EmbeddingMatrix& test, const std::vector<std::int32_t>& test_labels,
                 std::size_t k);

struct LinearProbeConfig {
    double learning_rate = 1.0;
    std::size_t max_iterations = 2000;
    double gradient_tolerance = 1e-6;
};

struct LinearProbeResult {
    double accuracy = 0.0;
    bool converged = false;
    bool degenerate = false;  // single-class training set
    std::size_t iterations = 0;
    double final_objective = 0.0;
    double final_gradient_norm = 0.0;
    std::vector<double> objective_trace;  // per accepted iteration, non-increasing
};

// Multinomial logistic regression on frozen embeddings, full-batch gradient
// descent with step halving whenever a step would increase the objective.
// Runs until the gradient max-norm drops below the tolerance or the
// iteration budget is spent (reported via `converged`, not an error).
LinearProbeResult linear_probe(const EmbeddingMatrix& train,
                               const std::vector<std::int32_t>& train_labels,
                               const EmbeddingMatrix& test,
                               const std::vector<std::int32_t>& test_labels,
                               const LinearProbeConfig& config = {});

struct RetrievalEntry {
    std::size_t query = 0;
    std::vector<std::uint32_t> retrieved;  // top-k gallery indices, self excluded
    double class_purity = 0.0;
    double mode_purity = 0.0;  // meaningful only when the report has modes
    double joint_purity = 0.0;
};

struct PurityReport {
    std::size_t k = 0;
    bool has_modes = false;
    std::vector<RetrievalEntry> per_query;
    double mean_class_purity = 0.0;
    double mean_mode_purity = 0.0;
    double mean_joint_purity = 0.0;
};

// Cosine top-k retrieval per query with class / mode / joint purity. k is
// clamped to gallery size minus one (the query itself is never returned).
PurityReport retrieval_report(const EmbeddingMatrix& gallery, const LabelVector& labels,
                              std::span<const std::size_t> queries, std::size_t k);

// Per-query CSV rows; mode columns appear only when the report has modes.
void write_report_csv(const PurityReport& report, const std::filesystem::path& path);

}  // namespace scan
