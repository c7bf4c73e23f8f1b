#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "scan/encoder.hpp"
#include "scan/losses.hpp"
#include "scan/memory_bank.hpp"
#include "scan/mining.hpp"
#include "scan/rng.hpp"

namespace scan {

enum class TrainMode { Moco, Scan, Scl };

struct AugmentStrengths {
    double scale_sigma = 0.1;   // per-coordinate multiplicative jitter
    double noise_sigma = 0.05;  // additive Gaussian noise
    double drop_prob = 0.05;    // coordinate zeroing probability
};

struct TrainConfig {
    std::size_t queries_per_batch = 128;  // anchors per step (S)
    std::uint32_t neighbors = 2;          // positive neighbors per anchor (K)
    double temperature = 0.07;
    double base_lr = 0.05;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t epochs = 100;
    std::size_t bank_capacity = 4096;
    BankInit bank_init = BankInit::Random;
    double encoder_momentum = 0.99;
    AugmentStrengths augment;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::Scan;
    std::vector<std::size_t> hidden_sizes = {128};
    std::size_t embedding_dim = 64;
    DenominatorMode denominator = DenominatorMode::Paper;
};

void validate_config(const TrainConfig& config);

// One sampled training batch: S anchor groups, each anchor followed by its
// mined neighbors, every instance carried as two augmented views. A sample
// pulled into two groups appears as two distinct instances with different
// group ids.
struct GroupedBatch {
    std::vector<std::uint32_t> source;  // dataset row per instance
    EmbeddingMatrix query_view;
    EmbeddingMatrix key_view;
    std::vector<std::int32_t> pseudo_labels;  // batch-local group ids
    std::vector<std::uint8_t> is_anchor;

    std::size_t size() const { return source.size(); }
};

// x * (1 + eps) + additive noise, then random coordinate zeroing. All three
// draws happen for every coordinate regardless of strengths, so the rng
// stream does not depend on the strength values.
std::vector<double> augment(std::span<const double> x, const AugmentStrengths& strengths,
                            Rng& rng);

// Builds a batch from an explicit anchor list (the trainer walks an epoch
// permutation in slices). table may be null when k == 0.
GroupedBatch build_batch(const EmbeddingMatrix& data, const NeighborTable* table,
                         std::span<const std::size_t> anchors, std::uint32_t k,
                         const AugmentStrengths& strengths, Rng& rng);

// Draws s anchors without replacement, then delegates to build_batch.
GroupedBatch sample_batch(const EmbeddingMatrix& data, const NeighborTable* table, std::size_t s,
                          std::uint32_t k, const AugmentStrengths& strengths, Rng& rng);

// base_lr * (1 + cos(pi * step / total_steps)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

// v <- momentum * v + grad + weight_decay * theta;  theta <- theta - lr * v
void sgd_step(EncoderParams& params, const EncoderParams& grads, EncoderParams& velocity,
              double lr, double momentum, double weight_decay);

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
    std::size_t bank_occupancy = 0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    MomentumPair pair;
    std::vector<EpochStats> log;
};

// Full pre-training loop: per step, sample a grouped batch, run the query
// encoder on view-a and the key encoder on view-b, apply the mode-selected
// loss, backprop through the query branch only, SGD step, momentum update,
// then enqueue the key embeddings. Deterministic per (data, config, seed).
TrainResult pretrain(const EmbeddingMatrix& data, const std::vector<std::int32_t>& class_labels,
                     const NeighborTable* table, const TrainConfig& config);

// One CSV row per epoch: epoch, mean_loss, lr, bank_occupancy, wall_seconds.
void write_train_log_csv(const std::vector<EpochStats>& log, const std::filesystem::path& path);

}  // namespace scan
