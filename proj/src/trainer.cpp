#include "scan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>

namespace scan {

namespace {

// Sub-stream ids for derive_seed, so parameter init, bank init and the
// sampling/augmentation stream stay independent of each other.
enum : std::uint64_t { kStreamParams = 1, kStreamBank = 2, kStreamLoop = 3 };

void append_instance(GroupedBatch& batch, const EmbeddingMatrix& data, std::size_t row,
                     std::int32_t group, bool anchor, const AugmentStrengths& strengths,
                     Rng& rng) {
    batch.source.push_back(static_cast<std::uint32_t>(row));
    batch.pseudo_labels.push_back(group);
    batch.is_anchor.push_back(anchor ? 1 : 0);

    const auto x = data.row(row);
    const std::vector<double> a = augment(x, strengths, rng);
    const std::vector<double> b = augment(x, strengths, rng);
    batch.query_view.values.insert(batch.query_view.values.end(), a.begin(), a.end());
    batch.key_view.values.insert(batch.key_view.values.end(), b.begin(), b.end());
    batch.query_view.n += 1;
    batch.key_view.n += 1;
}

// Mean-over-instances MoCo loss for one batch; the per-query operation in
// losses.hpp stays single-query, this assembles it for the training step.
LossOutput moco_batch_loss(const PseudoLabeledBatch& batch, const EmbeddingMatrix& bank,
                           double tau, const LossConfig& config) {
    const std::size_t n = batch.size();
    LossOutput out;
    out.grad_f = EmbeddingMatrix(n, batch.f.d);
    out.grad_g = EmbeddingMatrix(n, batch.f.d);
    std::vector<double> values(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        LossOutput one = moco_loss(batch.f.row(i), batch.g.row(i), bank, tau, config);
        values[i] = one.value;
        const auto gf = one.grad_f.row(0);
        const auto gg = one.grad_g.row(0);
        auto dst_f = out.grad_f.row(i);
        auto dst_g = out.grad_g.row(i);
        for (std::size_t j = 0; j < batch.f.d; ++j) {
            dst_f[j] = inv_n * gf[j];
            dst_g[j] = inv_n * gg[j];
        }
    }
    out.value = pairwise_sum(values) * inv_n;
    return out;
}

}  // namespace

void validate_config(const TrainConfig& config) {
    if (config.queries_per_batch < 1) throw BadShape("queries_per_batch must be >= 1");
    if (!(config.temperature > 0.0)) throw BadTemperature("temperature must be > 0");
    if (!(config.base_lr > 0.0)) throw BadShape("base_lr must be > 0");
    if (config.sgd_momentum < 0.0 || config.sgd_momentum > 1.0) {
        throw BadShape("sgd_momentum must be in [0, 1]");
    }
    if (config.weight_decay < 0.0) throw BadShape("weight_decay must be >= 0");
    if (config.encoder_momentum < 0.0 || config.encoder_momentum > 1.0) {
        throw BadShape("encoder_momentum must be in [0, 1]");
    }
    if (config.bank_capacity < 1) throw BadShape("bank_capacity must be >= 1");
    if (config.embedding_dim < 1) throw BadShape("embedding_dim must be >= 1");
    if (config.augment.scale_sigma < 0.0 || config.augment.noise_sigma < 0.0) {
        throw BadShape("augmentation sigmas must be >= 0");
    }
    if (config.augment.drop_prob < 0.0 || config.augment.drop_prob > 1.0) {
        throw BadShape("drop_prob must be in [0, 1]");
    }
}

std::vector<double> augment(std::span<const double> x, const AugmentStrengths& strengths,
                            Rng& rng) {
    std::vector<double> view(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        view[j] = x[j] * (1.0 + strengths.scale_sigma * rng.gaussian());
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        view[j] += strengths.noise_sigma * rng.gaussian();
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (rng.uniform() < strengths.drop_prob) view[j] = 0.0;
    }
    return view;
}

GroupedBatch build_batch(const EmbeddingMatrix& data, const NeighborTable* table,
                         std::span<const std::size_t> anchors, std::uint32_t k,
                         const AugmentStrengths& strengths, Rng& rng) {
    if (k > 0) {
        if (table == nullptr) throw TableMismatch("batch with k > 0 needs a neighbor table");
        if (table->size() != data.n) {
            throw TableMismatch("neighbor table covers " + std::to_string(table->size()) +
                                " rows, dataset has " + std::to_string(data.n));
        }
        if (table->k < k) {
            throw TableMismatch("neighbor table mined with k=" + std::to_string(table->k) +
                                ", batch requested k=" + std::to_string(k));
        }
    }

    GroupedBatch batch;
    batch.query_view.d = data.d;
    batch.key_view.d = data.d;

    std::int32_t group = 0;
    for (std::size_t anchor : anchors) {
        if (anchor >= data.n) throw IndexOutOfRange("anchor index out of range");
        append_instance(batch, data, anchor, group, true, strengths, rng);
        if (k > 0) {
            const auto& list = table->entries[anchor];
            const std::size_t take = std::min<std::size_t>(k, list.size());
            for (std::size_t r = 0; r < take; ++r) {
                append_instance(batch, data, list[r].index, group, false, strengths, rng);
            }
        }
        ++group;
    }
    return batch;
}

GroupedBatch sample_batch(const EmbeddingMatrix& data, const NeighborTable* table, std::size_t s,
                          std::uint32_t k, const AugmentStrengths& strengths, Rng& rng) {
    if (s < 1 || s > data.n) {
        throw BadShape("sample_batch: s must be in [1, n]");
    }
    // Partial Fisher-Yates: the first s entries of a fresh permutation.
    std::vector<std::size_t> perm = rng.permutation(data.n);
    perm.resize(s);
    return build_batch(data, table, perm, k, strengths, rng);
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
    const double ratio =
        total_steps == 0 ? 0.0 : static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * (1.0 + std::cos(std::numbers::pi * ratio)) / 2.0;
}

void sgd_step(EncoderParams& params, const EncoderParams& grads, EncoderParams& velocity,
              double lr, double momentum, double weight_decay) {
    if (params.layer_sizes != grads.layer_sizes || params.layer_sizes != velocity.layer_sizes) {
        throw ShapeMismatch("sgd_step: parameter/gradient/velocity shapes differ");
    }
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& p = params.layers[l];
        const auto& g = grads.layers[l];
        auto& v = velocity.layers[l];
        for (std::size_t i = 0; i < p.weights.size(); ++i) {
            v.weights[i] = momentum * v.weights[i] + g.weights[i] + weight_decay * p.weights[i];
            p.weights[i] -= lr * v.weights[i];
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            v.bias[i] = momentum * v.bias[i] + g.bias[i] + weight_decay * p.bias[i];
            p.bias[i] -= lr * v.bias[i];
        }
    }
}

TrainResult pretrain(const EmbeddingMatrix& data, const std::vector<std::int32_t>& class_labels,
                     const NeighborTable* table, const TrainConfig& config) {
    validate_config(config);
    if (class_labels.size() != data.n) {
        throw LabelMismatch("pretrain: label count does not match the dataset");
    }
    if (config.mode == TrainMode::Scan && table == nullptr) {
        throw TableMismatch("pretrain: scan mode needs a neighbor table");
    }
    if (data.n == 0) throw BadShape("pretrain: empty dataset");
    const std::size_t worst_batch =
        std::min(config.queries_per_batch, data.n) *
        (config.mode == TrainMode::Scan ? 1 + static_cast<std::size_t>(config.neighbors) : 1);
    if (worst_batch > config.bank_capacity) {
        throw BatchTooLarge("pretrain: a full batch of " + std::to_string(worst_batch) +
                            " instances would not fit the bank (capacity " +
                            std::to_string(config.bank_capacity) + ")");
    }

    std::vector<std::size_t> layer_sizes;
    layer_sizes.push_back(data.d);
    for (std::size_t h : config.hidden_sizes) layer_sizes.push_back(h);
    layer_sizes.push_back(config.embedding_dim);

    TrainResult result;
    result.pair = MomentumPair::make(
        init_params(layer_sizes, derive_seed(config.seed, kStreamParams)),
        config.encoder_momentum);
    EncoderParams velocity = zeros_like(result.pair.query);
    MemoryBank bank(config.bank_capacity, config.embedding_dim, config.bank_init,
                    derive_seed(config.seed, kStreamBank));
    Rng rng(derive_seed(config.seed, kStreamLoop));

    const std::size_t s = std::min(config.queries_per_batch, data.n);
    const std::size_t steps_per_epoch = (data.n + s - 1) / s;
    const std::size_t total_steps = config.epochs * steps_per_epoch;
    const std::uint32_t k = config.mode == TrainMode::Scan ? config.neighbors : 0;
    const LossConfig loss_config{config.denominator};

    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> perm = rng.permutation(data.n);
        std::vector<double> step_losses;
        step_losses.reserve(steps_per_epoch);
        double last_lr = 0.0;

        for (std::size_t begin = 0; begin < data.n; begin += s) {
            const std::size_t end = std::min(data.n, begin + s);
            const std::span<const std::size_t> anchors(perm.data() + begin, end - begin);
            GroupedBatch grouped =
                build_batch(data, k > 0 ? table : nullptr, anchors, k, config.augment, rng);

            PseudoLabeledBatch batch;
            ForwardResult fwd = forward(result.pair.query, grouped.query_view);
            batch.f = std::move(fwd.embeddings);
            batch.g = forward(result.pair.key, grouped.key_view).embeddings;
            batch.is_anchor = grouped.is_anchor;
            if (config.mode == TrainMode::Scl) {
                batch.pseudo_labels.reserve(grouped.size());
                for (std::uint32_t src : grouped.source) {
                    batch.pseudo_labels.push_back(class_labels[src]);
                }
            } else {
                batch.pseudo_labels = grouped.pseudo_labels;
            }

            LossOutput loss;
            const EmbeddingMatrix negatives = bank.negatives_view();
            switch (config.mode) {
                case TrainMode::Moco:
                    loss = moco_batch_loss(batch, negatives, config.temperature, loss_config);
                    break;
                case TrainMode::Scan:
                    loss = scan_loss(batch, negatives, config.temperature, loss_config);
                    break;
                case TrainMode::Scl:
                    loss = scl_loss(batch, negatives, config.temperature, loss_config);
                    break;
            }

            // Backward through the query branch only; the key encoder sees
            // nothing but momentum updates.
            const EncoderParams grads = backward(result.pair.query, fwd.cache, loss.grad_f);
            last_lr = cosine_lr(global_step, total_steps, config.base_lr);
            sgd_step(result.pair.query, grads, velocity, last_lr, config.sgd_momentum,
                     config.weight_decay);
            momentum_update(result.pair);
            bank.enqueue(batch.g);

            step_losses.push_back(loss.value);
            ++global_step;
        }

        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - t0;
        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = pairwise_sum(step_losses) / static_cast<double>(step_losses.size());
        stats.lr = last_lr;
        stats.bank_occupancy = bank.occupancy();
        stats.wall_seconds = elapsed.count();
        result.log.push_back(stats);
    }
    return result;
}

void write_train_log_csv(const std::vector<EpochStats>& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Io("cannot open " + path.string() + " for writing");
    out << "epoch,mean_loss,lr,bank_occupancy,wall_seconds\n";
    char line[160];
    for (const auto& row : log) {
        std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%zu,%.3f\n", row.epoch, row.mean_loss,
                      row.lr, row.bank_occupancy, row.wall_seconds);
        out << line;
    }
    if (!out) throw Io("write failed: " + path.string());
}

}  // namespace scan
