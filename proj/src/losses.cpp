#include "scan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace scan {

namespace {

void check_temperature(double tau) {
    if (!(tau > 0.0)) throw BadTemperature("temperature must be > 0, got " + std::to_string(tau));
}

// Max-shifted log-sum-exp over `scores`; also fills `weights` with the
// softmax weights exp(s_t) / sum (used for the denominator gradients).
double log_sum_exp(std::span<const double> scores, std::span<double> weights) {
    double max_score = -std::numeric_limits<double>::infinity();
    for (double s : scores) max_score = std::max(max_score, s);
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        weights[i] = std::exp(scores[i] - max_score);
        total += weights[i];
    }
    for (std::size_t i = 0; i < scores.size(); ++i) weights[i] /= total;
    return max_score + std::log(total);
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void check_batch(const PseudoLabeledBatch& batch, const EmbeddingMatrix& bank) {
    const std::size_t n = batch.f.n;
    if (batch.g.n != n || batch.f.d != batch.g.d) {
        throw DimensionMismatch("loss: f and g embeddings must have matching shapes");
    }
    if (batch.pseudo_labels.size() != n || batch.is_anchor.size() != n) {
        throw DimensionMismatch("loss: labels/anchor flags must match the batch size");
    }
    if (bank.n > 0 && bank.d != batch.f.d) {
        throw DimensionMismatch("loss: bank dimension does not match the embeddings");
    }
    if (n == 0) throw DimensionMismatch("loss: empty batch");
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
    if (values.empty()) return 0.0;
    if (values.size() == 1) return values[0];
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.subspan(0, half)) + pairwise_sum(values.subspan(half));
}

LossOutput moco_loss(std::span<const double> f_q, std::span<const double> g_k,
                     const EmbeddingMatrix& bank, double tau, const LossConfig& config) {
    check_temperature(tau);
    if (f_q.size() != g_k.size()) {
        throw DimensionMismatch("moco_loss: query and key dimensions differ");
    }
    if (bank.n == 0) throw EmptyBank("moco_loss: bank has no entries");
    if (bank.d != f_q.size()) {
        throw DimensionMismatch("moco_loss: bank dimension does not match the query");
    }

    const std::size_t dim = f_q.size();
    const double positive = row_dot(f_q, g_k) / tau;

    const bool with_positive = config.denominator == DenominatorMode::InfoNce;
    const std::size_t terms = bank.n + (with_positive ? 1 : 0);
    std::vector<double> scores(terms);
    for (std::size_t l = 0; l < bank.n; ++l) scores[l] = row_dot(f_q, bank.row(l)) / tau;
    if (with_positive) scores[bank.n] = positive;

    std::vector<double> weights(terms);
    const double lse = log_sum_exp(scores, weights);

    LossOutput out;
    out.value = -positive + lse;
    out.grad_f = EmbeddingMatrix(1, dim);
    out.grad_g = EmbeddingMatrix(1, dim);

    auto gf = out.grad_f.row(0);
    axpy(-1.0 / tau, g_k, gf);
    for (std::size_t l = 0; l < bank.n; ++l) axpy(weights[l] / tau, bank.row(l), gf);
    if (with_positive) axpy(weights[bank.n] / tau, g_k, gf);

    auto gg = out.grad_g.row(0);
    const double key_weight = with_positive ? weights[bank.n] : 0.0;
    axpy((-1.0 + key_weight) / tau, f_q, gg);
    return out;
}

LossOutput scan_loss(const PseudoLabeledBatch& batch, const EmbeddingMatrix& bank, double tau,
                     const LossConfig& config) {
    check_temperature(tau);
    check_batch(batch, bank);

    const std::size_t n = batch.size();
    const std::size_t dim = batch.f.d;

    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < n; ++i) {
        if (batch.is_anchor[i]) anchors.push_back(i);
    }
    if (anchors.empty()) throw DimensionMismatch("loss: batch has no anchors");

    LossOutput out;
    out.grad_f = EmbeddingMatrix(n, dim);
    out.grad_g = EmbeddingMatrix(n, dim);

    std::vector<double> anchor_losses(anchors.size());
    std::vector<double> batch_scores(n);
    std::vector<double> bank_scores(bank.n);
    std::vector<double> denom_scores;
    std::vector<double> weights;
    std::vector<std::size_t> negatives;
    std::vector<std::size_t> positives;

    const double inv_anchors = 1.0 / static_cast<double>(anchors.size());

    for (std::size_t a = 0; a < anchors.size(); ++a) {
        const std::size_t i = anchors[a];
        const auto f_i = batch.f.row(i);
        const std::int32_t group = batch.pseudo_labels[i];

        for (std::size_t t = 0; t < n; ++t) batch_scores[t] = row_dot(f_i, batch.g.row(t)) / tau;
        for (std::size_t l = 0; l < bank.n; ++l) bank_scores[l] = row_dot(f_i, bank.row(l)) / tau;

        positives.clear();
        negatives.clear();
        for (std::size_t t = 0; t < n; ++t) {
            (batch.pseudo_labels[t] == group ? positives : negatives).push_back(t);
        }
        if (negatives.empty() && bank.n == 0) {
            throw EmptyNegativeSet("scan_loss: anchor " + std::to_string(i) +
                                   " has no negatives and the bank is empty");
        }

        denom_scores.clear();
        for (std::size_t t : negatives) denom_scores.push_back(batch_scores[t]);
        for (std::size_t l = 0; l < bank.n; ++l) denom_scores.push_back(bank_scores[l]);

        const double inv_p = 1.0 / static_cast<double>(positives.size());
        const double anchor_scale = inv_anchors;

        if (config.denominator == DenominatorMode::Paper) {
            weights.resize(denom_scores.size());
            const double lse = log_sum_exp(denom_scores, weights);

            double positive_sum = 0.0;
            for (std::size_t j : positives) positive_sum += batch_scores[j];
            anchor_losses[a] = -inv_p * positive_sum + lse;

            // d/d f_i: softmax-weighted negatives minus the mean positive key.
            auto gf = out.grad_f.row(i);
            for (std::size_t t = 0; t < negatives.size(); ++t) {
                axpy(anchor_scale * weights[t] / tau, batch.g.row(negatives[t]), gf);
            }
            for (std::size_t l = 0; l < bank.n; ++l) {
                axpy(anchor_scale * weights[negatives.size() + l] / tau, bank.row(l), gf);
            }
            for (std::size_t j : positives) {
                axpy(-anchor_scale * inv_p / tau, batch.g.row(j), gf);
                axpy(-anchor_scale * inv_p / tau, f_i, out.grad_g.row(j));
            }
            for (std::size_t t = 0; t < negatives.size(); ++t) {
                axpy(anchor_scale * weights[t] / tau, f_i, out.grad_g.row(negatives[t]));
            }
        } else {
            // InfoNce: each positive term carries its own denominator with
            // that positive appended to the shared negative scores.
            double loss_i = 0.0;
            auto gf = out.grad_f.row(i);
            denom_scores.push_back(0.0);  // slot for the current positive
            weights.resize(denom_scores.size());
            for (std::size_t j : positives) {
                denom_scores.back() = batch_scores[j];
                const double lse = log_sum_exp(denom_scores, weights);
                loss_i += -batch_scores[j] + lse;

                const double w_pos = weights.back();
                axpy(anchor_scale * inv_p * (w_pos - 1.0) / tau, batch.g.row(j), gf);
                axpy(anchor_scale * inv_p * (w_pos - 1.0) / tau, f_i, out.grad_g.row(j));
                for (std::size_t t = 0; t < negatives.size(); ++t) {
                    axpy(anchor_scale * inv_p * weights[t] / tau, batch.g.row(negatives[t]), gf);
                    axpy(anchor_scale * inv_p * weights[t] / tau, f_i,
                         out.grad_g.row(negatives[t]));
                }
                for (std::size_t l = 0; l < bank.n; ++l) {
                    axpy(anchor_scale * inv_p * weights[negatives.size() + l] / tau, bank.row(l),
                         gf);
                }
            }
            anchor_losses[a] = inv_p * loss_i;
        }
    }

    out.value = pairwise_sum(anchor_losses) * inv_anchors;
    return out;
}

LossOutput scl_loss(const PseudoLabeledBatch& batch, const EmbeddingMatrix& bank, double tau,
                    const LossConfig& config) {
    return scan_loss(batch, bank, tau, config);
}

}  // namespace scan
