#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scan/embedding.hpp"

namespace scan {

// Encoder outputs for one grouped batch: f rows come from the query encoder
// on view-a, g rows from the key encoder on view-b, one pseudo-label (group
// id) per instance, and flags marking the anchor instances.
struct PseudoLabeledBatch {
    EmbeddingMatrix f;
    EmbeddingMatrix g;
    std::vector<std::int32_t> pseudo_labels;
    std::vector<std::uint8_t> is_anchor;

    std::size_t size() const { return pseudo_labels.size(); }
};

// Paper: the denominator sums only over different-group batch instances plus
// the bank. InfoNce additionally includes the current positive term, for
// comparison against the standard formulation.
enum class DenominatorMode { Paper, InfoNce };

struct LossConfig {
    DenominatorMode denominator = DenominatorMode::Paper;
};

struct LossOutput {
    double value = 0.0;
    EmbeddingMatrix grad_f;
    EmbeddingMatrix grad_g;
};

// Single-query contrastive loss against the bank:
//   -log( exp(f_q . g_k / tau) / sum_l exp(f_q . z_l / tau) )
// computed via max-shifted log-sum-exp. grad_f/grad_g are 1 x D.
LossOutput moco_loss(std::span<const double> f_q, std::span<const double> g_k,
                     const EmbeddingMatrix& bank, double tau, const LossConfig& config = {});

// Grouped-batch loss, averaged over the anchors. For anchor i with positive
// set P(i) = { j : same pseudo-label }, each positive term is
//   -log( exp(f_i . g_j / tau) / Sim_all_i )
// normalized by |P(i)|, where Sim_all_i sums exp(f_i . g_t / tau) over
// different-group instances t plus exp(f_i . z_l / tau) over the bank.
// Gradients are exact w.r.t. both branches; the trainer uses only grad_f.
LossOutput scan_loss(const PseudoLabeledBatch& batch, const EmbeddingMatrix& bank, double tau,
                     const LossConfig& config = {});

// Identical machinery with the positive sets taken from true class labels
// (batch.pseudo_labels must hold class ids for every batch member).
LossOutput scl_loss(const PseudoLabeledBatch& batch, const EmbeddingMatrix& bank, double tau,
                    const LossConfig& config = {});

// Fixed-structure pairwise tree sum; permutation effects on the reduction
// stay at rounding level regardless of length.
double pairwise_sum(std::span<const double> values);

}  // namespace scan
