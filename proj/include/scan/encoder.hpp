#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "scan/embedding.hpp"

namespace scan {

struct LayerParams {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // row-major, out x in
    std::vector<double> bias;     // out
};

// Multilayer perceptron over flat input vectors: affine layers with rectifier
// activations on the hidden layers and row L2 normalization after the last
// layer. layer_sizes = [input, hidden..., output].
struct EncoderParams {
    std::vector<std::size_t> layer_sizes;
    std::vector<LayerParams> layers;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
};

// Fan-in-scaled Gaussian weights (sigma = 1/sqrt(in)), zero biases,
// deterministic per seed.
EncoderParams init_params(std::span<const std::size_t> layer_sizes, std::uint64_t seed);

EncoderParams zeros_like(const EncoderParams& params);

// Intermediates retained by forward for the matching backward call.
struct ForwardCache {
    std::vector<std::size_t> layer_sizes;
    EmbeddingMatrix input;
    std::vector<EmbeddingMatrix> pre;   // pre-activation per layer
    std::vector<EmbeddingMatrix> post;  // post-activation per layer (last = pre-normalization)
    std::vector<double> row_norms;      // norms of the pre-normalization rows
};

struct ForwardResult {
    EmbeddingMatrix embeddings;  // unit rows
    ForwardCache cache;
};

ForwardResult forward(const EncoderParams& params, const EmbeddingMatrix& batch);

// Exact parameter gradients for a batch, including the Jacobian of the row
// normalization. The cache must come from a forward over the same parameter
// shapes and the gradient must match the cached batch shape.
EncoderParams backward(const EncoderParams& params, const ForwardCache& cache,
                       const EmbeddingMatrix& grad_embeddings);

// Which activation `embed` returns; Penultimate taps the last hidden layer
// (L2-normalized) for probing, Final is the regular contrastive feature.
enum class FeatureTap { Final, Penultimate };

EmbeddingMatrix embed(const EncoderParams& params, const EmbeddingMatrix& batch,
                      FeatureTap tap = FeatureTap::Final);

// Query encoder trained by gradient, key encoder updated only by
// theta_g <- m * theta_g + (1 - m) * theta_f.
struct MomentumPair {
    EncoderParams query;
    EncoderParams key;
    double momentum = 0.99;

    static MomentumPair make(EncoderParams params, double momentum);
};

void momentum_update(MomentumPair& pair);

// Scalar loss over forward embeddings: returns (value, gradient w.r.t. the
// embedding matrix).
using EmbeddingLossFn =
    std::function<std::pair<double, EmbeddingMatrix>(const EmbeddingMatrix&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_layer = 0;
    std::size_t worst_param = 0;
    bool pass = false;
};

// Compares analytic parameter gradients of loss(forward(params, batch))
// against central finite differences (step 1e-5) over every parameter.
// Relative error per parameter: |a - n| / max(1, |a|, |n|).
GradCheckReport gradient_check(const EncoderParams& params, const EmbeddingMatrix& batch,
                               const EmbeddingLossFn& loss_fn, double tolerance);

// SCNC checkpoint: magic "SCNC", version 0x01, u32 layer count, layer sizes
// as u32, momentum as f64, then query and key parameters as little-endian
// f64 tensors (per layer: weights row-major, then bias).
void save_checkpoint(const MomentumPair& pair, const std::filesystem::path& path);
MomentumPair load_checkpoint(const std::filesystem::path& path);

}  // namespace scan
