#include "scan/encoder.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "scan/binio.hpp"
#include "scan/rng.hpp"

namespace scan {

namespace {

constexpr char kCheckpointMagic[5] = "SCNC";
constexpr std::uint8_t kCheckpointVersion = 0x01;
constexpr double kFiniteDiffStep = 1e-5;

void check_sizes(std::span<const std::size_t> layer_sizes) {
    if (layer_sizes.size() < 2) {
        throw BadShape("encoder needs at least an input and an output size");
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) throw BadShape("layer sizes must be >= 1");
    }
}

// out = batch * W^T + b, one affine layer over all rows.
void affine_forward(const LayerParams& layer, const EmbeddingMatrix& in, EmbeddingMatrix& out) {
    for (std::size_t r = 0; r < in.n; ++r) {
        const double* h = in.values.data() + r * layer.in;
        double* a = out.values.data() + r * layer.out;
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double* w = layer.weights.data() + o * layer.in;
            double sum = layer.bias[o];
            for (std::size_t k = 0; k < layer.in; ++k) sum += w[k] * h[k];
            a[o] = sum;
        }
    }
}

void relu_inplace(EmbeddingMatrix& m) {
    for (double& v : m.values) v = v > 0.0 ? v : 0.0;
}

}  // namespace

EncoderParams init_params(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
    check_sizes(layer_sizes);
    EncoderParams params;
    params.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        LayerParams layer;
        layer.in = layer_sizes[l];
        layer.out = layer_sizes[l + 1];
        layer.weights.resize(layer.in * layer.out);
        layer.bias.assign(layer.out, 0.0);
        const double sigma = 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (double& w : layer.weights) w = sigma * rng.gaussian();
        params.layers.push_back(std::move(layer));
    }
    return params;
}

EncoderParams zeros_like(const EncoderParams& params) {
    EncoderParams z;
    z.layer_sizes = params.layer_sizes;
    for (const auto& layer : params.layers) {
        LayerParams zl;
        zl.in = layer.in;
        zl.out = layer.out;
        zl.weights.assign(layer.weights.size(), 0.0);
        zl.bias.assign(layer.bias.size(), 0.0);
        z.layers.push_back(std::move(zl));
    }
    return z;
}

ForwardResult forward(const EncoderParams& params, const EmbeddingMatrix& batch) {
    if (batch.d != params.input_dim()) {
        throw DimensionMismatch("forward: batch dimension " + std::to_string(batch.d) +
                                " does not match encoder input " +
                                std::to_string(params.input_dim()));
    }

    ForwardResult result;
    ForwardCache& cache = result.cache;
    cache.layer_sizes = params.layer_sizes;
    cache.input = batch;

    const std::size_t num_layers = params.layers.size();
    const EmbeddingMatrix* current = &cache.input;
    for (std::size_t l = 0; l < num_layers; ++l) {
        EmbeddingMatrix pre(batch.n, params.layers[l].out);
        affine_forward(params.layers[l], *current, pre);
        cache.pre.push_back(pre);
        if (l + 1 < num_layers) relu_inplace(pre);
        cache.post.push_back(std::move(pre));
        current = &cache.post.back();
    }

    // Row L2 normalization of the last layer output.
    const EmbeddingMatrix& final_pre = cache.post.back();
    cache.row_norms.resize(batch.n);
    EmbeddingMatrix out(batch.n, final_pre.d);
    for (std::size_t r = 0; r < batch.n; ++r) {
        const double norm = row_norm(final_pre.row(r));
        if (norm <= 1e-12) throw ZeroRow(r);
        cache.row_norms[r] = norm;
        const auto src = final_pre.row(r);
        auto dst = out.row(r);
        for (std::size_t j = 0; j < out.d; ++j) dst[j] = src[j] / norm;
    }
    out.normalized = true;
    result.embeddings = std::move(out);
    return result;
}

EncoderParams backward(const EncoderParams& params, const ForwardCache& cache,
                       const EmbeddingMatrix& grad_embeddings) {
    if (cache.layer_sizes != params.layer_sizes) {
        throw StaleCache("backward: cache was built for a different encoder shape");
    }
    const std::size_t n = cache.input.n;
    if (grad_embeddings.n != n || grad_embeddings.d != params.output_dim()) {
        throw StaleCache("backward: gradient shape does not match the cached forward");
    }

    EncoderParams grads = zeros_like(params);
    const std::size_t num_layers = params.layers.size();

    // Through the normalization: y = x / |x|, dL/dx = (u - (u.y) y) / |x|.
    const EmbeddingMatrix& final_pre = cache.post.back();
    EmbeddingMatrix delta(n, params.output_dim());
    for (std::size_t r = 0; r < n; ++r) {
        const double norm = cache.row_norms[r];
        const auto x = final_pre.row(r);
        const auto u = grad_embeddings.row(r);
        const double radial = row_dot(u, x) / (norm * norm);
        auto dst = delta.row(r);
        for (std::size_t j = 0; j < delta.d; ++j) dst[j] = (u[j] - radial * x[j]) / norm;
    }

    for (std::size_t l = num_layers; l-- > 0;) {
        const LayerParams& layer = params.layers[l];
        const EmbeddingMatrix& below = l == 0 ? cache.input : cache.post[l - 1];
        LayerParams& g = grads.layers[l];

        for (std::size_t r = 0; r < n; ++r) {
            const double* d = delta.values.data() + r * layer.out;
            const double* h = below.values.data() + r * layer.in;
            for (std::size_t o = 0; o < layer.out; ++o) {
                g.bias[o] += d[o];
                double* gw = g.weights.data() + o * layer.in;
                const double dv = d[o];
                for (std::size_t k = 0; k < layer.in; ++k) gw[k] += dv * h[k];
            }
        }

        if (l == 0) break;
        EmbeddingMatrix next_delta(n, layer.in);
        for (std::size_t r = 0; r < n; ++r) {
            const double* d = delta.values.data() + r * layer.out;
            double* nd = next_delta.values.data() + r * layer.in;
            for (std::size_t o = 0; o < layer.out; ++o) {
                const double* w = layer.weights.data() + o * layer.in;
                const double dv = d[o];
                for (std::size_t k = 0; k < layer.in; ++k) nd[k] += dv * w[k];
            }
            // Rectifier gate of the layer below (derivative 0 at the kink).
            const double* a = cache.pre[l - 1].values.data() + r * layer.in;
            for (std::size_t k = 0; k < layer.in; ++k) {
                if (a[k] <= 0.0) nd[k] = 0.0;
            }
        }
        delta = std::move(next_delta);
    }
    return grads;
}

EmbeddingMatrix embed(const EncoderParams& params, const EmbeddingMatrix& batch, FeatureTap tap) {
    if (tap == FeatureTap::Final) return forward(params, batch).embeddings;
    if (params.layers.size() < 2) {
        throw BadShape("penultimate tap needs at least one hidden layer");
    }
    ForwardResult result = forward(params, batch);
    const EmbeddingMatrix& hidden = result.cache.post[params.layers.size() - 2];
    return l2_normalize_rows(hidden);
}

MomentumPair MomentumPair::make(EncoderParams params, double momentum) {
    MomentumPair pair;
    pair.key = params;
    pair.query = std::move(params);
    pair.momentum = momentum;
    return pair;
}

void momentum_update(MomentumPair& pair) {
    const double m = pair.momentum;
    for (std::size_t l = 0; l < pair.key.layers.size(); ++l) {
        auto& key = pair.key.layers[l];
        const auto& query = pair.query.layers[l];
        for (std::size_t i = 0; i < key.weights.size(); ++i) {
            key.weights[i] = m * key.weights[i] + (1.0 - m) * query.weights[i];
        }
        for (std::size_t i = 0; i < key.bias.size(); ++i) {
            key.bias[i] = m * key.bias[i] + (1.0 - m) * query.bias[i];
        }
    }
}

GradCheckReport gradient_check(const EncoderParams& params, const EmbeddingMatrix& batch,
                               const EmbeddingLossFn& loss_fn, double tolerance) {
    ForwardResult fwd = forward(params, batch);
    auto [value, grad_emb] = loss_fn(fwd.embeddings);
    (void)value;
    const EncoderParams analytic = backward(params, fwd.cache, grad_emb);

    EncoderParams probe = params;
    GradCheckReport report;

    auto check_one = [&](std::size_t layer, std::size_t param_index, double& slot,
                         double analytic_value) {
        const double saved = slot;
        slot = saved + kFiniteDiffStep;
        const double up = loss_fn(forward(probe, batch).embeddings).first;
        slot = saved - kFiniteDiffStep;
        const double down = loss_fn(forward(probe, batch).embeddings).first;
        slot = saved;
        const double numeric = (up - down) / (2.0 * kFiniteDiffStep);
        const double scale = std::max({1.0, std::fabs(analytic_value), std::fabs(numeric)});
        const double rel = std::fabs(analytic_value - numeric) / scale;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_layer = layer;
            report.worst_param = param_index;
        }
    };

    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        auto& layer = probe.layers[l];
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            check_one(l, i, layer.weights[i], analytic.layers[l].weights[i]);
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            check_one(l, layer.weights.size() + i, layer.bias[i], analytic.layers[l].bias[i]);
        }
    }
    report.pass = report.max_rel_error <= tolerance;
    return report;
}

void save_checkpoint(const MomentumPair& pair, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Io("cannot open " + path.string() + " for writing");

    io::write_magic(out, kCheckpointMagic);
    io::write_u8(out, kCheckpointVersion);
    io::write_u32(out, static_cast<std::uint32_t>(pair.query.layer_sizes.size()));
    for (std::size_t s : pair.query.layer_sizes) {
        io::write_u32(out, static_cast<std::uint32_t>(s));
    }
    io::write_f64(out, pair.momentum);
    for (const EncoderParams* enc : {&pair.query, &pair.key}) {
        for (const auto& layer : enc->layers) {
            for (double w : layer.weights) io::write_f64(out, w);
            for (double b : layer.bias) io::write_f64(out, b);
        }
    }
    out.flush();
    if (!out) throw Io("write failed: " + path.string());
}

MomentumPair load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Io("cannot open " + path.string());

    io::expect_magic(in, kCheckpointMagic);
    io::expect_version(in, kCheckpointVersion);
    const std::uint32_t count = io::read_u32(in);
    if (count < 2) throw Io("checkpoint has fewer than two layer sizes");
    std::vector<std::size_t> sizes(count);
    for (auto& s : sizes) s = io::read_u32(in);
    check_sizes(sizes);
    const double momentum = io::read_f64(in);

    MomentumPair pair;
    pair.momentum = momentum;
    for (EncoderParams* enc : {&pair.query, &pair.key}) {
        enc->layer_sizes = sizes;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            LayerParams layer;
            layer.in = sizes[l];
            layer.out = sizes[l + 1];
            layer.weights.resize(layer.in * layer.out);
            layer.bias.resize(layer.out);
            for (double& w : layer.weights) w = io::read_f64(in);
            for (double& b : layer.bias) b = io::read_f64(in);
            enc->layers.push_back(std::move(layer));
        }
    }
    io::expect_eof(in);
    return pair;
}

}  // namespace scan
