#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "scan/encoder.hpp"
#include "scan/losses.hpp"
#include "scan/memory_bank.hpp"

using namespace scan;

namespace {

double params_distance(const EncoderParams& a, const EncoderParams& b) {
    double sum = 0.0;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        for (std::size_t i = 0; i < a.layers[l].weights.size(); ++i) {
            const double diff = a.layers[l].weights[i] - b.layers[l].weights[i];
            sum += diff * diff;
        }
        for (std::size_t i = 0; i < a.layers[l].bias.size(); ++i) {
            const double diff = a.layers[l].bias[i] - b.layers[l].bias[i];
            sum += diff * diff;
        }
    }
    return std::sqrt(sum);
}

bool params_equal(const EncoderParams& a, const EncoderParams& b) {
    if (a.layer_sizes != b.layer_sizes) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].weights != b.layers[l].weights) return false;
        if (a.layers[l].bias != b.layers[l].bias) return false;
    }
    return true;
}

// Linear probe loss over embeddings: sum of c[i][j] * y[i][j] with fixed
// random coefficients. Its embedding gradient is just c.
struct WeightedSumLoss {
    EmbeddingMatrix coefficients;

    std::pair<double, EmbeddingMatrix> operator()(const EmbeddingMatrix& y) const {
        double value = 0.0;
        for (std::size_t i = 0; i < y.values.size(); ++i) {
            value += coefficients.values[i] * y.values[i];
        }
        return {value, coefficients};
    }
};

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("init_params is deterministic per seed") {
    const std::size_t sizes[3] = {4, 6, 3};
    const EncoderParams a = init_params(sizes, 11);
    const EncoderParams b = init_params(sizes, 11);
    const EncoderParams c = init_params(sizes, 12);
    CHECK(params_equal(a, b));
    CHECK_FALSE(params_equal(a, c));
}

TEST_CASE("init_params rejects bad shapes") {
    const std::size_t zero_layer[2] = {4, 0};
    const std::size_t single[1] = {4};
    CHECK_THROWS_AS(init_params(zero_layer, 0), BadShape);
    CHECK_THROWS_AS(init_params(single, 0), BadShape);
}

TEST_CASE("identity single layer maps a unit row to itself") {
    const std::size_t sizes[2] = {2, 2};
    EncoderParams params = init_params(sizes, 0);
    params.layers[0].weights = {1.0, 0.0, 0.0, 1.0};
    params.layers[0].bias = {0.0, 0.0};

    const EmbeddingMatrix input = test::matrix_from({{1.0, 0.0}});
    const ForwardResult out = forward(params, input);
    CHECK(out.embeddings.values[0] == 1.0);
    CHECK(out.embeddings.values[1] == 0.0);
}

TEST_CASE("forward outputs unit rows for any input") {
    Rng rng(21);
    const std::size_t sizes[4] = {5, 7, 6, 3};
    const EncoderParams params = init_params(sizes, 3);
    EmbeddingMatrix batch(9, 5);
    for (double& v : batch.values) v = 2.0 * rng.gaussian();

    const ForwardResult out = forward(params, batch);
    CHECK(out.embeddings.normalized);
    for (std::size_t i = 0; i < out.embeddings.n; ++i) {
        CHECK(std::fabs(row_norm(out.embeddings.row(i)) - 1.0) <= 1e-9);
    }
}

TEST_CASE("hand-computed 2x2 net") {
    const std::size_t sizes[2] = {2, 2};
    EncoderParams params = init_params(sizes, 0);
    params.layers[0].weights = {1.0, 2.0, 3.0, 4.0};  // rows (1,2) and (3,4)
    params.layers[0].bias = {0.5, -0.5};

    const EmbeddingMatrix input = test::matrix_from({{1.0, 1.0}});
    const ForwardResult out = forward(params, input);
    // a = (1+2+0.5, 3+4-0.5) = (3.5, 6.5); |a| = sqrt(54.5)
    const double norm = std::sqrt(54.5);
    CHECK(out.embeddings.values[0] == doctest::Approx(3.5 / norm).epsilon(1e-15));
    CHECK(out.embeddings.values[1] == doctest::Approx(6.5 / norm).epsilon(1e-15));
}

TEST_CASE("forward rejects mismatched input dimension") {
    const std::size_t sizes[2] = {3, 2};
    const EncoderParams params = init_params(sizes, 1);
    const EmbeddingMatrix input(2, 4);
    CHECK_THROWS_AS(forward(params, input), DimensionMismatch);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    Rng rng(4);
    const std::size_t sizes[3] = {4, 5, 3};
    const EncoderParams params = init_params(sizes, 5);
    EmbeddingMatrix batch(3, 4);
    for (double& v : batch.values) v = rng.gaussian();

    const ForwardResult out = forward(params, batch);
    const EmbeddingMatrix zero(out.embeddings.n, out.embeddings.d);
    const EncoderParams grads = backward(params, out.cache, zero);
    for (const auto& layer : grads.layers) {
        for (double w : layer.weights) CHECK(w == 0.0);
        for (double b : layer.bias) CHECK(b == 0.0);
    }
}

TEST_CASE("backward matches finite differences on a random tiny net") {
    Rng rng(17);
    const std::size_t sizes[3] = {4, 6, 3};
    const EncoderParams params = init_params(sizes, 23);
    EmbeddingMatrix batch(5, 4);
    for (double& v : batch.values) v = rng.gaussian();

    WeightedSumLoss loss;
    loss.coefficients = EmbeddingMatrix(5, 3);
    for (double& v : loss.coefficients.values) v = rng.gaussian();

    const GradCheckReport report = gradient_check(params, batch, loss, 1e-6);
    CHECK(report.pass);
    CHECK(report.max_rel_error <= 1e-6);
}

TEST_CASE("normalization gradient of a unit row is orthogonal to it") {
    const std::size_t sizes[2] = {3, 3};
    EncoderParams params = init_params(sizes, 0);
    params.layers[0].weights = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    params.layers[0].bias = {0.0, 0.0, 0.0};

    const EmbeddingMatrix input =
        l2_normalize_rows(test::matrix_from({{0.3, -0.8, 0.52}}));
    const ForwardResult out = forward(params, input);

    EmbeddingMatrix upstream(1, 3);
    upstream.values = {0.7, -0.2, 1.3};
    const EncoderParams grads = backward(params, out.cache, upstream);
    // With an identity layer the bias gradient IS the normalization-backprop
    // of the upstream vector; it must carry no radial component.
    const double radial = grads.layers[0].bias[0] * input.values[0] +
                          grads.layers[0].bias[1] * input.values[1] +
                          grads.layers[0].bias[2] * input.values[2];
    CHECK(std::fabs(radial) <= 1e-12);
}

TEST_CASE("backward detects a stale cache") {
    const std::size_t sizes_a[3] = {4, 5, 3};
    const std::size_t sizes_b[3] = {4, 6, 3};
    const EncoderParams a = init_params(sizes_a, 1);
    const EncoderParams b = init_params(sizes_b, 1);
    EmbeddingMatrix batch(2, 4);
    batch.values.assign(8, 0.5);

    const ForwardResult out = forward(a, batch);
    const EmbeddingMatrix grad(2, 3);
    CHECK_THROWS_AS(backward(b, out.cache, grad), StaleCache);

    const EmbeddingMatrix wrong_shape(3, 3);
    CHECK_THROWS_AS(backward(a, out.cache, wrong_shape), StaleCache);
}

TEST_CASE("gradient_check passes for every loss and fails a perturbed gradient") {
    Rng rng(31);
    const std::size_t sizes[3] = {4, 5, 4};
    const EncoderParams params = init_params(sizes, 7);
    EmbeddingMatrix batch(4, 4);
    for (double& v : batch.values) v = rng.gaussian();

    const EmbeddingMatrix keys = test::random_unit_rows(4, 4, rng);
    MemoryBank bank(6, 4, BankInit::Random, 3);
    const EmbeddingMatrix negatives = bank.negatives_view();

    auto scan_fn = [&](const EmbeddingMatrix& f) {
        PseudoLabeledBatch pl;
        pl.f = f;
        pl.g = keys;
        pl.pseudo_labels = {0, 0, 1, 1};
        pl.is_anchor = {1, 0, 1, 0};
        const LossOutput out = scan_loss(pl, negatives, 0.5);
        return std::make_pair(out.value, out.grad_f);
    };
    auto moco_fn = [&](const EmbeddingMatrix& f) {
        // Mean of per-row losses, matching the trainer's assembly.
        double value = 0.0;
        EmbeddingMatrix grad(f.n, f.d);
        for (std::size_t i = 0; i < f.n; ++i) {
            const LossOutput one = moco_loss(f.row(i), keys.row(i), negatives, 0.5);
            value += one.value / static_cast<double>(f.n);
            for (std::size_t j = 0; j < f.d; ++j) {
                grad.values[i * f.d + j] = one.grad_f.values[j] / static_cast<double>(f.n);
            }
        }
        return std::make_pair(value, grad);
    };
    auto scl_fn = [&](const EmbeddingMatrix& f) {
        PseudoLabeledBatch pl;
        pl.f = f;
        pl.g = keys;
        pl.pseudo_labels = {0, 1, 0, 1};  // true class labels
        pl.is_anchor = {1, 1, 1, 1};
        const LossOutput out = scl_loss(pl, negatives, 0.5);
        return std::make_pair(out.value, out.grad_f);
    };

    CHECK(gradient_check(params, batch, scan_fn, 1e-5).pass);
    CHECK(gradient_check(params, batch, moco_fn, 1e-5).pass);
    CHECK(gradient_check(params, batch, scl_fn, 1e-5).pass);

    // Negative control: a gradient off by 2% must be caught.
    auto broken_fn = [&](const EmbeddingMatrix& f) {
        auto [value, grad] = scan_fn(f);
        for (double& v : grad.values) v *= 1.02;
        return std::make_pair(value, grad);
    };
    CHECK_FALSE(gradient_check(params, batch, broken_fn, 1e-5).pass);
}

TEST_CASE("momentum_update arithmetic") {
    const std::size_t sizes[2] = {1, 1};
    EncoderParams f = init_params(sizes, 0);
    f.layers[0].weights = {2.0};
    f.layers[0].bias = {0.0};

    MomentumPair pair = MomentumPair::make(f, 0.5);
    pair.key.layers[0].weights = {0.0};

    momentum_update(pair);
    CHECK(pair.key.layers[0].weights[0] == 1.0);  // 0.5*0 + 0.5*2

    pair.momentum = 1.0;
    pair.key.layers[0].weights = {0.25};
    momentum_update(pair);
    CHECK(pair.key.layers[0].weights[0] == 0.25);  // unchanged

    pair.momentum = 0.0;
    momentum_update(pair);
    CHECK(pair.key.layers[0].weights[0] == 2.0);  // snapped to theta_f
}

TEST_CASE("momentum_update contracts toward the query params geometrically") {
    Rng rng(2);
    const std::size_t sizes[3] = {3, 4, 2};
    EncoderParams f = init_params(sizes, 10);
    MomentumPair pair = MomentumPair::make(f, 0.9);
    // Displace the key encoder, then watch the gap shrink by m each update.
    for (auto& layer : pair.key.layers) {
        for (double& w : layer.weights) w += rng.gaussian();
        for (double& b : layer.bias) b += rng.gaussian();
    }
    const double initial = params_distance(pair.key, pair.query);
    double expected = initial;
    for (int t = 1; t <= 20; ++t) {
        momentum_update(pair);
        expected *= 0.9;
        CHECK(std::fabs(params_distance(pair.key, pair.query) - expected) <= 1e-9);
    }
}

TEST_CASE("checkpoint round trip is exact") {
    const std::size_t sizes[3] = {4, 8, 3};
    MomentumPair pair = MomentumPair::make(init_params(sizes, 44), 0.97);
    // Make key differ from query so both tensors are exercised.
    momentum_update(pair);
    pair.query.layers[0].weights[0] += 0.125;

    test::TempDir dir("ckpt");
    const auto path = dir.file("pair.scnc");
    save_checkpoint(pair, path);
    const MomentumPair loaded = load_checkpoint(path);
    CHECK(loaded.momentum == pair.momentum);
    CHECK(params_equal(loaded.query, pair.query));
    CHECK(params_equal(loaded.key, pair.key));
}

TEST_CASE("penultimate tap returns normalized hidden features") {
    const std::size_t sizes[3] = {4, 6, 3};
    const EncoderParams params = init_params(sizes, 13);
    EmbeddingMatrix batch(3, 4);
    Rng rng(1);
    for (double& v : batch.values) v = rng.gaussian();

    const EmbeddingMatrix hidden = embed(params, batch, FeatureTap::Penultimate);
    CHECK(hidden.d == 6);
    for (std::size_t i = 0; i < hidden.n; ++i) {
        CHECK(std::fabs(row_norm(hidden.row(i)) - 1.0) <= 1e-9);
    }

    const std::size_t shallow[2] = {4, 3};
    const EncoderParams linear = init_params(shallow, 0);
    CHECK_THROWS_AS(embed(linear, batch, FeatureTap::Penultimate), BadShape);
}

}  // TEST_SUITE
