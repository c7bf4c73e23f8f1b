#include "scan/dataset.hpp"

#include <cmath>
#include <fstream>

#include "scan/binio.hpp"
#include "scan/rng.hpp"

namespace scan {

namespace {

constexpr char kDatasetMagic[5] = "SCNV";
constexpr char kEmbeddingsMagic[5] = "SCNE";
constexpr std::uint8_t kFormatVersion = 0x01;
constexpr std::uint8_t kFlagHasModes = 0x01;

std::vector<double> random_direction(std::size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        for (double& x : v) x = rng.gaussian();
        norm = row_norm(v);
    } while (norm <= 1e-12);
    for (double& x : v) x /= norm;
    return v;
}

void check_spec(const SyntheticSpec& spec) {
    if (spec.classes < 1 || spec.modes_per_class < 1 || spec.dim < 1 ||
        spec.samples_per_mode < 1) {
        throw BadShape("synthetic spec: all counts must be >= 1");
    }
    if (!(spec.class_center_radius > 0.0) || !(spec.mode_offset_radius > 0.0)) {
        throw BadShape("synthetic spec: radii must be > 0");
    }
    if (spec.noise_sigma < 0.0) throw BadShape("synthetic spec: noise sigma must be >= 0");
}

}  // namespace

VectorDataset generate_synthetic(const SyntheticSpec& spec) {
    check_spec(spec);
    Rng rng(spec.seed);

    VectorDataset dataset;
    dataset.n = spec.classes * spec.modes_per_class * spec.samples_per_mode;
    dataset.d = spec.dim;
    dataset.features.reserve(static_cast<std::size_t>(dataset.n) * dataset.d);
    dataset.labels.reserve(dataset.n);
    dataset.modes.reserve(dataset.n);
    dataset.provenance = "synthetic C=" + std::to_string(spec.classes) +
                         " M=" + std::to_string(spec.modes_per_class) +
                         " d=" + std::to_string(spec.dim) +
                         " per_mode=" + std::to_string(spec.samples_per_mode) +
                         " seed=" + std::to_string(spec.seed);

    for (std::uint32_t c = 0; c < spec.classes; ++c) {
        std::vector<double> class_center = random_direction(spec.dim, rng);
        for (double& x : class_center) x *= spec.class_center_radius;

        for (std::uint32_t m = 0; m < spec.modes_per_class; ++m) {
            std::vector<double> mode_center = random_direction(spec.dim, rng);
            for (std::size_t j = 0; j < spec.dim; ++j) {
                mode_center[j] = class_center[j] + spec.mode_offset_radius * mode_center[j];
            }
            for (std::uint32_t s = 0; s < spec.samples_per_mode; ++s) {
                for (std::size_t j = 0; j < spec.dim; ++j) {
                    const double v = mode_center[j] + spec.noise_sigma * rng.gaussian();
                    dataset.features.push_back(static_cast<float>(v));
                }
                dataset.labels.push_back(static_cast<std::int32_t>(c));
                dataset.modes.push_back(
                    static_cast<std::int32_t>(c * spec.modes_per_class + m));
            }
        }
    }
    return dataset;
}

void write_dataset(const VectorDataset& dataset, const std::filesystem::path& path) {
    if (dataset.features.size() != static_cast<std::size_t>(dataset.n) * dataset.d ||
        dataset.labels.size() != dataset.n ||
        (dataset.has_modes() && dataset.modes.size() != dataset.n)) {
        throw BadShape("write_dataset: field lengths do not match n/d");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Io("cannot open " + path.string() + " for writing");

    io::write_magic(out, kDatasetMagic);
    io::write_u8(out, kFormatVersion);
    io::write_u32(out, dataset.n);
    io::write_u32(out, dataset.d);
    io::write_u8(out, dataset.has_modes() ? kFlagHasModes : 0);
    for (float v : dataset.features) io::write_f32(out, v);
    for (std::int32_t v : dataset.labels) io::write_i32(out, v);
    if (dataset.has_modes()) {
        for (std::int32_t v : dataset.modes) io::write_i32(out, v);
    }
    out.flush();
    if (!out) throw Io("write failed: " + path.string());
}

VectorDataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Io("cannot open " + path.string());

    io::expect_magic(in, kDatasetMagic);
    io::expect_version(in, kFormatVersion);

    VectorDataset dataset;
    dataset.n = io::read_u32(in);
    dataset.d = io::read_u32(in);
    const std::uint8_t flags = io::read_u8(in);
    if (flags & ~kFlagHasModes) throw Corrupt("unknown dataset flags");

    const std::size_t count = static_cast<std::size_t>(dataset.n) * dataset.d;
    const std::uintmax_t expected =
        14 + 4 * (count + static_cast<std::size_t>(dataset.n) *
                              ((flags & kFlagHasModes) ? 2 : 1));
    if (std::filesystem::file_size(path) < expected) {
        throw Corrupt("dataset payload shorter than the header announces");
    }
    dataset.features.resize(count);
    try {
        for (auto& v : dataset.features) v = io::read_f32(in);
        dataset.labels.resize(dataset.n);
        for (auto& v : dataset.labels) v = io::read_i32(in);
        if (flags & kFlagHasModes) {
            dataset.modes.resize(dataset.n);
            for (auto& v : dataset.modes) v = io::read_i32(in);
        }
    } catch (const Io&) {
        throw Corrupt("dataset payload shorter than the header announces");
    }
    io::expect_eof(in);

    for (float v : dataset.features) {
        if (!std::isfinite(v)) throw Corrupt("dataset contains non-finite features");
    }
    for (std::int32_t v : dataset.labels) {
        if (v < 0) throw Corrupt("dataset contains negative class labels");
    }
    dataset.provenance = "file " + path.filename().string();
    return dataset;
}

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Io("cannot open " + path.string() + " for writing");

    io::write_magic(out, kEmbeddingsMagic);
    io::write_u8(out, kFormatVersion);
    io::write_u32(out, static_cast<std::uint32_t>(matrix.n));
    io::write_u32(out, static_cast<std::uint32_t>(matrix.d));
    io::write_u8(out, 0);
    for (double v : matrix.values) io::write_f32(out, static_cast<float>(v));
    out.flush();
    if (!out) throw Io("write failed: " + path.string());
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Io("cannot open " + path.string());

    io::expect_magic(in, kEmbeddingsMagic);
    io::expect_version(in, kFormatVersion);
    const std::uint32_t n = io::read_u32(in);
    const std::uint32_t d = io::read_u32(in);
    const std::uint8_t flags = io::read_u8(in);
    if (flags != 0) throw Corrupt("unknown embeddings flags");

    const std::size_t count = static_cast<std::size_t>(n) * d;
    if (std::filesystem::file_size(path) < 14 + 4 * static_cast<std::uintmax_t>(count)) {
        throw Corrupt("embeddings payload shorter than the header announces");
    }
    EmbeddingMatrix matrix(n, d);
    try {
        for (auto& v : matrix.values) v = io::read_f32(in);
    } catch (const Io&) {
        throw Corrupt("embeddings payload shorter than the header announces");
    }
    io::expect_eof(in);
    if (!all_finite(matrix)) throw Corrupt("embeddings contain non-finite values");
    return matrix;
}

EmbeddingMatrix features_as_matrix(const VectorDataset& dataset) {
    EmbeddingMatrix matrix(dataset.n, dataset.d);
    for (std::size_t i = 0; i < dataset.features.size(); ++i) {
        matrix.values[i] = static_cast<double>(dataset.features[i]);
    }
    return matrix;
}

LabelVector labels_of(const VectorDataset& dataset) {
    LabelVector labels;
    labels.labels = dataset.labels;
    labels.modes = dataset.modes;
    return labels;
}

}  // namespace scan
