#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scan/embedding.hpp"

namespace scan {

// Flat-vector dataset with class labels and optional latent mode labels.
// Features are f32 (the on-disk precision); widen to an EmbeddingMatrix for
// any numeric work.
struct VectorDataset {
    std::uint32_t n = 0;
    std::uint32_t d = 0;
    std::vector<float> features;
    std::vector<std::int32_t> labels;
    std::vector<std::int32_t> modes;  // empty when absent
    std::string provenance;           // free-form note, not serialized

    bool has_modes() const { return !modes.empty(); }
};

// Two-level synthetic benchmark: class centers on a sphere, mode centers
// offset from their class center, samples as Gaussian clouds around the mode
// centers. Classes share a label but split into appearance modes, so probes
// can measure semantic and appearance structure separately.
struct SyntheticSpec {
    std::uint32_t classes = 10;
    std::uint32_t modes_per_class = 4;
    std::uint32_t dim = 64;
    std::uint32_t samples_per_mode = 200;
    double class_center_radius = 1.0;
    double mode_offset_radius = 0.5;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;
};

VectorDataset generate_synthetic(const SyntheticSpec& spec);

// SCNV file: magic "SCNV", version 0x01, u32 n, u32 d, flags byte
// (bit0 = has modes), n*d f32 rows, n i32 class labels, then n i32 mode
// labels when flagged. Little-endian throughout.
void write_dataset(const VectorDataset& dataset, const std::filesystem::path& path);
VectorDataset read_dataset(const std::filesystem::path& path);

// SCNE file: same header with the flags byte reserved as 0, then n*d f32
// rows. No labels.
void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

EmbeddingMatrix features_as_matrix(const VectorDataset& dataset);
LabelVector labels_of(const VectorDataset& dataset);

}  // namespace scan
