#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selectmix/errors.hpp"
#include "selectmix/rng.hpp"
#include "selectmix/types.hpp"

namespace selectmix {

struct OofPredictions;  // crossval.hpp

// Feature rows plus the observed (possibly corrupted) labels. clean_labels
// are kept when known so flips can be audited; flip_mask[i] is true exactly
// when noisy_labels[i] differs from clean_labels[i].
struct Dataset {
    Matrix features;  // N x d
    std::optional<std::vector<int>> clean_labels;
    std::vector<int> noisy_labels;
    int num_classes = 0;
    std::optional<std::vector<std::uint8_t>> flip_mask;

    // Original image geometry when loaded from IDX; 0 for synthetic data.
    int idx_rows = 0;
    int idx_cols = 0;

    int size() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }
};

enum class NoiseKind { kSymmetric, kAsymmetric, kInstanceDependent };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::kSymmetric;
    double rate = 0.0;
    std::map<int, int> pair_map;  // asymmetric: clean class -> flip target
    double idn_sharpness = 4.0;   // instance-dependent: sigmoid steepness
};

const char* to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

// c -> (c+1) mod C; the stand-in pairing for 10-class image data.
std::map<int, int> cyclic_pair_map(int num_classes);

struct SyntheticSpec {
    int num_classes = 2;
    int per_class_count = 100;
    int dim = 2;
    Matrix means;  // num_classes x dim, pairwise distinct
    double stddev = 1.0;

    void validate() const;
};

// Isotropic Gaussian class blobs with means separated by roughly
// `separation`. Two classes sit at +-separation/2 along the first axis.
SyntheticSpec make_blob_spec(int num_classes, int dim, int per_class, double stddev,
                             double separation, std::uint64_t seed);

// Smooth per-class template images on a side x side grid (sums of random
// Gaussian bumps, values in [0, 0.9]); samples are template + pixel noise.
SyntheticSpec make_image_spec(int num_classes, int side, int per_class, double stddev,
                              std::uint64_t seed);

// IDX ingestion: big-endian magic 0x00000803 (images) / 0x00000801 (labels),
// pixel bytes scaled to [0,1] by /255, labels copied into both clean and
// noisy with an all-false flip mask.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Inverse of load_idx, byte-exact for datasets that came from IDX files.
// noisy_labels are written as the label payload.
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

// per_class_count samples per class from isotropic Gaussians at the given
// means; clean and noisy labels equal, deterministic per seed.
Dataset gen_gaussian(const SyntheticSpec& spec, std::uint64_t seed);

// Label corruption per NoiseSpec; clean labels are preserved and flip_mask
// records exactly the injected flips.
Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec, std::uint64_t seed);

// Replace noisy labels by the out-of-fold surrogate labels; features and
// clean labels untouched, flip_mask recomputed against clean labels.
Dataset relabel_with_oof(const Dataset& ds, const OofPredictions& oof);

// CSV with header feature_0..feature_{d-1},clean_label,noisy_label,flipped.
// clean_label is empty when unknown. Feature values round-trip exactly.
void write_dataset_csv(const Dataset& ds, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

// First n rows (deterministic subset used by the experiment harness).
Dataset take_subset(const Dataset& ds, int n);

}  // namespace selectmix
