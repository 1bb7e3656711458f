#pragma once

#include "tedl/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace tedl {

struct Dataset {
    Matrix features;  // n x d
    Matrix labels;    // n x K, rows are distributions
    std::string name;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return features.rows(); }
    std::size_t dims() const noexcept { return features.cols(); }
    std::size_t classes() const noexcept { return labels.cols(); }
    // Argmax class of each label row.
    std::vector<std::size_t> hard_labels() const { return row_argmax(labels); }
    // True when every label row is exactly uniform (feature-only data such as the OOD ring).
    bool features_only() const noexcept;
};

// Throws DataError if shapes disagree, n == 0, features are non-finite or a
// label row does not sum to 1 within 1e-9.
void validate(const Dataset& ds);

struct BlobParams {
    std::size_t n = 1000;
    std::size_t dims = 2;
    std::size_t classes = 2;
    double separation = 4.0;
    double label_noise = 0.0;
    bool soft = false;
    std::uint64_t seed = 0;
};

/// Cluster centres of the blob mixture (K x d). Every pair of adjacent centres
/// is `separation` apart: +-separation/2 on axis 0 for K = 2, a scaled simplex
/// for d >= K, a regular polygon in the first two axes otherwise.
Matrix blob_means(std::size_t dims, std::size_t classes, double separation);

/// Equal-weight mixture of unit-variance isotropic Gaussians centred at
/// blob_means(). Hard labels are flipped to a uniformly chosen other class
/// with probability label_noise. With `soft`, each label row is instead the
/// posterior of the observed label given x under that same generating process.
Dataset gen_blobs(const BlobParams& params);

/// Points on the sphere of the given radius in d dimensions; labels uniform 1/K.
Dataset gen_ood_ring(std::size_t n, std::size_t dims, double radius, std::uint64_t seed, std::size_t classes = 2);

// Flips each hard label to a uniformly chosen other class with probability `rate`.
// Soft rows are hardened first.
Dataset with_label_noise(const Dataset& ds, double rate, std::uint64_t seed);

/// CSV with header f0..f{d-1},y0..y{K-1}; values written with 17 significant digits.
void save_csv(const Dataset& ds, const std::filesystem::path& path);
std::string to_csv(const Dataset& ds);
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text, const std::string& name = "csv");

struct SplitSpec {
    double train_fraction = 0.8;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// Stratified (by argmax label) seeded split into disjoint train/validation parts.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

enum class NoiseScope { train, all };

/// Blob dataset split into train and validation parts. With hard labels and
/// NoiseScope::train, the label noise is applied to the training part only so
/// validation labels stay clean. Soft labels always carry the noise model.
std::pair<Dataset, Dataset> blob_task(const BlobParams& params, const SplitSpec& split_spec,
                                      NoiseScope scope = NoiseScope::train);

} // namespace tedl
