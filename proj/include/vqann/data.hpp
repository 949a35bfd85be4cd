#pragma once

#include "vqann/common.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vqann {

/// N x D real vectors. Immutable after construction; every row is finite.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(Matrix vectors);

    std::size_t n() const { return static_cast<std::size_t>(vectors_.rows()); }
    std::size_t d() const { return static_cast<std::size_t>(vectors_.cols()); }
    const Matrix& vectors() const { return vectors_; }
    std::span<const double> row(std::size_t i) const { return row_span(vectors_, static_cast<Eigen::Index>(i)); }

    /// Rows selected by `ids`, in order.
    Dataset subset(std::span<const std::size_t> ids) const;

private:
    Matrix vectors_;
};

/// N_q x t_max neighbor ids, each row ordered best-first.
struct GroundTruth {
    std::size_t queries = 0;
    std::size_t width = 0;
    std::vector<std::uint32_t> neighbors;

    std::span<const std::uint32_t> row(std::size_t q) const { return {neighbors.data() + q * width, width}; }
};

enum class ElementKind { float32, uint8, int32 };

enum class Metric { euclidean, inner_product };

/// Reads a TEXMEX container (.fvecs/.bvecs/.ivecs).
Dataset read_vecs(const std::filesystem::path& path, ElementKind kind);

/// Writes a TEXMEX container; throws RangeError if a value does not fit `kind`.
void write_vecs(const Dataset& dataset, const std::filesystem::path& path, ElementKind kind);

/// Integer rows (e.g. ground truth) as ivecs.
void write_ivecs(const std::filesystem::path& path, std::span<const std::uint32_t> values, std::size_t width);
GroundTruth read_groundtruth(const std::filesystem::path& path);
void write_groundtruth(const GroundTruth& gt, const std::filesystem::path& path);

/// Guesses the element kind from the file extension (.fvecs/.bvecs/.ivecs).
ElementKind element_kind_from_path(const std::filesystem::path& path);

/// Gaussian mixture: `n_clusters` centers drawn uniformly in [0,1]^d, isotropic
/// stddev `spread`. Pure function of its arguments.
Dataset synth_mixture(std::size_t n, std::size_t d, std::size_t n_clusters, double spread, std::uint64_t seed);

/// Exact top-`t_max` by linear scan; ties go to the lower base index.
GroundTruth brute_force_groundtruth(const Dataset& base, const Dataset& queries, std::size_t t_max,
                                    Metric metric = Metric::euclidean);

}  // namespace vqann
