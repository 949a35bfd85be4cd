#pragma once

#include "vqann/core.hpp"
#include "vqann/solvers.hpp"

#include <utility>

namespace vqann {

/// Contiguous, disjoint spans covering [0, D). When D % M != 0 the first
/// D % M spans get one extra dimension.
struct SubspaceLayout {
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // (start, length)

    static SubspaceLayout natural(std::size_t d, std::size_t m);
    /// Throws if the spans do not partition [0, d).
    void validate(std::size_t d) const;
};

/// D x D orthogonal matrix mapping original coordinates to the rotated space (x' = R x).
struct Rotation {
    Matrix r;

    static Rotation identity(std::size_t d);
    static Rotation random(std::size_t d, std::uint64_t seed);
    double orthogonality_defect() const;
};

struct PqResult {
    /// Sub-centers zero-padded to full dimension, so cross-dictionary
    /// inner products are exactly zero.
    CodebookSet codebooks;
    CodeSet codes;
    std::vector<double> subspace_errors;
    /// Total error after each Lloyd iteration; subspaces that stopped early hold their last value.
    std::vector<double> error_log;
};

PqResult train_pq(const Dataset& data, std::size_t m, std::size_t k, const SubspaceLayout& layout,
                  std::size_t kmeans_iters, std::uint64_t seed);

struct CkmOptions {
    std::size_t kmeans_iters = 25;
    std::size_t outer_iters = 30;
    /// Lloyd steps per subspace inside each alternation.
    std::size_t lloyd_steps = 1;
    double rel_tol = 1e-5;
    bool random_init = false;
};

struct CkmResult {
    /// Elements mapped back to the original space (R^T applied), so
    /// reconstruction and search need no rotation.
    CodebookSet codebooks;
    Rotation rotation;
    CodeSet codes;
    /// Quantization error after PQ init and after every alternation.
    std::vector<double> error_log;
};

/// Cartesian k-means: PQ in a learned rotated space, alternating PQ encoding
/// and an orthogonal Procrustes rotation update.
CkmResult train_ckm(const Dataset& data, std::size_t m, std::size_t k, const CkmOptions& options,
                    std::uint64_t seed);

}  // namespace vqann
