#pragma once

#include "vqann/quantizer.hpp"

namespace vqann {

struct SparseConfig {
    TrainConfig train;
    /// Maximum nonzero entries over all dictionaries; 0 selects K*D.
    std::size_t s_budget = 0;
    double lambda = 0.0;
    /// Outer iterations of the L1 phase and of the support-constrained refit.
    std::size_t sparsify_iters = 15;
    std::size_t refit_iters = 15;
    /// Coordinate sweeps over the dictionary between two encoding passes.
    std::size_t coordinate_sweeps = 6;
};

/// Minimizer of 0.5*alpha*c^2 + beta*c + lambda*|c| (soft threshold of
/// -beta/alpha at lambda/alpha). Requires alpha > 0.
double soft_threshold_update(double alpha, double beta, double lambda);

struct EntryCoefficients {
    double alpha = 0.0;
    double beta = 0.0;
    std::size_t assigned = 0;
};

/// Quadratic coefficients of the penalized objective restricted to the single
/// entry c_{m,k,d}: phi(c) = 0.5*alpha*c^2 + beta*c + const, with alpha and
/// beta evaluated at c = 0 over the points assigned element (m, k).
EntryCoefficients sparse_coefficients(const CodebookSet& codebooks, std::size_t m, std::size_t k, std::size_t d,
                                      const CodeSet& codes, const Dataset& data, double mu, double epsilon);

/// Sparse near-orthogonal composite quantization: L1 coordinate descent,
/// then a refit restricted to the S largest-magnitude entries.
TrainedQuantizer train_snocq(const Dataset& data, std::size_t m, std::size_t k, const SparseConfig& config);

/// Default lambda grid {1e-3, 1e-2, 1e-1, 1} * (PQ error / (N * D)).
std::vector<double> default_lambda_grid(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config);

struct LambdaSelection {
    double lambda = 0.0;
    std::vector<double> grid;
    std::vector<double> scores;
};

/// Validation over lambda with mu fixed, scored like select_mu.
LambdaSelection select_lambda(const Dataset& data, std::size_t m, std::size_t k, const SparseConfig& config,
                              std::vector<double> grid = {});

/// Compressed-row dictionary elements: one row per element (m, k).
struct SparseCodebooks {
    std::size_t m = 0;
    std::size_t k = 0;
    std::size_t d = 0;
    std::vector<std::uint32_t> row_ptr;
    std::vector<std::uint32_t> cols;
    std::vector<double> values;
    std::vector<double> norms2;

    static SparseCodebooks from_dense(const CodebookSet& codebooks);
    CodebookSet to_dense() const;
    std::size_t nnz() const { return values.size(); }
};

}  // namespace vqann
