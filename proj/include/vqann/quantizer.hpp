#pragma once

#include "vqann/baselines.hpp"
#include "vqann/core.hpp"
#include "vqann/solvers.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace vqann {

enum class Variant : std::uint32_t { PQ = 0, CKM = 1, CQ = 2, OCQ = 3, NOCQ = 4, SNOCQ = 5 };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

/// True for variants whose dictionaries are (near-)orthogonal, i.e. whose
/// search drops the cross term.
bool drops_cross_term(Variant v);

struct QuantizerModel {
    Variant variant = Variant::PQ;
    CodebookSet codebooks;
    /// Model-level cross-term constant; 0 for PQ, CKM and OCQ.
    double epsilon = 0.0;
    /// Penalty weight used in training (0 when not applicable).
    double mu = 0.0;
    /// Sparse variant only.
    double lambda = 0.0;
    std::optional<Rotation> rotation;
    /// Objective after warm start and after every outer iteration.
    std::vector<double> train_log;
    /// Constraint residual per logged iteration: mean |delta_n - epsilon|
    /// (NOCQ, SNOCQ) or sqrt(sum_{i!=j} ||C_i^T C_j||_F^2) (OCQ).
    std::vector<double> constraint_log;
    /// SNOCQ only: L1-penalized objective of the sparsifying phase.
    std::vector<double> warmup_log;

    std::size_t m() const { return codebooks.m(); }
    std::size_t k() const { return codebooks.k(); }
    std::size_t d() const { return codebooks.d(); }
};

/// Encodes fresh vectors with the model's own encoder.
CodeSet encode(const QuantizerModel& model, const Dataset& data, std::size_t sweeps = 3);

enum class DictionaryUpdate { lbfgs, closed_form };

struct TrainConfig {
    double mu = 0.0;
    /// Candidate mu values for validation; empty selects the default grid.
    std::vector<double> mu_grid;
    std::size_t outer_iters = 30;
    double rel_tol = 1e-5;
    std::size_t icm_sweeps = 1;
    std::size_t kmeans_iters = 25;
    LbfgsConfig lbfgs;
    DictionaryUpdate cq_update = DictionaryUpdate::lbfgs;
    std::uint64_t seed = 0;
    double validation_fraction = 0.1;
};

struct TrainedQuantizer {
    QuantizerModel model;
    /// Codes of the training vectors under the final model.
    CodeSet codes;
};

/// Penalized objective sum ||x - Cy||^2 + mu sum (delta - epsilon)^2.
double penalty_objective(const CodebookSet& codebooks, const CodeSet& codes, const Dataset& data, double mu,
                         double epsilon);

/// Statistics of a fixed code set for repeated evaluation of the penalized
/// objective: element co-occurrence counts Y Y^T, element sums Y X^T and
/// sum ||x||^2. An evaluation costs O((MK)^2 D + N M^2) instead of O(N M D).
class CodeStatistics {
public:
    CodeStatistics(const Dataset& data, const CodeSet& codes, std::size_t k);

    /// Value and gradient of penalty_objective with epsilon set to the mean
    /// delta, which minimizes it. The epsilon used is written to `epsilon`.
    double objective(const Matrix& elements, double mu, Matrix* grad, double* epsilon = nullptr) const;

    /// Whether evaluating through the statistics is cheaper than a pass over the points.
    static bool pays_off(std::size_t n, std::size_t m, std::size_t k);

private:
    std::size_t m_ = 0;
    std::size_t k_ = 0;
    std::vector<std::uint32_t> rows_;  // element row of every code entry
    Matrix yy_;
    Matrix yx_;
    double xx_ = 0.0;
};

/// Orthogonality penalty sum_{i != j} ||C_i^T C_j||_F^2 and its gradient
/// with respect to the element matrix.
double orthogonality_penalty(const CodebookSet& codebooks, Matrix* grad = nullptr);

/// Weight applied to the orthogonality penalty for a given mu; scales the
/// per-point mu to the K^2 element pairs each dictionary pair contributes.
double ocq_penalty_weight(double mu, std::size_t n, std::size_t k);

/// Optimal epsilon for fixed codes and dictionaries: the mean of delta_n.
double update_epsilon(const CodebookSet& codebooks, const CodeSet& codes);

TrainedQuantizer train_pq_model(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config);
TrainedQuantizer train_ckm_model(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config);

/// Unconstrained composite quantization.
TrainedQuantizer train_cq(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config);

/// Near-orthogonal composite quantization with quadratic penalty weight config.mu.
TrainedQuantizer train_nocq(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config);

/// Orthogonal composite quantization: Frobenius penalty, epsilon pinned to 0.
TrainedQuantizer train_ocq(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config);

TrainedQuantizer train_variant(Variant variant, const Dataset& data, std::size_t m, std::size_t k,
                               const TrainConfig& config);

/// Least-squares dictionary for fixed codes: minimum-norm solution of
/// C = X Y^T (Y Y^T)^+.
CodebookSet closed_form_dictionary(const Dataset& data, const CodeSet& codes, std::size_t m, std::size_t k);

struct MuSelection {
    double mu = 0.0;
    std::vector<double> grid;
    std::vector<double> scores;
};

/// Default grid {0, 0.1, 1, 10, 100, 1000} divided by the PQ error per point.
std::vector<double> default_mu_grid(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config);

/// Picks mu by validation: trains on the training split for each grid value
/// and scores mean recall@T over T in {5, 10, ..., 100} with validation
/// vectors as queries against all base vectors. Ties go to the smaller mu.
MuSelection select_mu(Variant variant, const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config);

/// VQM1 container, little-endian.
void save_model(const QuantizerModel& model, const std::filesystem::path& path);
QuantizerModel load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const QuantizerModel& model);
QuantizerModel deserialize_model(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

/// Codes file: "VQC1", u32 M, u32 K, u64 N, then packed codes.
void save_codes(const CodeSet& codes, std::size_t k, const std::filesystem::path& path);
CodeSet load_codes(const std::filesystem::path& path, std::size_t* k = nullptr);

}  // namespace vqann
