#pragma once

#include "vqann/common.hpp"
#include "vqann/data.hpp"

#include <functional>
#include <optional>

namespace vqann {

struct KMeansResult {
    Matrix centers;
    std::vector<std::uint32_t> assignments;
    /// Sum of squared distances of each point to its assigned center.
    double error = 0.0;
    /// Error after every assignment step, first to last.
    std::vector<double> error_log;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded at
/// the point farthest from its current center. The returned assignments are
/// nearest-center assignments for the returned centers.
KMeansResult kmeans(const Dataset& data, std::size_t k, std::size_t max_iters, std::uint64_t seed);

/// Lloyd's iterations from given centers; empty clusters keep their center.
KMeansResult kmeans_from(const Dataset& data, Matrix centers, std::size_t max_iters);

/// Nearest center per row; ties go to the lower center index.
std::vector<std::uint32_t> assign_nearest(const Matrix& points, const Matrix& centers, double* error = nullptr);

struct LbfgsConfig {
    std::size_t memory = 10;
    std::size_t max_line_search = 5;
    double armijo_c = 1e-4;
    std::size_t max_iters = 10;
    double grad_tol = 1e-10;
    /// When positive, the first direction is -initial_scale * gradient
    /// instead of a unit-length steepest step.
    double initial_scale = 0.0;
};

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using ObjectiveFn = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsResult {
    Vector point;
    double value = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool converged = false;
    /// Objective after each accepted step.
    std::vector<double> value_log;
    /// s'y / y'y of the newest curvature pair, 0 if none was stored. Useful
    /// as initial_scale for a follow-up run on a nearby objective.
    double curvature_scale = 0.0;
};

/// Thrown on a non-finite objective or gradient; carries the last finite iterate.
class OptimizationError : public std::runtime_error {
public:
    OptimizationError(const std::string& what, Vector last_point, double last_value)
        : std::runtime_error(what), last_point_(std::move(last_point)), last_value_(last_value) {}

    const Vector& last_point() const { return last_point_; }
    double last_value() const { return last_value_; }

private:
    Vector last_point_;
    double last_value_;
};

/// Limited-memory BFGS with backtracking (halving) Armijo line search.
/// The returned value never exceeds the value at `start`.
/// `preconditioner`, when given, is a positive diagonal approximating the
/// inverse Hessian; it replaces the identity as the initial inverse-Hessian guess.
LbfgsResult lbfgs_minimize(const ObjectiveFn& objective, Vector start, const LbfgsConfig& config,
                           const Vector* preconditioner = nullptr);

}  // namespace vqann
