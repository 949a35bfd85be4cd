#pragma once

// Data-parallel inner loops. Every kernel has a serial reference path and an
// OpenMP path; both must produce identical outputs (ties included), except
// the gradient sum whose floating-point association differs by thread count.

#include "vqann/core.hpp"
#include "vqann/data.hpp"
#include "vqann/topk.hpp"

namespace vqann::kernels {

enum class Exec { serial, parallel };

GroundTruth groundtruth(const Dataset& base, const Dataset& queries, std::size_t t_max, Metric metric, Exec exec);

void encode_corpus(const CodebookSet& codebooks, const Dataset& data, const EncodeOptions& options, CodeSet& codes,
                   const InnerProductCache* cache, Exec exec);

/// Top-r of sum_m table[m*K + code[m]] (ascending, or descending when
/// `descending`). Returns (score, id) pairs best-first.
std::vector<TopK::Entry> lookup_scan(std::span<const double> table, std::size_t k, const CodeSet& codes,
                                     std::size_t r, bool descending, Exec exec);

/// Objective and gradient of
///   sum_n ||x_n - C y_n||^2 + mu sum_n (delta_n - epsilon)^2
/// with respect to the element matrix. `grad` has the element matrix shape.
double penalized_objective(const Matrix& elements, std::size_t m, std::size_t k, const Dataset& data,
                           const CodeSet& codes, double mu, double epsilon, Matrix* grad, Exec exec);

}  // namespace vqann::kernels
