#pragma once

#include "vqann/kernels.hpp"
#include "vqann/quantizer.hpp"
#include "vqann/sparse.hpp"

namespace vqann {

enum class TableKind { squared_euclidean, inner_product };

/// Per-query M x K table of query-to-element distances (or inner products).
struct DistanceTable {
    std::size_t m = 0;
    std::size_t k = 0;
    TableKind kind = TableKind::squared_euclidean;
    std::vector<double> entries;

    double at(std::size_t mi, std::size_t ki) const { return entries[mi * k + ki]; }
};

struct SearchResult {
    std::vector<std::uint32_t> ids;
    /// Sorted ascending for distances, descending for inner products.
    std::vector<double> scores;
    /// Set when fewer than the requested r items existed.
    bool clipped = false;
};

/// Exact dense table; `ops` receives the multiply-add count (M*K*D).
DistanceTable build_distance_table(const CodebookSet& codebooks, std::span<const double> query,
                                   TableKind kind = TableKind::squared_euclidean, std::size_t* ops = nullptr);
DistanceTable build_distance_table(const QuantizerModel& model, std::span<const double> query,
                                   TableKind kind = TableKind::squared_euclidean, std::size_t* ops = nullptr);

/// Table from compressed-row elements: ||q||^2 - 2 q^T c + ||c||^2 with the
/// inner products over nonzeros only; `ops` receives nnz.
DistanceTable build_distance_table(const SparseCodebooks& codebooks, std::span<const double> query,
                                   TableKind kind = TableKind::squared_euclidean, std::size_t* ops = nullptr);

/// Table-lookup linear scan: score_n = sum_m table[m][code_n[m]], top-r by
/// ascending score with ties to the lower id. Neither (M-1)||q||^2 nor
/// epsilon is added.
SearchResult adc_scan(const DistanceTable& table, const CodeSet& codes, std::size_t r,
                      kernels::Exec exec = kernels::Exec::parallel);

/// Ranks by ||q - xbar_n||^2. With `include_delta` the stored per-point
/// delta_n restores the exact distance from the table; without it the cross
/// term is discarded.
SearchResult reconstruction_scan(const QuantizerModel& model, std::span<const double> query, const CodeSet& codes,
                                 std::span<const double> deltas, std::size_t r, bool include_delta);

/// Maximum inner product search over sum_m <q, c_{m,k_m}>.
SearchResult inner_product_scan(const QuantizerModel& model, std::span<const double> query, const CodeSet& codes,
                                std::size_t r);

/// Encodes the query with the unconstrained encoder of the same codebooks,
/// reconstructs it, and runs ADC with the reconstruction.
SearchResult compressed_query_search(const QuantizerModel& model, std::span<const double> query,
                                     const CodeSet& base_codes, std::size_t r, std::size_t sweeps = 3);

/// Compressed query itself (what would be sent to the server).
Code compress_query(const QuantizerModel& model, std::span<const double> query, std::size_t sweeps = 3);

/// ADC search for every query row.
std::vector<SearchResult> search_all(const QuantizerModel& model, const Dataset& queries, const CodeSet& codes,
                                     std::size_t r);

/// Mean over queries of |top-r ids intersect top-t truth| / t.
double recall_at_r(std::span<const SearchResult> results, const GroundTruth& gt, std::size_t t, std::size_t r);

/// Mean over queries of sum_t P(t) Delta(t), first `t_relevant` truths relevant.
double mean_average_precision(std::span<const SearchResult> results, const GroundTruth& gt,
                              std::size_t t_relevant = 100);

/// Per-point delta_n stored alongside codes (64-bit in memory).
std::vector<double> stored_deltas(const QuantizerModel& model, const CodeSet& codes);

}  // namespace vqann
