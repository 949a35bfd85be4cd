#pragma once

#include "vqann/search.hpp"

#include <filesystem>

namespace vqann {

struct MultiIndexConfig {
    std::size_t coarse_k = 64;
    std::size_t fine_m = 4;
    std::size_t fine_k = 16;
    Variant fine_variant = Variant::PQ;
    TrainConfig train;
    /// Residual sample cap for fine training; the first `max_train` of a
    /// seeded shuffle are used when the corpus is larger.
    std::size_t max_train = 100000;
    /// Validate mu on the residual training set for OCQ, NOCQ and SNOCQ fine
    /// variants; otherwise train.mu is used.
    bool validate_fine_mu = false;
};

/// Inverted multi-index: two coarse PQ dictionaries over the dimension halves
/// address K x K cells; each posting keeps a fine code of the residual.
struct MultiIndex {
    QuantizerModel coarse;  // PQ, M = 2
    QuantizerModel fine;
    SubspaceLayout halves;
    std::size_t n = 0;

    /// Cell (i, j) is entry i * K + j.
    std::vector<std::vector<std::uint32_t>> cell_ids;
    std::vector<CodeSet> cell_codes;

    // Offline tables.
    std::vector<double> coarse_norms;  // 2K
    std::vector<double> fine_norms;    // M_f K_f
    Matrix coarse_fine;                // 2K x M_f K_f inner products
    Matrix coarse_cross;               // K x K, c_{1i}^T c_{2j}

    std::size_t coarse_k() const { return coarse.k(); }
    void precompute();
};

MultiIndex build_multi_index(const Dataset& data, const MultiIndexConfig& config);

struct CellVisit {
    std::uint32_t i = 0;
    std::uint32_t j = 0;
    double distance = 0.0;
};

/// Cells in emission order, distances nondecreasing.
struct CellCursor {
    std::vector<CellVisit> emitted;
};

/// Multi-sequence traversal over two per-half distance lists. Emits cells in
/// nondecreasing d1[i] + d2[j]; equal sums come out in (i, j) order.
CellCursor multi_sequence(std::span<const double> d1, std::span<const double> d2, std::size_t max_cells);

/// Per-query coarse stage: half distances and the query/coarse inner products.
struct CoarseQuery {
    std::vector<double> half_dist[2];
    std::vector<double> inner[2];
};

CoarseQuery coarse_query(const MultiIndex& index, std::span<const double> query);

CellCursor multi_sequence(const MultiIndex& index, const CoarseQuery& cq, std::size_t max_cells);

struct Candidate {
    std::uint32_t i = 0;
    std::uint32_t j = 0;
    std::uint32_t posting = 0;
};

/// Walks cells until at least `max_candidates` postings are gathered (or the cells run out).
std::vector<Candidate> collect_candidates(const MultiIndex& index, const CellCursor& cursor,
                                          std::size_t max_candidates);

/// Scores candidates from lookup tables only: ||q||^2 and the coarse-coarse
/// and fine-fine cross terms are left out. Throws IndexError on a candidate
/// that names a missing cell or posting.
SearchResult rerank_multi_d_adc(const MultiIndex& index, std::span<const double> query, const CoarseQuery& cq,
                                std::span<const Candidate> candidates, std::size_t r);

SearchResult rerank_multi_d_adc(const MultiIndex& index, std::span<const double> query,
                                std::span<const Candidate> candidates, std::size_t r);

/// Traversal, candidate collection of length L, and rerank.
SearchResult multi_index_search(const MultiIndex& index, std::span<const double> query, std::size_t list_length,
                                std::size_t r);

/// Reconstruction of a posting: coarse pair plus fine residual.
Vector reconstruct_posting(const MultiIndex& index, const Candidate& c);

/// "VQMI" container: version, both models, per-cell postings with
/// varint-delta ids and packed fine codes.
void save_index(const MultiIndex& index, const std::filesystem::path& path);
MultiIndex load_index(const std::filesystem::path& path);

}  // namespace vqann
