#pragma once

#include "vqann/common.hpp"
#include "vqann/data.hpp"

#include <cstdint>
#include <vector>

namespace vqann {

/// M dictionaries of K elements in R^D. Element (m, k) is row m*K + k of the
/// (M*K) x D element matrix.
class CodebookSet {
public:
    CodebookSet() = default;
    CodebookSet(std::size_t m, std::size_t k, std::size_t d);
    CodebookSet(std::size_t m, std::size_t k, Matrix elements);

    std::size_t m() const { return m_; }
    std::size_t k() const { return k_; }
    std::size_t d() const { return d_; }

    std::span<const double> element(std::size_t m, std::size_t k) const {
        return row_span(elements_, static_cast<Eigen::Index>(m * k_ + k));
    }
    std::span<double> element(std::size_t m, std::size_t k) {
        return row_span(elements_, static_cast<Eigen::Index>(m * k_ + k));
    }

    const Matrix& elements() const { return elements_; }
    Matrix& elements() { return elements_; }

    /// Number of exactly-zero entries subtracted from M*K*D.
    std::size_t nonzeros() const;

private:
    std::size_t m_ = 0;
    std::size_t k_ = 0;
    std::size_t d_ = 0;
    Matrix elements_;
};

/// One index per dictionary.
using Code = std::vector<std::uint32_t>;

/// Codes for a whole corpus, row-major N x M.
struct CodeSet {
    std::size_t m = 0;
    std::vector<std::uint32_t> indices;

    CodeSet() = default;
    CodeSet(std::size_t n, std::size_t m_) : m(m_), indices(n * m_, 0) {}

    std::size_t size() const { return m == 0 ? 0 : indices.size() / m; }
    std::span<const std::uint32_t> code(std::size_t n) const { return {indices.data() + n * m, m}; }
    std::span<std::uint32_t> code(std::size_t n) { return {indices.data() + n * m, m}; }
};

/// Pairwise element inner products c_{ir}^T c_{js}. Diagonal blocks hold
/// within-dictionary products (the norms sit on the diagonal).
class InnerProductCache {
public:
    InnerProductCache() = default;
    explicit InnerProductCache(const CodebookSet& codebooks);

    double at(std::size_t i, std::size_t r, std::size_t j, std::size_t s) const {
        return table_(static_cast<Eigen::Index>(i * k_ + r), static_cast<Eigen::Index>(j * k_ + s));
    }
    double norm2(std::size_t m, std::size_t k) const { return at(m, k, m, k); }
    const Matrix& table() const { return table_; }

private:
    std::size_t k_ = 0;
    Matrix table_;
};

InnerProductCache build_inner_product_cache(const CodebookSet& codebooks);

/// Sum of the selected elements.
Vector reconstruct(const CodebookSet& codebooks, std::span<const std::uint32_t> code);

/// Sum of squared residuals over the corpus.
double quantization_error(const CodebookSet& codebooks, const CodeSet& codes, const Dataset& data);

/// delta = sum_{i != j} c_{i,k_i}^T c_{j,k_j}.
double cross_term_delta(const CodebookSet& codebooks, std::span<const std::uint32_t> code,
                        const InnerProductCache* cache = nullptr);

/// Per-point delta for a whole corpus.
std::vector<double> cross_term_deltas(const CodebookSet& codebooks, const CodeSet& codes,
                                      const InnerProductCache* cache = nullptr);

/// ||x - Cy||^2 + mu (delta - epsilon)^2 for one code.
double encoding_objective(const CodebookSet& codebooks, std::span<const double> x, double mu, double epsilon,
                          std::span<const std::uint32_t> code);

/// Picks dictionaries in order, each element nearest to the residual left by
/// the earlier picks. Used to start ICM for vectors with no prior code.
Code greedy_init(const CodebookSet& codebooks, std::span<const double> x);

/// Iterated conditional modes over the M indices. Each coordinate update
/// scans all K elements exhaustively; ties keep the lowest index. The
/// objective never increases from `init`.
Code icm_encode(const CodebookSet& codebooks, std::span<const double> x, double mu, double epsilon, Code init,
                std::size_t sweeps, const InnerProductCache* cache = nullptr);

struct EncodeOptions {
    double mu = 0.0;
    double epsilon = 0.0;
    std::size_t sweeps = 1;
};

/// Runs ICM for every row of `data`, starting from `codes` (updated in place).
void encode_corpus(const CodebookSet& codebooks, const Dataset& data, const EncodeOptions& options, CodeSet& codes,
                   const InnerProductCache* cache = nullptr);

/// Fresh encoding: greedy start, then ICM.
CodeSet encode_fresh(const CodebookSet& codebooks, const Dataset& data, const EncodeOptions& options);

/// ceil(log2 K), the information content of one index.
std::size_t index_bits(std::size_t k);
/// Code length M * ceil(log2 K).
std::size_t code_bits(std::size_t m, std::size_t k);
/// Storage width of one packed index: 8 when K <= 256, else index_bits(K).
std::size_t bits_per_index(std::size_t k);

/// Packs codes: one byte per index when K <= 256, otherwise a little-endian
/// bitfield of ceil(log2 K) bits per index, padded to a byte per vector.
std::vector<std::uint8_t> pack_codes(const CodeSet& codes, std::size_t k);
CodeSet unpack_codes(std::span<const std::uint8_t> bytes, std::size_t n, std::size_t m, std::size_t k);

}  // namespace vqann
