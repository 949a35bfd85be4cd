#include "vqann/core.hpp"

#include "vqann/kernels.hpp"

#include <limits>

namespace vqann {

CodebookSet::CodebookSet(std::size_t m, std::size_t k, std::size_t d)
    : m_(m), k_(k), d_(d), elements_(Matrix::Zero(static_cast<Eigen::Index>(m * k), static_cast<Eigen::Index>(d))) {}

CodebookSet::CodebookSet(std::size_t m, std::size_t k, Matrix elements)
    : m_(m), k_(k), d_(static_cast<std::size_t>(elements.cols())), elements_(std::move(elements)) {
    if (static_cast<std::size_t>(elements_.rows()) != m * k) {
        throw DimensionError("element matrix must have M*K rows");
    }
    if (!elements_.allFinite()) {
        throw RangeError("codebook contains non-finite entries");
    }
}

std::size_t CodebookSet::nonzeros() const {
    std::size_t nnz = 0;
    for (Eigen::Index i = 0; i < elements_.size(); ++i) {
        nnz += elements_.data()[i] != 0.0 ? 1 : 0;
    }
    return nnz;
}

InnerProductCache::InnerProductCache(const CodebookSet& codebooks)
    : k_(codebooks.k()), table_(codebooks.elements() * codebooks.elements().transpose()) {}

InnerProductCache build_inner_product_cache(const CodebookSet& codebooks) {
    return InnerProductCache(codebooks);
}

Vector reconstruct(const CodebookSet& codebooks, std::span<const std::uint32_t> code) {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(codebooks.d()));
    for (std::size_t m = 0; m < codebooks.m(); ++m) {
        const auto e = codebooks.element(m, code[m]);
        for (std::size_t j = 0; j < e.size(); ++j) {
            out[static_cast<Eigen::Index>(j)] += e[j];
        }
    }
    return out;
}

double quantization_error(const CodebookSet& codebooks, const CodeSet& codes, const Dataset& data) {
    if (codes.size() != data.n()) {
        throw DimensionError("code count does not match dataset size");
    }
    double total = 0.0;
    for (std::size_t n = 0; n < data.n(); ++n) {
        total += squared_distance(data.row(n), as_span(reconstruct(codebooks, codes.code(n))));
    }
    return total;
}

double cross_term_delta(const CodebookSet& codebooks, std::span<const std::uint32_t> code,
                        const InnerProductCache* cache) {
    double half = 0.0;
    for (std::size_t i = 0; i < codebooks.m(); ++i) {
        for (std::size_t j = i + 1; j < codebooks.m(); ++j) {
            half += cache != nullptr ? cache->at(i, code[i], j, code[j])
                                     : dot(codebooks.element(i, code[i]), codebooks.element(j, code[j]));
        }
    }
    return 2.0 * half;
}

std::vector<double> cross_term_deltas(const CodebookSet& codebooks, const CodeSet& codes,
                                      const InnerProductCache* cache) {
    std::vector<double> out(codes.size());
    for (std::size_t n = 0; n < codes.size(); ++n) {
        out[n] = cross_term_delta(codebooks, codes.code(n), cache);
    }
    return out;
}

double encoding_objective(const CodebookSet& codebooks, std::span<const double> x, double mu, double epsilon,
                          std::span<const std::uint32_t> code) {
    const double err = squared_distance(x, as_span(reconstruct(codebooks, code)));
    if (mu == 0.0) {
        return err;
    }
    const double dev = cross_term_delta(codebooks, code) - epsilon;
    return err + mu * dev * dev;
}

Code greedy_init(const CodebookSet& codebooks, std::span<const double> x) {
    Code code(codebooks.m(), 0);
    std::vector<double> residual(x.begin(), x.end());
    for (std::size_t m = 0; m < codebooks.m(); ++m) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < codebooks.k(); ++k) {
            const double d = squared_distance(residual, codebooks.element(m, k));
            if (d < best) {
                best = d;
                code[m] = static_cast<std::uint32_t>(k);
            }
        }
        const auto e = codebooks.element(m, code[m]);
        for (std::size_t j = 0; j < residual.size(); ++j) {
            residual[j] -= e[j];
        }
    }
    return code;
}

Code icm_encode(const CodebookSet& codebooks, std::span<const double> x, double mu, double epsilon, Code init,
                std::size_t sweeps, const InnerProductCache* cache) {
    const std::size_t dims = codebooks.d();
    const std::size_t books = codebooks.m();
    if (init.size() != books) {
        throw DimensionError("initial code has the wrong length");
    }
    if (x.size() != dims) {
        throw DimensionError("vector dimension does not match codebooks");
    }
    Code code = std::move(init);
    std::vector<double> others(dims);
    std::vector<double> residual(dims);

    for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
        for (std::size_t m = 0; m < books; ++m) {
            std::fill(others.begin(), others.end(), 0.0);
            for (std::size_t l = 0; l < books; ++l) {
                if (l == m) {
                    continue;
                }
                const auto e = codebooks.element(l, code[l]);
                for (std::size_t j = 0; j < dims; ++j) {
                    others[j] += e[j];
                }
            }
            for (std::size_t j = 0; j < dims; ++j) {
                residual[j] = x[j] - others[j];
            }

            // Cross terms among the fixed dictionaries do not depend on the candidate.
            double rest = 0.0;
            if (mu != 0.0) {
                for (std::size_t i = 0; i < books; ++i) {
                    for (std::size_t j = i + 1; j < books; ++j) {
                        if (i == m || j == m) {
                            continue;
                        }
                        rest += cache != nullptr ? cache->at(i, code[i], j, code[j])
                                                 : dot(codebooks.element(i, code[i]), codebooks.element(j, code[j]));
                    }
                }
                rest *= 2.0;
            }

            double best = std::numeric_limits<double>::infinity();
            std::uint32_t arg = code[m];
            for (std::size_t k = 0; k < codebooks.k(); ++k) {
                const auto cand = codebooks.element(m, k);
                double obj = squared_distance(residual, cand);
                if (mu != 0.0) {
                    double cross = 0.0;
                    if (cache != nullptr) {
                        for (std::size_t l = 0; l < books; ++l) {
                            if (l != m) {
                                cross += cache->at(m, k, l, code[l]);
                            }
                        }
                    } else {
                        cross = dot(cand, others);
                    }
                    const double dev = rest + 2.0 * cross - epsilon;
                    obj += mu * dev * dev;
                }
                if (obj < best) {
                    best = obj;
                    arg = static_cast<std::uint32_t>(k);
                }
            }
            code[m] = arg;
        }
    }
    return code;
}

void encode_corpus(const CodebookSet& codebooks, const Dataset& data, const EncodeOptions& options, CodeSet& codes,
                   const InnerProductCache* cache) {
    kernels::encode_corpus(codebooks, data, options, codes, cache, kernels::Exec::parallel);
}

CodeSet encode_fresh(const CodebookSet& codebooks, const Dataset& data, const EncodeOptions& options) {
    CodeSet codes(data.n(), codebooks.m());
#pragma omp parallel for schedule(static)
    for (std::size_t n = 0; n < data.n(); ++n) {
        const Code init = greedy_init(codebooks, data.row(n));
        std::copy(init.begin(), init.end(), codes.code(n).begin());
    }
    const InnerProductCache cache(codebooks);
    encode_corpus(codebooks, data, options, codes, &cache);
    return codes;
}

std::size_t index_bits(std::size_t k) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < k) {
        ++bits;
    }
    return bits;
}

std::size_t code_bits(std::size_t m, std::size_t k) {
    return m * index_bits(k);
}

std::size_t bits_per_index(std::size_t k) {
    return k <= 256 ? 8 : index_bits(k);
}

std::vector<std::uint8_t> pack_codes(const CodeSet& codes, std::size_t k) {
    const std::size_t bits = bits_per_index(k);
    const std::size_t per_vector = (codes.m * bits + 7) / 8;
    std::vector<std::uint8_t> out(codes.size() * per_vector, 0);
    for (std::size_t n = 0; n < codes.size(); ++n) {
        std::uint8_t* dst = out.data() + n * per_vector;
        std::size_t bit = 0;
        for (const std::uint32_t idx : codes.code(n)) {
            if (idx >= k) {
                throw RangeError("code index out of range");
            }
            for (std::size_t b = 0; b < bits; ++b, ++bit) {
                if ((idx >> b) & 1U) {
                    dst[bit / 8] = static_cast<std::uint8_t>(dst[bit / 8] | (1U << (bit % 8)));
                }
            }
        }
    }
    return out;
}

CodeSet unpack_codes(std::span<const std::uint8_t> bytes, std::size_t n, std::size_t m, std::size_t k) {
    const std::size_t bits = bits_per_index(k);
    const std::size_t per_vector = (m * bits + 7) / 8;
    if (bytes.size() != n * per_vector) {
        throw FormatError("packed code buffer has the wrong size");
    }
    CodeSet codes(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* src = bytes.data() + i * per_vector;
        std::size_t bit = 0;
        for (auto& idx : codes.code(i)) {
            std::uint32_t v = 0;
            for (std::size_t b = 0; b < bits; ++b, ++bit) {
                v |= static_cast<std::uint32_t>((src[bit / 8] >> (bit % 8)) & 1U) << b;
            }
            if (v >= k) {
                throw FormatError("packed code index out of range");
            }
            idx = v;
        }
    }
    return codes;
}

}  // namespace vqann
