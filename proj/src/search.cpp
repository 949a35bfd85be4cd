#include "vqann/search.hpp"

#include <unordered_set>

namespace vqann {

namespace {

SearchResult to_result(const std::vector<TopK::Entry>& entries, std::size_t requested) {
    SearchResult r;
    r.ids.reserve(entries.size());
    r.scores.reserve(entries.size());
    for (const auto& [s, id] : entries) {
        r.ids.push_back(id);
        r.scores.push_back(s);
    }
    r.clipped = entries.size() < requested;
    return r;
}

void check_query(std::size_t model_d, std::span<const double> query) {
    if (query.size() != model_d) {
        throw DimensionError("query dimension does not match the model");
    }
}

}  // namespace

DistanceTable build_distance_table(const CodebookSet& codebooks, std::span<const double> query, TableKind kind,
                                   std::size_t* ops) {
    check_query(codebooks.d(), query);
    DistanceTable t{codebooks.m(), codebooks.k(), kind, std::vector<double>(codebooks.m() * codebooks.k())};
    for (std::size_t m = 0; m < codebooks.m(); ++m) {
        for (std::size_t k = 0; k < codebooks.k(); ++k) {
            const auto e = codebooks.element(m, k);
            t.entries[m * t.k + k] = kind == TableKind::squared_euclidean ? squared_distance(query, e) : dot(query, e);
        }
    }
    if (ops != nullptr) {
        *ops = codebooks.m() * codebooks.k() * codebooks.d();
    }
    return t;
}

DistanceTable build_distance_table(const QuantizerModel& model, std::span<const double> query, TableKind kind,
                                   std::size_t* ops) {
    return build_distance_table(model.codebooks, query, kind, ops);
}

DistanceTable build_distance_table(const SparseCodebooks& codebooks, std::span<const double> query, TableKind kind,
                                   std::size_t* ops) {
    check_query(codebooks.d, query);
    const double q2 = dot(query, query);
    DistanceTable t{codebooks.m, codebooks.k, kind, std::vector<double>(codebooks.m * codebooks.k)};
    std::size_t count = 0;
    for (std::size_t row = 0; row < codebooks.m * codebooks.k; ++row) {
        double ip = 0.0;
        for (std::uint32_t i = codebooks.row_ptr[row]; i < codebooks.row_ptr[row + 1]; ++i) {
            ip += query[codebooks.cols[i]] * codebooks.values[i];
            ++count;
        }
        t.entries[row] = kind == TableKind::squared_euclidean ? q2 - 2.0 * ip + codebooks.norms2[row] : ip;
    }
    if (ops != nullptr) {
        *ops = count;
    }
    return t;
}

SearchResult adc_scan(const DistanceTable& table, const CodeSet& codes, std::size_t r, kernels::Exec exec) {
    if (codes.m != table.m) {
        throw DimensionError("codes and table disagree on M");
    }
    const bool descending = table.kind == TableKind::inner_product;
    return to_result(kernels::lookup_scan(table.entries, table.k, codes, r, descending, exec), r);
}

SearchResult reconstruction_scan(const QuantizerModel& model, std::span<const double> query, const CodeSet& codes,
                                 std::span<const double> deltas, std::size_t r, bool include_delta) {
    if (include_delta && deltas.size() != codes.size()) {
        throw DimensionError("need one stored delta per code");
    }
    const DistanceTable table = build_distance_table(model, query);
    const double shift = static_cast<double>(model.m() - 1) * dot(query, query);
    TopK top(std::min(r, codes.size()));
    for (std::size_t n = 0; n < codes.size(); ++n) {
        const auto c = codes.code(n);
        double s = 0.0;
        for (std::size_t m = 0; m < table.m; ++m) {
            s += table.at(m, c[m]);
        }
        s -= shift;
        if (include_delta) {
            s += deltas[n];
        }
        top.push(s, static_cast<std::uint32_t>(n));
    }
    return to_result(top.sorted(), r);
}

SearchResult inner_product_scan(const QuantizerModel& model, std::span<const double> query, const CodeSet& codes,
                                std::size_t r) {
    return adc_scan(build_distance_table(model, query, TableKind::inner_product), codes, r);
}

Code compress_query(const QuantizerModel& model, std::span<const double> query, std::size_t sweeps) {
    check_query(model.d(), query);
    return icm_encode(model.codebooks, query, 0.0, 0.0, greedy_init(model.codebooks, query), sweeps);
}

SearchResult compressed_query_search(const QuantizerModel& model, std::span<const double> query,
                                     const CodeSet& base_codes, std::size_t r, std::size_t sweeps) {
    const Vector approx = reconstruct(model.codebooks, compress_query(model, query, sweeps));
    return adc_scan(build_distance_table(model, as_span(approx)), base_codes, r);
}

std::vector<SearchResult> search_all(const QuantizerModel& model, const Dataset& queries, const CodeSet& codes,
                                     std::size_t r) {
    std::vector<SearchResult> out(queries.n());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::size_t q = 0; q < queries.n(); ++q) {
        out[q] = adc_scan(build_distance_table(model, queries.row(q)), codes, r, kernels::Exec::serial);
    }
    return out;
}

double recall_at_r(std::span<const SearchResult> results, const GroundTruth& gt, std::size_t t, std::size_t r) {
    if (results.size() != gt.queries) {
        throw DimensionError("result count does not match ground truth");
    }
    if (t == 0 || t > gt.width) {
        throw std::invalid_argument("t must be in [1, ground-truth width]");
    }
    if (results.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t q = 0; q < results.size(); ++q) {
        const auto truth = gt.row(q).first(t);
        const std::unordered_set<std::uint32_t> want(truth.begin(), truth.end());
        const std::size_t upto = std::min(r, results[q].ids.size());
        std::size_t hits = 0;
        for (std::size_t i = 0; i < upto; ++i) {
            hits += want.count(results[q].ids[i]);
        }
        total += static_cast<double>(hits) / static_cast<double>(t);
    }
    return total / static_cast<double>(results.size());
}

double mean_average_precision(std::span<const SearchResult> results, const GroundTruth& gt, std::size_t t_relevant) {
    if (results.size() != gt.queries) {
        throw DimensionError("result count does not match ground truth");
    }
    const std::size_t rel = std::min(t_relevant, gt.width);
    if (rel == 0 || results.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t q = 0; q < results.size(); ++q) {
        const auto truth = gt.row(q).first(rel);
        const std::unordered_set<std::uint32_t> want(truth.begin(), truth.end());
        std::size_t hits = 0;
        double ap = 0.0;
        for (std::size_t i = 0; i < results[q].ids.size(); ++i) {
            if (want.count(results[q].ids[i]) != 0) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(i + 1) / static_cast<double>(rel);
            }
        }
        total += ap;
    }
    return total / static_cast<double>(results.size());
}

std::vector<double> stored_deltas(const QuantizerModel& model, const CodeSet& codes) {
    const InnerProductCache cache(model.codebooks);
    return cross_term_deltas(model.codebooks, codes, &cache);
}

}  // namespace vqann
