#include "vqann/bench.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

namespace vqann {

namespace {

constexpr std::size_t kCutoffs[] = {1, 2, 5, 10, 20, 50, 100};

bool penalized(Variant v) {
    return v == Variant::OCQ || v == Variant::NOCQ || v == Variant::SNOCQ;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double scan_recall(const QuantizerModel& model, const Dataset& queries, const CodeSet& codes,
                   std::span<const double> deltas, const GroundTruth& truth, bool include_delta) {
    std::vector<SearchResult> results(queries.n());
    for (std::size_t q = 0; q < queries.n(); ++q) {
        results[q] = reconstruction_scan(model, queries.row(q), codes, deltas, 10, include_delta);
    }
    return recall_at_r(results, truth, 1, 10);
}

}  // namespace

BenchConfig desk_preset() {
    return BenchConfig{};
}

BenchConfig smoke_preset() {
    BenchConfig c;
    c.n = 1500;
    c.d = 16;
    c.queries = 50;
    c.seeds = {1, 2};
    c.train.outer_iters = 10;
    return c;
}

std::span<const std::size_t> bench_recall_cutoffs() {
    return kCutoffs;
}

bool nonincreasing(std::span<const double> log, double rel_slack) {
    for (std::size_t i = 1; i < log.size(); ++i) {
        if (log[i] > log[i - 1] + rel_slack * std::abs(log[i - 1])) {
            return false;
        }
    }
    return true;
}

std::vector<const BenchRun*> BenchReport::runs_of(Variant v) const {
    std::vector<const BenchRun*> out;
    for (const auto& r : runs) {
        if (r.variant == v) {
            out.push_back(&r);
        }
    }
    return out;
}

double BenchReport::mean_error(Variant v) const {
    const auto rs = runs_of(v);
    double s = 0.0;
    for (const auto* r : rs) {
        s += r->error;
    }
    return rs.empty() ? std::nan("") : s / static_cast<double>(rs.size());
}

double BenchReport::mean_recall(Variant v) const {
    const auto rs = runs_of(v);
    double s = 0.0;
    for (const auto* r : rs) {
        s += r->recall_at_10;
    }
    return rs.empty() ? std::nan("") : s / static_cast<double>(rs.size());
}

std::pair<Dataset, Dataset> bench_data(const BenchConfig& config, std::uint64_t seed) {
    const Dataset all = synth_mixture(config.n + config.queries, config.d, config.clusters, config.spread,
                                      derive_seed(seed, "bench.data"));
    std::vector<std::size_t> base(config.n);
    std::vector<std::size_t> queries(config.queries);
    std::iota(base.begin(), base.end(), std::size_t{0});
    std::iota(queries.begin(), queries.end(), config.n);
    return {all.subset(base), all.subset(queries)};
}

BenchReport run_bench(const BenchConfig& config, std::ostream* progress) {
    BenchReport report;
    report.config = config;
    for (const std::uint64_t seed : config.seeds) {
        const auto [base, queries] = bench_data(config, seed);
        const GroundTruth truth = brute_force_groundtruth(base, queries, std::min(config.truth_width, base.n()));
        for (const Variant variant : config.variants) {
            const auto t0 = std::chrono::steady_clock::now();
            BenchRun run;
            run.variant = variant;
            run.seed = seed;
            TrainConfig tc = config.train;
            tc.seed = derive_seed(seed, "bench.train");
            if (penalized(variant) && config.validate_mu) {
                tc.mu = select_mu(variant, base, config.m, config.k, tc).mu;
            }
            run.mu = penalized(variant) ? tc.mu : 0.0;
            const TrainedQuantizer trained = train_variant(variant, base, config.m, config.k, tc);
            const QuantizerModel& model = trained.model;
            run.error = quantization_error(model.codebooks, trained.codes, base);
            const auto results = search_all(model, queries, trained.codes, kCutoffs[std::size(kCutoffs) - 1]);
            for (const std::size_t r : kCutoffs) {
                run.recall_curve.push_back(recall_at_r(results, truth, 1, r));
            }
            run.recall_at_10 = recall_at_r(results, truth, 1, 10);
            const auto deltas = stored_deltas(model, trained.codes);
            double dev = 0.0;
            for (const double d : deltas) {
                dev += std::abs(d - model.epsilon);
            }
            run.mean_deviation = dev / static_cast<double>(deltas.size());
            run.recall_with_delta = scan_recall(model, queries, trained.codes, deltas, truth, true);
            run.recall_without_delta = scan_recall(model, queries, trained.codes, deltas, truth, false);
            std::vector<SearchResult> compressed(queries.n());
            for (std::size_t q = 0; q < queries.n(); ++q) {
                compressed[q] = compressed_query_search(model, queries.row(q), trained.codes, 10);
            }
            run.recall_compressed = recall_at_r(compressed, truth, 1, 10);
            run.train_log = model.train_log;
            run.monotone = nonincreasing(run.train_log);
            run.seconds = seconds_since(t0);
            if (progress != nullptr) {
                *progress << "seed " << seed << ' ' << variant_name(variant) << " error " << run.error
                          << " recall@10 " << run.recall_at_10 << " (" << run.seconds << " s)\n";
            }
            report.runs.push_back(std::move(run));
        }
    }
    return report;
}

void write_bench_report(const BenchReport& report, std::ostream& out) {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out.precision(10);
    const std::size_t bits = code_bits(report.config.m, report.config.k);
    out << "method,bits,seed,mu,error,mean_abs_deviation,recall_with_delta,recall_without_delta,recall_compressed,"
           "monotone";
    for (const std::size_t r : kCutoffs) {
        out << ",recall@" << r;
    }
    out << '\n';
    for (const auto& run : report.runs) {
        out << variant_name(run.variant) << ',' << bits << ',' << run.seed << ',' << run.mu << ',' << run.error
            << ',' << run.mean_deviation << ',' << run.recall_with_delta << ',' << run.recall_without_delta << ','
            << run.recall_compressed << ',' << (run.monotone ? 1 : 0);
        for (const double r : run.recall_curve) {
            out << ',' << r;
        }
        out << '\n';
    }
    out << "\n# error ordering (mean over seeds)\nmethod,bits,error\n";
    for (const Variant v : report.config.variants) {
        out << variant_name(v) << ',' << bits << ',' << report.mean_error(v) << '\n';
    }
    out << "\n# recall ordering (T=1, R=10, mean over seeds)\nmethod,bits,recall\n";
    for (const Variant v : report.config.variants) {
        out << variant_name(v) << ',' << bits << ',' << report.mean_recall(v) << '\n';
    }
    out.flags(flags);
    out.precision(precision);
}

std::vector<MultiIndexBenchRow> run_multi_index_bench(const BenchConfig& config, std::size_t coarse_k,
                                                      std::span<const Variant> fine_variants,
                                                      std::span<const std::size_t> list_lengths,
                                                      std::ostream* progress) {
    std::map<std::pair<Variant, std::size_t>, double> sums;
    for (const std::uint64_t seed : config.seeds) {
        const auto [base, queries] = bench_data(config, seed);
        const GroundTruth truth = brute_force_groundtruth(base, queries, 1);
        for (const Variant variant : fine_variants) {
            MultiIndexConfig mc;
            mc.coarse_k = coarse_k;
            mc.fine_m = config.m;
            mc.fine_k = config.k;
            mc.fine_variant = variant;
            mc.train = config.train;
            mc.train.seed = derive_seed(seed, "bench.multi_index");
            mc.validate_fine_mu = config.validate_mu;
            const MultiIndex index = build_multi_index(base, mc);
            for (const std::size_t len : list_lengths) {
                std::vector<SearchResult> results(queries.n());
                for (std::size_t q = 0; q < queries.n(); ++q) {
                    results[q] = multi_index_search(index, queries.row(q), len, 10);
                }
                const double recall = recall_at_r(results, truth, 1, 10);
                sums[{variant, len}] += recall;
                if (progress != nullptr) {
                    *progress << "seed " << seed << " multi-index " << variant_name(variant) << " L=" << len
                              << " recall@10 " << recall << '\n';
                }
            }
        }
    }
    std::vector<MultiIndexBenchRow> rows;
    for (const Variant variant : fine_variants) {
        for (const std::size_t len : list_lengths) {
            rows.push_back({variant, len, sums[{variant, len}] / static_cast<double>(config.seeds.size())});
        }
    }
    return rows;
}

}  // namespace vqann
