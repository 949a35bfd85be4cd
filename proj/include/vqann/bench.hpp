#pragma once

#include "vqann/multi_index.hpp"

#include <iosfwd>

namespace vqann {

/// Desk-scale comparison run over synthetic mixtures.
struct BenchConfig {
    std::size_t n = 10000;
    std::size_t d = 32;
    std::size_t m = 4;
    std::size_t k = 16;
    std::size_t queries = 100;
    std::size_t clusters = 16;
    double spread = 0.3;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<Variant> variants{Variant::PQ, Variant::CKM, Variant::CQ, Variant::OCQ, Variant::NOCQ};
    TrainConfig train;
    /// Validate mu per seed for the penalized variants; otherwise train.mu is used.
    bool validate_mu = true;
    std::size_t truth_width = 100;
};

BenchConfig desk_preset();
/// Same protocol, a fraction of the size. Used by tests.
BenchConfig smoke_preset();

struct BenchRun {
    Variant variant = Variant::PQ;
    std::uint64_t seed = 0;
    double mu = 0.0;
    double error = 0.0;
    double recall_at_10 = 0.0;        // T = 1, R = 10
    std::vector<double> recall_curve; // T = 1, R in bench_recall_cutoffs()
    double mean_deviation = 0.0;      // mean |delta_n - epsilon|
    double recall_without_delta = 0.0;
    double recall_with_delta = 0.0;
    double recall_compressed = 0.0;   // T = 1, R = 10, query sent as its own code
    std::vector<double> train_log;
    bool monotone = false;
    double seconds = 0.0;
};

struct BenchReport {
    BenchConfig config;
    std::vector<BenchRun> runs;

    std::vector<const BenchRun*> runs_of(Variant v) const;
    double mean_error(Variant v) const;
    double mean_recall(Variant v) const;
};

std::span<const std::size_t> bench_recall_cutoffs();

/// True when every step of `log` is at most `rel_slack` (relative) above the previous one.
bool nonincreasing(std::span<const double> log, double rel_slack = 1e-9);

/// Splits one seeded mixture into base and query sets.
std::pair<Dataset, Dataset> bench_data(const BenchConfig& config, std::uint64_t seed);

BenchReport run_bench(const BenchConfig& config, std::ostream* progress = nullptr);

/// Per-run CSV, then the error-ordering and recall-ordering summaries.
void write_bench_report(const BenchReport& report, std::ostream& out);

struct MultiIndexBenchRow {
    Variant fine_variant = Variant::PQ;
    std::size_t list_length = 0;
    double recall_at_10 = 0.0;
};

/// Multi-D-ADC comparison of fine variants over candidate list lengths.
std::vector<MultiIndexBenchRow> run_multi_index_bench(const BenchConfig& config, std::size_t coarse_k,
                                                      std::span<const Variant> fine_variants,
                                                      std::span<const std::size_t> list_lengths,
                                                      std::ostream* progress = nullptr);

}  // namespace vqann
