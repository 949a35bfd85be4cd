// Acceptance run: prints one PASS/FAIL line per criterion, then the desk-scale
// module checks that share the benchmark run. Exit status is 0 only when every
// line passes. An optional argument names the unit-test binary, whose run time
// counts toward the full-suite budget.

#include "test_support.hpp"

#include "vqann/bench.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

using namespace vqann;
using namespace vqann::testing;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

class Ledger {
public:
    void criterion(int id, const std::string& title, const Outcome& o, double seconds) {
        line(fmt("criterion %2d", id), title, o, seconds);
    }
    void check(const std::string& name, const Outcome& o, double seconds = -1.0) {
        line("check " + name, "", o, seconds);
    }
    bool all_pass() const { return failures_ == 0; }
    int failures() const { return failures_; }

private:
    void line(const std::string& head, const std::string& title, const Outcome& o, double seconds) {
        failures_ += o.pass ? 0 : 1;
        std::cout << head << ": " << (o.pass ? "PASS" : "FAIL");
        if (!title.empty()) {
            std::cout << "  " << title;
        }
        std::cout << " (" << o.detail;
        if (seconds >= 0.0) {
            std::cout << fmt("; %.2f s", seconds);
        }
        std::cout << ")" << std::endl;
    }
    int failures_ = 0;
};

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double table_sum(const DistanceTable& t, std::span<const std::uint32_t> code) {
    double s = 0.0;
    for (std::size_t m = 0; m < code.size(); ++m) {
        s += t.at(m, code[m]);
    }
    return s;
}

// ---------------------------------------------------------------------------

Outcome expansion_exactness() {
    std::mt19937_64 rng(101);
    const std::size_t m = 4;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const CodebookSet books = random_codebooks(m, 16, 32, rng);
        const Dataset q = gaussian_dataset(1, 32, rng);
        const Code code = random_code(m, 16, rng);
        const double lookup = table_sum(build_distance_table(books, q.row(0)), code);
        const double qq = dot(q.row(0), q.row(0));
        const double lhs = lookup - static_cast<double>(m - 1) * qq + cross_term_delta(books, code);
        const double rhs = squared_distance(q.row(0), to_std(reconstruct(books, code)));
        worst = std::max(worst, rel_err(lhs, rhs));
    }
    return {worst < 1e-9, fmt("1000 triples, max rel err %.2e", worst)};
}

Outcome triangle_inequality() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> scale(0.05, 3.0);
    double worst = -std::numeric_limits<double>::infinity();
    for (int block = 0; block < 100; ++block) {
        const std::size_t m = 2 + static_cast<std::size_t>(block % 3) * 2;
        const CodebookSet books = random_codebooks(m, 16, 32, rng, scale(rng));
        for (int t = 0; t < 100; ++t) {
            const Code code = random_code(m, 16, rng);
            const Vector xbar = reconstruct(books, code);
            // Points near and far from their reconstruction.
            const Vector x = xbar + gaussian_matrix(32, 1, rng, t % 2 == 0 ? 0.1 : 2.0);
            const Dataset q = gaussian_dataset(1, 32, rng, scale(rng));
            const double qq = dot(q.row(0), q.row(0));
            const double dtilde = std::sqrt(table_sum(build_distance_table(books, q.row(0)), code));
            const double dhat = std::sqrt(squared_distance(q.row(0), to_std(x)) + static_cast<double>(m - 1) * qq);
            const double bound = (x - xbar).norm() + std::sqrt(std::abs(cross_term_delta(books, code)));
            worst = std::max(worst, std::abs(dtilde - dhat) - bound);
        }
    }
    return {worst <= 1e-9, fmt("10000 samples, max violation %.2e", std::max(worst, 0.0))};
}

Outcome gradient_check() {
    std::mt19937_64 rng(303);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Dataset data = gaussian_dataset(20, 6, rng);
        const CodebookSet books = random_codebooks(2, 4, 6, rng);
        const CodeSet codes = random_codes(20, 2, 4, rng);
        const double mu = 0.05 + 0.25 * t;
        const double eps = 0.3 * (t % 4) - 0.4;
        Matrix grad;
        kernels::penalized_objective(books.elements(), 2, 4, data, codes, mu, eps, &grad, kernels::Exec::serial);
        Matrix fd(grad.rows(), grad.cols());
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < fd.size(); ++i) {
            CodebookSet p = books;
            CodebookSet q = books;
            p.elements().data()[i] += h;
            q.elements().data()[i] -= h;
            fd.data()[i] = (penalty_objective(p, codes, data, mu, eps) - penalty_objective(q, codes, data, mu, eps)) /
                           (2 * h);
        }
        worst = std::max(worst, (grad - fd).norm() / fd.norm());
    }
    return {worst < 1e-4, fmt("20 instances, max rel err %.2e", worst)};
}

Outcome icm_versus_brute_force() {
    const Dataset all = synth_mixture(1100, 32, 16, 0.3, 1);
    std::vector<std::size_t> train(1000);
    std::vector<std::size_t> held(100);
    std::iota(train.begin(), train.end(), std::size_t{0});
    std::iota(held.begin(), held.end(), std::size_t{1000});
    const Dataset data = all.subset(train);
    const Dataset points = all.subset(held);
    TrainConfig cfg;
    cfg.seed = 1;
    const TrainedQuantizer pq = train_pq_model(data, 2, 4, cfg);
    const TrainedQuantizer cq = train_cq(data, 2, 4, cfg);
    const CodeSet starts = encode(pq.model, points);
    const CodebookSet& books = cq.model.codebooks;
    int optimal = 0;
    int worse = 0;
    for (std::size_t i = 0; i < points.n(); ++i) {
        const auto x = points.row(i);
        const Code init(starts.code(i).begin(), starts.code(i).end());
        const Code got = icm_encode(books, x, 0.0, 0.0, init, 3);
        const double f = encoding_objective(books, x, 0.0, 0.0, got);
        double best = std::numeric_limits<double>::infinity();
        for (std::uint32_t a = 0; a < 4; ++a) {
            for (std::uint32_t b = 0; b < 4; ++b) {
                best = std::min(best, encoding_objective(books, x, 0.0, 0.0, Code{a, b}));
            }
        }
        optimal += f <= best + 1e-12 ? 1 : 0;
        worse += f > encoding_objective(books, x, 0.0, 0.0, init) ? 1 : 0;
    }
    // The never-worse half also on arbitrary codebooks.
    std::mt19937_64 rng(404);
    const CodebookSet random_books = random_codebooks(2, 4, 32, rng);
    for (int t = 0; t < 100; ++t) {
        const Vector x = gaussian_matrix(32, 1, rng);
        const std::span<const double> xs(x.data(), 32);
        const Code init = random_code(2, 4, rng);
        const Code got = icm_encode(random_books, xs, 0.0, 0.0, init, 3);
        worse += encoding_objective(random_books, xs, 0.0, 0.0, got) >
                         encoding_objective(random_books, xs, 0.0, 0.0, init)
                     ? 1
                     : 0;
    }
    return {optimal >= 95 && worse == 0, fmt("%d/100 optimal, %d above start", optimal, worse)};
}

// Exhaustive least squares over every assignment of a tiny dataset.
double best_error(const Eigen::MatrixXd& x, std::size_t columns, const std::vector<std::vector<double>>& rows) {
    const auto n = static_cast<std::size_t>(x.rows());
    const std::size_t choices = rows.size();
    std::vector<std::size_t> pick(n, 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        Eigen::MatrixXd y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < columns; ++c) {
                y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[pick[i]][c];
            }
        }
        const Eigen::MatrixXd dict = y.completeOrthogonalDecomposition().solve(x);
        best = std::min(best, (x - y * dict).squaredNorm());
        std::size_t i = 0;
        while (i < n && ++pick[i] == choices) {
            pick[i++] = 0;
        }
        if (i == n) {
            return best;
        }
    }
}

Outcome cardinalities() {
    std::mt19937_64 rng(505);
    const std::size_t k = 3;
    const CodebookSet books = random_codebooks(2, k, 5, rng);
    std::set<std::vector<double>> group;
    std::set<std::vector<double>> shared;
    for (std::uint32_t a = 0; a < k; ++a) {
        for (std::uint32_t b = 0; b < k; ++b) {
            group.insert(to_std(reconstruct(books, Code{a, b})));
            std::vector<double> s(5);
            for (std::size_t d = 0; d < 5; ++d) {
                s[d] = books.element(0, std::min(a, b))[d] + books.element(0, std::max(a, b))[d];
            }
            shared.insert(s);
        }
    }
    // Selection rows: group M-selection over 2K columns, M-selection counts over K columns.
    std::vector<std::vector<double>> gms_rows;
    std::vector<std::vector<double>> ms_rows;
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            std::vector<double> g(2 * k, 0.0);
            g[a] = 1.0;
            g[k + b] = 1.0;
            gms_rows.push_back(g);
            if (a <= b) {
                std::vector<double> s(k, 0.0);
                s[a] += 1.0;
                s[b] += 1.0;
                ms_rows.push_back(s);
            }
        }
    }
    int ordered = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 20; ++t) {
        const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(4, 2, [&] { return std::normal_distribution<double>()(rng); });
        const double gms = best_error(x, 2 * k, gms_rows);
        const double ms = best_error(x, k, ms_rows);
        ordered += gms <= ms + 1e-9 ? 1 : 0;
        gap = std::min(gap, ms - gms);
    }
    const bool pass = group.size() == 9 && shared.size() == 6 && ordered == 20;
    return {pass, fmt("%zu group sums, %zu shared sums, f*_gms <= f*_ms on %d/20 (min gap %.2e)", group.size(),
                      shared.size(), ordered, gap)};
}

Outcome inner_product_bound() {
    std::mt19937_64 rng(606);
    double worst = -std::numeric_limits<double>::infinity();
    for (int block = 0; block < 100; ++block) {
        const CodebookSet books = random_codebooks(4, 16, 32, rng);
        const QuantizerModel model = [&] {
            QuantizerModel mdl;
            mdl.variant = Variant::CQ;
            mdl.codebooks = books;
            return mdl;
        }();
        for (int t = 0; t < 100; ++t) {
            const Code code = random_code(4, 16, rng);
            const Vector xbar = reconstruct(books, code);
            const Vector x = xbar + gaussian_matrix(32, 1, rng, t % 2 == 0 ? 0.1 : 1.5);
            const Dataset q = gaussian_dataset(1, 32, rng);
            const double approx = table_sum(build_distance_table(model, q.row(0), TableKind::inner_product), code);
            const double exact = dot(q.row(0), std::span<const double>(x.data(), 32));
            const double qn = std::sqrt(dot(q.row(0), q.row(0)));
            worst = std::max(worst, std::abs(exact - approx) - (x - xbar).norm() * qn);
        }
    }
    const Dataset data = synth_mixture(2000, 32, 16, 0.3, 7);
    TrainConfig cfg;
    cfg.seed = 3;
    cfg.outer_iters = 10;
    const TrainedQuantizer cq = train_cq(data, 4, 16, cfg);
    const Dataset queries = synth_mixture(20, 32, 16, 0.3, 8);
    int invariant = 0;
    for (std::size_t q = 0; q < queries.n(); ++q) {
        const auto row = queries.row(q);
        const auto reference = inner_product_scan(cq.model, row, cq.codes, 10).ids;
        bool same = true;
        for (const double s : {0.1, 1.0, 7.0}) {
            std::vector<double> scaled(row.begin(), row.end());
            for (double& v : scaled) {
                v *= s;
            }
            same = same && inner_product_scan(cq.model, scaled, cq.codes, 10).ids == reference;
        }
        invariant += same ? 1 : 0;
    }
    return {worst <= 1e-9 && invariant == 20,
            fmt("10000 samples, max violation %.2e; top-10 unchanged under scaling for %d/20 queries",
                std::max(worst, 0.0), invariant)};
}

Outcome multi_sequence_correctness() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_int_distribution<int> small(0, 6);
    int exact_order = 0;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> d1(16);
        std::vector<double> d2(16);
        for (std::size_t i = 0; i < 16; ++i) {
            d1[i] = t % 2 == 0 ? u(rng) : small(rng);  // integer lists produce ties
            d2[i] = t % 2 == 0 ? u(rng) : small(rng);
        }
        std::vector<std::tuple<double, std::uint32_t, std::uint32_t>> all;
        for (std::uint32_t i = 0; i < 16; ++i) {
            for (std::uint32_t j = 0; j < 16; ++j) {
                all.emplace_back(d1[i] + d2[j], i, j);
            }
        }
        std::sort(all.begin(), all.end());
        const CellCursor c = multi_sequence(d1, d2, 256);
        bool same = c.emitted.size() == 256;
        for (std::size_t n = 0; same && n < 256; ++n) {
            same = c.emitted[n].i == std::get<1>(all[n]) && c.emitted[n].j == std::get<2>(all[n]) &&
                   c.emitted[n].distance == std::get<0>(all[n]);
        }
        exact_order += same ? 1 : 0;
    }

    const Dataset data = synth_mixture(4000, 32, 16, 0.3, 9);
    MultiIndexConfig mc;
    mc.coarse_k = 16;
    mc.fine_m = 4;
    mc.fine_k = 16;
    mc.fine_variant = Variant::NOCQ;
    mc.train.seed = 2;
    mc.train.mu = 1.0;
    mc.train.outer_iters = 10;
    const MultiIndex index = build_multi_index(data, mc);
    const Dataset queries = synth_mixture(16, 32, 16, 0.3, 10);
    double worst = 0.0;
    for (std::size_t q = 0; q < queries.n(); ++q) {
        const auto query = queries.row(q);
        const CoarseQuery cq = coarse_query(index, query);
        const auto cands = collect_candidates(index, multi_sequence(index, cq, 256), data.n());
        const SearchResult res = rerank_multi_d_adc(index, query, cands, cands.size());
        std::vector<double> by_id(data.n());
        for (std::size_t i = 0; i < res.ids.size(); ++i) {
            by_id[res.ids[i]] = res.scores[i];
        }
        for (const Candidate& c : cands) {
            const std::size_t cell = c.i * 16 + c.j;
            const double dropped = 2.0 * index.coarse_cross(c.i, c.j) +
                                   cross_term_delta(index.fine.codebooks, index.cell_codes[cell].code(c.posting));
            const double exact = squared_distance(query, to_std(reconstruct_posting(index, c)));
            const double lookup = by_id[index.cell_ids[cell][c.posting]] + dot(query, query) + dropped;
            worst = std::max(worst, rel_err(lookup, exact));
        }
    }
    return {exact_order == 200 && worst < 1e-9,
            fmt("%d/200 orders equal the exhaustive sort; rerank max rel err %.2e", exact_order, worst)};
}

Outcome soft_threshold_oracle() {
    std::mt19937_64 rng(808);
    std::uniform_real_distribution<double> pos(0.1, 5.0);
    std::uniform_real_distribution<double> any(-5.0, 5.0);
    std::uniform_real_distribution<double> lam(0.0, 5.0);
    int agree = 0;
    for (int t = 0; t < 1000; ++t) {
        const double a = pos(rng);
        const double b = any(rng);
        const double l = lam(rng);
        const auto g = [&](double c) { return 0.5 * a * c * c + b * c + l * std::abs(c); };
        const double reach = 1.5 * std::max(1.0, (std::abs(b) + l) / a);
        const double step = 2.0 * reach / 100000.0;
        double best_c = -reach;
        double best = g(best_c);
        for (int i = 1; i <= 100000; ++i) {
            const double c = -reach + i * step;
            if (g(c) < best) {
                best = g(c);
                best_c = c;
            }
        }
        const double c = soft_threshold_update(a, b, l);
        agree += g(c) <= best + 1e-12 && std::abs(c - best_c) <= step ? 1 : 0;
    }
    return {agree == 1000, fmt("%d/1000 match the grid oracle", agree)};
}

Dataset float_exact(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<float> g;
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<double>(g(rng));
    }
    return Dataset(m);
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

Outcome file_formats() {
    TempDir dir("acceptance");
    std::mt19937_64 rng(909);
    int ok = 0;
    int total = 0;
    const auto expect = [&](bool b) {
        ok += b ? 1 : 0;
        ++total;
    };

    const Dataset f = float_exact(50, 17, rng);
    write_vecs(f, dir / "a.fvecs", ElementKind::float32);
    const Dataset fb = read_vecs(dir / "a.fvecs", ElementKind::float32);
    expect(same_bits({f.vectors().data(), static_cast<std::size_t>(f.vectors().size())},
                     {fb.vectors().data(), static_cast<std::size_t>(fb.vectors().size())}));
    write_vecs(fb, dir / "b.fvecs", ElementKind::float32);
    expect(read_bytes(dir / "a.fvecs") == read_bytes(dir / "b.fvecs"));
    Matrix bytes(30, 9);
    Matrix ints(30, 9);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> word(std::numeric_limits<int>::min(), std::numeric_limits<int>::max());
    for (Eigen::Index i = 0; i < bytes.size(); ++i) {
        bytes.data()[i] = byte(rng);
        ints.data()[i] = word(rng);
    }
    write_vecs(Dataset(bytes), dir / "a.bvecs", ElementKind::uint8);
    write_vecs(Dataset(ints), dir / "a.ivecs", ElementKind::int32);
    expect(read_vecs(dir / "a.bvecs", ElementKind::uint8).vectors() == bytes);
    expect(read_vecs(dir / "a.ivecs", ElementKind::int32).vectors() == ints);

    const Dataset data = synth_mixture(400, 12, 8, 0.3, 11);
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.mu = 0.4;
    cfg.outer_iters = 4;
    for (const Variant v : {Variant::PQ, Variant::CKM, Variant::CQ, Variant::OCQ, Variant::NOCQ, Variant::SNOCQ}) {
        const TrainedQuantizer t = train_variant(v, data, 3, 8, cfg);
        const QuantizerModel& m = t.model;
        save_model(m, dir / "m.vqm");
        const QuantizerModel back = load_model(dir / "m.vqm");
        const auto& e1 = m.codebooks.elements();
        const auto& e2 = back.codebooks.elements();
        bool same = back.variant == m.variant && back.m() == m.m() && back.k() == m.k() && back.d() == m.d() &&
                    same_bits({e1.data(), static_cast<std::size_t>(e1.size())},
                              {e2.data(), static_cast<std::size_t>(e2.size())}) &&
                    std::bit_cast<std::uint64_t>(back.epsilon) == std::bit_cast<std::uint64_t>(m.epsilon) &&
                    std::bit_cast<std::uint64_t>(back.mu) == std::bit_cast<std::uint64_t>(m.mu) &&
                    std::bit_cast<std::uint64_t>(back.lambda) == std::bit_cast<std::uint64_t>(m.lambda) &&
                    same_bits(back.train_log, m.train_log) && same_bits(back.constraint_log, m.constraint_log) &&
                    same_bits(back.warmup_log, m.warmup_log) && back.rotation.has_value() == m.rotation.has_value();
        if (same && m.rotation) {
            same = same_bits({m.rotation->r.data(), static_cast<std::size_t>(m.rotation->r.size())},
                             {back.rotation->r.data(), static_cast<std::size_t>(back.rotation->r.size())});
        }
        expect(same);
        expect(serialize_model(back) == read_bytes(dir / "m.vqm"));
        save_codes(t.codes, 8, dir / "c.vqc");
        expect(load_codes(dir / "c.vqc").indices == t.codes.indices);
    }
    return {ok == total, fmt("%d/%d roundtrips bit-exact (3 containers, 6 model variants, codes)", ok, total)};
}

// ---------------------------------------------------------------------------

struct SparseRun {
    std::uint64_t seed = 0;
    std::size_t nnz = 0;
    std::size_t budget = 0;
    std::size_t entries = 0;  // M * K * D
    bool monotone = false;
    std::size_t sparse_ops = 0;
    std::size_t dense_ops = 0;
    double dense_error = 0.0;  // lambda = 0, full budget
    bool dense_monotone = false;
};

struct Desk {
    BenchReport report;
    double bench_seconds = 0.0;
    std::vector<SparseRun> sparse;
    double sparse_seconds = 0.0;
    double dense_sparse_seconds = 0.0;
    std::vector<MultiIndexBenchRow> multi;
    double multi_seconds = 0.0;
};

Desk run_desk() {
    Desk desk;
    const BenchConfig cfg = desk_preset();
    auto t0 = Clock::now();
    desk.report = run_bench(cfg);
    desk.bench_seconds = since(t0);

    std::mt19937_64 rng(1001);
    const Dataset probe = gaussian_dataset(1, cfg.d, rng);
    for (const std::uint64_t seed : cfg.seeds) {
        const auto [base, queries] = bench_data(cfg, seed);
        double mu = 0.0;
        for (const BenchRun* r : desk.report.runs_of(Variant::NOCQ)) {
            mu = r->seed == seed ? r->mu : mu;
        }
        SparseConfig sc;
        sc.train = cfg.train;
        sc.train.seed = derive_seed(seed, "bench.train");
        sc.train.mu = mu;
        sc.s_budget = cfg.k * cfg.d;
        sc.lambda = default_lambda_grid(base, cfg.m, cfg.k, sc.train)[1];
        t0 = Clock::now();
        const TrainedQuantizer s = train_snocq(base, cfg.m, cfg.k, sc);
        desk.sparse_seconds += since(t0);
        SparseRun run;
        run.seed = seed;
        run.budget = sc.s_budget;
        run.entries = cfg.m * cfg.k * cfg.d;
        run.nnz = s.model.codebooks.nonzeros();
        run.monotone = nonincreasing(s.model.warmup_log) && nonincreasing(s.model.train_log);
        build_distance_table(s.model.codebooks, probe.row(0), TableKind::squared_euclidean, &run.dense_ops);
        build_distance_table(SparseCodebooks::from_dense(s.model.codebooks), probe.row(0),
                             TableKind::squared_euclidean, &run.sparse_ops);

        sc.lambda = 0.0;
        sc.s_budget = cfg.m * cfg.k * cfg.d;
        t0 = Clock::now();
        const TrainedQuantizer dense = train_snocq(base, cfg.m, cfg.k, sc);
        desk.dense_sparse_seconds += since(t0);
        run.dense_error = quantization_error(dense.model.codebooks, dense.codes, base);
        run.dense_monotone = nonincreasing(dense.model.warmup_log) && nonincreasing(dense.model.train_log);
        desk.sparse.push_back(run);
    }

    t0 = Clock::now();
    const Variant fine[] = {Variant::PQ, Variant::NOCQ};
    const std::size_t lengths[] = {100, 1000, 4000};
    desk.multi = run_multi_index_bench(cfg, 16, fine, lengths);
    desk.multi_seconds = since(t0);
    return desk;
}

double mean_of(const BenchReport& rep, Variant v, double BenchRun::*field) {
    const auto runs = rep.runs_of(v);
    double s = 0.0;
    for (const BenchRun* r : runs) {
        s += r->*field;
    }
    return s / static_cast<double>(runs.size());
}

Outcome monotone_training(const Desk& desk) {
    int ok = 0;
    int total = 0;
    std::string bad;
    for (const BenchRun& r : desk.report.runs) {
        ++total;
        ok += r.monotone ? 1 : 0;
        if (!r.monotone) {
            bad += fmt(" %s/seed%llu", std::string(variant_name(r.variant)).c_str(),
                       static_cast<unsigned long long>(r.seed));
        }
    }
    for (const SparseRun& s : desk.sparse) {
        ++total;
        ok += s.monotone ? 1 : 0;
        if (!s.monotone) {
            bad += fmt(" SNOCQ/seed%llu", static_cast<unsigned long long>(s.seed));
        }
    }
    return {ok == total, fmt("%d/%d runs monotone over PQ, CKM, CQ, OCQ, NOCQ, SNOCQ x 5 seeds%s", ok, total,
                             bad.empty() ? "" : ("; failing:" + bad).c_str())};
}

Outcome error_ordering(const Desk& desk) {
    const auto& r = desk.report;
    const double cq = r.mean_error(Variant::CQ);
    const double nocq = r.mean_error(Variant::NOCQ);
    const double ocq = r.mean_error(Variant::OCQ);
    const double pq = r.mean_error(Variant::PQ);
    const bool order = cq <= nocq && nocq <= 1.05 * ocq && nocq <= pq;
    const bool fast = desk.bench_seconds < 180.0;
    return {order && fast, fmt("CQ %.1f <= NOCQ %.1f <= 1.05*OCQ %.1f, PQ %.1f; bench %.1f s of 180", cq, nocq,
                               1.05 * ocq, pq, desk.bench_seconds)};
}

Outcome recall_ordering(const Desk& desk) {
    const auto& r = desk.report;
    const double nocq = r.mean_recall(Variant::NOCQ);
    const double ocq = r.mean_recall(Variant::OCQ);
    const double pq = r.mean_recall(Variant::PQ);
    const bool order = nocq >= ocq - 0.01 && nocq >= pq;
    const bool fast = desk.bench_seconds < 180.0;
    return {order && fast, fmt("recall@10 NOCQ %.3f, OCQ %.3f, CKM %.3f, PQ %.3f; bench %.1f s of 180", nocq, ocq,
                               r.mean_recall(Variant::CKM), pq, desk.bench_seconds)};
}

Outcome sparse_budget(const Desk& desk, const Outcome& oracle, double* seconds) {
    bool budget = true;
    bool ops = true;
    std::size_t worst_nnz = 0;
    double worst_ratio = 0.0;
    for (const SparseRun& s : desk.sparse) {
        budget = budget && s.nnz <= s.budget;
        worst_nnz = std::max(worst_nnz, s.nnz);
        const double allowed =
            1.1 * static_cast<double>(s.dense_ops) * static_cast<double>(s.nnz) / static_cast<double>(s.entries);
        ops = ops && static_cast<double>(s.sparse_ops) <= allowed;
        worst_ratio = std::max(worst_ratio, static_cast<double>(s.sparse_ops) / static_cast<double>(s.dense_ops));
    }
    *seconds += desk.sparse_seconds;
    const bool fast = *seconds < 120.0;
    return {budget && ops && oracle.pass && fast,
            fmt("max nnz %zu of S=%zu over 5 seeds; sparse/dense table ops %.3f; %s; %.1f s of 120", worst_nnz,
                desk.sparse.empty() ? 0 : desk.sparse.front().budget, worst_ratio, oracle.detail.c_str(), *seconds)};
}

std::string reference_report() {
    const ThreadScope one(1);
    BenchConfig cfg = desk_preset();
    cfg.seeds = {1};
    std::ostringstream out;
    write_bench_report(run_bench(cfg), out);
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    const auto start = Clock::now();
    Ledger ledger;
    std::cout.setf(std::ios::unitbuf);

    const auto timed = [](auto&& fn) {
        const auto t0 = Clock::now();
        Outcome o = fn();
        return std::pair{o, since(t0)};
    };
    const auto limit = [](std::pair<Outcome, double> r, double max_seconds) {
        if (r.second >= max_seconds) {
            r.first.pass = false;
            r.first.detail += fmt("; over the %.0f s budget", max_seconds);
        }
        return r;
    };

    auto [c1, t1] = limit(timed(expansion_exactness), 5);
    ledger.criterion(1, "distance expansion is exact", c1, t1);
    auto [c2, t2] = limit(timed(triangle_inequality), 10);
    ledger.criterion(2, "generalized triangle inequality", c2, t2);
    auto [c3, t3] = limit(timed(gradient_check), 30);
    ledger.criterion(3, "gradient matches finite differences", c3, t3);

    std::cerr << "running the desk benchmark (5 seeds, all variants, sparse and multi-index runs)..." << std::endl;
    const Desk desk = run_desk();
    ledger.criterion(4, "training is monotone", monotone_training(desk), desk.bench_seconds + desk.sparse_seconds);
    ledger.criterion(5, "error ordering", error_ordering(desk), desk.bench_seconds);
    ledger.criterion(6, "recall ordering", recall_ordering(desk), desk.bench_seconds);

    auto [c7, t7] = limit(timed(icm_versus_brute_force), 5);
    ledger.criterion(7, "ICM reaches the enumerated optimum", c7, t7);
    auto [c8, t8] = limit(timed(cardinalities), 5);
    ledger.criterion(8, "selection cardinalities and objective order", c8, t8);
    auto [c9, t9] = limit(timed(inner_product_bound), 10);
    ledger.criterion(9, "inner-product bound and scale invariance", c9, t9);
    auto [c10, t10] = limit(timed(multi_sequence_correctness), 20);
    ledger.criterion(10, "multi-sequence order and rerank expansion", c10, t10);
    auto [oracle, t_oracle] = timed(soft_threshold_oracle);
    double t11 = t_oracle;
    const Outcome c11 = sparse_budget(desk, oracle, &t11);
    ledger.criterion(11, "sparsity budget and sparse table cost", c11, t11);
    auto [c12, t12] = timed(file_formats);
    ledger.criterion(12, "file formats roundtrip bit-exact", c12, t12);

    // Full-suite budget: this run plus the unit tests, and the single-seed
    // reference mode repeated bit for bit.
    auto t0 = Clock::now();
    const bool reproducible = reference_report() == reference_report();
    const double t_repro = since(t0);
    double unit_seconds = 0.0;
    int unit_status = 0;
    if (argc > 1) {
        t0 = Clock::now();
        unit_status = std::system(("\"" + std::string(argv[1]) + "\" > /dev/null 2>&1").c_str());
        unit_seconds = since(t0);
    }
    const double total = since(start);
    const Outcome c13{reproducible && total < 600.0,
                      fmt("suite %.1f s of 600 (unit tests %.1f s, status %d; %u hardware threads); single-seed "
                          "reference run %s (%.1f s for two runs)",
                          total, unit_seconds, unit_status, std::thread::hardware_concurrency(),
                          reproducible ? "bit-identical" : "DIFFERS", t_repro)};
    ledger.criterion(13, "full suite budget and reproducibility", c13, total);

    // Desk-scale module checks sharing the runs above.
    const auto& rep = desk.report;
    {
        int ok = 0;
        double worst = 0.0;
        for (const BenchRun* r : rep.runs_of(Variant::NOCQ)) {
            const double limit_dev = 0.1 * r->error / static_cast<double>(rep.config.n);
            ok += r->mean_deviation <= limit_dev ? 1 : 0;
            worst = std::max(worst, r->mean_deviation / limit_dev);
        }
        ledger.check("nocq-deviation", {ok == 5, fmt("mean |delta - eps| within 0.1 * error/N on %d/5 seeds (worst "
                                                     "at %.2f of the limit)",
                                                     ok, worst)});
    }
    {
        const double with = mean_of(rep, Variant::NOCQ, &BenchRun::recall_with_delta);
        const double without = mean_of(rep, Variant::NOCQ, &BenchRun::recall_without_delta);
        ledger.check("nocq-delta-free-recall", {std::abs(with - without) <= 0.03 + 1e-12,
                                                fmt("5-seed mean recall@10 %.3f without delta vs %.3f with", without,
                                                    with)});
    }
    {
        bool ok = true;
        std::string detail;
        for (const Variant v : rep.config.variants) {
            const double comp = mean_of(rep, v, &BenchRun::recall_compressed);
            const double plain = rep.mean_recall(v);
            ok = ok && comp <= plain + 1e-9;
            detail += fmt("%s %.3f/%.3f ", std::string(variant_name(v)).c_str(), comp, plain);
        }
        detail.pop_back();
        ledger.check("compressed-query-recall", {ok, "5-seed mean compressed/uncompressed recall@10: " + detail});
    }
    {
        double dense = 0.0;
        bool monotone = true;
        for (const SparseRun& s : desk.sparse) {
            dense += s.dense_error / static_cast<double>(desk.sparse.size());
            monotone = monotone && s.dense_monotone;
        }
        const double nocq = rep.mean_error(Variant::NOCQ);
        ledger.check("snocq-unconstrained-vs-nocq",
                     {std::abs(dense - nocq) <= 0.05 * nocq && monotone,
                      fmt("lambda=0, S=MKD error %.1f vs NOCQ %.1f (%+.2f%%)", dense, nocq, 100.0 * (dense / nocq - 1))},
                     desk.dense_sparse_seconds);
    }
    {
        bool better = true;
        bool grows = true;
        std::string detail;
        for (std::size_t i = 0; i < desk.multi.size(); ++i) {
            const auto& row = desk.multi[i];
            detail += fmt("%s L=%zu %.3f, ", std::string(variant_name(row.fine_variant)).c_str(), row.list_length,
                          row.recall_at_10);
            if (i > 0 && desk.multi[i - 1].fine_variant == row.fine_variant) {
                grows = grows && row.recall_at_10 >= desk.multi[i - 1].recall_at_10;
            }
            if (row.fine_variant == Variant::NOCQ) {
                for (const auto& other : desk.multi) {
                    if (other.fine_variant == Variant::PQ && other.list_length == row.list_length) {
                        better = better && row.recall_at_10 >= other.recall_at_10;
                    }
                }
            }
        }
        detail.resize(detail.size() - 2);
        ledger.check("multi-index-nocq-vs-pq", {better, "5-seed mean recall@10: " + detail}, desk.multi_seconds);
        ledger.check("multi-index-recall-grows-with-L", {grows, "same runs"});
    }
    ledger.check("bench-desk-under-5-min",
                 {desk.bench_seconds < 300.0, fmt("%.1f s of 300", desk.bench_seconds)});

    std::cout << (ledger.all_pass() ? "ALL PASS" : fmt("%d FAILED", ledger.failures())) << std::endl;
    return ledger.all_pass() ? 0 : 1;
}
