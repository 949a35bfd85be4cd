#include "test_support.hpp"

#include <catch2/catch_test_macros.hpp>

#include <numeric>
#include <set>

using namespace vqann;
using namespace vqann::testing;

namespace {

// Best code by enumerating all K^M combinations (M = 2).
std::pair<Code, double> brute_force_pair(const CodebookSet& books, std::span<const double> x, double mu,
                                         double eps) {
    Code best{0, 0};
    double best_f = std::numeric_limits<double>::infinity();
    for (std::uint32_t a = 0; a < books.k(); ++a) {
        for (std::uint32_t b = 0; b < books.k(); ++b) {
            const Code c{a, b};
            const double f = encoding_objective(books, x, mu, eps, c);
            if (f < best_f) {
                best_f = f;
                best = c;
            }
        }
    }
    return {best, best_f};
}

// PQ's encoder: every dictionary independently takes the element nearest to x.
Code pq_init(const CodebookSet& books, std::span<const double> x) {
    Code c(books.m());
    for (std::size_t m = 0; m < books.m(); ++m) {
        double best = std::numeric_limits<double>::infinity();
        for (std::uint32_t k = 0; k < books.k(); ++k) {
            const double d = squared_distance(x, books.element(m, k));
            if (d < best) {
                best = d;
                c[m] = k;
            }
        }
    }
    return c;
}

}  // namespace

TEST_CASE("reconstruction sums the selected elements", "[core]") {
    std::mt19937_64 rng(1);
    const CodebookSet one = random_codebooks(1, 5, 3, rng);
    const Vector r1 = reconstruct(one, Code{3});
    CHECK(std::equal(r1.data(), r1.data() + 3, one.element(0, 3).begin()));

    Matrix e(4, 2);
    e << 9, 9, 1, 0, 0, 1, 7, 7;
    const CodebookSet two(2, 2, e);
    const Vector r2 = reconstruct(two, Code{1, 0});
    CHECK(r2[0] == 1.0);
    CHECK(r2[1] == 1.0);

    const CodebookSet books = random_codebooks(4, 8, 16, rng);
    for (int t = 0; t < 20; ++t) {
        const Code c = random_code(4, 8, rng);
        const Vector got = reconstruct(books, c);
        for (std::size_t d = 0; d < 16; ++d) {
            double s = 0.0;
            for (std::size_t m = 0; m < 4; ++m) {
                s += books.element(m, c[m])[d];
            }
            CHECK(std::abs(s - got[static_cast<Eigen::Index>(d)]) < 1e-12);
        }
    }
}

TEST_CASE("quantization error is the sum of per-point residuals", "[core]") {
    Matrix e(1, 2);
    e << 0, 0;
    Matrix x(1, 2);
    x << 3, 4;
    CHECK(quantization_error(CodebookSet(1, 1, e), CodeSet(1, 1), Dataset(x)) == 25.0);

    std::mt19937_64 rng(2);
    const CodebookSet books = random_codebooks(3, 4, 5, rng);
    const CodeSet codes = random_codes(30, 3, 4, rng);
    Matrix recon(30, 5);
    double want = 0.0;
    for (std::size_t n = 0; n < 30; ++n) {
        recon.row(static_cast<Eigen::Index>(n)) = reconstruct(books, codes.code(n)).transpose();
    }
    const Dataset exact(recon);
    CHECK(quantization_error(books, codes, exact) < 1e-20);
    const Dataset data = gaussian_dataset(30, 5, rng);
    for (std::size_t n = 0; n < 30; ++n) {
        want += squared_distance(data.row(n), row_span(recon, static_cast<Eigen::Index>(n)));
    }
    CHECK(rel_err(quantization_error(books, codes, data), want) < 1e-12);
    CHECK_THROWS_AS(quantization_error(books, random_codes(29, 3, 4, rng), data), DimensionError);
}

TEST_CASE("cross term follows the norm identity", "[core]") {
    std::mt19937_64 rng(3);
    const CodebookSet one = random_codebooks(1, 4, 3, rng);
    CHECK(cross_term_delta(one, Code{2}) == 0.0);

    Matrix e = Matrix::Zero(6, 3);
    e(0, 0) = 1;
    e(2, 1) = 2;
    e(4, 2) = -3;
    CHECK(cross_term_delta(CodebookSet(3, 2, e), Code{0, 0, 0}) == 0.0);

    const CodebookSet books = random_codebooks(3, 6, 7, rng);
    const InnerProductCache cache(books);
    for (int t = 0; t < 50; ++t) {
        const Code c = random_code(3, 6, rng);
        const Vector sum = reconstruct(books, c);
        double norms = 0.0;
        for (std::size_t m = 0; m < 3; ++m) {
            norms += dot(books.element(m, c[m]), books.element(m, c[m]));
        }
        const double delta = cross_term_delta(books, c);
        CHECK(rel_err(delta, sum.squaredNorm() - norms) < 1e-9);
        CHECK(rel_err(cross_term_delta(books, c, &cache), delta) < 1e-12);
    }
}

TEST_CASE("inner product cache is symmetric and exact", "[core]") {
    std::mt19937_64 rng(4);
    const CodebookSet books = random_codebooks(3, 5, 4, rng);
    const InnerProductCache cache(books);
    std::uniform_int_distribution<std::size_t> mi(0, 2);
    std::uniform_int_distribution<std::size_t> ki(0, 4);
    for (int t = 0; t < 100; ++t) {
        const std::size_t i = mi(rng), r = ki(rng), j = mi(rng), s = ki(rng);
        CHECK(cache.at(i, r, j, s) == cache.at(j, s, i, r));
        CHECK(std::abs(cache.at(i, r, j, s) - dot(books.element(i, r), books.element(j, s))) < 1e-12);
    }
    Matrix e = Matrix::Zero(4, 2);
    e(0, 0) = 1;
    e(1, 0) = -1;
    e(2, 1) = 1;
    e(3, 1) = 2;
    const InnerProductCache ortho(CodebookSet(2, 2, e));
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t s = 0; s < 2; ++s) {
            CHECK(ortho.at(0, r, 1, s) == 0.0);
        }
    }
}

TEST_CASE("three-term expansion is exact", "[core]") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 200; ++t) {
        const CodebookSet books = random_codebooks(4, 16, 32, rng);
        const Code c = random_code(4, 16, rng);
        const Vector q = gaussian_matrix(32, 1, rng);
        const auto qs = as_span(q);
        double lhs = 0.0;
        for (std::size_t m = 0; m < 4; ++m) {
            lhs += squared_distance(qs, books.element(m, c[m]));
        }
        lhs += -3.0 * q.squaredNorm() + cross_term_delta(books, c);
        const double rhs = (q - reconstruct(books, c)).squaredNorm();
        CHECK(rel_err(lhs, rhs) < 1e-9);
    }
}

TEST_CASE("single-dictionary ICM picks the nearest element", "[core]") {
    std::mt19937_64 rng(6);
    const CodebookSet books = random_codebooks(1, 9, 4, rng);
    for (int t = 0; t < 20; ++t) {
        const Vector x = gaussian_matrix(4, 1, rng);
        const Code got = icm_encode(books, as_span(x), 0.0, 0.0, Code{0}, 1);
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t arg = 0;
        for (std::uint32_t k = 0; k < 9; ++k) {
            const double d = squared_distance(as_span(x), books.element(0, k));
            if (d < best) {
                best = d;
                arg = k;
            }
        }
        CHECK(got[0] == arg);
    }
}

TEST_CASE("ICM never worsens its start on arbitrary codebooks", "[core]") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100; ++t) {
        const CodebookSet books = random_codebooks(2, 4, 6, rng);
        const Vector x = gaussian_matrix(6, 1, rng);
        const Code init = pq_init(books, as_span(x));
        const Code got = icm_encode(books, as_span(x), 0.0, 0.0, init, 3);
        CHECK(encoding_objective(books, as_span(x), 0.0, 0.0, got) <=
              encoding_objective(books, as_span(x), 0.0, 0.0, init));
    }
}

TEST_CASE("ICM from the PQ code finds the optimum of a trained model", "[core]") {
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
    const CodeSet pq_codes = encode(pq.model, points);
    const CodebookSet& books = cq.model.codebooks;
    int optimal = 0;
    for (std::size_t i = 0; i < points.n(); ++i) {
        const auto x = points.row(i);
        const Code init(pq_codes.code(i).begin(), pq_codes.code(i).end());
        const Code got = icm_encode(books, x, 0.0, 0.0, init, 3);
        const double f = encoding_objective(books, x, 0.0, 0.0, got);
        CHECK(f <= encoding_objective(books, x, 0.0, 0.0, init));
        optimal += f <= brute_force_pair(books, x, 0.0, 0.0).second + 1e-12 ? 1 : 0;
    }
    CHECK(optimal >= 95);
}

TEST_CASE("ICM objective never rises across sweeps", "[core]") {
    std::mt19937_64 rng(8);
    const CodebookSet books = random_codebooks(4, 8, 10, rng);
    for (int t = 0; t < 30; ++t) {
        const Vector x = gaussian_matrix(10, 1, rng);
        const double mu = (t % 3) * 0.5;
        const double eps = 0.3;
        Code c = random_code(4, 8, rng);
        double prev = encoding_objective(books, as_span(x), mu, eps, c);
        for (int sweep = 0; sweep < 4; ++sweep) {
            c = icm_encode(books, as_span(x), mu, eps, c, 1);
            const double f = encoding_objective(books, as_span(x), mu, eps, c);
            CHECK(f <= prev + 1e-12 * std::abs(prev));
            prev = f;
        }
    }
}

TEST_CASE("a heavy penalty pulls the cross term toward epsilon", "[core]") {
    const Dataset all = synth_mixture(1100, 32, 16, 0.3, 2);
    std::vector<std::size_t> train(1000);
    std::vector<std::size_t> held(100);
    std::iota(train.begin(), train.end(), std::size_t{0});
    std::iota(held.begin(), held.end(), std::size_t{1000});
    TrainConfig cfg;
    cfg.seed = 2;
    const TrainedQuantizer cq = train_cq(all.subset(train), 2, 4, cfg);
    const CodebookSet& books = cq.model.codebooks;
    const Dataset points = all.subset(held);
    int close = 0;
    for (std::size_t i = 0; i < points.n(); ++i) {
        const auto x = points.row(i);
        const auto [opt, f] = brute_force_pair(books, x, 0.0, 0.0);
        const double eps = cross_term_delta(books, opt);
        const Code warm = icm_encode(books, x, 0.0, 0.0, pq_init(books, x), 3);
        const Code got = icm_encode(books, x, 1e6, eps, warm, 3);
        const bool within = std::abs(cross_term_delta(books, got) - eps) <= 0.1 * std::abs(eps);
        if (warm == opt) {
            CHECK(within);
        }
        close += within ? 1 : 0;
    }
    CHECK(close >= 95);
}

TEST_CASE("ICM checks shapes", "[core]") {
    std::mt19937_64 rng(10);
    const CodebookSet books = random_codebooks(2, 4, 6, rng);
    const Vector x = gaussian_matrix(6, 1, rng);
    const Vector short_x = gaussian_matrix(5, 1, rng);
    CHECK_THROWS_AS(icm_encode(books, as_span(x), 0, 0, Code{0}, 1), DimensionError);
    CHECK_THROWS_AS(icm_encode(books, as_span(short_x), 0, 0, Code{0, 0}, 1), DimensionError);
}

TEST_CASE("group selection reaches K^M sums, shared selection binom(K+M-1, M)", "[core]") {
    std::mt19937_64 rng(11);
    const CodebookSet books = random_codebooks(2, 3, 4, rng);
    std::set<std::vector<double>> group;
    std::set<std::vector<double>> shared;
    for (std::uint32_t a = 0; a < 3; ++a) {
        for (std::uint32_t b = 0; b < 3; ++b) {
            group.insert(to_std(reconstruct(books, Code{a, b})));
            // Both picks from dictionary 0, order irrelevant.
            Vector s(4);
            for (std::size_t d = 0; d < 4; ++d) {
                s[static_cast<Eigen::Index>(d)] = books.element(0, std::min(a, b))[d] + books.element(0, std::max(a, b))[d];
            }
            shared.insert(to_std(s));
        }
    }
    CHECK(group.size() == 9);
    CHECK(shared.size() == 6);
}

TEST_CASE("packed codes roundtrip for byte and bitfield widths", "[core]") {
    std::mt19937_64 rng(12);
    for (const std::size_t k : {2, 16, 256, 300, 4096}) {
        const CodeSet codes = random_codes(37, 3, k, rng);
        const auto bytes = pack_codes(codes, k);
        const std::size_t per_vector = (3 * bits_per_index(k) + 7) / 8;
        CHECK(bytes.size() == 37 * per_vector);
        CHECK(unpack_codes(bytes, 37, 3, k).indices == codes.indices);
    }
    CHECK(bits_per_index(256) == 8);
    CHECK(bits_per_index(300) == 9);
    CHECK(bits_per_index(16) == 8);
    CHECK(index_bits(16) == 4);
    CHECK(code_bits(4, 256) == 32);
    CodeSet bad(1, 1);
    bad.indices[0] = 16;
    CHECK_THROWS_AS(pack_codes(bad, 16), RangeError);
    CHECK_THROWS_AS(unpack_codes(std::vector<std::uint8_t>(3), 2, 1, 16), FormatError);
}

TEST_CASE("codebooks refuse non-finite entries and bad shapes", "[core]") {
    Matrix e = Matrix::Zero(4, 2);
    e(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(CodebookSet(2, 2, e), RangeError);
    CHECK_THROWS_AS(CodebookSet(2, 3, Matrix::Zero(4, 2)), DimensionError);
}

TEST_CASE("fresh encoding is at least as good as the greedy start", "[core]") {
    std::mt19937_64 rng(13);
    const CodebookSet books = random_codebooks(3, 8, 6, rng);
    const Dataset data = gaussian_dataset(100, 6, rng);
    const CodeSet fresh = encode_fresh(books, data, EncodeOptions{});
    CodeSet greedy(100, 3);
    for (std::size_t n = 0; n < 100; ++n) {
        const Code g = greedy_init(books, data.row(n));
        std::copy(g.begin(), g.end(), greedy.code(n).begin());
    }
    CHECK(quantization_error(books, fresh, data) <= quantization_error(books, greedy, data));
}
