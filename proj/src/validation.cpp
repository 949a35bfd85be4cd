#include "vqann/search.hpp"
#include "vqann/sparse.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace vqann {

namespace {

struct ValidationSplit {
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> query_ids;
    Dataset train;
    Dataset queries;
    GroundTruth truth;
};

ValidationSplit make_split(const Dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("validation fraction must be in (0, 1)");
    }
    std::vector<std::size_t> ids(data.n());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, "validation.split"));
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto nq = std::clamp<std::size_t>(static_cast<std::size_t>(fraction * static_cast<double>(data.n())), 1,
                                            data.n() - 1);
    ValidationSplit s;
    s.query_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(nq));
    s.train_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(nq), ids.end());
    std::sort(s.query_ids.begin(), s.query_ids.end());
    std::sort(s.train_ids.begin(), s.train_ids.end());
    s.train = data.subset(s.train_ids);
    s.queries = data.subset(s.query_ids);
    s.truth = brute_force_groundtruth(data, s.queries, std::min<std::size_t>(100, data.n()));
    return s;
}

// Mean recall@T (R = T) over T in {5, 10, ..., 100}, validation vectors as
// queries against every base vector.
double validation_score(const TrainedQuantizer& trained, const ValidationSplit& split, std::size_t n) {
    const QuantizerModel& model = trained.model;
    CodeSet all(n, model.m());
    for (std::size_t i = 0; i < split.train_ids.size(); ++i) {
        const auto src = trained.codes.code(i);
        std::copy(src.begin(), src.end(), all.code(split.train_ids[i]).begin());
    }
    const CodeSet fresh = encode(model, split.queries);
    for (std::size_t i = 0; i < split.query_ids.size(); ++i) {
        const auto src = fresh.code(i);
        std::copy(src.begin(), src.end(), all.code(split.query_ids[i]).begin());
    }
    const auto results = search_all(model, split.queries, all, split.truth.width);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 5; t <= 100 && t <= split.truth.width; t += 5) {
        total += recall_at_r(results, split.truth, t, t);
        ++count;
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

template <typename Train>
std::pair<std::size_t, std::vector<double>> grid_search(const std::vector<double>& grid, Train&& train) {
    std::vector<double> scores;
    std::size_t best = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        scores.push_back(train(grid[i]));
        // Strictly better only: ties keep the smaller (earlier, sorted) value.
        if (scores[i] > scores[best]) {
            best = i;
        }
    }
    return {best, std::move(scores)};
}

}  // namespace

TrainedQuantizer train_variant(Variant variant, const Dataset& data, std::size_t m, std::size_t k,
                               const TrainConfig& config) {
    switch (variant) {
        case Variant::PQ:
            return train_pq_model(data, m, k, config);
        case Variant::CKM:
            return train_ckm_model(data, m, k, config);
        case Variant::CQ:
            return train_cq(data, m, k, config);
        case Variant::OCQ:
            return train_ocq(data, m, k, config);
        case Variant::NOCQ:
            return train_nocq(data, m, k, config);
        case Variant::SNOCQ: {
            SparseConfig sc;
            sc.train = config;
            return train_snocq(data, m, k, sc);
        }
    }
    throw std::invalid_argument("unknown variant");
}

std::vector<double> default_mu_grid(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config) {
    const PqResult pq = train_pq(data, m, k, SubspaceLayout::natural(data.d(), m), config.kmeans_iters,
                                 derive_seed(config.seed, "pq"));
    double err = 0.0;
    for (const double e : pq.subspace_errors) {
        err += e;
    }
    const double per_point = err / static_cast<double>(data.n());
    std::vector<double> grid{0.0};
    for (const double f : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
        grid.push_back(f / per_point);
    }
    return grid;
}

MuSelection select_mu(Variant variant, const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config) {
    MuSelection sel;
    sel.grid = config.mu_grid.empty() ? default_mu_grid(data, m, k, config) : config.mu_grid;
    std::sort(sel.grid.begin(), sel.grid.end());
    if (sel.grid.size() == 1) {
        sel.mu = sel.grid.front();
        return sel;
    }
    const ValidationSplit split = make_split(data, config.validation_fraction, config.seed);
    auto [best, scores] = grid_search(sel.grid, [&](double mu) {
        TrainConfig tc = config;
        tc.mu = mu;
        return validation_score(train_variant(variant, split.train, m, k, tc), split, data.n());
    });
    sel.mu = sel.grid[best];
    sel.scores = std::move(scores);
    return sel;
}

LambdaSelection select_lambda(const Dataset& data, std::size_t m, std::size_t k, const SparseConfig& config,
                              std::vector<double> grid) {
    LambdaSelection sel;
    sel.grid = grid.empty() ? default_lambda_grid(data, m, k, config.train) : std::move(grid);
    std::sort(sel.grid.begin(), sel.grid.end());
    if (sel.grid.size() == 1) {
        sel.lambda = sel.grid.front();
        return sel;
    }
    const ValidationSplit split = make_split(data, config.train.validation_fraction, config.train.seed);
    auto [best, scores] = grid_search(sel.grid, [&](double lambda) {
        SparseConfig sc = config;
        sc.lambda = lambda;
        return validation_score(train_snocq(split.train, m, k, sc), split, data.n());
    });
    sel.lambda = sel.grid[best];
    sel.scores = std::move(scores);
    return sel;
}

}  // namespace vqann
