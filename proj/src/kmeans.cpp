#include "vqann/solvers.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace vqann {

namespace {

// Index where the running sum of `weights` first exceeds `target`; skips zero weights.
std::size_t sample_index(const std::vector<double>& weights, double target) {
    std::size_t pick = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) {
            continue;
        }
        pick = i;
        target -= weights[i];
        if (target < 0.0) {
            break;
        }
    }
    return pick;
}

// Greedy k-means++: each step draws 2 + floor(ln k) candidates by D^2
// sampling and keeps the one that lowers the potential most.
Matrix seed_plus_plus(const Matrix& x, std::size_t k, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(x.rows());
    std::mt19937_64 rng(derive_seed(seed, "kmeans++"));
    Matrix centers(static_cast<Eigen::Index>(k), x.cols());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::vector<char> chosen(n, 0);
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
    std::vector<double> trial_d2(n);
    std::vector<double> best_d2(n);

    auto distances_to = [&](std::size_t p, std::vector<double>& out) {
        const auto cp = row_span(x, static_cast<Eigen::Index>(p));
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = std::min(d2[i], squared_distance(row_span(x, static_cast<Eigen::Index>(i)), cp));
            total += out[i];
        }
        return total;
    };

    for (std::size_t c = 0; c < k; ++c) {
        std::size_t pick = 0;
        if (c == 0) {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
            distances_to(pick, best_d2);
        } else {
            const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
            if (total > 0.0) {
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t t = 0; t < trials; ++t) {
                    const std::size_t cand = sample_index(d2, std::uniform_real_distribution<double>(0.0, total)(rng));
                    const double potential = distances_to(cand, trial_d2);
                    if (potential < best) {
                        best = potential;
                        pick = cand;
                        best_d2.swap(trial_d2);
                    }
                }
            } else {
                // All remaining mass is zero: take the first unused point.
                while (pick < n && chosen[pick]) {
                    ++pick;
                }
                if (pick == n) {
                    pick = 0;
                }
                distances_to(pick, best_d2);
            }
        }
        chosen[pick] = 1;
        centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
        d2.swap(best_d2);
    }
    return centers;
}

std::vector<std::size_t> update_centers(const Matrix& x, const std::vector<std::uint32_t>& assign, Matrix& centers) {
    const auto k = static_cast<std::size_t>(centers.rows());
    Matrix sums = Matrix::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> counts(k, 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
        ++counts[assign[static_cast<std::size_t>(i)]];
    }
    std::vector<std::size_t> empty;
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
            empty.push_back(c);
        } else {
            centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        }
    }
    return empty;
}

// Moves each empty center onto the point currently worst served.
void repair_empty(const Matrix& x, std::vector<std::uint32_t>& assign, Matrix& centers,
                  const std::vector<std::size_t>& empty) {
    if (empty.empty()) {
        return;
    }
    std::vector<double> dist(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        dist[static_cast<std::size_t>(i)] =
            squared_distance(row_span(x, i), row_span(centers, assign[static_cast<std::size_t>(i)]));
    }
    for (const std::size_t c : empty) {
        std::size_t worst = 0;
        for (std::size_t i = 1; i < dist.size(); ++i) {
            if (dist[i] > dist[worst]) {
                worst = i;
            }
        }
        centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(worst));
        assign[worst] = static_cast<std::uint32_t>(c);
        dist[worst] = 0.0;
    }
}

KMeansResult lloyd(const Matrix& x, Matrix centers, std::size_t max_iters, bool repair) {
    KMeansResult r;
    double err = 0.0;
    r.assignments = assign_nearest(x, centers, &err);
    r.error_log.push_back(err);
    for (std::size_t it = 0; it < max_iters; ++it) {
        const auto empty = update_centers(x, r.assignments, centers);
        if (repair) {
            repair_empty(x, r.assignments, centers, empty);
        }
        auto next = assign_nearest(x, centers, &err);
        r.error_log.push_back(err);
        const bool stable = next == r.assignments;
        r.assignments = std::move(next);
        if (stable) {
            break;
        }
    }
    r.centers = std::move(centers);
    r.error = err;
    return r;
}

}  // namespace

std::vector<std::uint32_t> assign_nearest(const Matrix& points, const Matrix& centers, double* error) {
    const auto n = points.rows();
    std::vector<std::uint32_t> assign(static_cast<std::size_t>(n));
    std::vector<double> best(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto xi = row_span(points, i);
        double b = std::numeric_limits<double>::infinity();
        std::uint32_t arg = 0;
        for (Eigen::Index c = 0; c < centers.rows(); ++c) {
            const double d = squared_distance(xi, row_span(centers, c));
            if (d < b) {
                b = d;
                arg = static_cast<std::uint32_t>(c);
            }
        }
        assign[static_cast<std::size_t>(i)] = arg;
        best[static_cast<std::size_t>(i)] = b;
    }
    if (error != nullptr) {
        *error = std::accumulate(best.begin(), best.end(), 0.0);
    }
    return assign;
}

KMeansResult kmeans(const Dataset& data, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
    if (k == 0 || k > data.n()) {
        throw std::invalid_argument("kmeans needs 1 <= k <= n");
    }
    return lloyd(data.vectors(), seed_plus_plus(data.vectors(), k, seed), max_iters, true);
}

KMeansResult kmeans_from(const Dataset& data, Matrix centers, std::size_t max_iters) {
    if (centers.cols() != data.vectors().cols()) {
        throw DimensionError("center dimension mismatch");
    }
    return lloyd(data.vectors(), std::move(centers), max_iters, false);
}

}  // namespace vqann
