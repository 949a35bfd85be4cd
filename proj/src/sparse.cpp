#include "vqann/sparse.hpp"

#include "vqann/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vqann {

namespace {

struct PointState {
    Matrix recon;                // N x D reconstructions
    std::vector<double> delta;   // per-point cross term
};

PointState compute_state(const CodebookSet& books, const CodeSet& codes) {
    PointState s;
    s.recon.resize(static_cast<Eigen::Index>(codes.size()), static_cast<Eigen::Index>(books.d()));
    for (std::size_t n = 0; n < codes.size(); ++n) {
        s.recon.row(static_cast<Eigen::Index>(n)) = reconstruct(books, codes.code(n)).transpose();
    }
    s.delta = cross_term_deltas(books, codes);
    return s;
}

std::vector<std::vector<std::uint32_t>> members(const CodeSet& codes, std::size_t k) {
    std::vector<std::vector<std::uint32_t>> out(codes.m * k);
    for (std::size_t n = 0; n < codes.size(); ++n) {
        const auto c = codes.code(n);
        for (std::size_t m = 0; m < codes.m; ++m) {
            out[m * k + c[m]].push_back(static_cast<std::uint32_t>(n));
        }
    }
    return out;
}

double l1(const CodebookSet& books) {
    return books.elements().cwiseAbs().sum();
}

// One lexicographic (m, k, d) sweep; entries with mask == 0 stay untouched.
void coordinate_sweep(CodebookSet& books, const CodeSet& codes, const Dataset& data, double mu, double epsilon,
                      double lambda, const std::vector<char>* mask, PointState& state) {
    const auto groups = members(codes, books.k());
    const std::size_t dims = books.d();
    for (std::size_t m = 0; m < books.m(); ++m) {
        for (std::size_t k = 0; k < books.k(); ++k) {
            const auto& pts = groups[m * books.k() + k];
            if (pts.empty()) {
                continue;
            }
            auto elem = books.element(m, k);
            for (std::size_t d = 0; d < dims; ++d) {
                const std::size_t flat = (m * books.k() + k) * dims + d;
                if (mask != nullptr && (*mask)[flat] == 0) {
                    continue;
                }
                const double c = elem[d];
                double alpha = 0.0;
                double beta = 0.0;
                for (const std::uint32_t n : pts) {
                    const double a = state.recon(n, static_cast<Eigen::Index>(d)) - c;
                    const double b = state.delta[n] - epsilon - 2.0 * a * c;
                    alpha += 2.0 + 8.0 * mu * a * a;
                    beta += 2.0 * a - 2.0 * data.vectors()(n, static_cast<Eigen::Index>(d)) + 4.0 * mu * a * b;
                }
                const double next = soft_threshold_update(alpha, beta, lambda);
                const double step = next - c;
                if (step == 0.0) {
                    continue;
                }
                elem[d] = next;
                for (const std::uint32_t n : pts) {
                    const double a = state.recon(n, static_cast<Eigen::Index>(d)) - c;
                    state.recon(n, static_cast<Eigen::Index>(d)) = a + next;
                    state.delta[n] += 2.0 * a * step;
                }
            }
        }
    }
}

std::vector<char> top_support(const CodebookSet& books, std::size_t budget) {
    const auto& e = books.elements();
    const auto total = static_cast<std::size_t>(e.size());
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t keep = std::min(budget, total);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double fa = std::abs(e.data()[a]);
                          const double fb = std::abs(e.data()[b]);
                          return fa != fb ? fa > fb : a < b;
                      });
    std::vector<char> mask(total, 0);
    for (std::size_t i = 0; i < keep; ++i) {
        if (e.data()[order[i]] != 0.0) {
            mask[order[i]] = 1;
        }
    }
    return mask;
}

}  // namespace

double soft_threshold_update(double alpha, double beta, double lambda) {
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("soft threshold needs alpha > 0");
    }
    const double ratio = beta / alpha;
    const double thresh = lambda / alpha;
    if (ratio >= thresh) {
        return -ratio + thresh;
    }
    if (ratio <= -thresh) {
        return -ratio - thresh;
    }
    return 0.0;
}

EntryCoefficients sparse_coefficients(const CodebookSet& codebooks, std::size_t m, std::size_t k, std::size_t d,
                                      const CodeSet& codes, const Dataset& data, double mu, double epsilon) {
    EntryCoefficients out;
    const double c = codebooks.element(m, k)[d];
    for (std::size_t n = 0; n < codes.size(); ++n) {
        const auto code = codes.code(n);
        if (code[m] != k) {
            continue;
        }
        double a = 0.0;
        for (std::size_t l = 0; l < codebooks.m(); ++l) {
            if (l != m) {
                a += codebooks.element(l, code[l])[d];
            }
        }
        const double b = cross_term_delta(codebooks, code) - epsilon - 2.0 * a * c;
        out.alpha += 2.0 + 8.0 * mu * a * a;
        out.beta += 2.0 * a - 2.0 * data.row(n)[d] + 4.0 * mu * a * b;
        ++out.assigned;
    }
    return out;
}

TrainedQuantizer train_snocq(const Dataset& data, std::size_t m, std::size_t k, const SparseConfig& config) {
    const TrainConfig& tc = config.train;
    if (tc.mu < 0.0 || config.lambda < 0.0) {
        throw std::invalid_argument("mu and lambda must be nonnegative");
    }
    const std::size_t budget = config.s_budget == 0 ? k * data.d() : config.s_budget;
    if (budget < data.d()) {
        throw std::invalid_argument("sparsity budget must be at least D");
    }
    PqResult init = train_pq(data, m, k, SubspaceLayout::natural(data.d(), m), tc.kmeans_iters,
                             derive_seed(tc.seed, "pq"));
    CodebookSet books = std::move(init.codebooks);
    CodeSet codes = std::move(init.codes);
    const double mu = tc.mu;

    QuantizerModel model;
    model.variant = Variant::SNOCQ;
    model.mu = mu;
    model.lambda = config.lambda;

    double epsilon = 0.0;
    auto deviation = [&](const PointState& state) {
        double dev = 0.0;
        for (const double dl : state.delta) {
            dev += std::abs(dl - epsilon);
        }
        return dev / static_cast<double>(state.delta.size());
    };
    auto run_phase = [&](std::size_t iters, double lambda, const std::vector<char>* mask, std::vector<double>& log,
                         bool log_constraint) {
        PointState state = compute_state(books, codes);
        double phi = penalty_objective(books, codes, data, mu, epsilon) + lambda * l1(books);
        log.push_back(phi);
        if (log_constraint) {
            model.constraint_log.push_back(deviation(state));
        }
        for (std::size_t it = 0; it < iters; ++it) {
            epsilon = update_epsilon(books, codes);
            for (std::size_t s = 0; s < config.coordinate_sweeps; ++s) {
                coordinate_sweep(books, codes, data, mu, epsilon, lambda, mask, state);
            }
            const InnerProductCache cache(books);
            encode_corpus(books, data, EncodeOptions{mu, epsilon, tc.icm_sweeps}, codes, &cache);
            state = compute_state(books, codes);

            const double next = penalty_objective(books, codes, data, mu, epsilon) + lambda * l1(books);
            if (!std::isfinite(next)) {
                throw TrainingError("SNOCQ: non-finite objective at iteration " + std::to_string(it));
            }
            log.push_back(next);
            if (log_constraint) {
                model.constraint_log.push_back(deviation(state));
            }
            const bool done = phi - next <= tc.rel_tol * std::abs(phi);
            phi = next;
            if (done) {
                break;
            }
        }
    };

    run_phase(config.sparsify_iters, config.lambda, nullptr, model.warmup_log, false);

    const std::vector<char> mask = top_support(books, budget);
    for (Eigen::Index i = 0; i < books.elements().size(); ++i) {
        if (mask[static_cast<std::size_t>(i)] == 0) {
            books.elements().data()[i] = 0.0;
        }
    }
    epsilon = update_epsilon(books, codes);
    run_phase(config.refit_iters, 0.0, &mask, model.train_log, true);

    model.codebooks = std::move(books);
    model.epsilon = epsilon;
    return {std::move(model), std::move(codes)};
}

std::vector<double> default_lambda_grid(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config) {
    const PqResult pq = train_pq(data, m, k, SubspaceLayout::natural(data.d(), m), config.kmeans_iters,
                                 derive_seed(config.seed, "pq"));
    double err = 0.0;
    for (const double e : pq.subspace_errors) {
        err += e;
    }
    const double scale = err / static_cast<double>(data.n() * data.d());
    return {1e-3 * scale, 1e-2 * scale, 1e-1 * scale, 1.0 * scale};
}

SparseCodebooks SparseCodebooks::from_dense(const CodebookSet& codebooks) {
    SparseCodebooks s;
    s.m = codebooks.m();
    s.k = codebooks.k();
    s.d = codebooks.d();
    s.row_ptr.push_back(0);
    for (std::size_t m = 0; m < s.m; ++m) {
        for (std::size_t k = 0; k < s.k; ++k) {
            const auto e = codebooks.element(m, k);
            double n2 = 0.0;
            for (std::size_t d = 0; d < s.d; ++d) {
                if (e[d] != 0.0) {
                    s.cols.push_back(static_cast<std::uint32_t>(d));
                    s.values.push_back(e[d]);
                    n2 += e[d] * e[d];
                }
            }
            s.norms2.push_back(n2);
            s.row_ptr.push_back(static_cast<std::uint32_t>(s.values.size()));
        }
    }
    return s;
}

CodebookSet SparseCodebooks::to_dense() const {
    CodebookSet books(m, k, d);
    for (std::size_t row = 0; row + 1 < row_ptr.size(); ++row) {
        for (std::uint32_t i = row_ptr[row]; i < row_ptr[row + 1]; ++i) {
            books.elements()(static_cast<Eigen::Index>(row), cols[i]) = values[i];
        }
    }
    return books;
}

}  // namespace vqann
