#include "vqann/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vqann::kernels {

namespace {

int thread_count(Exec exec) {
    return exec == Exec::serial ? 1 : max_threads();
}

int thread_id() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

double point_terms(const Matrix& elements, std::size_t books, std::size_t k, std::span<const double> x,
                   std::span<const std::uint32_t> code, double mu, double epsilon, std::vector<double>& recon,
                   Matrix* grad) {
    const std::size_t dims = x.size();
    std::fill(recon.begin(), recon.end(), 0.0);
    for (std::size_t m = 0; m < books; ++m) {
        const auto e = row_span(elements, static_cast<Eigen::Index>(m * k + code[m]));
        for (std::size_t j = 0; j < dims; ++j) {
            recon[j] += e[j];
        }
    }
    double err = 0.0;
    for (std::size_t j = 0; j < dims; ++j) {
        const double r = recon[j] - x[j];
        err += r * r;
    }
    double dev = 0.0;
    if (mu != 0.0) {
        double half = 0.0;
        for (std::size_t i = 0; i < books; ++i) {
            const auto ei = row_span(elements, static_cast<Eigen::Index>(i * k + code[i]));
            for (std::size_t l = i + 1; l < books; ++l) {
                half += dot(ei, row_span(elements, static_cast<Eigen::Index>(l * k + code[l])));
            }
        }
        dev = 2.0 * half - epsilon;
    }
    if (grad != nullptr) {
        const double w = 4.0 * mu * dev;
        for (std::size_t m = 0; m < books; ++m) {
            const auto row = static_cast<Eigen::Index>(m * k + code[m]);
            const auto e = row_span(elements, row);
            auto g = row_span(*grad, row);
            for (std::size_t j = 0; j < dims; ++j) {
                g[j] += 2.0 * (recon[j] - x[j]) + w * (recon[j] - e[j]);
            }
        }
    }
    return err + mu * dev * dev;
}

}  // namespace

GroundTruth groundtruth(const Dataset& base, const Dataset& queries, std::size_t t_max, Metric metric, Exec exec) {
    if (base.d() != queries.d()) {
        throw DimensionError("base and query dimensions differ");
    }
    if (t_max > base.n()) {
        throw std::invalid_argument("t_max exceeds base size");
    }
    GroundTruth gt;
    gt.queries = queries.n();
    gt.width = t_max;
    gt.neighbors.assign(queries.n() * t_max, 0);
    const auto nq = static_cast<std::int64_t>(queries.n());
#pragma omp parallel for schedule(dynamic, 4) num_threads(thread_count(exec))
    for (std::int64_t q = 0; q < nq; ++q) {
        const auto qs = queries.row(static_cast<std::size_t>(q));
        TopK top(t_max);
        for (std::size_t i = 0; i < base.n(); ++i) {
            const double s = metric == Metric::euclidean ? squared_distance(qs, base.row(i)) : -dot(qs, base.row(i));
            top.push(s, static_cast<std::uint32_t>(i));
        }
        const auto sorted = top.sorted();
        for (std::size_t t = 0; t < sorted.size(); ++t) {
            gt.neighbors[static_cast<std::size_t>(q) * t_max + t] = sorted[t].second;
        }
    }
    return gt;
}

void encode_corpus(const CodebookSet& codebooks, const Dataset& data, const EncodeOptions& options, CodeSet& codes,
                   const InnerProductCache* cache, Exec exec) {
    if (codes.size() != data.n() || codes.m != codebooks.m()) {
        throw DimensionError("code set shape does not match data and codebooks");
    }
    const auto n = static_cast<std::int64_t>(data.n());
#pragma omp parallel for schedule(static) num_threads(thread_count(exec))
    for (std::int64_t i = 0; i < n; ++i) {
        auto slot = codes.code(static_cast<std::size_t>(i));
        Code init(slot.begin(), slot.end());
        const Code out = icm_encode(codebooks, data.row(static_cast<std::size_t>(i)), options.mu, options.epsilon,
                                    std::move(init), options.sweeps, cache);
        std::copy(out.begin(), out.end(), slot.begin());
    }
}

std::vector<TopK::Entry> lookup_scan(std::span<const double> table, std::size_t k, const CodeSet& codes,
                                     std::size_t r, bool descending, Exec exec) {
    const std::size_t books = codes.m;
    const std::size_t n = codes.size();
    const std::size_t keep = std::min(r, n);
    const int threads = thread_count(exec);
    std::vector<TopK> partial(static_cast<std::size_t>(threads), TopK(keep));
    const double sign = descending ? -1.0 : 1.0;
#pragma omp parallel num_threads(threads)
    {
        TopK& local = partial[static_cast<std::size_t>(thread_id())];
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
            const std::uint32_t* c = codes.indices.data() + static_cast<std::size_t>(i) * books;
            double s = 0.0;
            for (std::size_t m = 0; m < books; ++m) {
                s += table[m * k + c[m]];
            }
            local.push(sign * s, static_cast<std::uint32_t>(i));
        }
    }
    TopK merged(keep);
    for (const auto& p : partial) {
        merged.merge(p);
    }
    auto out = merged.sorted();
    for (auto& e : out) {
        e.first *= sign;
    }
    return out;
}

double penalized_objective(const Matrix& elements, std::size_t m, std::size_t k, const Dataset& data,
                           const CodeSet& codes, double mu, double epsilon, Matrix* grad, Exec exec) {
    if (codes.size() != data.n()) {
        throw DimensionError("code count does not match dataset size");
    }
    if (grad != nullptr) {
        grad->setZero(elements.rows(), elements.cols());
    }
    const int threads = thread_count(exec);
    if (threads == 1) {
        std::vector<double> recon(data.d());
        double total = 0.0;
        for (std::size_t n = 0; n < data.n(); ++n) {
            total += point_terms(elements, m, k, data.row(n), codes.code(n), mu, epsilon, recon, grad);
        }
        return total;
    }

    std::vector<double> sums(static_cast<std::size_t>(threads), 0.0);
    std::vector<Matrix> grads(grad != nullptr ? static_cast<std::size_t>(threads) : 0);
#pragma omp parallel num_threads(threads)
    {
        const auto tid = static_cast<std::size_t>(thread_id());
        Matrix* local_grad = nullptr;
        if (grad != nullptr) {
            grads[tid] = Matrix::Zero(elements.rows(), elements.cols());
            local_grad = &grads[tid];
        }
        std::vector<double> recon(data.d());
        double local = 0.0;
#pragma omp for schedule(static)
        for (std::int64_t n = 0; n < static_cast<std::int64_t>(data.n()); ++n) {
            local += point_terms(elements, m, k, data.row(static_cast<std::size_t>(n)),
                                 codes.code(static_cast<std::size_t>(n)), mu, epsilon, recon, local_grad);
        }
        sums[tid] = local;
    }
    double total = 0.0;
    for (std::size_t t = 0; t < sums.size(); ++t) {
        total += sums[t];
        if (grad != nullptr) {
            *grad += grads[t];
        }
    }
    return total;
}

}  // namespace vqann::kernels
