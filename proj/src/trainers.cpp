#include "vqann/kernels.hpp"
#include "vqann/quantizer.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace vqann {

namespace {

using kernels::Exec;

Vector flatten(const Matrix& e) {
    return Eigen::Map<const Vector>(e.data(), e.size());
}

Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

void check_finite(double phi, std::size_t iteration, std::string_view what) {
    if (!std::isfinite(phi)) {
        std::ostringstream msg;
        msg << what << ": non-finite objective at outer iteration " << iteration;
        throw TrainingError(msg.str());
    }
}

bool converged(double previous, double current, double rel_tol) {
    return previous - current <= rel_tol * std::abs(previous);
}

double mean_abs_deviation(const CodebookSet& books, const CodeSet& codes, double epsilon) {
    if (codes.size() == 0) {
        return 0.0;
    }
    const InnerProductCache cache(books);
    double total = 0.0;
    for (std::size_t n = 0; n < codes.size(); ++n) {
        total += std::abs(cross_term_delta(books, codes.code(n), &cache) - epsilon);
    }
    return total / static_cast<double>(codes.size());
}

PqResult pq_warm_start(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config) {
    return train_pq(data, m, k, SubspaceLayout::natural(data.d(), m), config.kmeans_iters,
                    derive_seed(config.seed, "pq"));
}

// One L-BFGS pass on the element matrix with codes and epsilon held fixed.
// Inverse of the diagonal of the objective's Hessian in the codebook entries:
// sum over assigned points of 2 + 8 mu a^2, with a the other elements' sum, plus
// the orthogonality term's diagonal when `ortho_weight` is set. Floored at the
// curvature of a single assigned point.
Vector inverse_curvature(const CodebookSet& books, const CodeSet& codes, double mu, double ortho_weight = 0.0) {
    const std::size_t m = books.m();
    const std::size_t k = books.k();
    const std::size_t d = books.d();
    Matrix diag = Matrix::Zero(static_cast<Eigen::Index>(m * k), static_cast<Eigen::Index>(d));
    Vector sum(static_cast<Eigen::Index>(d));
    for (std::size_t n = 0; n < codes.size(); ++n) {
        const auto code = codes.code(n);
        sum = reconstruct(books, code);
        for (std::size_t i = 0; i < m; ++i) {
            const auto row = static_cast<Eigen::Index>(i * k + code[i]);
            const auto c = books.element(i, code[i]);
            for (std::size_t j = 0; j < d; ++j) {
                const double a = sum[static_cast<Eigen::Index>(j)] - c[j];
                diag(row, static_cast<Eigen::Index>(j)) += 2.0 + 8.0 * mu * a * a;
            }
        }
    }
    if (ortho_weight > 0.0) {
        const Matrix& e = books.elements();
        for (std::size_t i = 0; i < m; ++i) {
            Vector others = Vector::Zero(static_cast<Eigen::Index>(d));
            for (std::size_t j = 0; j < m; ++j) {
                if (j != i) {
                    others += e.middleRows(static_cast<Eigen::Index>(j * k), static_cast<Eigen::Index>(k))
                                  .cwiseAbs2()
                                  .colwise()
                                  .sum()
                                  .transpose();
                }
            }
            diag.middleRows(static_cast<Eigen::Index>(i * k), static_cast<Eigen::Index>(k)).rowwise() +=
                (4.0 * ortho_weight * others).transpose();
        }
    }
    Vector out = flatten(diag);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out[i] = 1.0 / std::max(out[i], 2.0);
    }
    return out;
}

// `scale` carries the curvature estimate from one outer iteration to the next.
double lbfgs_dictionary_step(CodebookSet& books, const ObjectiveFn& fn, LbfgsConfig config, double& scale,
                             const Vector& precond, std::string_view what) {
    if (scale > 0.0) {
        config.initial_scale = scale;
    }
    try {
        const LbfgsResult res = lbfgs_minimize(fn, flatten(books.elements()), config, &precond);
        if (res.curvature_scale > 0.0) {
            scale = res.curvature_scale;
        }
        books.elements() = unflatten(res.point, books.elements().rows(), books.elements().cols());
        return res.value;
    } catch (const OptimizationError& e) {
        throw TrainingError(std::string(what) + ": dictionary update failed: " + e.what());
    }
}

// Shared loop for CQ (mu = 0) and NOCQ. Order per outer iteration:
// encode, epsilon, dictionary.
TrainedQuantizer train_penalized(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config,
                                 Variant variant, double mu) {
    if (mu < 0.0) {
        throw std::invalid_argument("mu must be nonnegative");
    }
    if (config.outer_iters < 1) {
        throw std::invalid_argument("outer_iters must be >= 1");
    }
    PqResult init = pq_warm_start(data, m, k, config);
    CodebookSet books = std::move(init.codebooks);
    CodeSet codes = std::move(init.codes);
    const bool constrained = variant != Variant::CQ;
    double epsilon = 0.0;

    QuantizerModel model;
    model.variant = variant;
    model.mu = constrained ? mu : 0.0;
    double phi = penalty_objective(books, codes, data, model.mu, epsilon);
    model.train_log.push_back(phi);
    if (constrained) {
        model.constraint_log.push_back(mean_abs_deviation(books, codes, epsilon));
    }

    const EncodeOptions enc_base{model.mu, 0.0, config.icm_sweeps};
    double scale = 0.0;
    for (std::size_t it = 0; it < config.outer_iters; ++it) {
        const InnerProductCache cache(books);
        EncodeOptions enc = enc_base;
        enc.epsilon = epsilon;
        encode_corpus(books, data, enc, codes, &cache);

        if (constrained) {
            epsilon = update_epsilon(books, codes);
        }

        double next = 0.0;
        if (!constrained && config.cq_update == DictionaryUpdate::closed_form) {
            books = closed_form_dictionary(data, codes, m, k);
            next = penalty_objective(books, codes, data, 0.0, 0.0);
        } else {
            const auto rows = books.elements().rows();
            const auto cols = books.elements().cols();
            const double w = model.mu;
            // epsilon is re-minimized inside every evaluation (it is the mean of
            // the deltas), so a common shift of all deltas costs nothing. At the
            // optimal epsilon its partial derivative vanishes and the gradient
            // in C keeps the fixed-epsilon form.
            std::optional<CodeStatistics> stats;
            if (CodeStatistics::pays_off(data.n(), m, k)) {
                stats.emplace(data, codes, k);
            }
            ObjectiveFn fn = [&, rows, cols, w, constrained](const Vector& x, Vector& grad) {
                const Matrix e = unflatten(x, rows, cols);
                Matrix g;
                double v = 0.0;
                if (stats) {
                    v = stats->objective(e, w, &g);
                } else {
                    const double eps = constrained ? update_epsilon(CodebookSet(m, k, e), codes) : 0.0;
                    v = kernels::penalized_objective(e, m, k, data, codes, w, eps, &g, Exec::parallel);
                }
                grad = flatten(g);
                return v;
            };
            const Vector precond = inverse_curvature(books, codes, w);
            lbfgs_dictionary_step(books, fn, config.lbfgs, scale, precond, variant_name(variant));
            if (constrained) {
                epsilon = update_epsilon(books, codes);
            }
            next = penalty_objective(books, codes, data, model.mu, epsilon);
        }
        check_finite(next, it, variant_name(variant));
        model.train_log.push_back(next);
        if (constrained) {
            model.constraint_log.push_back(mean_abs_deviation(books, codes, epsilon));
        }
        const bool done = converged(phi, next, config.rel_tol);
        phi = next;
        if (done) {
            break;
        }
    }
    model.codebooks = std::move(books);
    model.epsilon = constrained ? epsilon : 0.0;
    return {std::move(model), std::move(codes)};
}

}  // namespace

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::PQ:
            return "PQ";
        case Variant::CKM:
            return "CKM";
        case Variant::CQ:
            return "CQ";
        case Variant::OCQ:
            return "OCQ";
        case Variant::NOCQ:
            return "NOCQ";
        case Variant::SNOCQ:
            return "SNOCQ";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    std::string lower(name);
    for (auto& c : lower) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (lower == "pq") return Variant::PQ;
    if (lower == "ckm" || lower == "opq") return Variant::CKM;
    if (lower == "cq") return Variant::CQ;
    if (lower == "ocq") return Variant::OCQ;
    if (lower == "nocq") return Variant::NOCQ;
    if (lower == "snocq") return Variant::SNOCQ;
    throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

bool drops_cross_term(Variant v) {
    return v != Variant::CQ;
}

double penalty_objective(const CodebookSet& codebooks, const CodeSet& codes, const Dataset& data, double mu,
                         double epsilon) {
    return kernels::penalized_objective(codebooks.elements(), codebooks.m(), codebooks.k(), data, codes, mu, epsilon,
                                        nullptr, Exec::parallel);
}

CodeStatistics::CodeStatistics(const Dataset& data, const CodeSet& codes, std::size_t k) : m_(codes.m), k_(k) {
    if (codes.size() != data.n()) {
        throw DimensionError("code count does not match dataset size");
    }
    const auto mk = static_cast<Eigen::Index>(m_ * k_);
    yy_ = Matrix::Zero(mk, mk);
    yx_ = Matrix::Zero(mk, static_cast<Eigen::Index>(data.d()));
    rows_.resize(codes.indices.size());
    for (std::size_t n = 0; n < codes.size(); ++n) {
        const auto code = codes.code(n);
        std::uint32_t* r = rows_.data() + n * m_;
        for (std::size_t i = 0; i < m_; ++i) {
            if (code[i] >= k_) {
                throw IndexError("code index out of range");
            }
            r[i] = static_cast<std::uint32_t>(i * k_ + code[i]);
        }
        const auto x = data.vectors().row(static_cast<Eigen::Index>(n));
        xx_ += x.squaredNorm();
        for (std::size_t i = 0; i < m_; ++i) {
            yx_.row(r[i]) += x;
            for (std::size_t j = 0; j < m_; ++j) {
                yy_(r[i], r[j]) += 1.0;
            }
        }
    }
}

double CodeStatistics::objective(const Matrix& elements, double mu, Matrix* grad, double* epsilon) const {
    const std::size_t n = m_ == 0 ? 0 : rows_.size() / m_;
    const Matrix gram = elements * elements.transpose();
    double value = xx_ - 2.0 * yx_.cwiseProduct(elements).sum() + yy_.cwiseProduct(gram).sum();
    if (grad != nullptr) {
        *grad = 2.0 * (yy_ * elements - yx_);
    }
    double eps = 0.0;
    if (mu != 0.0 && n > 0) {
        std::vector<double> delta(n);
        for (std::size_t p = 0; p < n; ++p) {
            const std::uint32_t* r = rows_.data() + p * m_;
            double half = 0.0;
            for (std::size_t i = 0; i < m_; ++i) {
                for (std::size_t j = i + 1; j < m_; ++j) {
                    half += gram(r[i], r[j]);
                }
            }
            delta[p] = 2.0 * half;
            eps += delta[p];
        }
        eps /= static_cast<double>(n);
        Matrix weights = Matrix::Zero(gram.rows(), gram.cols());
        double penalty = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            const double dev = delta[p] - eps;
            penalty += dev * dev;
            const std::uint32_t* r = rows_.data() + p * m_;
            for (std::size_t i = 0; i < m_; ++i) {
                for (std::size_t j = 0; j < m_; ++j) {
                    if (i != j) {
                        weights(r[i], r[j]) += dev;
                    }
                }
            }
        }
        value += mu * penalty;
        if (grad != nullptr) {
            *grad += 4.0 * mu * weights * elements;
        }
    }
    if (epsilon != nullptr) {
        *epsilon = eps;
    }
    return value;
}

bool CodeStatistics::pays_off(std::size_t n, std::size_t m, std::size_t k) {
    return 3 * (m * k) * (m * k) < 2 * n * m;
}

double orthogonality_penalty(const CodebookSet& codebooks, Matrix* grad) {
    const Matrix& e = codebooks.elements();
    Matrix gram = e * e.transpose();
    const auto k = static_cast<Eigen::Index>(codebooks.k());
    for (Eigen::Index m = 0; m < static_cast<Eigen::Index>(codebooks.m()); ++m) {
        gram.block(m * k, m * k, k, k).setZero();
    }
    if (grad != nullptr) {
        *grad = 4.0 * gram * e;
    }
    return gram.squaredNorm();
}

double ocq_penalty_weight(double mu, std::size_t n, std::size_t k) {
    return mu * static_cast<double>(n) / static_cast<double>(k * k);
}

double update_epsilon(const CodebookSet& codebooks, const CodeSet& codes) {
    if (codes.size() == 0) {
        throw std::invalid_argument("epsilon needs at least one code");
    }
    const InnerProductCache cache(codebooks);
    double total = 0.0;
    for (std::size_t n = 0; n < codes.size(); ++n) {
        total += cross_term_delta(codebooks, codes.code(n), &cache);
    }
    return total / static_cast<double>(codes.size());
}

CodebookSet closed_form_dictionary(const Dataset& data, const CodeSet& codes, std::size_t m, std::size_t k) {
    const auto mk = static_cast<Eigen::Index>(m * k);
    Eigen::MatrixXd yyt = Eigen::MatrixXd::Zero(mk, mk);
    Eigen::MatrixXd yxt = Eigen::MatrixXd::Zero(mk, static_cast<Eigen::Index>(data.d()));
    for (std::size_t n = 0; n < data.n(); ++n) {
        const auto code = codes.code(n);
        for (std::size_t i = 0; i < m; ++i) {
            const auto a = static_cast<Eigen::Index>(i * k + code[i]);
            yxt.row(a) += data.vectors().row(static_cast<Eigen::Index>(n));
            for (std::size_t j = 0; j < m; ++j) {
                yyt(a, static_cast<Eigen::Index>(j * k + code[j])) += 1.0;
            }
        }
    }
    // Y Y^T is rank deficient whenever M > 1 (a shared offset can move
    // between dictionaries), so take the minimum-norm least-squares solution.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(yyt);
    const Eigen::MatrixXd sol = cod.solve(yxt);
    return CodebookSet(m, k, Matrix(sol));
}

CodeSet encode(const QuantizerModel& model, const Dataset& data, std::size_t sweeps) {
    if (data.d() != model.d()) {
        throw DimensionError("data dimension does not match the model");
    }
    const bool penalized = model.variant == Variant::NOCQ || model.variant == Variant::SNOCQ;
    EncodeOptions opt{penalized ? model.mu : 0.0, penalized ? model.epsilon : 0.0, sweeps};
    return encode_fresh(model.codebooks, data, opt);
}

TrainedQuantizer train_pq_model(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config) {
    PqResult pq = pq_warm_start(data, m, k, config);
    QuantizerModel model;
    model.variant = Variant::PQ;
    model.train_log = std::move(pq.error_log);
    model.codebooks = std::move(pq.codebooks);
    return {std::move(model), std::move(pq.codes)};
}

TrainedQuantizer train_ckm_model(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config) {
    CkmOptions opt;
    opt.kmeans_iters = config.kmeans_iters;
    opt.outer_iters = config.outer_iters;
    opt.rel_tol = config.rel_tol;
    CkmResult ckm = train_ckm(data, m, k, opt, derive_seed(config.seed, "pq"));
    QuantizerModel model;
    model.variant = Variant::CKM;
    model.codebooks = std::move(ckm.codebooks);
    model.rotation = std::move(ckm.rotation);
    model.train_log = std::move(ckm.error_log);
    return {std::move(model), std::move(ckm.codes)};
}

TrainedQuantizer train_cq(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config) {
    return train_penalized(data, m, k, config, Variant::CQ, 0.0);
}

TrainedQuantizer train_nocq(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config) {
    return train_penalized(data, m, k, config, Variant::NOCQ, config.mu);
}

TrainedQuantizer train_ocq(const Dataset& data, std::size_t m, std::size_t k, const TrainConfig& config) {
    if (config.mu < 0.0) {
        throw std::invalid_argument("mu must be nonnegative");
    }
    PqResult init = pq_warm_start(data, m, k, config);
    CodebookSet books = std::move(init.codebooks);
    CodeSet codes = std::move(init.codes);
    const double w = ocq_penalty_weight(config.mu, data.n(), k);

    QuantizerModel model;
    model.variant = Variant::OCQ;
    model.mu = config.mu;
    auto objective = [&](const CodebookSet& b) {
        return penalty_objective(b, codes, data, 0.0, 0.0) + w * orthogonality_penalty(b);
    };
    double phi = objective(books);
    model.train_log.push_back(phi);
    model.constraint_log.push_back(std::sqrt(orthogonality_penalty(books)));
    double scale = 0.0;

    for (std::size_t it = 0; it < config.outer_iters; ++it) {
        // The penalty does not depend on the codes: plain CQ encoding.
        const InnerProductCache cache(books);
        encode_corpus(books, data, EncodeOptions{0.0, 0.0, config.icm_sweeps}, codes, &cache);

        const auto rows = books.elements().rows();
        const auto cols = books.elements().cols();
        std::optional<CodeStatistics> stats;
        if (CodeStatistics::pays_off(data.n(), m, k)) {
            stats.emplace(data, codes, k);
        }
        ObjectiveFn fn = [&, rows, cols](const Vector& x, Vector& grad) {
            CodebookSet trial(m, k, unflatten(x, rows, cols));
            Matrix g;
            double v = stats ? stats->objective(trial.elements(), 0.0, &g)
                             : kernels::penalized_objective(trial.elements(), m, k, data, codes, 0.0, 0.0, &g,
                                                            Exec::parallel);
            Matrix pg;
            v += w * orthogonality_penalty(trial, &pg);
            g += w * pg;
            grad = flatten(g);
            return v;
        };
        const Vector precond = inverse_curvature(books, codes, 0.0, w);
        lbfgs_dictionary_step(books, fn, config.lbfgs, scale, precond, "OCQ");
        const double next = objective(books);
        check_finite(next, it, "OCQ");
        model.train_log.push_back(next);
        model.constraint_log.push_back(std::sqrt(orthogonality_penalty(books)));
        const bool done = converged(phi, next, config.rel_tol);
        phi = next;
        if (done) {
            break;
        }
    }
    model.codebooks = std::move(books);
    model.epsilon = 0.0;
    return {std::move(model), std::move(codes)};
}

}  // namespace vqann
