#include "vqann/baselines.hpp"

#include <random>

namespace vqann {

namespace {

Dataset columns(const Matrix& x, std::size_t start, std::size_t length) {
    return Dataset(x.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(length)));
}

void embed(CodebookSet& books, std::size_t m, const Matrix& centers, std::size_t start) {
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        const auto row = static_cast<Eigen::Index>(m * books.k()) + c;
        books.elements().row(row).setZero();
        books.elements().block(row, static_cast<Eigen::Index>(start), 1, centers.cols()) = centers.row(c);
    }
}

Matrix sub_centers(const CodebookSet& books, std::size_t m, std::size_t start, std::size_t length) {
    return books.elements().block(static_cast<Eigen::Index>(m * books.k()), static_cast<Eigen::Index>(start),
                                  static_cast<Eigen::Index>(books.k()), static_cast<Eigen::Index>(length));
}

}  // namespace

SubspaceLayout SubspaceLayout::natural(std::size_t d, std::size_t m) {
    if (m == 0 || m > d) {
        throw std::invalid_argument("need 1 <= M <= D subspaces");
    }
    SubspaceLayout layout;
    const std::size_t base = d / m;
    const std::size_t extra = d % m;
    std::size_t start = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t len = base + (i < extra ? 1 : 0);
        layout.spans.emplace_back(start, len);
        start += len;
    }
    return layout;
}

void SubspaceLayout::validate(std::size_t d) const {
    std::size_t next = 0;
    for (const auto& [start, len] : spans) {
        if (start != next || len == 0) {
            throw std::invalid_argument("subspace layout is not a contiguous partition");
        }
        next += len;
    }
    if (next != d) {
        throw std::invalid_argument("subspace layout does not cover every dimension");
    }
}

Rotation Rotation::identity(std::size_t d) {
    return {Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))};
}

Rotation Rotation::random(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "rotation"));
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = g(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    return {Matrix(q)};
}

double Rotation::orthogonality_defect() const {
    return (r.transpose() * r - Matrix::Identity(r.rows(), r.cols())).cwiseAbs().maxCoeff();
}

PqResult train_pq(const Dataset& data, std::size_t m, std::size_t k, const SubspaceLayout& layout,
                  std::size_t kmeans_iters, std::uint64_t seed) {
    layout.validate(data.d());
    if (layout.spans.size() != m) {
        throw std::invalid_argument("layout must have exactly M spans");
    }
    if (k > data.n()) {
        throw std::invalid_argument("K exceeds the number of training vectors");
    }
    PqResult out{CodebookSet(m, k, data.d()), CodeSet(data.n(), m), {}, {}};
    for (std::size_t sub = 0; sub < m; ++sub) {
        const auto [start, len] = layout.spans[sub];
        const KMeansResult km = kmeans(columns(data.vectors(), start, len), k, kmeans_iters, seed + sub);
        embed(out.codebooks, sub, km.centers, start);
        for (std::size_t n = 0; n < data.n(); ++n) {
            out.codes.code(n)[sub] = km.assignments[n];
        }
        out.subspace_errors.push_back(km.error);
        if (out.error_log.size() < km.error_log.size()) {
            out.error_log.resize(km.error_log.size(), out.error_log.empty() ? 0.0 : out.error_log.back());
        }
        for (std::size_t i = 0; i < out.error_log.size(); ++i) {
            out.error_log[i] += km.error_log[std::min(i, km.error_log.size() - 1)];
        }
    }
    return out;
}

CkmResult train_ckm(const Dataset& data, std::size_t m, std::size_t k, const CkmOptions& options,
                    std::uint64_t seed) {
    const auto layout = SubspaceLayout::natural(data.d(), m);
    Rotation rot = options.random_init ? Rotation::random(data.d(), seed) : Rotation::identity(data.d());
    const Matrix& x = data.vectors();
    Matrix rotated = x * rot.r.transpose();

    PqResult pq = train_pq(Dataset(rotated), m, k, layout, options.kmeans_iters, seed);
    CodebookSet books = std::move(pq.codebooks);
    CodeSet codes = std::move(pq.codes);

    CkmResult out;
    double err = 0.0;
    for (const double e : pq.subspace_errors) {
        err += e;
    }
    out.error_log.push_back(err);

    auto reconstruction = [&] {
        Matrix recon(x.rows(), x.cols());
        for (Eigen::Index n = 0; n < x.rows(); ++n) {
            recon.row(n) = reconstruct(books, codes.code(static_cast<std::size_t>(n))).transpose();
        }
        return recon;
    };

    for (std::size_t it = 0; it < options.outer_iters; ++it) {
        // Procrustes: argmin_R ||X R^T - Xbar'||_F over orthogonal R.
        const Matrix recon = reconstruction();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(x.transpose() * recon),
                                              Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Eigen::MatrixXd rt = svd.matrixU() * svd.matrixV().transpose();
        rot.r = rt.transpose();
        rotated = x * rot.r.transpose();

        double next = 0.0;
        for (std::size_t sub = 0; sub < m; ++sub) {
            const auto [start, len] = layout.spans[sub];
            const KMeansResult km =
                kmeans_from(columns(rotated, start, len), sub_centers(books, sub, start, len), options.lloyd_steps);
            embed(books, sub, km.centers, start);
            for (std::size_t n = 0; n < data.n(); ++n) {
                codes.code(n)[sub] = km.assignments[n];
            }
            next += km.error;
        }
        out.error_log.push_back(next);
        const bool done = err - next <= options.rel_tol * err;
        err = next;
        if (done) {
            break;
        }
    }

    // c = R^T b, stored as rows: C = B R.
    out.codebooks = CodebookSet(m, k, Matrix(books.elements() * rot.r));
    out.rotation = std::move(rot);
    out.codes = std::move(codes);
    return out;
}

}  // namespace vqann
