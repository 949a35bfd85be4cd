#include "vqann/data.hpp"

#include "vqann/kernels.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

namespace vqann {

namespace {

std::uint32_t load_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
}

std::size_t element_size(ElementKind kind) {
    return kind == ElementKind::uint8 ? 1 : 4;
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError("short write to " + path.string());
    }
}

struct RawVecs {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<unsigned char> bytes;
};

RawVecs scan_records(const std::filesystem::path& path, ElementKind kind) {
    RawVecs raw;
    raw.bytes = slurp(path);
    const std::size_t esize = element_size(kind);
    std::size_t pos = 0;
    while (pos < raw.bytes.size()) {
        if (raw.bytes.size() - pos < 4) {
            throw FormatError(path.string() + ": truncated record header");
        }
        const auto dim = static_cast<std::int32_t>(load_u32(raw.bytes.data() + pos));
        if (dim <= 0) {
            throw FormatError(path.string() + ": nonpositive dimension");
        }
        if (raw.n == 0) {
            raw.dim = static_cast<std::size_t>(dim);
        } else if (static_cast<std::size_t>(dim) != raw.dim) {
            throw FormatError(path.string() + ": inconsistent dimension");
        }
        pos += 4;
        if (raw.bytes.size() - pos < raw.dim * esize) {
            throw FormatError(path.string() + ": truncated record payload");
        }
        pos += raw.dim * esize;
        ++raw.n;
    }
    if (raw.n == 0) {
        throw FormatError(path.string() + ": empty file");
    }
    return raw;
}

double decode_element(const unsigned char* p, ElementKind kind) {
    switch (kind) {
        case ElementKind::float32:
            return static_cast<double>(std::bit_cast<float>(load_u32(p)));
        case ElementKind::uint8:
            return static_cast<double>(*p);
        case ElementKind::int32:
            return static_cast<double>(static_cast<std::int32_t>(load_u32(p)));
    }
    return 0.0;
}

void encode_element(std::vector<unsigned char>& out, double v, ElementKind kind) {
    switch (kind) {
        case ElementKind::float32: {
            if (!std::isfinite(v) || std::abs(v) > static_cast<double>(std::numeric_limits<float>::max())) {
                throw RangeError("value not representable as float32");
            }
            store_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            break;
        }
        case ElementKind::uint8: {
            if (!(v >= 0.0 && v <= 255.0) || std::trunc(v) != v) {
                throw RangeError("value not representable as uint8");
            }
            out.push_back(static_cast<unsigned char>(v));
            break;
        }
        case ElementKind::int32: {
            if (!(v >= -2147483648.0 && v <= 2147483647.0) || std::trunc(v) != v) {
                throw RangeError("value not representable as int32");
            }
            store_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
            break;
        }
    }
}

}  // namespace

Dataset::Dataset(Matrix vectors) : vectors_(std::move(vectors)) {
    if (vectors_.rows() < 1 || vectors_.cols() < 1) {
        throw DimensionError("dataset needs n >= 1 and d >= 1");
    }
    if (!vectors_.allFinite()) {
        throw RangeError("dataset contains non-finite values");
    }
}

Dataset Dataset::subset(std::span<const std::size_t> ids) const {
    Matrix out(static_cast<Eigen::Index>(ids.size()), vectors_.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = vectors_.row(static_cast<Eigen::Index>(ids[i]));
    }
    return Dataset(std::move(out));
}

Dataset read_vecs(const std::filesystem::path& path, ElementKind kind) {
    const RawVecs raw = scan_records(path, kind);
    const std::size_t esize = element_size(kind);
    Matrix m(static_cast<Eigen::Index>(raw.n), static_cast<Eigen::Index>(raw.dim));
    std::size_t pos = 0;
    for (std::size_t i = 0; i < raw.n; ++i) {
        pos += 4;
        for (std::size_t j = 0; j < raw.dim; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = decode_element(raw.bytes.data() + pos, kind);
            pos += esize;
        }
    }
    return Dataset(std::move(m));
}

void write_vecs(const Dataset& dataset, const std::filesystem::path& path, ElementKind kind) {
    if (dataset.n() == 0) {
        throw DimensionError("cannot write an empty dataset");
    }
    std::vector<unsigned char> bytes;
    bytes.reserve(dataset.n() * (4 + dataset.d() * element_size(kind)));
    for (std::size_t i = 0; i < dataset.n(); ++i) {
        store_u32(bytes, static_cast<std::uint32_t>(dataset.d()));
        for (const double v : dataset.row(i)) {
            encode_element(bytes, v, kind);
        }
    }
    spill(path, bytes);
}

void write_ivecs(const std::filesystem::path& path, std::span<const std::uint32_t> values, std::size_t width) {
    if (width == 0 || values.empty() || values.size() % width != 0) {
        throw DimensionError("ivecs payload is not a whole number of rows");
    }
    std::vector<unsigned char> bytes;
    bytes.reserve(values.size() / width * 4 + values.size() * 4);
    for (std::size_t i = 0; i < values.size(); i += width) {
        store_u32(bytes, static_cast<std::uint32_t>(width));
        for (std::size_t j = 0; j < width; ++j) {
            store_u32(bytes, values[i + j]);
        }
    }
    spill(path, bytes);
}

GroundTruth read_groundtruth(const std::filesystem::path& path) {
    const RawVecs raw = scan_records(path, ElementKind::int32);
    GroundTruth gt;
    gt.queries = raw.n;
    gt.width = raw.dim;
    gt.neighbors.reserve(raw.n * raw.dim);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < raw.n; ++i) {
        pos += 4;
        for (std::size_t j = 0; j < raw.dim; ++j) {
            gt.neighbors.push_back(load_u32(raw.bytes.data() + pos));
            pos += 4;
        }
    }
    return gt;
}

void write_groundtruth(const GroundTruth& gt, const std::filesystem::path& path) {
    write_ivecs(path, gt.neighbors, gt.width);
}

ElementKind element_kind_from_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".bvecs") {
        return ElementKind::uint8;
    }
    if (ext == ".ivecs") {
        return ElementKind::int32;
    }
    return ElementKind::float32;
}

Dataset synth_mixture(std::size_t n, std::size_t d, std::size_t n_clusters, double spread, std::uint64_t seed) {
    if (n_clusters == 0 || n_clusters > n) {
        throw std::invalid_argument("synth_mixture needs 1 <= n_clusters <= n");
    }
    std::mt19937_64 center_rng(derive_seed(seed, "synth.centers"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix centers(static_cast<Eigen::Index>(n_clusters), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < centers.size(); ++i) {
        centers.data()[i] = unit(center_rng);
    }

    std::mt19937_64 point_rng(derive_seed(seed, "synth.points"));
    std::uniform_int_distribution<std::size_t> pick(0, n_clusters - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    Matrix points(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const auto c = static_cast<Eigen::Index>(pick(point_rng));
        for (Eigen::Index j = 0; j < points.cols(); ++j) {
            points(i, j) = centers(c, j) + spread * noise(point_rng);
        }
    }
    return Dataset(std::move(points));
}

GroundTruth brute_force_groundtruth(const Dataset& base, const Dataset& queries, std::size_t t_max, Metric metric) {
    return kernels::groundtruth(base, queries, t_max, metric, kernels::Exec::parallel);
}

}  // namespace vqann
