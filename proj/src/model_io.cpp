#include "binary_io.hpp"
#include "vqann/quantizer.hpp"

namespace vqann {

namespace {

constexpr std::uint8_t kHasRotation = 1;
constexpr std::uint8_t kSparseElements = 2;

bool stored(double v) {
    return std::bit_cast<std::uint64_t>(v) != 0;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const QuantizerModel& model) {
    detail::ByteWriter w;
    w.raw("VQM1", 4);
    w.u32(static_cast<std::uint32_t>(model.variant));
    w.u32(static_cast<std::uint32_t>(model.m()));
    w.u32(static_cast<std::uint32_t>(model.k()));
    w.u32(static_cast<std::uint32_t>(model.d()));
    w.f64(model.epsilon);
    w.f64(model.mu);
    w.f64(model.lambda);

    const Matrix& e = model.codebooks.elements();
    std::uint64_t nnz = 0;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        nnz += stored(e.data()[i]) ? 1 : 0;
    }
    const bool sparse = model.variant == Variant::SNOCQ;
    std::uint8_t flags = 0;
    flags |= model.rotation ? kHasRotation : 0;
    flags |= sparse ? kSparseElements : 0;
    w.u8(flags);
    w.u64(nnz);

    if (sparse) {
        std::vector<std::uint32_t> row_ptr{0};
        std::vector<std::uint32_t> cols;
        std::vector<double> vals;
        for (Eigen::Index r = 0; r < e.rows(); ++r) {
            for (Eigen::Index c = 0; c < e.cols(); ++c) {
                if (stored(e(r, c))) {
                    cols.push_back(static_cast<std::uint32_t>(c));
                    vals.push_back(e(r, c));
                }
            }
            row_ptr.push_back(static_cast<std::uint32_t>(vals.size()));
        }
        for (const auto v : row_ptr) w.u32(v);
        for (const auto v : cols) w.u32(v);
        for (const auto v : vals) w.f64(v);
    } else {
        for (Eigen::Index i = 0; i < e.size(); ++i) {
            w.f64(e.data()[i]);
        }
    }
    if (model.rotation) {
        const Matrix& r = model.rotation->r;
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            w.f64(r.data()[i]);
        }
    }
    w.f64s(model.train_log);
    w.f64s(model.constraint_log);
    w.f64s(model.warmup_log);
    return std::move(w.bytes());
}

QuantizerModel deserialize_model(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
    detail::ByteReader r(bytes);
    r.expect_magic("VQM1");
    QuantizerModel model;
    const std::uint32_t tag = r.u32();
    if (tag > static_cast<std::uint32_t>(Variant::SNOCQ)) {
        throw FormatError("unknown variant tag");
    }
    model.variant = static_cast<Variant>(tag);
    const std::size_t m = r.u32();
    const std::size_t k = r.u32();
    const std::size_t d = r.u32();
    if (m == 0 || k == 0 || d == 0) {
        throw FormatError("model has an empty dimension");
    }
    model.epsilon = r.f64();
    model.mu = r.f64();
    model.lambda = r.f64();
    const std::uint8_t flags = r.u8();
    const std::uint64_t nnz = r.u64();
    if (nnz > m * k * d) {
        throw FormatError("nonzero count exceeds codebook size");
    }

    Matrix e = Matrix::Zero(static_cast<Eigen::Index>(m * k), static_cast<Eigen::Index>(d));
    if ((flags & kSparseElements) != 0) {
        std::vector<std::uint32_t> row_ptr(m * k + 1);
        for (auto& v : row_ptr) v = r.u32();
        if (row_ptr.front() != 0 || row_ptr.back() != nnz) {
            throw FormatError("corrupt sparse row pointers");
        }
        std::vector<std::uint32_t> cols(nnz);
        for (auto& v : cols) {
            v = r.u32();
            if (v >= d) {
                throw FormatError("sparse column out of range");
            }
        }
        for (std::size_t row = 0; row < m * k; ++row) {
            if (row_ptr[row] > row_ptr[row + 1]) {
                throw FormatError("corrupt sparse row pointers");
            }
            for (std::uint32_t i = row_ptr[row]; i < row_ptr[row + 1]; ++i) {
                e(static_cast<Eigen::Index>(row), cols[i]) = r.f64();
            }
        }
    } else {
        for (Eigen::Index i = 0; i < e.size(); ++i) {
            e.data()[i] = r.f64();
        }
    }
    model.codebooks = CodebookSet(m, k, std::move(e));
    if ((flags & kHasRotation) != 0) {
        Matrix rot(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < rot.size(); ++i) {
            rot.data()[i] = r.f64();
        }
        model.rotation = Rotation{std::move(rot)};
    }
    model.train_log = r.f64s();
    model.constraint_log = r.f64s();
    model.warmup_log = r.f64s();
    if (consumed != nullptr) {
        *consumed = r.position();
    } else if (!r.done()) {
        throw FormatError("trailing bytes after model");
    }
    return model;
}

void save_model(const QuantizerModel& model, const std::filesystem::path& path) {
    detail::write_file(path, serialize_model(model));
}

QuantizerModel load_model(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    return deserialize_model(bytes);
}

void save_codes(const CodeSet& codes, std::size_t k, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.raw("VQC1", 4);
    w.u32(static_cast<std::uint32_t>(codes.m));
    w.u32(static_cast<std::uint32_t>(k));
    w.u64(codes.size());
    const auto packed = pack_codes(codes, k);
    w.raw(packed.data(), packed.size());
    detail::write_file(path, w.bytes());
}

CodeSet load_codes(const std::filesystem::path& path, std::size_t* k) {
    const auto bytes = detail::read_file(path);
    detail::ByteReader r(bytes);
    r.expect_magic("VQC1");
    const std::size_t m = r.u32();
    const std::size_t kk = r.u32();
    const std::uint64_t n = r.u64();
    if (m == 0 || kk == 0) {
        throw FormatError("codes file has an empty dimension");
    }
    const std::size_t per = (m * bits_per_index(kk) + 7) / 8;
    CodeSet codes = unpack_codes(r.take(static_cast<std::size_t>(n) * per), static_cast<std::size_t>(n), m, kk);
    if (k != nullptr) {
        *k = kk;
    }
    return codes;
}

}  // namespace vqann
