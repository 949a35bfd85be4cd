#include "vqann/multi_index.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <random>
#include <unordered_set>

namespace vqann {

namespace {

constexpr std::uint32_t kIndexVersion = 1;

std::span<const double> span_of(std::span<const double> v, const std::pair<std::size_t, std::size_t>& s) {
    return v.subspan(s.first, s.second);
}

}  // namespace

void MultiIndex::precompute() {
    const std::size_t k = coarse.k();
    const std::size_t fm = fine.m();
    const std::size_t fk = fine.k();
    coarse_norms.assign(2 * k, 0.0);
    for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t i = 0; i < k; ++i) {
            const auto e = coarse.codebooks.element(h, i);
            coarse_norms[h * k + i] = dot(e, e);
        }
    }
    fine_norms.assign(fm * fk, 0.0);
    for (std::size_t m = 0; m < fm; ++m) {
        for (std::size_t s = 0; s < fk; ++s) {
            const auto e = fine.codebooks.element(m, s);
            fine_norms[m * fk + s] = dot(e, e);
        }
    }
    coarse_fine = coarse.codebooks.elements() * fine.codebooks.elements().transpose();
    coarse_cross.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            coarse_cross(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                dot(coarse.codebooks.element(0, i), coarse.codebooks.element(1, j));
        }
    }
}

MultiIndex build_multi_index(const Dataset& data, const MultiIndexConfig& config) {
    if (data.d() < 2) {
        throw DimensionError("multi-index needs at least two dimensions");
    }
    MultiIndex index;
    index.n = data.n();
    index.halves = SubspaceLayout::natural(data.d(), 2);
    const std::size_t k = config.coarse_k;

    PqResult coarse = train_pq(data, 2, k, index.halves, config.train.kmeans_iters,
                               derive_seed(config.train.seed, "multi_index.coarse"));
    index.coarse.variant = Variant::PQ;
    index.coarse.codebooks = std::move(coarse.codebooks);

    Matrix residual = data.vectors();
    for (std::size_t n = 0; n < data.n(); ++n) {
        residual.row(static_cast<Eigen::Index>(n)) -=
            reconstruct(index.coarse.codebooks, coarse.codes.code(n)).transpose();
    }
    const Dataset residuals(std::move(residual));

    TrainConfig fine_cfg = config.train;
    fine_cfg.seed = derive_seed(config.train.seed, "multi_index.fine");
    const bool penalized = config.fine_variant == Variant::OCQ || config.fine_variant == Variant::NOCQ ||
                           config.fine_variant == Variant::SNOCQ;
    const auto pick_mu = [&](const Dataset& sample) {
        if (config.validate_fine_mu && penalized) {
            fine_cfg.mu = select_mu(config.fine_variant, sample, config.fine_m, config.fine_k, fine_cfg).mu;
        }
    };
    CodeSet fine_codes;
    if (residuals.n() <= config.max_train) {
        pick_mu(residuals);
        TrainedQuantizer t = train_variant(config.fine_variant, residuals, config.fine_m, config.fine_k, fine_cfg);
        index.fine = std::move(t.model);
        fine_codes = std::move(t.codes);
    } else {
        std::vector<std::size_t> ids(residuals.n());
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(config.train.seed, "multi_index.sample"));
        std::shuffle(ids.begin(), ids.end(), rng);
        ids.resize(config.max_train);
        std::sort(ids.begin(), ids.end());
        const Dataset sample = residuals.subset(ids);
        pick_mu(sample);
        index.fine = train_variant(config.fine_variant, sample, config.fine_m, config.fine_k, fine_cfg).model;
        fine_codes = encode(index.fine, residuals);
    }

    index.cell_ids.assign(k * k, {});
    index.cell_codes.assign(k * k, CodeSet(0, config.fine_m));
    for (std::size_t n = 0; n < data.n(); ++n) {
        const auto cc = coarse.codes.code(n);
        const std::size_t cell = cc[0] * k + cc[1];
        index.cell_ids[cell].push_back(static_cast<std::uint32_t>(n));
        const auto fc = fine_codes.code(n);
        index.cell_codes[cell].indices.insert(index.cell_codes[cell].indices.end(), fc.begin(), fc.end());
    }
    index.precompute();
    return index;
}

CellCursor multi_sequence(std::span<const double> d1, std::span<const double> d2, std::size_t max_cells) {
    const std::size_t k1 = d1.size();
    const std::size_t k2 = d2.size();
    CellCursor cursor;
    if (k1 == 0 || k2 == 0) {
        return cursor;
    }
    max_cells = std::min(max_cells, k1 * k2);

    // Rank order per half; equal distances keep the lower index first.
    auto order = [](std::span<const double> d) {
        std::vector<std::uint32_t> o(d.size());
        std::iota(o.begin(), o.end(), 0U);
        std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return d[a] < d[b]; });
        return o;
    };
    const auto o1 = order(d1);
    const auto o2 = order(d2);

    struct Item {
        double dist;
        std::uint32_t i;  // original indices, for tie order
        std::uint32_t j;
        std::uint32_t ri;  // ranks
        std::uint32_t rj;
        bool operator>(const Item& other) const {
            if (dist != other.dist) return dist > other.dist;
            if (i != other.i) return i > other.i;
            return j > other.j;
        }
    };
    std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
    std::unordered_set<std::uint64_t> seen;
    auto push = [&](std::uint32_t ri, std::uint32_t rj) {
        if (ri >= k1 || rj >= k2) {
            return;
        }
        const std::uint64_t key = static_cast<std::uint64_t>(ri) * k2 + rj;
        if (!seen.insert(key).second) {
            return;
        }
        frontier.push({d1[o1[ri]] + d2[o2[rj]], o1[ri], o2[rj], ri, rj});
    };
    push(0, 0);
    cursor.emitted.reserve(max_cells);
    while (cursor.emitted.size() < max_cells && !frontier.empty()) {
        const Item top = frontier.top();
        frontier.pop();
        cursor.emitted.push_back({top.i, top.j, top.dist});
        push(top.ri + 1, top.rj);
        push(top.ri, top.rj + 1);
    }
    return cursor;
}

CoarseQuery coarse_query(const MultiIndex& index, std::span<const double> query) {
    if (query.size() != index.coarse.d()) {
        throw DimensionError("query dimension does not match the index");
    }
    CoarseQuery cq;
    const std::size_t k = index.coarse_k();
    for (std::size_t h = 0; h < 2; ++h) {
        const auto qh = span_of(query, index.halves.spans[h]);
        const double q2 = dot(qh, qh);
        cq.half_dist[h].resize(k);
        cq.inner[h].resize(k);
        for (std::size_t i = 0; i < k; ++i) {
            const double ip = dot(qh, span_of(index.coarse.codebooks.element(h, i), index.halves.spans[h]));
            cq.inner[h][i] = ip;
            cq.half_dist[h][i] = q2 - 2.0 * ip + index.coarse_norms[h * k + i];
        }
    }
    return cq;
}

CellCursor multi_sequence(const MultiIndex& /*index*/, const CoarseQuery& cq, std::size_t max_cells) {
    return multi_sequence(cq.half_dist[0], cq.half_dist[1], max_cells);
}

std::vector<Candidate> collect_candidates(const MultiIndex& index, const CellCursor& cursor,
                                          std::size_t max_candidates) {
    std::vector<Candidate> out;
    const std::size_t k = index.coarse_k();
    for (const auto& cell : cursor.emitted) {
        if (out.size() >= max_candidates) {
            break;
        }
        const auto& ids = index.cell_ids[cell.i * k + cell.j];
        for (std::uint32_t p = 0; p < ids.size(); ++p) {
            out.push_back({cell.i, cell.j, p});
        }
    }
    return out;
}

SearchResult rerank_multi_d_adc(const MultiIndex& index, std::span<const double> query, const CoarseQuery& cq,
                                std::span<const Candidate> candidates, std::size_t r) {
    const std::size_t k = index.coarse_k();
    const std::size_t fm = index.fine.m();
    const std::size_t fk = index.fine.k();
    // Fifth term's table: q^T r_{m,s}.
    const DistanceTable fine_ip = build_distance_table(index.fine, query, TableKind::inner_product);

    TopK top(std::min(r, candidates.size()));
    for (const Candidate& c : candidates) {
        if (c.i >= k || c.j >= k) {
            throw IndexError("candidate names a missing cell");
        }
        const std::size_t cell = c.i * k + c.j;
        if (c.posting >= index.cell_ids[cell].size()) {
            throw IndexError("candidate names a missing posting");
        }
        const auto code = index.cell_codes[cell].code(c.posting);
        double s = index.coarse_norms[c.i] + index.coarse_norms[k + c.j];  // term 2
        s -= 2.0 * (cq.inner[0][c.i] + cq.inner[1][c.j]);                    // term 4
        for (std::size_t m = 0; m < fm; ++m) {
            const std::size_t col = m * fk + code[m];
            s += index.fine_norms[col];                                        // term 3
            s -= 2.0 * fine_ip.entries[col];                                   // term 5
            s += 2.0 * (index.coarse_fine(static_cast<Eigen::Index>(c.i), static_cast<Eigen::Index>(col)) +
                          index.coarse_fine(static_cast<Eigen::Index>(k + c.j), static_cast<Eigen::Index>(col)));  // term 6
        }
        top.push(s, index.cell_ids[cell][c.posting]);
    }
    SearchResult out;
    for (const auto& [s, id] : top.sorted()) {
        out.ids.push_back(id);
        out.scores.push_back(s);
    }
    out.clipped = out.ids.size() < r;
    return out;
}

SearchResult rerank_multi_d_adc(const MultiIndex& index, std::span<const double> query,
                                std::span<const Candidate> candidates, std::size_t r) {
    return rerank_multi_d_adc(index, query, coarse_query(index, query), candidates, r);
}

SearchResult multi_index_search(const MultiIndex& index, std::span<const double> query, std::size_t list_length,
                                std::size_t r) {
    const CoarseQuery cq = coarse_query(index, query);
    const std::size_t k = index.coarse_k();
    // Emit cells lazily in chunks until the candidate list is long enough.
    std::size_t cells = std::min<std::size_t>(k * k, 64);
    std::vector<Candidate> cands;
    while (true) {
        const CellCursor cursor = multi_sequence(index, cq, cells);
        cands = collect_candidates(index, cursor, list_length);
        if (cands.size() >= list_length || cells == k * k) {
            break;
        }
        cells = std::min(k * k, cells * 4);
    }
    return rerank_multi_d_adc(index, query, cq, cands, r);
}

Vector reconstruct_posting(const MultiIndex& index, const Candidate& c) {
    const std::size_t cell = c.i * index.coarse_k() + c.j;
    const std::uint32_t coarse_code[2] = {c.i, c.j};
    return reconstruct(index.coarse.codebooks, coarse_code) +
           reconstruct(index.fine.codebooks, index.cell_codes[cell].code(c.posting));
}

void save_index(const MultiIndex& index, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.raw("VQMI", 4);
    w.u32(kIndexVersion);
    w.u64(index.n);
    for (const QuantizerModel* model : {&index.coarse, &index.fine}) {
        const auto blob = serialize_model(*model);
        w.u64(blob.size());
        w.raw(blob.data(), blob.size());
    }
    const std::size_t fk = index.fine.k();
    for (std::size_t cell = 0; cell < index.cell_ids.size(); ++cell) {
        const auto& ids = index.cell_ids[cell];
        w.varint(ids.size());
        std::uint32_t prev = 0;
        for (const std::uint32_t id : ids) {
            w.varint(id - prev);
            prev = id;
        }
        const auto packed = pack_codes(index.cell_codes[cell], fk);
        w.raw(packed.data(), packed.size());
    }
    detail::write_file(path, w.bytes());
}

MultiIndex load_index(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    detail::ByteReader r(bytes);
    r.expect_magic("VQMI");
    if (r.u32() != kIndexVersion) {
        throw FormatError("unsupported index version");
    }
    MultiIndex index;
    index.n = r.u64();
    for (QuantizerModel* model : {&index.coarse, &index.fine}) {
        const std::uint64_t len = r.u64();
        std::size_t used = 0;
        *model = deserialize_model(r.take(static_cast<std::size_t>(len)), &used);
        if (used != len) {
            throw FormatError("model blob length mismatch");
        }
    }
    if (index.coarse.m() != 2) {
        throw FormatError("coarse model must have two dictionaries");
    }
    index.halves = SubspaceLayout::natural(index.coarse.d(), 2);
    const std::size_t k = index.coarse.k();
    const std::size_t fm = index.fine.m();
    const std::size_t fk = index.fine.k();
    const std::size_t per = (fm * bits_per_index(fk) + 7) / 8;
    index.cell_ids.assign(k * k, {});
    index.cell_codes.assign(k * k, CodeSet(0, fm));
    std::size_t total = 0;
    for (std::size_t cell = 0; cell < k * k; ++cell) {
        const std::uint64_t count = r.varint();
        if (count > index.n) {
            throw FormatError("cell larger than the corpus");
        }
        std::uint64_t id = 0;
        for (std::uint64_t p = 0; p < count; ++p) {
            id += r.varint();
            if (id >= index.n) {
                throw FormatError("posting id out of range");
            }
            index.cell_ids[cell].push_back(static_cast<std::uint32_t>(id));
        }
        index.cell_codes[cell] =
            unpack_codes(r.take(static_cast<std::size_t>(count) * per), static_cast<std::size_t>(count), fm, fk);
        total += count;
    }
    if (total != index.n || !r.done()) {
        throw FormatError("index postings do not cover the corpus exactly");
    }
    index.precompute();
    return index;
}

}  // namespace vqann
