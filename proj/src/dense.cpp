#include "dexp/dense.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <map>
#include <stdexcept>

#include "dexp/util.hpp"

namespace dexp {

Similarity similarity_from_string(std::string_view name) {
    if (name == "inner_product") return Similarity::inner_product;
    if (name == "cosine") return Similarity::cosine;
    throw std::invalid_argument("unknown similarity: " + std::string(name));
}

std::string_view to_string(Similarity sim) {
    return sim == Similarity::inner_product ? "inner_product" : "cosine";
}

double similarity_of(const EmbeddingVector& a, const EmbeddingVector& b, Similarity sim) {
    return sim == Similarity::inner_product ? dot(a, b) : cosine_similarity(a, b);
}

TextIndex build_text_index(const std::vector<std::pair<std::string, std::string>>& docs,
                           EmbeddingBackend& backend) {
    if (docs.empty()) throw std::invalid_argument("build_text_index: empty corpus");
    TextIndex index;
    index.doc_ids.reserve(docs.size());
    std::vector<std::string> bodies;
    bodies.reserve(docs.size());
    for (const auto& [doc_id, body] : docs) {
        index.doc_ids.push_back(doc_id);
        bodies.push_back(body);
    }
    index.vectors = backend.embed_batch(bodies);
    return index;
}

QueryIndex build_query_index(const std::vector<ExpandedDocument>& expansions,
                             EmbeddingBackend& backend) {
    QueryIndex index;
    std::vector<std::string> texts;
    for (const auto& exp : expansions) {
        if (exp.queries.empty())
            throw std::invalid_argument("build_query_index: document \"" + exp.doc_id +
                                        "\" has no queries");
        uint32_t doc_ordinal = static_cast<uint32_t>(index.doc_ids.size());
        index.doc_ids.push_back(exp.doc_id);
        for (const auto& q : exp.queries) {
            texts.push_back(q);
            index.source.push_back(doc_ordinal);
        }
    }
    index.vectors = backend.embed_batch(texts);
    return index;
}

namespace {

// Indices of the top-n entries by similarity, ties by `tiekey` ascending.
std::vector<size_t> top_n_indices(const std::vector<double>& sims, size_t n,
                                  const std::function<bool(size_t, size_t)>& tie_less) {
    std::vector<size_t> order(sims.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto cmp = [&](size_t a, size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return tie_less(a, b);
    };
    if (n < order.size()) {
        std::partial_sort(order.begin(), order.begin() + static_cast<ptrdiff_t>(n), order.end(),
                          cmp);
        order.resize(n);
    } else {
        std::sort(order.begin(), order.end(), cmp);
    }
    return order;
}

}  // namespace

std::vector<FusedHit> search_fused(const EmbeddingVector& query, const TextIndex& text_index,
                                   const QueryIndex& query_index, const FusionParams& params,
                                   int k) {
    if (k < 1) throw std::invalid_argument("search_fused: k must be >= 1");
    if (params.alpha < 0.0 || params.alpha > 1.0)
        throw std::invalid_argument("search_fused: alpha must be in [0, 1]");
    if (params.n_t < 1 || params.n_q < 1)
        throw std::invalid_argument("search_fused: n_t and n_q must be >= 1");
    if (text_index.dimension() != static_cast<int>(query.dimension()) ||
        (query_index.dimension() != 0 &&
         query_index.dimension() != static_cast<int>(query.dimension())))
        throw std::invalid_argument("search_fused: dimension mismatch");

    // Step 1: text retrieval.
    std::vector<double> text_sims(text_index.vectors.size());
    for (size_t i = 0; i < text_index.vectors.size(); ++i)
        text_sims[i] = similarity_of(query, text_index.vectors[i], params.similarity);
    size_t n_t = std::min<size_t>(text_index.vectors.size(), static_cast<size_t>(params.n_t));
    auto top_text = top_n_indices(text_sims, n_t, [&](size_t a, size_t b) {
        return text_index.doc_ids[a] < text_index.doc_ids[b];
    });

    // Step 2: query retrieval with per-document max-pooling.
    std::vector<double> query_sims(query_index.vectors.size());
    for (size_t j = 0; j < query_index.vectors.size(); ++j)
        query_sims[j] = similarity_of(query, query_index.vectors[j], params.similarity);
    size_t n_q = std::min<size_t>(query_index.vectors.size(), static_cast<size_t>(params.n_q));
    auto top_queries =
        top_n_indices(query_sims, n_q, [](size_t a, size_t b) { return a < b; });

    struct Partial {
        double s_t = 0.0;
        double s_q = 0.0;
        bool has_q = false;
    };
    std::map<std::string, Partial> candidates;  // doc_id ascending
    for (size_t idx : top_text) candidates[text_index.doc_ids[idx]].s_t = text_sims[idx];
    for (size_t j : top_queries) {
        const std::string& doc_id = query_index.doc_ids[query_index.source[j]];
        Partial& p = candidates[doc_id];
        if (!p.has_q || query_sims[j] > p.s_q) {
            p.s_q = query_sims[j];
            p.has_q = true;
        }
    }

    // Step 3: score fusion.
    std::vector<FusedHit> hits;
    hits.reserve(candidates.size());
    for (const auto& [doc_id, p] : candidates) {
        FusedHit h;
        h.doc_id = doc_id;
        h.s_t = p.s_t;
        h.s_q = p.has_q ? p.s_q : 0.0;
        h.s = (1.0 - params.alpha) * h.s_t + params.alpha * h.s_q;
        hits.push_back(std::move(h));
    }
    std::stable_sort(hits.begin(), hits.end(), [](const FusedHit& a, const FusedHit& b) {
        if (a.s != b.s) return a.s > b.s;
        return a.doc_id < b.doc_id;
    });
    if (hits.size() > static_cast<size_t>(k)) hits.resize(static_cast<size_t>(k));
    return hits;
}

std::vector<ScoredHit> search_text(const EmbeddingVector& query, const TextIndex& index, int k) {
    if (k < 1) throw std::invalid_argument("search_text: k must be >= 1");
    if (index.dimension() != static_cast<int>(query.dimension()))
        throw std::invalid_argument("search_text: dimension mismatch");
    std::vector<double> sims(index.vectors.size());
    for (size_t i = 0; i < index.vectors.size(); ++i)
        sims[i] = similarity_of(query, index.vectors[i], index.similarity);
    auto order = top_n_indices(sims, std::min<size_t>(static_cast<size_t>(k), sims.size()),
                               [&](size_t a, size_t b) {
                                   return index.doc_ids[a] < index.doc_ids[b];
                               });
    std::vector<ScoredHit> hits;
    hits.reserve(order.size());
    for (size_t idx : order) hits.push_back(ScoredHit{index.doc_ids[idx], sims[idx]});
    return hits;
}

std::vector<ScoredHit> search_append(const EmbeddingVector& query, const TextIndex& append_index,
                                     int k) {
    return search_text(query, append_index, k);
}

namespace {

constexpr uint32_t kDenseVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out += s;
}

void put_vectors(std::string& out, const std::vector<EmbeddingVector>& vectors, uint32_t dim) {
    for (const auto& v : vectors) {
        for (float x : v.values) {
            uint32_t bits;
            std::memcpy(&bits, &x, sizeof(bits));
            put_u32(out, bits);
        }
        if (v.values.size() != dim)
            throw std::runtime_error("dense snapshot: inconsistent vector dimension");
    }
}

struct Reader {
    const std::string& data;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > data.size()) throw std::runtime_error("dense snapshot truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
    EmbeddingVector vec(uint32_t dim) {
        EmbeddingVector v;
        v.values.resize(dim);
        for (uint32_t i = 0; i < dim; ++i) {
            uint32_t bits = u32();
            float x;
            std::memcpy(&x, &bits, sizeof(x));
            v.values[i] = x;
        }
        return v;
    }
};

void check_header(Reader& r, const char* magic, const std::filesystem::path& path) {
    r.need(4);
    if (r.data.compare(0, 4, magic, 4) != 0)
        throw std::runtime_error("not a dense index snapshot: " + path.string());
    r.pos = 4;
    uint32_t version = r.u32();
    if (version != kDenseVersion)
        throw std::runtime_error("unsupported dense index version " + std::to_string(version));
}

}  // namespace

void save_text_index(const TextIndex& index, const std::filesystem::path& path) {
    std::string out;
    out.append("DXDT", 4);
    put_u32(out, kDenseVersion);
    put_u32(out, static_cast<uint32_t>(index.dimension()));
    put_u32(out, static_cast<uint32_t>(index.vectors.size()));
    out += static_cast<char>(index.similarity == Similarity::inner_product ? 0 : 1);
    put_vectors(out, index.vectors, static_cast<uint32_t>(index.dimension()));
    for (const auto& id : index.doc_ids) put_string(out, id);
    util::write_file_atomic(path, out);
}

TextIndex load_text_index(const std::filesystem::path& path) {
    std::string data = util::read_file(path);
    Reader r{data};
    check_header(r, "DXDT", path);
    uint32_t dim = r.u32();
    uint32_t count = r.u32();
    r.need(1);
    TextIndex index;
    index.similarity = data[r.pos++] == 0 ? Similarity::inner_product : Similarity::cosine;
    index.vectors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) index.vectors.push_back(r.vec(dim));
    index.doc_ids.reserve(count);
    for (uint32_t i = 0; i < count; ++i) index.doc_ids.push_back(r.str());
    return index;
}

void save_query_index(const QueryIndex& index, const std::filesystem::path& path) {
    std::string out;
    out.append("DXDQ", 4);
    put_u32(out, kDenseVersion);
    put_u32(out, static_cast<uint32_t>(index.dimension()));
    put_u32(out, static_cast<uint32_t>(index.vectors.size()));
    out += static_cast<char>(index.similarity == Similarity::inner_product ? 0 : 1);
    put_vectors(out, index.vectors, static_cast<uint32_t>(index.dimension()));
    put_u32(out, static_cast<uint32_t>(index.doc_ids.size()));
    for (const auto& id : index.doc_ids) put_string(out, id);
    for (uint32_t s : index.source) put_u32(out, s);
    util::write_file_atomic(path, out);
}

QueryIndex load_query_index(const std::filesystem::path& path) {
    std::string data = util::read_file(path);
    Reader r{data};
    check_header(r, "DXDQ", path);
    uint32_t dim = r.u32();
    uint32_t count = r.u32();
    r.need(1);
    QueryIndex index;
    index.similarity = data[r.pos++] == 0 ? Similarity::inner_product : Similarity::cosine;
    index.vectors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) index.vectors.push_back(r.vec(dim));
    uint32_t docs = r.u32();
    index.doc_ids.reserve(docs);
    for (uint32_t i = 0; i < docs; ++i) index.doc_ids.push_back(r.str());
    index.source.reserve(count);
    for (uint32_t i = 0; i < count; ++i) index.source.push_back(r.u32());
    return index;
}

}  // namespace dexp
