#include "dexp/sparse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "dexp/porter.hpp"
#include "dexp/stopwords.hpp"
#include "dexp/util.hpp"

namespace dexp {

std::vector<std::string> tokenize(std::string_view text, bool stem) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && !is_stopword(current))
            tokens.push_back(stem ? porter_stem(current) : current);
        current.clear();
    };
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        else
            flush();
    }
    flush();
    return tokens;
}

std::string expand_text(const Document& doc, const ExpandedDocument& expansion,
                        bool include_title) {
    if (doc.doc_id != expansion.doc_id)
        throw std::invalid_argument("expand_text: doc_id mismatch (\"" + doc.doc_id +
                                    "\" vs \"" + expansion.doc_id + "\")");
    std::string out = doc.indexable_body(include_title);
    for (const auto& q : expansion.queries) {
        out += '\n';
        out += q;
    }
    return out;
}

InvertedIndex build_index(const std::vector<std::pair<std::string, std::string>>& texts,
                          Bm25Params params, bool stem) {
    if (texts.empty()) throw std::invalid_argument("build_index: empty collection");
    InvertedIndex index;
    index.params = params;
    index.stemmed = stem;
    index.doc_ids.reserve(texts.size());
    index.doc_lengths.reserve(texts.size());
    uint64_t total_length = 0;
    for (uint32_t ordinal = 0; ordinal < texts.size(); ++ordinal) {
        const auto& [doc_id, text] = texts[ordinal];
        index.doc_ids.push_back(doc_id);
        auto tokens = tokenize(text, stem);
        std::map<std::string, uint32_t> counts;
        for (auto& t : tokens) ++counts[t];
        for (auto& [term, tf] : counts) index.postings[term].push_back(Posting{ordinal, tf});
        index.doc_lengths.push_back(static_cast<uint32_t>(tokens.size()));
        total_length += tokens.size();
    }
    index.avg_doc_length =
        static_cast<double>(total_length) / static_cast<double>(texts.size());
    return index;
}

std::vector<ScoredHit> bm25_search(const InvertedIndex& index, const std::string& query, int k) {
    if (k < 1) throw std::invalid_argument("bm25_search: k must be >= 1");
    auto terms = tokenize(query, index.stemmed);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    const double n_docs = static_cast<double>(index.doc_count());
    const double k1 = index.params.k1;
    const double b = index.params.b;
    std::unordered_map<uint32_t, double> scores;
    for (const auto& term : terms) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        const auto& plist = it->second;
        double df = static_cast<double>(plist.size());
        double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const Posting& p : plist) {
            double tf = static_cast<double>(p.tf);
            double len_norm =
                1.0 - b + b * static_cast<double>(index.doc_lengths[p.doc]) /
                              index.avg_doc_length;
            scores[p.doc] += idf * tf * (k1 + 1.0) / (tf + k1 * len_norm);
        }
    }

    std::vector<ScoredHit> hits;
    hits.reserve(scores.size());
    for (const auto& [doc, score] : scores)
        hits.push_back(ScoredHit{index.doc_ids[doc], score});
    std::sort(hits.begin(), hits.end(), [](const ScoredHit& a, const ScoredHit& b2) {
        if (a.score != b2.score) return a.score > b2.score;
        return a.doc_id < b2.doc_id;
    });
    if (hits.size() > static_cast<size_t>(k)) hits.resize(static_cast<size_t>(k));
    return hits;
}

namespace {

constexpr char kMagic[4] = {'D', 'X', 'S', 'I'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_f64(std::string& out, double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out += s;
}

struct Reader {
    const std::string& data;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > data.size()) throw std::runtime_error("index snapshot truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_index(const InvertedIndex& index, const std::filesystem::path& path) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    out += static_cast<char>(index.stemmed ? 1 : 0);
    put_f64(out, index.params.k1);
    put_f64(out, index.params.b);
    put_u32(out, static_cast<uint32_t>(index.doc_count()));
    for (size_t i = 0; i < index.doc_count(); ++i) {
        put_string(out, index.doc_ids[i]);
        put_u32(out, index.doc_lengths[i]);
    }
    put_f64(out, index.avg_doc_length);

    std::vector<const std::string*> terms;
    terms.reserve(index.postings.size());
    for (const auto& [term, plist] : index.postings) {
        (void)plist;
        terms.push_back(&term);
    }
    std::sort(terms.begin(), terms.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });
    put_u64(out, terms.size());
    for (const std::string* term : terms) {
        put_string(out, *term);
        const auto& plist = index.postings.at(*term);
        put_u64(out, plist.size());
        for (const Posting& p : plist) {
            put_u32(out, p.doc);
            put_u32(out, p.tf);
        }
    }
    util::write_file_atomic(path, out);
}

InvertedIndex load_index(const std::filesystem::path& path) {
    std::string data = util::read_file(path);
    Reader r{data};
    r.need(4);
    if (data.compare(0, 4, kMagic, 4) != 0)
        throw std::runtime_error("not a sparse index snapshot: " + path.string());
    r.pos = 4;
    uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("unsupported sparse index version " + std::to_string(version));
    InvertedIndex index;
    r.need(1);
    index.stemmed = data[r.pos++] != 0;
    index.params.k1 = r.f64();
    index.params.b = r.f64();
    uint32_t n = r.u32();
    index.doc_ids.reserve(n);
    index.doc_lengths.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        index.doc_ids.push_back(r.str());
        index.doc_lengths.push_back(r.u32());
    }
    index.avg_doc_length = r.f64();
    uint64_t term_count = r.u64();
    for (uint64_t t = 0; t < term_count; ++t) {
        std::string term = r.str();
        uint64_t m = r.u64();
        std::vector<Posting> plist;
        plist.reserve(m);
        for (uint64_t i = 0; i < m; ++i) {
            Posting p;
            p.doc = r.u32();
            p.tf = r.u32();
            plist.push_back(p);
        }
        index.postings.emplace(std::move(term), std::move(plist));
    }
    return index;
}

}  // namespace dexp
