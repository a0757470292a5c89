#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <climits>
#include <map>
#include <set>

#include "dexp/dense.hpp"
#include "dexp/util.hpp"
#include "test_helpers.hpp"

using namespace dexp;

namespace {

std::vector<std::pair<std::string, std::string>> synthetic_docs(int n) {
    std::vector<std::pair<std::string, std::string>> docs;
    for (int i = 0; i < n; ++i) {
        char id[8];
        std::snprintf(id, sizeof(id), "d%03d", i);
        docs.emplace_back(id, "document body number " + std::to_string(i));
    }
    return docs;
}

std::vector<ExpandedDocument> synthetic_expansions(
    const std::vector<std::pair<std::string, std::string>>& docs, int queries_per_doc) {
    std::vector<ExpandedDocument> out;
    for (const auto& [id, body] : docs) {
        ExpandedDocument e;
        e.doc_id = id;
        for (int q = 0; q < queries_per_doc; ++q)
            e.queries.push_back("query " + std::to_string(q) + " about " + id + "?");
        out.push_back(std::move(e));
    }
    return out;
}

// Independent full-formula evaluator: scores every document with capped
// candidate selection done from first principles.
std::vector<FusedHit> fused_oracle(const EmbeddingVector& query, const TextIndex& text_index,
                                   const QueryIndex& query_index, const FusionParams& params,
                                   int k) {
    size_t nd = text_index.vectors.size();
    std::vector<std::pair<double, std::string>> text_scored(nd);
    for (size_t i = 0; i < nd; ++i)
        text_scored[i] = {similarity_of(query, text_index.vectors[i], params.similarity),
                          text_index.doc_ids[i]};
    auto text_sorted = text_scored;
    std::sort(text_sorted.begin(), text_sorted.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::map<std::string, double> in_dt;
    for (size_t i = 0; i < text_sorted.size() && i < static_cast<size_t>(params.n_t); ++i)
        in_dt[text_sorted[i].second] = text_sorted[i].first;

    std::vector<std::pair<double, size_t>> query_scored(query_index.vectors.size());
    for (size_t j = 0; j < query_index.vectors.size(); ++j)
        query_scored[j] = {similarity_of(query, query_index.vectors[j], params.similarity), j};
    std::sort(query_scored.begin(), query_scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::map<std::string, double> max_pooled;
    for (size_t r = 0; r < query_scored.size() && r < static_cast<size_t>(params.n_q); ++r) {
        const auto& [sim, j] = query_scored[r];
        const std::string& doc = query_index.doc_ids[query_index.source[j]];
        auto it = max_pooled.find(doc);
        if (it == max_pooled.end() || sim > it->second) max_pooled[doc] = sim;
    }

    std::set<std::string> candidates;
    for (const auto& [doc, s] : in_dt) candidates.insert(doc);
    for (const auto& [doc, s] : max_pooled) candidates.insert(doc);
    std::vector<FusedHit> hits;
    for (const auto& doc : candidates) {
        FusedHit h;
        h.doc_id = doc;
        h.s_t = in_dt.count(doc) ? in_dt[doc] : 0.0;
        h.s_q = max_pooled.count(doc) ? max_pooled[doc] : 0.0;
        h.s = (1.0 - params.alpha) * h.s_t + params.alpha * h.s_q;
        hits.push_back(h);
    }
    std::sort(hits.begin(), hits.end(), [](const FusedHit& a, const FusedHit& b) {
        if (a.s != b.s) return a.s > b.s;
        return a.doc_id < b.doc_id;
    });
    if (hits.size() > static_cast<size_t>(k)) hits.resize(static_cast<size_t>(k));
    return hits;
}

}  // namespace

TEST_CASE("build_text_index preserves corpus order and determinism") {
    StubEmbeddingBackend backend(16);
    auto docs = synthetic_docs(3);
    auto index = build_text_index(docs, backend);
    REQUIRE(index.doc_ids.size() == 3);
    CHECK(index.doc_ids[0] == "d000");
    CHECK(index.vectors.size() == 3);
    auto again = build_text_index(docs, backend);
    for (size_t i = 0; i < 3; ++i) CHECK(index.vectors[i].values == again.vectors[i].values);

    auto identical = build_text_index({{"a", "same body"}, {"b", "same body"}}, backend);
    CHECK(identical.vectors[0].values == identical.vectors[1].values);

    CHECK_THROWS_AS(build_text_index({}, backend), std::invalid_argument);
}

TEST_CASE("build_query_index assigns global indices in doc order") {
    StubEmbeddingBackend backend(16);
    auto docs = synthetic_docs(2);
    auto expansions = synthetic_expansions(docs, 30);
    auto index = build_query_index(expansions, backend);
    CHECK(index.vectors.size() == 60);
    REQUIRE(index.source.size() == 60);
    CHECK(index.doc_ids[index.source[29]] == "d000");
    CHECK(index.doc_ids[index.source[30]] == "d001");  // 31st entry, 0-based 30

    std::vector<ExpandedDocument> bad{{"dX", {}}};
    CHECK_THROWS_AS(build_query_index(bad, backend), std::invalid_argument);
}

TEST_CASE("fused scoring follows the formula on hand-built indices") {
    // Two docs with hand-set vectors, one query vector.
    TextIndex text;
    text.doc_ids = {"a", "b"};
    EmbeddingVector va, vb, vq, uq;
    va.values = {1.0f, 0.0f};
    vb.values = {0.0f, 1.0f};
    vq.values = {0.8f, 0.6f};
    text.vectors = {va, vb};
    QueryIndex queries;
    queries.doc_ids = {"a"};
    uq.values = {0.6f, 0.8f};
    queries.vectors = {uq};
    queries.source = {0};

    FusionParams params;
    params.alpha = 0.5;
    params.n_t = 10;
    params.n_q = 10;
    auto hits = search_fused(vq, text, queries, params, 10);
    REQUIRE(hits.size() == 2);
    // Doc a: s_t = 0.8, s_q = 0.6*0.8 + 0.8*0.6 = 0.96 -> s = 0.88.
    const FusedHit* a = nullptr;
    for (const auto& h : hits)
        if (h.doc_id == "a") a = &h;
    REQUIRE(a != nullptr);
    CHECK(a->s_t == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(a->s_q == doctest::Approx(0.96).epsilon(1e-6));
    CHECK(a->s == doctest::Approx(0.88).epsilon(1e-6));
    // s_t = 0.8, s_q = 0.6 at alpha 0.5 gives 0.7 (direct arithmetic).
    CHECK((1.0 - params.alpha) * 0.8 + params.alpha * 0.6 == doctest::Approx(0.7));
}

TEST_CASE("max-pooling keeps the best query match per document") {
    TextIndex text;
    text.doc_ids = {"a"};
    EmbeddingVector va;
    va.values = {1.0f, 0.0f};
    text.vectors = {va};
    QueryIndex queries;
    queries.doc_ids = {"a"};
    queries.source = {0, 0, 0};
    EmbeddingVector u1, u2, u3, vq;
    u1.values = {0.2f, 0.0f};
    u2.values = {0.9f, 0.0f};
    u3.values = {0.5f, 0.0f};
    queries.vectors = {u1, u2, u3};
    vq.values = {1.0f, 0.0f};

    FusionParams params;
    params.alpha = 1.0;
    auto hits = search_fused(vq, text, queries, params, 5);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].s_q == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("fused search equals the exhaustive oracle on a random corpus") {
    StubEmbeddingBackend backend(32);
    auto docs = synthetic_docs(60);
    auto expansions = synthetic_expansions(docs, 4);
    auto text_index = build_text_index(docs, backend);
    auto query_index = build_query_index(expansions, backend);
    auto vq = backend.embed("what is going on with document forty two?");

    SUBCASE("uncapped candidates, all alphas") {
        for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            CAPTURE(alpha);
            FusionParams params;
            params.alpha = alpha;
            params.n_t = INT_MAX;
            params.n_q = INT_MAX;
            auto got = search_fused(vq, text_index, query_index, params, 60);
            auto want = fused_oracle(vq, text_index, query_index, params, 60);
            REQUIRE(got.size() == want.size());
            for (size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].doc_id == want[i].doc_id);
                CHECK(got[i].s == want[i].s);
            }
        }
    }
    SUBCASE("capped candidates") {
        FusionParams params;
        params.alpha = 0.5;
        params.n_t = 7;
        params.n_q = 13;
        auto got = search_fused(vq, text_index, query_index, params, 25);
        auto want = fused_oracle(vq, text_index, query_index, params, 25);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].doc_id == want[i].doc_id);
            CHECK(got[i].s == want[i].s);
        }
    }
    SUBCASE("alpha 0 recovers pure text retrieval score-for-score") {
        FusionParams params;
        params.alpha = 0.0;
        params.n_t = INT_MAX;
        params.n_q = INT_MAX;
        auto fused = search_fused(vq, text_index, query_index, params, 60);
        auto text_only = search_text(vq, text_index, 60);
        REQUIRE(fused.size() == text_only.size());
        for (size_t i = 0; i < fused.size(); ++i) {
            CHECK(fused[i].doc_id == text_only[i].doc_id);
            CHECK(fused[i].s == text_only[i].score);
        }
    }
    SUBCASE("alpha 1 ranking is unchanged by permuting document vectors") {
        FusionParams params;
        params.alpha = 1.0;
        params.n_t = INT_MAX;
        params.n_q = INT_MAX;
        auto before = search_fused(vq, text_index, query_index, params, 60);
        TextIndex permuted = text_index;
        std::reverse(permuted.vectors.begin(), permuted.vectors.end());
        auto after = search_fused(vq, permuted, query_index, params, 60);
        REQUIRE(before.size() == after.size());
        for (size_t i = 0; i < before.size(); ++i) {
            CHECK(before[i].doc_id == after[i].doc_id);
            CHECK(before[i].s == after[i].s);
        }
    }
    SUBCASE("convex combination bound") {
        FusionParams params;
        params.alpha = 0.37;
        params.n_t = INT_MAX;
        params.n_q = INT_MAX;
        for (const auto& h : search_fused(vq, text_index, query_index, params, 60)) {
            CHECK(h.s >= std::min(h.s_t, h.s_q) - 1e-12);
            CHECK(h.s <= std::max(h.s_t, h.s_q) + 1e-12);
        }
    }
    SUBCASE("candidate set is exactly D_t union query sources") {
        FusionParams params;
        params.alpha = 0.5;
        params.n_t = 5;
        params.n_q = 9;
        auto hits = search_fused(vq, text_index, query_index, params, 60);
        auto want = fused_oracle(vq, text_index, query_index, params, 60);
        std::set<std::string> got_docs, want_docs;
        for (const auto& h : hits) got_docs.insert(h.doc_id);
        for (const auto& h : want) want_docs.insert(h.doc_id);
        CHECK(got_docs == want_docs);
    }
    SUBCASE("enlarging n_t and n_q never drops candidates") {
        FusionParams small;
        small.alpha = 0.5;
        small.n_t = 5;
        small.n_q = 9;
        FusionParams large = small;
        large.n_t = 15;
        large.n_q = 29;
        std::set<std::string> small_set, large_set;
        for (const auto& h : search_fused(vq, text_index, query_index, small, 60))
            small_set.insert(h.doc_id);
        for (const auto& h : search_fused(vq, text_index, query_index, large, 60))
            large_set.insert(h.doc_id);
        for (const auto& d : small_set) CHECK(large_set.count(d) == 1);
    }
    SUBCASE("inner product and cosine agree on normalized vectors") {
        FusionParams ip;
        ip.alpha = 0.5;
        ip.n_t = INT_MAX;
        ip.n_q = INT_MAX;
        ip.similarity = Similarity::inner_product;
        FusionParams cos = ip;
        cos.similarity = Similarity::cosine;
        auto a = search_fused(vq, text_index, query_index, ip, 60);
        auto b = search_fused(vq, text_index, query_index, cos, 60);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].doc_id == b[i].doc_id);
    }
}

TEST_CASE("search_append behaves like plain text search") {
    StubEmbeddingBackend backend(16);
    auto docs = synthetic_docs(5);
    auto index = build_text_index(docs, backend);
    auto vq = backend.embed("anything");
    auto a = search_append(vq, index, 3);
    auto b = search_text(vq, index, 3);
    REQUIRE(a.size() == 3);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].doc_id == b[i].doc_id);
        CHECK(a[i].score == b[i].score);
    }
    TextIndex single;
    single.doc_ids = {"only"};
    single.vectors = {backend.embed("one doc")};
    auto solo = search_append(vq, single, 4);
    REQUIRE(solo.size() == 1);
    CHECK(solo[0].doc_id == "only");
}

TEST_CASE("dimension mismatches are rejected") {
    StubEmbeddingBackend backend(16);
    auto index = build_text_index(synthetic_docs(3), backend);
    EmbeddingVector wrong;
    wrong.values = {1.0f, 2.0f};
    CHECK_THROWS_AS(search_text(wrong, index, 2), std::invalid_argument);
    QueryIndex queries;
    CHECK_THROWS_AS(search_fused(wrong, index, queries, FusionParams{}, 2),
                    std::invalid_argument);
}

TEST_CASE("dense snapshots round-trip and are byte-stable") {
    testutil::TempDir tmp;
    StubEmbeddingBackend backend(8);
    auto docs = synthetic_docs(4);
    auto text_index = build_text_index(docs, backend);
    auto query_index = build_query_index(synthetic_expansions(docs, 3), backend);

    save_text_index(text_index, tmp.file("text.idx"));
    save_text_index(text_index, tmp.file("text2.idx"));
    CHECK(testutil::read_file(tmp.file("text.idx")) ==
          testutil::read_file(tmp.file("text2.idx")));
    auto text_back = load_text_index(tmp.file("text.idx"));
    CHECK(text_back.doc_ids == text_index.doc_ids);
    REQUIRE(text_back.vectors.size() == text_index.vectors.size());
    for (size_t i = 0; i < text_back.vectors.size(); ++i)
        CHECK(text_back.vectors[i].values == text_index.vectors[i].values);

    save_query_index(query_index, tmp.file("query.idx"));
    auto query_back = load_query_index(tmp.file("query.idx"));
    CHECK(query_back.doc_ids == query_index.doc_ids);
    CHECK(query_back.source == query_index.source);
    REQUIRE(query_back.vectors.size() == query_index.vectors.size());
    for (size_t i = 0; i < query_back.vectors.size(); ++i)
        CHECK(query_back.vectors[i].values == query_index.vectors[i].values);

    CHECK_THROWS_AS(load_text_index(tmp.file("query.idx")), std::runtime_error);
}
