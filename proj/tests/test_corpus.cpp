#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cctype>

#include "dexp/corpus.hpp"
#include "dexp/util.hpp"
#include "test_helpers.hpp"

using namespace dexp;

TEST_CASE("load_corpus maps fields and preserves order") {
    testutil::TempDir tmp;
    testutil::write_file(tmp.file("corpus.jsonl"),
                         "{\"_id\":\"d1\",\"title\":\"A\",\"text\":\"B\"}\n"
                         "{\"_id\":\"d2\",\"title\":\"\",\"text\":\"C\"}\n");
    auto docs = load_corpus(tmp.file("corpus.jsonl"));
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].doc_id == "d1");
    CHECK(docs[0].title == "A");
    CHECK(docs[0].text == "B");
    CHECK(docs[1].doc_id == "d2");
}

TEST_CASE("load_corpus empty file yields empty collection") {
    testutil::TempDir tmp;
    testutil::write_file(tmp.file("corpus.jsonl"), "");
    CHECK(load_corpus(tmp.file("corpus.jsonl")).empty());
}

TEST_CASE("load_corpus duplicate id names the offender") {
    testutil::TempDir tmp;
    testutil::write_file(tmp.file("corpus.jsonl"),
                         "{\"_id\":\"d1\",\"title\":\"\",\"text\":\"x\"}\n"
                         "{\"_id\":\"d1\",\"title\":\"\",\"text\":\"y\"}\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.file("corpus.jsonl")), doctest::Contains("\"d1\""),
                         std::runtime_error);
}

TEST_CASE("load_corpus malformed line carries the line number") {
    testutil::TempDir tmp;
    testutil::write_file(tmp.file("corpus.jsonl"),
                         "{\"_id\":\"d1\",\"title\":\"\",\"text\":\"x\"}\n"
                         "{not json\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.file("corpus.jsonl")), doctest::Contains(":2:"),
                         std::runtime_error);
}

TEST_CASE("load_corpus unreadable file") {
    CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), std::runtime_error);
}

TEST_CASE("load_qrels parses grades and rejects bad rows") {
    testutil::TempDir tmp;
    SUBCASE("direct mapping") {
        testutil::write_file(tmp.file("qrels.tsv"),
                             "query-id\tcorpus-id\tscore\nq1\td1\t2\nq1\td2\t0\n");
        auto qrels = load_qrels(tmp.file("qrels.tsv"));
        CHECK(qrels.judgments.at("q1").at("d1") == 2);
        CHECK(qrels.judgments.at("q1").at("d2") == 0);
    }
    SUBCASE("negative grade") {
        testutil::write_file(tmp.file("qrels.tsv"), "query-id\tcorpus-id\tscore\nq1\td1\t-1\n");
        CHECK_THROWS_WITH_AS(load_qrels(tmp.file("qrels.tsv")), doctest::Contains("negative"),
                             std::runtime_error);
    }
    SUBCASE("non-integer grade") {
        testutil::write_file(tmp.file("qrels.tsv"), "query-id\tcorpus-id\tscore\nq1\td1\tabc\n");
        CHECK_THROWS_WITH_AS(load_qrels(tmp.file("qrels.tsv")), doctest::Contains("non-integer"),
                             std::runtime_error);
    }
    SUBCASE("duplicate pair names both ids") {
        testutil::write_file(tmp.file("qrels.tsv"),
                             "query-id\tcorpus-id\tscore\nq1\td1\t1\nq1\td1\t2\n");
        CHECK_THROWS_WITH_AS(load_qrels(tmp.file("qrels.tsv")), doctest::Contains("(q1, d1)"),
                             std::runtime_error);
    }
    SUBCASE("missing column") {
        testutil::write_file(tmp.file("qrels.tsv"), "query-id\tcorpus-id\tscore\nq1\td1\n");
        CHECK_THROWS_AS(load_qrels(tmp.file("qrels.tsv")), std::runtime_error);
    }
}

TEST_CASE("segment_sentences basic splits") {
    Document doc{"d1", "", "A cat. A dog."};
    auto set = segment_sentences(doc);
    REQUIRE(set.sentences.size() == 2);
    CHECK(set.sentences[0].text == "A cat.");
    CHECK(set.sentences[1].text == "A dog.");
}

TEST_CASE("segment_sentences protects abbreviations and decimals") {
    auto sentences = segment_text("e.g. prices rose 3.5 percent today.");
    REQUIRE(sentences.size() == 1);
    CHECK(sentences[0].text == "e.g. prices rose 3.5 percent today.");

    // Abbreviation followed by an uppercase start must still not split.
    auto s2 = segment_text("See Fig. 3 for details. Results follow.");
    REQUIRE(s2.size() == 2);
    CHECK(s2[0].text == "See Fig. 3 for details.");

    auto s3 = segment_text("Dr. Smith agreed. The committee voted.");
    REQUIRE(s3.size() == 2);
    CHECK(s3[0].text == "Dr. Smith agreed.");
}

TEST_CASE("segment_sentences without terminator yields the whole text") {
    auto sentences = segment_text("no terminator");
    REQUIRE(sentences.size() == 1);
    CHECK(sentences[0].text == "no terminator");
}

TEST_CASE("segmentation covers all non-whitespace characters in order") {
    const std::string texts[] = {
        "A cat. A dog.",
        "One! Two? Three.",
        "Mr. Jones met Dr. Smith. They talked about 3.14 and e.g. things.  Then left.",
        "no terminator at all",
        "Trailing terminator. ",
    };
    for (const auto& text : texts) {
        CAPTURE(text);
        auto sentences = segment_text(text);
        size_t cursor = 0;
        for (const auto& s : sentences) {
            CHECK(s.begin >= cursor);
            CHECK(s.begin < s.end);
            // Gap before this sentence must be whitespace only.
            for (size_t i = cursor; i < s.begin; ++i)
                CHECK(std::isspace(static_cast<unsigned char>(text[i])));
            CHECK(text.substr(s.begin, s.end - s.begin) == s.text);
            cursor = s.end;
        }
        for (size_t i = cursor; i < text.size(); ++i)
            CHECK(std::isspace(static_cast<unsigned char>(text[i])));
    }
}

TEST_CASE("segmentation is idempotent on extracted sentences") {
    auto sentences = segment_text(
        "Stocks fell 3.5 percent. Dr. Lee bought anyway! Was that wise? Time will tell.");
    REQUIRE(sentences.size() == 4);
    for (const auto& s : sentences) {
        auto again = segment_text(s.text);
        REQUIRE(again.size() == 1);
        CHECK(again[0].text == s.text);
    }
}

TEST_CASE("indexable body composition") {
    Document with_title{"d", "Title", "Body text."};
    CHECK(with_title.indexable_body(true) == "Title Body text.");
    CHECK(with_title.indexable_body(false) == "Body text.");
    Document no_title{"d", "", "Body text."};
    CHECK(no_title.indexable_body(true) == "Body text.");
}

TEST_CASE("expanded corpus round-trips losslessly") {
    testutil::TempDir tmp;
    std::vector<ExpandedDocument> docs;
    ExpandedDocument d1{"d1", {}};
    for (int i = 0; i < 30; ++i) d1.queries.push_back("query number " + std::to_string(i) + "?");
    docs.push_back(d1);
    docs.push_back(ExpandedDocument{"d2", {"solo query?"}});
    write_expanded_corpus(docs, tmp.file("expanded.jsonl"));
    auto back = read_expanded_corpus(tmp.file("expanded.jsonl"));
    REQUIRE(back.size() == 2);
    CHECK(back[0].doc_id == "d1");
    CHECK(back[0].queries == d1.queries);
    CHECK(back[1].queries == docs[1].queries);
}

TEST_CASE("write_expanded_corpus rejects empty query lists") {
    testutil::TempDir tmp;
    std::vector<ExpandedDocument> docs{{"d1", {}}};
    CHECK_THROWS_WITH_AS(write_expanded_corpus(docs, tmp.file("expanded.jsonl")),
                         doctest::Contains("d1"), std::runtime_error);
}

TEST_CASE("corpus load-write-load identity") {
    testutil::TempDir tmp;
    testutil::write_file(tmp.file("corpus.jsonl"),
                         "{\"_id\":\"d1\",\"title\":\"T\",\"text\":\"First. Second.\"}\n"
                         "{\"_id\":\"d2\",\"title\":\"\",\"text\":\"Only one sentence\"}\n");
    auto docs = load_corpus(tmp.file("corpus.jsonl"));
    std::string out;
    for (const auto& d : docs) {
        nlohmann::json j{{"_id", d.doc_id}, {"title", d.title}, {"text", d.text}};
        out += j.dump();
        out += '\n';
    }
    testutil::write_file(tmp.file("copy.jsonl"), out);
    auto again = load_corpus(tmp.file("copy.jsonl"));
    REQUIRE(again.size() == docs.size());
    for (size_t i = 0; i < docs.size(); ++i) {
        CHECK(again[i].doc_id == docs[i].doc_id);
        CHECK(again[i].title == docs[i].title);
        CHECK(again[i].text == docs[i].text);
    }
}
