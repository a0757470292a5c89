#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dexp/qgen.hpp"
#include "dexp/util.hpp"
#include "test_helpers.hpp"

using namespace dexp;

namespace {

const char* kFewshotPath = DEXP_SOURCE_DIR "/data/mini/fewshot.txt";

GenerationConfig config_with_fewshot(PromptMode mode = PromptMode::full) {
    GenerationConfig cfg;
    cfg.mode = mode;
    cfg.fewshot = load_fewshot_examples(kFewshotPath);
    return cfg;
}

}  // namespace

TEST_CASE("fewshot file loads six structured examples") {
    auto examples = load_fewshot_examples(kFewshotPath);
    REQUIRE(examples.size() == 6);
    CHECK(examples[0].article.rfind("You have a good thing going.", 0) == 0);
    CHECK(examples[0].topics ==
          "Index-fund investing, Dollar-cost averaging, Investment horizon planning");
    REQUIRE(examples[0].queries.size() == 3);
    CHECK(examples[0].queries[0] ==
          "How does dollar cost averaging help with index fund investing during market dips?");
}

TEST_CASE("full prompt reproduces the first exemplar block byte-identically") {
    auto cfg = config_with_fewshot();
    auto prompt = build_generation_prompt("some passage", {"Topic A"}, {"kw1", "kw2"}, cfg);
    const std::string exemplar =
        "Article:\n"
        "You have a good thing going. One of the luxuries of being invested in an index fund "
        "for the long term is that you don't have to sweat the inevitable short term dips in "
        "the market. Instead, look at the opportunity that presents itself on market dips: now "
        "your monthly investment is getting in at a lower price. Buy low, sell high. Don't lose "
        "money. These are common mantras for long term investment mentality. 5-8 years is "
        "plenty of time -- I'd call it medium-term. As you get closer to your goals (2-3 years "
        "out) you should start slowly moving money out of your index fund and start dollar cost "
        "averaging out into cash or short-term bonds (but that's another question). Keep "
        "putting money in, wait, and sell high. If it's not high, wait another year or two to "
        "buy the house. A lot of people do the opposite for their entire lives: buying high, "
        "panic selling on the dips, then buying again when it goes up. That's bad! I recommend "
        "a search on dollar cost averaging, which is exactly what you are doing right now with "
        "your monthly investments.\n"
        "\n"
        "Topics:\n"
        "Index-fund investing, Dollar-cost averaging, Investment horizon planning\n"
        "\n"
        "Keywords: index fund, long-term investment, market dips, \"buy low, sell high\", "
        "\"don't lose money\", medium-term horizon (5–8 years), cash/short-term bonds, "
        "panic selling, monthly contributions, dollar cost averaging\n"
        "\n"
        "Generated Queries:\n"
        "- How does dollar cost averaging help with index fund investing during market dips?\n"
        "- When should I transition from index funds to cash or short-term bonds for "
        "medium-term goals?\n"
        "- What are the benefits of long-term investment strategy versus panic selling during "
        "market downturns?\n";
    CHECK(prompt.find(exemplar) != std::string::npos);
}

TEST_CASE("prompt fills slots verbatim") {
    auto cfg = config_with_fewshot();
    std::vector<std::string> topics = {"Topic One", "Topic Two", "Topic Three"};
    std::vector<std::string> keywords;
    for (int i = 0; i < 10; ++i) keywords.push_back("keyword" + std::to_string(i));
    auto prompt = build_generation_prompt("the passage body", topics, keywords, cfg);
    for (const auto& t : topics) CHECK(prompt.find(t) != std::string::npos);
    for (const auto& k : keywords) CHECK(prompt.find(k) != std::string::npos);
    CHECK(prompt.find("Passage: the passage body") != std::string::npos);
    CHECK(prompt.find("Topics: Topic One, Topic Two, Topic Three") != std::string::npos);
}

TEST_CASE("empty topic list uses the sentinel") {
    auto cfg = config_with_fewshot();
    auto prompt = build_generation_prompt("body", {}, {"kw"}, cfg);
    CHECK(prompt.find("Topics: general content of the passage") != std::string::npos);
}

TEST_CASE("ablation modes control the prompt slots") {
    SUBCASE("F omits topics and keywords") {
        auto cfg = config_with_fewshot(PromptMode::fewshot);
        auto prompt = build_generation_prompt("body", {"TopicX"}, {"kwX"}, cfg);
        CHECK(prompt.find("Topics:") == std::string::npos);
        CHECK(prompt.find("Keywords:") == std::string::npos);
        CHECK(prompt.find("TopicX") == std::string::npos);
        CHECK(prompt.find("kwX") == std::string::npos);
    }
    SUBCASE("F+K keeps keywords only") {
        auto cfg = config_with_fewshot(PromptMode::fewshot_keywords);
        auto prompt = build_generation_prompt("body", {"TopicX"}, {"kwX"}, cfg);
        CHECK(prompt.find("Topics:") == std::string::npos);
        CHECK(prompt.find("Keywords: kwX") != std::string::npos);
    }
    SUBCASE("full keeps both") {
        auto cfg = config_with_fewshot(PromptMode::full);
        auto prompt = build_generation_prompt("body", {"TopicX"}, {"kwX"}, cfg);
        CHECK(prompt.find("Topics: TopicX") != std::string::npos);
        CHECK(prompt.find("Keywords: kwX") != std::string::npos);
    }
}

TEST_CASE("prompt requires fewshot examples") {
    GenerationConfig cfg;  // empty fewshot
    CHECK_THROWS_AS(build_generation_prompt("body", {}, {}, cfg), std::invalid_argument);
}

TEST_CASE("parse_queries handles list shapes") {
    SUBCASE("bullet list") {
        CHECK(parse_queries("- Q1?\n- Q2?\n- Q3?", 3) ==
              std::vector<std::string>{"Q1?", "Q2?", "Q3?"});
    }
    SUBCASE("numbered partial batch") {
        CHECK(parse_queries("1. Q1?\n2. Q2?", 3) == std::vector<std::string>{"Q1?", "Q2?"});
    }
    SUBCASE("bare question lines") {
        CHECK(parse_queries("What is X?\nHow does Y work?", 3) ==
              std::vector<std::string>{"What is X?", "How does Y work?"});
    }
    SUBCASE("refusal text parses to nothing") {
        CHECK(parse_queries("I cannot help with that.", 3).empty());
    }
    SUBCASE("extra lines are capped at expected") {
        auto qs = parse_queries("- a?\n- b?\n- c?\n- d?", 3);
        CHECK(qs.size() == 3);
    }
    SUBCASE("chatter around the list is ignored") {
        auto qs = parse_queries("Sure, here are the queries:\n- What is alpha?\n- beta uses?\n",
                                3);
        CHECK(qs == std::vector<std::string>{"What is alpha?", "beta uses?"});
    }
}

TEST_CASE("generate_queries accumulates M unique queries in batches") {
    auto cfg = config_with_fewshot();
    cfg.queries_per_doc = 30;
    cfg.batch_size = 3;
    std::vector<std::string> script;
    for (int b = 0; b < 10; ++b) {
        std::string completion;
        for (int i = 0; i < 3; ++i)
            completion += "- Query number " + std::to_string(3 * b + i) + "?\n";
        script.push_back(completion);
    }
    StubChatBackend chat(script);
    auto record = generate_queries("d1", "body", {"T"}, {"k"}, cfg, chat);
    CHECK(record.queries.size() == 30);
    CHECK(record.batches_issued == 10);
    CHECK_FALSE(record.shortfall);
    // Case-insensitive pairwise distinctness.
    std::set<std::string> seen;
    for (const auto& q : record.queries) CHECK(seen.insert(util::to_lower(q)).second);
}

TEST_CASE("generate_queries drops duplicates and refills with an extra batch") {
    auto cfg = config_with_fewshot();
    cfg.queries_per_doc = 6;
    cfg.batch_size = 3;
    StubChatBackend chat({
        "- Alpha?\n- Beta?\n- Gamma?",
        "- ALPHA?\n- Delta?\n- Epsilon?",  // duplicate of Alpha (case-insensitive)
        "- Zeta?\n- Eta?\n- Theta?",
    });
    auto record = generate_queries("d1", "body", {}, {}, cfg, chat);
    CHECK(record.queries.size() == 6);
    CHECK(record.batches_issued == 3);
    CHECK(record.queries[3] == "Delta?");
}

TEST_CASE("generate_queries hits the batch cap on unparseable output") {
    auto cfg = config_with_fewshot();
    cfg.queries_per_doc = 6;
    cfg.batch_size = 3;
    const int cap = 4 * 2;
    std::vector<std::string> script(cap, "I cannot help with that.");
    StubChatBackend chat(script);
    auto record = generate_queries("d1", "body", {}, {}, cfg, chat);
    CHECK(record.queries.empty());
    CHECK(record.batches_issued == cap);
    CHECK(record.shortfall);
}

TEST_CASE("generate_queries propagates hard chat failures with partial results") {
    auto cfg = config_with_fewshot();
    cfg.queries_per_doc = 6;
    cfg.batch_size = 3;
    StubChatBackend chat({"- One?\n- Two?\n- Three?"});  // second call exhausts the script
    try {
        generate_queries("d1", "body", {}, {}, cfg, chat);
        FAIL("expected GenerationError");
    } catch (const GenerationError& e) {
        CHECK(e.partial().queries.size() == 3);
        CHECK(e.partial().batches_issued == 1);
    }
}

TEST_CASE("generate_queries is deterministic with a synthetic backend") {
    auto cfg = config_with_fewshot();
    cfg.queries_per_doc = 12;
    cfg.batch_size = 3;
    SyntheticChatBackend chat_a;
    SyntheticChatBackend chat_b;
    auto a = generate_queries("d1", "body text", {"Topic"}, {"alpha", "beta"}, cfg, chat_a);
    auto b = generate_queries("d1", "body text", {"Topic"}, {"alpha", "beta"}, cfg, chat_b);
    CHECK(a.queries == b.queries);
    CHECK(a.batches_issued == b.batches_issued);
}

TEST_CASE("prompt mode names round-trip") {
    CHECK(prompt_mode_from_string("F") == PromptMode::fewshot);
    CHECK(prompt_mode_from_string("F+K") == PromptMode::fewshot_keywords);
    CHECK(prompt_mode_from_string("full") == PromptMode::full);
    CHECK_THROWS_AS(prompt_mode_from_string("bogus"), std::invalid_argument);
}
