#include "dexp/qgen.hpp"

#include <cctype>
#include <iostream>
#include <unordered_set>

#include "dexp/util.hpp"

namespace dexp {

namespace {

constexpr std::string_view kTopicsSentinel = "general content of the passage";

bool is_header(const std::string& line, std::string_view header) {
    return util::trim(line) == header;
}

std::string strip_query_marker(std::string_view line, bool& was_list_item) {
    std::string_view s = util::ltrim(line);
    was_list_item = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '*')) {
        was_list_item = true;
        s = util::ltrim(s.substr(1));
    } else {
        size_t i = 0;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
            was_list_item = true;
            s = util::ltrim(s.substr(i + 1));
        }
    }
    return std::string(util::rtrim(s));
}

}  // namespace

std::vector<FewshotExample> load_fewshot_examples(const std::filesystem::path& path) {
    auto lines = util::split_lines(util::read_file(path));
    std::vector<FewshotExample> examples;
    FewshotExample current;
    enum class Section { none, article, topics, keywords, queries } section = Section::none;
    bool any_content = false;

    auto flush = [&] {
        if (!any_content) return;
        if (util::trim(current.article).empty())
            throw std::runtime_error("fewshot file " + path.string() +
                                     ": example missing Article section");
        if (current.queries.empty())
            throw std::runtime_error("fewshot file " + path.string() +
                                     ": example missing Queries section");
        current.article = util::trim(current.article);
        examples.push_back(std::move(current));
        current = FewshotExample{};
        section = Section::none;
        any_content = false;
    };

    for (const auto& line : lines) {
        if (util::trim(line) == "---") {
            flush();
            continue;
        }
        if (is_header(line, "Article:")) {
            section = Section::article;
            any_content = true;
            continue;
        }
        if (is_header(line, "Topics:")) {
            section = Section::topics;
            continue;
        }
        if (is_header(line, "Keywords:")) {
            section = Section::keywords;
            continue;
        }
        if (is_header(line, "Queries:")) {
            section = Section::queries;
            continue;
        }
        switch (section) {
            case Section::article:
                if (!current.article.empty()) current.article += '\n';
                current.article += line;
                break;
            case Section::topics:
                if (!util::trim(line).empty()) current.topics = util::trim(line);
                break;
            case Section::keywords:
                if (!util::trim(line).empty()) current.keywords = util::trim(line);
                break;
            case Section::queries: {
                bool list_item = false;
                std::string q = strip_query_marker(line, list_item);
                if (!q.empty()) current.queries.push_back(std::move(q));
                break;
            }
            case Section::none:
                break;
        }
    }
    flush();
    if (examples.empty())
        throw std::runtime_error("fewshot file " + path.string() + ": no examples found");
    return examples;
}

PromptMode prompt_mode_from_string(std::string_view name) {
    if (name == "F" || name == "fewshot") return PromptMode::fewshot;
    if (name == "F+K" || name == "fewshot_keywords") return PromptMode::fewshot_keywords;
    if (name == "full") return PromptMode::full;
    throw std::invalid_argument("unknown prompt mode: " + std::string(name));
}

std::string_view to_string(PromptMode mode) {
    switch (mode) {
        case PromptMode::fewshot: return "F";
        case PromptMode::fewshot_keywords: return "F+K";
        case PromptMode::full: return "full";
    }
    return "?";
}

std::string build_generation_prompt(const std::string& body,
                                    const std::vector<std::string>& topic_names,
                                    const std::vector<std::string>& keywords,
                                    const GenerationConfig& config) {
    if (config.fewshot.empty())
        throw std::invalid_argument("build_generation_prompt: fewshot examples required");
    const bool with_topics = config.mode == PromptMode::full;
    const bool with_keywords = config.mode != PromptMode::fewshot;

    std::string prompt = "You are an expert assistant in crafting search queries for a given "
                         "passage";
    if (with_topics)
        prompt += " that cover specified topics and make use of given keywords";
    else if (with_keywords)
        prompt += " that make use of given keywords";
    prompt += ". The following are some examples:\n\n";

    int n = 0;
    for (const auto& ex : config.fewshot) {
        ++n;
        prompt += "Example " + std::to_string(n) + "\n\n";
        prompt += "Article:\n" + ex.article + "\n\n";
        if (with_topics) prompt += "Topics:\n" + ex.topics + "\n\n";
        if (with_keywords) prompt += "Keywords: " + ex.keywords + "\n\n";
        prompt += "Generated Queries:\n";
        for (const auto& q : ex.queries) prompt += "- " + q + "\n";
        prompt += "\n";
    }

    prompt += "Your Task:\n\n";
    prompt += "Now generate " + std::to_string(config.batch_size) +
              " relevant queries for this passage";
    if (with_topics)
        prompt += " that collectively cover specified topics by using given keywords";
    else if (with_keywords)
        prompt += " by using given keywords";
    prompt += ":\n\n";
    prompt += "Passage: " + body + "\n";
    if (with_topics) {
        std::string topics = topic_names.empty() ? std::string(kTopicsSentinel)
                                                 : util::join(topic_names, ", ");
        prompt += "\nTopics: " + topics + "\n";
    }
    if (with_keywords) prompt += "\nKeywords: " + util::join(keywords, ", ") + "\n";
    prompt += "\nQueries:";
    return prompt;
}

std::vector<std::string> parse_queries(const std::string& completion, int expected) {
    std::vector<std::string> queries;
    for (const auto& line : util::split_lines(completion)) {
        if (static_cast<int>(queries.size()) >= expected) break;
        if (util::trim(line).empty()) continue;
        bool list_item = false;
        std::string q = strip_query_marker(line, list_item);
        if (q.empty()) continue;
        if (list_item || q.back() == '?') queries.push_back(std::move(q));
    }
    return queries;
}

GenerationRecord generate_queries(const std::string& doc_id, const std::string& body,
                                  const std::vector<std::string>& topic_names,
                                  const std::vector<std::string>& keywords,
                                  const GenerationConfig& config, ChatBackend& chat) {
    if (config.queries_per_doc < 1 || config.batch_size < 1 ||
        config.queries_per_doc < config.batch_size)
        throw std::invalid_argument("generate_queries: require M >= b >= 1");

    GenerationRecord record;
    record.doc_id = doc_id;
    record.topics_used = topic_names;
    record.keywords_used = keywords;

    ChatRequest request;
    request.prompt = build_generation_prompt(body, topic_names, keywords, config);
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;

    const int m = config.queries_per_doc;
    const int b = config.batch_size;
    const int cap = 4 * ((m + b - 1) / b);
    std::unordered_set<std::string> seen;

    while (static_cast<int>(record.queries.size()) < m && record.batches_issued < cap) {
        std::string completion;
        try {
            completion = chat.chat(request);
        } catch (const std::exception& e) {
            record.shortfall = true;
            throw GenerationError("generate_queries: chat backend failed for \"" + doc_id +
                                      "\": " + e.what(),
                                  record);
        }
        ++record.batches_issued;
        auto parsed = parse_queries(completion, b);
        for (auto& q : parsed) {
            if (static_cast<int>(record.queries.size()) >= m) break;
            std::string trimmed = util::trim(q);
            if (trimmed.empty()) continue;
            if (seen.insert(util::to_lower(trimmed)).second)
                record.queries.push_back(std::move(trimmed));
        }
    }
    if (static_cast<int>(record.queries.size()) < m) {
        record.shortfall = true;
        std::cerr << "warning: generate_queries: \"" << doc_id << "\" reached the batch cap with "
                  << record.queries.size() << "/" << m << " queries\n";
    }
    return record;
}

}  // namespace dexp
