#include "dexp/gateway.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <condition_variable>
#include <stdexcept>
#include <thread>

#include "dexp/util.hpp"

namespace dexp {

using nlohmann::json;

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension())
        throw std::invalid_argument("dot: dimension mismatch (" + std::to_string(a.dimension()) +
                                    " vs " + std::to_string(b.dimension()) + ")");
    double acc = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i)
        acc += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
    return acc;
}

double l2_norm(const EmbeddingVector& v) {
    double acc = 0.0;
    for (float x : v.values) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

double l2_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension())
        throw std::invalid_argument("l2_distance: dimension mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    double na = l2_norm(a);
    double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    // Rounding can push the quotient a hair past +-1; keep it in range.
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

void l2_normalize(EmbeddingVector& v) {
    double norm = l2_norm(v);
    if (norm < 1e-12) {
        if (!v.values.empty()) v.values[0] = 1.0f;
        v.normalized = true;
        return;
    }
    for (float& x : v.values) x = static_cast<float>(static_cast<double>(x) / norm);
    v.normalized = true;
}

EmbeddingVector EmbeddingBackend::embed(const std::string& text) {
    auto out = embed_batch({text});
    return std::move(out.front());
}

EmbeddingVector stub_embedding_of(std::string_view text, int dimension) {
    if (dimension <= 0) throw std::invalid_argument("stub_embedding_of: dimension must be > 0");
    util::SplitMix64 rng(util::fnv1a64(text));
    EmbeddingVector v;
    v.values.resize(static_cast<size_t>(dimension));
    std::vector<double> raw(static_cast<size_t>(dimension));
    double norm_sq = 0.0;
    for (double& x : raw) {
        x = 2.0 * rng.next_double() - 1.0;
        norm_sq += x * x;
    }
    double norm = std::sqrt(norm_sq);
    if (norm < 1e-12) {
        raw[0] = 1.0;
        norm = 1.0;
    }
    for (size_t i = 0; i < raw.size(); ++i)
        v.values[i] = static_cast<float>(raw[i] / norm);
    v.normalized = true;
    return v;
}

std::vector<EmbeddingVector> StubEmbeddingBackend::embed_batch(
    const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (size_t i = 0; i < texts.size(); ++i) {
        if (texts[i].empty())
            throw std::invalid_argument("embed_batch: empty text at index " + std::to_string(i));
        out.push_back(stub_embedding_of(texts[i], dimension_));
    }
    return out;
}

StubChatBackend::StubChatBackend(std::vector<std::string> script) {
    for (auto& s : script) script_.push_back(std::move(s));
}

void StubChatBackend::push(std::string completion) {
    std::lock_guard lock(mutex_);
    script_.push_back(std::move(completion));
}

std::string StubChatBackend::chat(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    prompts_.push_back(request.prompt);
    if (script_.empty()) throw std::runtime_error("chat stub: script exhausted");
    std::string completion = std::move(script_.front());
    script_.pop_front();
    return std::string(util::rtrim(completion));
}

std::vector<std::string> StubChatBackend::prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
}

namespace {

std::string title_case(std::string_view phrase) {
    std::string out(phrase);
    bool at_word_start = true;
    for (char& c : out) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            c = at_word_start ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                              : c;
            at_word_start = false;
        } else {
            at_word_start = true;
        }
    }
    return out;
}

std::vector<std::string> split_list(std::string_view text) {
    std::vector<std::string> items;
    size_t start = 0;
    while (start <= text.size()) {
        size_t comma = text.find(',', start);
        std::string_view piece =
            comma == std::string_view::npos ? text.substr(start) : text.substr(start, comma - start);
        std::string item = util::trim(piece);
        if (!item.empty()) items.push_back(std::move(item));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return items;
}

// Content of the last "<label> ..." line-or-paragraph in `prompt`.
std::string last_section(const std::string& prompt, std::string_view label) {
    size_t pos = prompt.rfind(label);
    if (pos == std::string::npos) return {};
    size_t start = pos + label.size();
    size_t end = prompt.find("\n\n", start);
    if (end == std::string::npos) end = prompt.size();
    return util::trim(std::string_view(prompt).substr(start, end - start));
}

int parse_requested_count(const std::string& prompt) {
    size_t pos = prompt.rfind("Now generate ");
    if (pos == std::string::npos) return 3;
    pos += std::string_view("Now generate ").size();
    int n = 0;
    while (pos < prompt.size() && std::isdigit(static_cast<unsigned char>(prompt[pos]))) {
        n = n * 10 + (prompt[pos] - '0');
        ++pos;
    }
    return n > 0 ? n : 3;
}

}  // namespace

std::string SyntheticChatBackend::chat(const ChatRequest& request) {
    const std::string& prompt = request.prompt;
    if (prompt.rfind("You will extract a short topic label", 0) == 0) {
        auto keywords = split_list(last_section(prompt, "\nKeywords:"));
        if (keywords.empty()) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%08llx",
                          static_cast<unsigned long long>(util::fnv1a64(prompt) & 0xffffffffULL));
            return "topic: General Topic " + std::string(buf);
        }
        std::vector<std::string> parts;
        for (size_t i = 0; i < keywords.size() && i < 3; ++i)
            parts.push_back(title_case(keywords[i]));
        return "topic: " + util::join(parts, " ");
    }
    if (prompt.rfind("You will receive a document along with a set of candidate keywords", 0) == 0) {
        size_t pos = prompt.rfind("Candidate keyword set:");
        std::string pool_text;
        if (pos != std::string::npos) {
            size_t start = pos + std::string_view("Candidate keyword set:").size();
            size_t end = prompt.find("Final Keywords:", start);
            if (end == std::string::npos) end = prompt.size();
            pool_text = util::trim(std::string_view(prompt).substr(start, end - start));
        }
        auto pool = split_list(pool_text);
        if (pool.size() > 10) pool.resize(10);
        return util::join(pool, ", ");
    }
    // Query-generation prompt: fabricate the requested number of distinct
    // question lines, varying across repeated calls with the same prompt.
    int batch = parse_requested_count(prompt);
    auto keywords = split_list(last_section(prompt, "\nKeywords: "));
    if (keywords.empty()) keywords = split_list(last_section(prompt, "\nTopics: "));
    int call_index = 0;
    {
        std::lock_guard lock(mutex_);
        call_index = calls_per_prompt_[util::fnv1a64(prompt)]++;
    }
    std::string out;
    for (int i = 0; i < batch; ++i) {
        int g = call_index * batch + i;
        std::string line;
        if (keywords.empty()) {
            line = "- What does this passage explain (aspect " + std::to_string(g + 1) + ")?";
        } else {
            const std::string& a = keywords[static_cast<size_t>(g) % keywords.size()];
            const std::string& b =
                keywords[(static_cast<size_t>(g) * 7 + 3) % keywords.size()];
            line = "- How does " + a + " relate to " + b + " (aspect " + std::to_string(g + 1) +
                   ")?";
        }
        out += line;
        if (i + 1 < batch) out += '\n';
    }
    return out;
}

// Bounds the number of concurrent HTTP requests per backend.
class RequestGate {
public:
    explicit RequestGate(int limit) : available_(limit > 0 ? limit : 1) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
    }

    void release() {
        {
            std::lock_guard lock(mutex_);
            ++available_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int available_;
};

namespace {

struct GateGuard {
    explicit GateGuard(RequestGate& gate) : gate_(gate) { gate_.acquire(); }
    ~GateGuard() { gate_.release(); }
    RequestGate& gate_;
};

json post_json_with_retry(const BackendConfig& cfg, RequestGate& gate, const std::string& path,
                          const json& payload, const char* what) {
    if (cfg.endpoint.empty())
        throw std::runtime_error(std::string(what) + ": http backend requires an endpoint");
    std::string body = payload.dump();
    std::string last_error;
    auto backoff = cfg.initial_backoff;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        GateGuard guard(gate);
        httplib::Client client(cfg.endpoint);
        auto seconds = std::chrono::duration_cast<std::chrono::duration<double>>(cfg.timeout);
        client.set_connection_timeout(seconds.count());
        client.set_read_timeout(seconds.count());
        client.set_write_timeout(seconds.count());
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;  // timeouts and connection failures are retryable
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw std::runtime_error(std::string(what) + ": HTTP " + std::to_string(res->status) +
                                     ": " + res->body);
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(std::string(what) + ": invalid JSON response: " + e.what());
        }
    }
    throw std::runtime_error(std::string(what) + ": backend unreachable after " +
                             std::to_string(cfg.max_retries) + " retries (" + last_error + ")");
}

}  // namespace

HttpEmbeddingBackend::HttpEmbeddingBackend(BackendConfig config)
    : config_(std::move(config)), gate_(std::make_shared<RequestGate>(config_.max_in_flight)) {
    if (config_.dimension <= 0)
        throw std::invalid_argument("embedding backend: dimension must be > 0");
}

std::vector<EmbeddingVector> HttpEmbeddingBackend::embed_one_batch(
    const std::vector<std::string>& texts) {
    json payload;
    payload["model"] = config_.model_name;
    payload["input"] = texts;
    json response = post_json_with_retry(config_, *gate_, "/v1/embeddings", payload, "embed_batch");
    if (!response.contains("data") || !response["data"].is_array() ||
        response["data"].size() != texts.size())
        throw std::runtime_error("embed_batch: response data count does not match input");
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<bool> filled(texts.size(), false);
    for (const auto& entry : response["data"]) {
        size_t index = entry.value("index", out.size());
        if (index >= out.size() || filled[index])
            throw std::runtime_error("embed_batch: bad response index");
        EmbeddingVector v;
        const auto& raw = entry.at("embedding");
        if (!raw.is_array()) throw std::runtime_error("embed_batch: embedding is not an array");
        v.values.reserve(raw.size());
        for (const auto& el : raw) {
            if (!el.is_number())
                throw std::runtime_error("embed_batch: non-finite value in response");
            double x = el.get<double>();
            if (!std::isfinite(x))
                throw std::runtime_error("embed_batch: non-finite value in response");
            v.values.push_back(static_cast<float>(x));
        }
        if (static_cast<int>(v.values.size()) != config_.dimension)
            throw std::runtime_error("embed_batch: dimension mismatch: expected " +
                                     std::to_string(config_.dimension) + ", got " +
                                     std::to_string(v.values.size()));
        if (config_.normalize) l2_normalize(v);
        out[index] = std::move(v);
        filled[index] = true;
    }
    return out;
}

std::vector<EmbeddingVector> HttpEmbeddingBackend::embed_batch(
    const std::vector<std::string>& texts) {
    for (size_t i = 0; i < texts.size(); ++i)
        if (texts[i].empty())
            throw std::invalid_argument("embed_batch: empty text at index " + std::to_string(i));
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    size_t max_batch = config_.max_batch > 0 ? static_cast<size_t>(config_.max_batch) : 64;
    for (size_t start = 0; start < texts.size(); start += max_batch) {
        size_t end = std::min(texts.size(), start + max_batch);
        std::vector<std::string> chunk(texts.begin() + static_cast<ptrdiff_t>(start),
                                       texts.begin() + static_cast<ptrdiff_t>(end));
        auto part = embed_one_batch(chunk);
        for (auto& v : part) out.push_back(std::move(v));
    }
    return out;
}

HttpChatBackend::HttpChatBackend(BackendConfig config)
    : config_(std::move(config)), gate_(std::make_shared<RequestGate>(config_.max_in_flight)) {}

std::string HttpChatBackend::chat(const ChatRequest& request) {
    if (request.prompt.empty()) throw std::invalid_argument("chat: empty prompt");
    json payload;
    payload["model"] = config_.model_name;
    payload["messages"] = json::array({json{{"role", "user"}, {"content", request.prompt}}});
    payload["temperature"] = request.temperature;
    payload["max_tokens"] = request.max_tokens;
    if (request.seed) payload["seed"] = *request.seed;
    json response =
        post_json_with_retry(config_, *gate_, "/v1/chat/completions", payload, "chat");
    std::string content;
    try {
        content = response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("chat: malformed response: ") + e.what());
    }
    std::string trimmed(util::rtrim(content));
    if (trimmed.empty()) throw std::runtime_error("chat: empty completion");
    return trimmed;
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const BackendConfig& config) {
    if (config.dimension <= 0)
        throw std::invalid_argument("embedding backend: dimension must be > 0");
    if (config.kind == BackendConfig::Kind::http)
        return std::make_unique<HttpEmbeddingBackend>(config);
    return std::make_unique<StubEmbeddingBackend>(config.dimension);
}

std::unique_ptr<ChatBackend> make_chat_backend(const BackendConfig& config) {
    if (config.kind == BackendConfig::Kind::http)
        return std::make_unique<HttpChatBackend>(config);
    return std::make_unique<SyntheticChatBackend>();
}

}  // namespace dexp
