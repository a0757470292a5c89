#include "dexp/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <stdexcept>

#include "dexp/util.hpp"

namespace dexp {

using nlohmann::json;

namespace {

BackendConfig::Kind kind_from_string(const std::string& kind) {
    if (kind == "http") return BackendConfig::Kind::http;
    if (kind == "stub") return BackendConfig::Kind::stub;
    throw std::runtime_error("config: backend kind must be \"http\" or \"stub\", got \"" + kind +
                             "\"");
}

BackendConfig parse_backend(const json& j, const BackendConfig& defaults) {
    BackendConfig cfg = defaults;
    if (j.contains("kind")) cfg.kind = kind_from_string(j.at("kind").get<std::string>());
    cfg.endpoint = j.value("endpoint", cfg.endpoint);
    cfg.model_name = j.value("model", cfg.model_name);
    cfg.dimension = j.value("dimension", cfg.dimension);
    if (j.contains("timeout_ms")) cfg.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<long>());
    cfg.max_retries = j.value("max_retries", cfg.max_retries);
    if (j.contains("initial_backoff_ms"))
        cfg.initial_backoff = std::chrono::milliseconds(j.at("initial_backoff_ms").get<long>());
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    cfg.max_batch = j.value("max_batch", cfg.max_batch);
    cfg.normalize = j.value("normalize", cfg.normalize);
    return cfg;
}

void apply_env_overrides(PipelineConfig& cfg) {
    if (const char* v = std::getenv("DEXP_EMBED_ENDPOINT")) cfg.embedding.endpoint = v;
    if (const char* v = std::getenv("DEXP_EMBED_MODEL")) cfg.embedding.model_name = v;
    if (const char* v = std::getenv("DEXP_CHAT_ENDPOINT")) cfg.chat.endpoint = v;
    if (const char* v = std::getenv("DEXP_CHAT_MODEL")) cfg.chat.model_name = v;
}

// `--set a.b.c=value`: value parsed as JSON when possible, else as a string.
void apply_override(json& root, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::runtime_error("config: --set expects key.path=value, got \"" + assignment +
                                 "\"");
    std::string path = assignment.substr(0, eq);
    std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &root;
    size_t start = 0;
    for (;;) {
        size_t dotpos = path.find('.', start);
        std::string key = path.substr(start, dotpos == std::string::npos ? std::string::npos
                                                                         : dotpos - start);
        if (key.empty()) throw std::runtime_error("config: empty key in --set path: " + path);
        if (dotpos == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dotpos + 1;
    }
}

void validate(const PipelineConfig& cfg) {
    auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
    if (cfg.embedding.dimension <= 0) fail("embedding.dimension must be > 0");
    if (cfg.embedding.kind == BackendConfig::Kind::http && cfg.embedding.endpoint.empty())
        fail("embedding http backend requires an endpoint");
    if (cfg.chat.kind == BackendConfig::Kind::http && cfg.chat.endpoint.empty())
        fail("chat http backend requires an endpoint");
    if (cfg.topics.min_cluster_size < 1) fail("topics.min_cluster_size must be >= 1");
    if (cfg.keywords_per_topic < 1) fail("topics.keywords_per_topic must be >= 1");
    if (cfg.representatives_per_topic < 1) fail("topics.representatives must be >= 1");
    if (cfg.keyword_lambda < 0.0 || cfg.keyword_lambda > 1.0)
        fail("keywords.lambda must be in [0, 1]");
    if (cfg.keyword_top_n < 1) fail("keywords.top_n must be >= 1");
    if (cfg.keyword_target < 1) fail("keywords.target must be >= 1");
    if (cfg.generation.batch_size < 1) fail("generation.batch_size must be >= 1");
    if (cfg.generation.queries_per_doc < cfg.generation.batch_size)
        fail("generation.queries_per_doc must be >= generation.batch_size");
    if (cfg.generation.temperature < 0.0) fail("generation.temperature must be >= 0");
    if (cfg.bm25.k1 < 0.0) fail("bm25.k1 must be >= 0");
    if (cfg.bm25.b < 0.0 || cfg.bm25.b > 1.0) fail("bm25.b must be in [0, 1]");
    if (cfg.fusion.alpha < 0.0 || cfg.fusion.alpha > 1.0) fail("fusion.alpha must be in [0, 1]");
    if (cfg.fusion.n_t < 1 || cfg.fusion.n_q < 1) fail("fusion.n_t and fusion.n_q must be >= 1");
    if (cfg.search_depth < 1 || cfg.search_depth > 1000)
        fail("search.depth must be in [1, 1000]");
    if (cfg.workers < 1) fail("workers must be >= 1");
}

}  // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides) {
    json root;
    try {
        root = json::parse(util::read_file(path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    for (const auto& assignment : overrides) apply_override(root, assignment);

    PipelineConfig cfg;
    if (root.contains("data")) {
        const auto& data = root.at("data");
        if (data.contains("corpus")) cfg.corpus_path = data.at("corpus").get<std::string>();
        if (data.contains("queries")) cfg.queries_path = data.at("queries").get<std::string>();
        if (data.contains("qrels")) cfg.qrels_path = data.at("qrels").get<std::string>();
        if (data.contains("fewshot")) cfg.fewshot_path = data.at("fewshot").get<std::string>();
    }
    if (root.contains("output_dir")) cfg.output_dir = root.at("output_dir").get<std::string>();
    cfg.include_title = root.value("include_title", cfg.include_title);

    BackendConfig embed_defaults;
    embed_defaults.model_name = "stub-embed";
    cfg.embedding = root.contains("embedding") ? parse_backend(root.at("embedding"), embed_defaults)
                                               : embed_defaults;
    BackendConfig chat_defaults;
    chat_defaults.model_name = "stub-chat";
    cfg.chat = root.contains("chat") ? parse_backend(root.at("chat"), chat_defaults)
                                     : chat_defaults;

    if (root.contains("topics")) {
        const auto& t = root.at("topics");
        cfg.topics.min_cluster_size = t.value("min_cluster_size", cfg.topics.min_cluster_size);
        cfg.topics.seed = t.value("seed", cfg.topics.seed);
        cfg.topics.max_k = t.value("max_k", cfg.topics.max_k);
        cfg.topics.normalize = t.value("normalize", cfg.topics.normalize);
        cfg.topics.restarts = t.value("restarts", cfg.topics.restarts);
        cfg.topics.max_iterations = t.value("max_iterations", cfg.topics.max_iterations);
        cfg.topics.silhouette_sample = t.value("silhouette_sample", cfg.topics.silhouette_sample);
        cfg.keywords_per_topic = t.value("keywords_per_topic", cfg.keywords_per_topic);
        cfg.representatives_per_topic = t.value("representatives", cfg.representatives_per_topic);
        cfg.refine_retries = t.value("refine_retries", cfg.refine_retries);
    }
    if (root.contains("keywords")) {
        const auto& k = root.at("keywords");
        cfg.keyword_top_n = k.value("top_n", cfg.keyword_top_n);
        cfg.keyword_lambda = k.value("lambda", cfg.keyword_lambda);
        cfg.keyword_target = k.value("target", cfg.keyword_target);
    }
    if (root.contains("generation")) {
        const auto& g = root.at("generation");
        cfg.generation.queries_per_doc = g.value("queries_per_doc", cfg.generation.queries_per_doc);
        cfg.generation.batch_size = g.value("batch_size", cfg.generation.batch_size);
        cfg.generation.temperature = g.value("temperature", cfg.generation.temperature);
        cfg.generation.max_parse_retries =
            g.value("max_parse_retries", cfg.generation.max_parse_retries);
        cfg.generation.max_tokens = g.value("max_tokens", cfg.generation.max_tokens);
        if (g.contains("mode"))
            cfg.generation.mode = prompt_mode_from_string(g.at("mode").get<std::string>());
    }
    if (root.contains("bm25")) {
        const auto& b = root.at("bm25");
        cfg.bm25.k1 = b.value("k1", cfg.bm25.k1);
        cfg.bm25.b = b.value("b", cfg.bm25.b);
        cfg.stem = b.value("stem", cfg.stem);
    }
    if (root.contains("fusion")) {
        const auto& f = root.at("fusion");
        cfg.fusion.alpha = f.value("alpha", cfg.fusion.alpha);
        cfg.fusion.n_t = f.value("n_t", cfg.fusion.n_t);
        cfg.fusion.n_q = f.value("n_q", cfg.fusion.n_q);
        if (f.contains("similarity"))
            cfg.fusion.similarity =
                similarity_from_string(f.at("similarity").get<std::string>());
    }
    if (root.contains("search")) {
        const auto& s = root.at("search");
        cfg.search_depth = s.value("depth", cfg.search_depth);
        cfg.run_tag = s.value("tag", cfg.run_tag);
    }
    cfg.workers = root.value("workers", cfg.workers);

    apply_env_overrides(cfg);
    validate(cfg);
    return cfg;
}

}  // namespace dexp
