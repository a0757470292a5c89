#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dexp {

struct EmbeddingVector {
    std::vector<float> values;
    bool normalized = false;

    size_t dimension() const { return values.size(); }
};

double dot(const EmbeddingVector& a, const EmbeddingVector& b);
double l2_norm(const EmbeddingVector& v);
double l2_distance(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);
void l2_normalize(EmbeddingVector& v);

struct ChatRequest {
    std::string prompt;
    double temperature = 0.8;
    int max_tokens = 512;
    std::optional<long> seed;
};

struct BackendConfig {
    enum class Kind { http, stub };
    Kind kind = Kind::stub;
    std::string endpoint;     // http only, e.g. "http://localhost:8080"
    std::string model_name;
    int dimension = 64;       // embedding backends
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    int max_in_flight = 8;
    int max_batch = 64;
    bool normalize = true;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;

    /// Embeds texts in input order. Oversized batches are split internally;
    /// all outputs share the backend dimension.
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) = 0;

    EmbeddingVector embed(const std::string& text);

    virtual int dimension() const = 0;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// Returns the completion with trailing whitespace trimmed; otherwise verbatim.
    virtual std::string chat(const ChatRequest& request) = 0;
};

/// Deterministic embedding of (text bytes, dimension): seeds SplitMix64 from
/// the FNV-1a hash of the text, draws `dimension` values and L2-normalizes.
/// Identical across processes and platforms.
EmbeddingVector stub_embedding_of(std::string_view text, int dimension);

class StubEmbeddingBackend : public EmbeddingBackend {
public:
    explicit StubEmbeddingBackend(int dimension) : dimension_(dimension) {}

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    int dimension() const override { return dimension_; }

private:
    int dimension_;
};

/// Scripted chat stub: returns queued completions in order and fails loudly
/// once the script runs out.
class StubChatBackend : public ChatBackend {
public:
    StubChatBackend() = default;
    explicit StubChatBackend(std::vector<std::string> script);

    void push(std::string completion);
    std::string chat(const ChatRequest& request) override;

    /// Prompts seen so far, in call order.
    std::vector<std::string> prompts() const;

private:
    mutable std::mutex mutex_;
    std::deque<std::string> script_;
    std::vector<std::string> prompts_;
};

/// Deterministic prompt-driven chat synthesizer for hermetic pipeline runs.
/// Recognizes the three prompt shapes used by the pipeline (topic naming,
/// keyword selection, query generation) and fabricates well-formed replies.
/// Repeated calls with the same prompt yield distinct query batches.
class SyntheticChatBackend : public ChatBackend {
public:
    std::string chat(const ChatRequest& request) override;

private:
    std::mutex mutex_;
    std::unordered_map<uint64_t, int> calls_per_prompt_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(BackendConfig config);
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    int dimension() const override { return config_.dimension; }

private:
    std::vector<EmbeddingVector> embed_one_batch(const std::vector<std::string>& texts);

    BackendConfig config_;
    std::shared_ptr<class RequestGate> gate_;
};

class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig config);
    std::string chat(const ChatRequest& request) override;

private:
    BackendConfig config_;
    std::shared_ptr<class RequestGate> gate_;
};

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const BackendConfig& config);
std::unique_ptr<ChatBackend> make_chat_backend(const BackendConfig& config);

}  // namespace dexp
