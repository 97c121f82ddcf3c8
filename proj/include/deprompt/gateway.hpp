#pragma once

// Uniform access to language-model capabilities: chat completion, embeddings
// and token log-probabilities. Two backends share one interface — a remote
// chat-completion-style endpoint behind an injectable transport, and a
// deterministic offline stub so the whole pipeline runs with no network.

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "deprompt/core.hpp"
#include "deprompt/errors.hpp"
#include "deprompt/rng.hpp"
#include "deprompt/utf8.hpp"

namespace deprompt {

enum class ChatRole { System, User, Assistant };

inline std::string to_string(ChatRole r) {
    switch (r) {
        case ChatRole::System: return "system";
        case ChatRole::User: return "user";
        case ChatRole::Assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    ChatRole role = ChatRole::User;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<uint64_t> seed;
    std::optional<size_t> max_tokens;
};

struct EmbeddingVector {
    std::vector<double> values;

    size_t dim() const { return values.size(); }
    double norm() const {
        double s = 0.0;
        for (double v : values) s += v * v;
        return std::sqrt(s);
    }
    bool zero() const {
        for (double v : values)
            if (v != 0.0) return false;
        return true;
    }
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0; // log base 2, always <= 0
};

struct TokenLogprobs {
    std::vector<TokenLogprob> tokens;
};

enum class GatewayBackend { Remote, Stub };

struct GatewayConfig {
    std::string endpoint = "http://localhost:8080/v1";
    std::string auth_env = "DEPROMPT_API_TOKEN"; // name of the env var, never the token
    int timeout_ms = 30000;
    int max_in_flight = 4;
    int max_retries = 2;
    double backoff_base_ms = 100.0;
    GatewayBackend backend = GatewayBackend::Stub;
    std::string model = "gpt-3.5-turbo";
    std::string stub_corpus_path; // empty: compiled-in corpus

    void validate() const {
        if (timeout_ms <= 0) throw ConfigError("gateway.timeout_ms must be > 0");
        if (max_in_flight < 1) throw ConfigError("gateway.max_in_flight must be >= 1");
        if (max_retries < 0) throw ConfigError("gateway.max_retries must be >= 0");
    }
};

class ModelGateway {
public:
    virtual ~ModelGateway() = default;
    virtual std::string chat_complete(const ChatRequest& req) = 0;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual TokenLogprobs token_logprobs(const std::string& text) = 0;
};

// ---------------------------------------------------------------------------
// Stub backend building blocks

namespace stub {

inline constexpr size_t kEmbeddingDim = 64;

inline const std::vector<std::string>& name_table() {
    static const std::vector<std::string> t = {
        "Morgan", "Riley",  "Avery",   "Jordan", "Casey",  "Quinn",
        "Reese",  "Rowan",  "Skyler",  "Taylor", "Parker", "Hayden",
        "Emerson", "Finley", "Dakota", "Marlowe"};
    return t;
}

inline const std::vector<std::string>& health_table() {
    static const std::vector<std::string> t = {
        "seasonal rhinitis", "mild bronchitis", "tension headache",
        "iron deficiency",   "hay fever",       "sleep apnea",
        "acid reflux",       "shoulder strain", "sinusitis",
        "eczema",            "vertigo",         "gastritis"};
    return t;
}

inline const std::vector<std::string>& medical_table() {
    static const std::vector<std::string> t = {
        "saline infusion",  "observation stay", "routine bloodwork",
        "compression wrap", "outpatient review", "topical ointment",
        "rest regimen",     "follow-up checkup", "stretching routine",
        "vitamin course"};
    return t;
}

/// Shape-preserving value. When the input carries digits, only the digits are
/// redrawn ("account 881234" keeps its word, an 18-digit code stays 18
/// digits); otherwise ASCII letters are redrawn case-preserving. Guaranteed
/// to differ from the input.
inline std::string reshape_value(std::string_view original, uint64_t seed) {
    bool has_digit = false;
    for (char c : original)
        if (c >= '0' && c <= '9') has_digit = true;

    Rng rng(derive_seed(seed, original));
    std::string out;
    out.reserve(original.size());
    for (char c : original) {
        if (c >= '0' && c <= '9')
            out.push_back(static_cast<char>('0' + rng.bounded(10)));
        else if (!has_digit && c >= 'a' && c <= 'z')
            out.push_back(static_cast<char>('a' + rng.bounded(26)));
        else if (!has_digit && c >= 'A' && c <= 'Z')
            out.push_back(static_cast<char>('A' + rng.bounded(26)));
        else
            out.push_back(c);
    }
    if (out == original) {
        for (char& c : out) {
            if (c >= '0' && c <= '9') {
                c = static_cast<char>('0' + (c - '0' + 1) % 10);
                break;
            }
            if (c >= 'a' && c <= 'z') {
                c = static_cast<char>('a' + (c - 'a' + 1) % 26);
                break;
            }
            if (c >= 'A' && c <= 'Z') {
                c = static_cast<char>('A' + (c - 'A' + 1) % 26);
                break;
            }
        }
    }
    if (out == original) out += "x"; // all-punctuation input
    return out;
}

/// Deterministic same-category replacement used by the stub chat backend and
/// as the local fallback when a remote model echoes the original.
inline std::string surrogate_value(std::string_view surface, PiiCategory category,
                                   uint64_t seed) {
    auto pick = [&](const std::vector<std::string>& table) {
        size_t idx = static_cast<size_t>(
            derive_seed(seed, fnv1a64(surface, fnv1a64(to_string(category)))) % table.size());
        if (utf8::ascii_lower_copy(table[idx]) == utf8::ascii_lower_copy(surface))
            idx = (idx + 1) % table.size();
        return table[idx];
    };
    switch (category) {
        case PiiCategory::PERSON: return pick(name_table());
        case PiiCategory::HEALTH: return pick(health_table());
        case PiiCategory::MEDICAL: return pick(medical_table());
        default: return reshape_value(surface, seed);
    }
}

/// Fixed instruction shape for surrogate requests; the stub recognizes it and
/// remote models can follow it directly.
inline std::string surrogate_instruction(std::string_view surface, PiiCategory category) {
    return "Replace the value \"" + std::string(surface) + "\" (category " +
           to_string(category) +
           ") with a different plausible value of the same category and a similar "
           "shape. Reply with only the replacement value.";
}

struct SurrogateProbe {
    std::string surface;
    PiiCategory category = PiiCategory::PERSON;
};

inline std::optional<SurrogateProbe> parse_surrogate_instruction(std::string_view content) {
    static const std::string prefix = "Replace the value \"";
    static const std::string marker = "\" (category ";
    size_t p = content.find(prefix);
    if (p == std::string_view::npos) return std::nullopt;
    size_t vstart = p + prefix.size();
    size_t m = content.find(marker, vstart);
    if (m == std::string_view::npos) return std::nullopt;
    size_t cstart = m + marker.size();
    size_t cend = content.find(')', cstart);
    if (cend == std::string_view::npos) return std::nullopt;
    auto cat = category_from_string(content.substr(cstart, cend - cstart));
    if (!cat) return std::nullopt;
    return SurrogateProbe{std::string(content.substr(vstart, m - vstart)), *cat};
}

/// Add-one-smoothed unigram model over a reference corpus; log base 2.
/// Tokens partition the input exactly (word runs and non-word runs), so the
/// concatenation of tokens reconstructs the original text.
class UnigramModel {
public:
    explicit UnigramModel(std::string_view corpus) {
        for (auto& [raw, folded] : partition(corpus)) {
            (void)raw;
            ++counts_[folded];
            ++total_;
        }
        vocab_ = counts_.size();
    }

    static std::vector<std::pair<std::string, std::string>> partition(std::string_view text) {
        std::vector<std::pair<std::string, std::string>> out;
        std::u32string cps = utf8::decode(text);
        size_t i = 0;
        while (i < cps.size()) {
            bool word = utf8::is_word_char(cps[i]);
            std::string raw, folded;
            while (i < cps.size() && utf8::is_word_char(cps[i]) == word) {
                utf8::append(raw, cps[i]);
                utf8::append(folded, utf8::ascii_lower(cps[i]));
                ++i;
            }
            out.emplace_back(std::move(raw), std::move(folded));
        }
        return out;
    }

    double probability(std::string_view folded_token) const {
        auto it = counts_.find(std::string(folded_token));
        uint64_t c = it == counts_.end() ? 0 : it->second;
        return static_cast<double>(c + 1) / static_cast<double>(total_ + vocab_);
    }

    double logprob2(std::string_view folded_token) const {
        return std::log2(probability(folded_token));
    }

    uint64_t total_tokens() const { return total_; }
    size_t vocab_size() const { return vocab_; }

private:
    std::unordered_map<std::string, uint64_t> counts_;
    uint64_t total_ = 0;
    size_t vocab_ = 0;
};

/// Feature-hashed unigram+bigram count embedding, L2-normalized, d=64.
/// Word tokens are lowercased with default-ignorable characters removed, so
/// the stub "reads through" adversarial zero-width perturbation the way a
/// large model would.
inline EmbeddingVector hashed_embedding(std::string_view text) {
    EmbeddingVector v;
    v.values.assign(kEmbeddingDim, 0.0);
    std::vector<std::string> toks = utf8::word_token_texts(text);
    for (size_t i = 0; i < toks.size(); ++i) {
        v.values[fnv1a64("u:" + toks[i]) % kEmbeddingDim] += 1.0;
        if (i + 1 < toks.size())
            v.values[fnv1a64("b:" + toks[i] + "\x1f" + toks[i + 1]) % kEmbeddingDim] += 1.0;
    }
    double n = v.norm();
    if (n > 0.0)
        for (double& x : v.values) x /= n;
    return v;
}

/// Canned deterministic "inference": restates the content words of the last
/// user message after stripping format characters. Similar prompts produce
/// similar responses, which is all the utility metrics need.
inline std::string canned_inference(std::string_view content) {
    std::vector<std::string> toks = utf8::word_token_texts(content);
    std::string out = "Assessment:";
    if (toks.empty()) return out + " no details provided.";
    for (const std::string& t : toks) {
        out += ' ';
        out += t;
    }
    out += '.';
    return out;
}

inline std::string_view builtin_corpus();

} // namespace stub

// ---------------------------------------------------------------------------
// Stub gateway

class StubGateway final : public ModelGateway {
public:
    explicit StubGateway(std::string_view corpus = {})
        : model_(corpus.empty() ? stub::builtin_corpus() : corpus) {}

    std::string chat_complete(const ChatRequest& req) override {
        if (req.messages.empty()) throw GatewayError(GatewayError::Kind::Malformed,
                                                     "chat request has no messages");
        const std::string& content = req.messages.back().content;
        if (auto probe = stub::parse_surrogate_instruction(content))
            return stub::surrogate_value(probe->surface, probe->category,
                                         req.seed.value_or(0));
        return stub::canned_inference(content);
    }

    EmbeddingVector embed(const std::string& text) override {
        return stub::hashed_embedding(text);
    }

    TokenLogprobs token_logprobs(const std::string& text) override {
        TokenLogprobs out;
        for (auto& [raw, folded] : stub::UnigramModel::partition(text))
            out.tokens.push_back({raw, model_.logprob2(folded)});
        return out;
    }

    const stub::UnigramModel& unigram_model() const { return model_; }

private:
    stub::UnigramModel model_;
};

// ---------------------------------------------------------------------------
// Remote backend: chat-completion wire shape over an injectable transport

struct HttpResponse {
    int status = 0;
    std::string body;
    bool transport_error = false;
    std::string error;
};

struct HttpHeader {
    std::string name;
    std::string value;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& path, const std::string& body,
                              const std::vector<HttpHeader>& headers, int timeout_ms) = 0;
};

/// Counts concurrent users; the gateway never exceeds max_in_flight requests.
class InFlightLimiter {
public:
    explicit InFlightLimiter(int limit) : limit_(limit) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return active_ < limit_; });
        ++active_;
    }
    void release() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            --active_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int limit_;
    int active_ = 0;
};

class RemoteGateway final : public ModelGateway {
public:
    RemoteGateway(GatewayConfig cfg, std::shared_ptr<HttpTransport> transport)
        : cfg_(std::move(cfg)), transport_(std::move(transport)),
          limiter_(cfg_.max_in_flight) {
        cfg_.validate();
    }

    std::string chat_complete(const ChatRequest& req) override {
        if (req.messages.empty()) throw GatewayError(GatewayError::Kind::Malformed,
                                                     "chat request has no messages");
        json body{{"model", req.model.empty() ? cfg_.model : req.model},
                  {"temperature", req.temperature}};
        json msgs = json::array();
        for (const ChatMessage& m : req.messages)
            msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
        body["messages"] = msgs;
        if (req.seed) body["seed"] = *req.seed;
        if (req.max_tokens) body["max_tokens"] = *req.max_tokens;

        json reply = post_json("/chat/completions", body);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw GatewayError(GatewayError::Kind::Malformed,
                               "chat response missing choices[0].message.content");
        }
    }

    EmbeddingVector embed(const std::string& text) override {
        json body{{"model", cfg_.model}, {"input", text}};
        json reply = post_json("/embeddings", body);
        EmbeddingVector v;
        try {
            for (const auto& x : reply.at("data").at(0).at("embedding"))
                v.values.push_back(x.get<double>());
        } catch (const json::exception&) {
            throw GatewayError(GatewayError::Kind::Malformed,
                               "embedding response missing data[0].embedding");
        }
        if (v.values.empty())
            throw GatewayError(GatewayError::Kind::Malformed, "empty embedding");
        return v;
    }

    TokenLogprobs token_logprobs(const std::string& text) override {
        json body{{"model", cfg_.model}, {"prompt", text}, {"logprobs", true},
                  {"echo", true}, {"max_tokens", 0}};
        json reply = post_json("/completions", body);
        TokenLogprobs out;
        try {
            const json& lp = reply.at("choices").at(0).at("logprobs");
            const json& toks = lp.at("tokens");
            const json& vals = lp.at("token_logprobs");
            for (size_t i = 0; i < toks.size() && i < vals.size(); ++i)
                out.tokens.push_back({toks[i].get<std::string>(),
                                      vals[i].is_null() ? 0.0 : vals[i].get<double>()});
        } catch (const json::exception&) {
            throw GatewayError(GatewayError::Kind::Malformed,
                               "completion response missing logprobs");
        }
        return out;
    }

private:
    json post_json(const std::string& path, const json& body) {
        const char* token = std::getenv(cfg_.auth_env.c_str());
        if (token == nullptr || *token == '\0')
            throw GatewayError(GatewayError::Kind::Auth,
                               "auth token env var " + cfg_.auth_env + " is not set");
        std::vector<HttpHeader> headers{{"Authorization", std::string("Bearer ") + token},
                                        {"Content-Type", "application/json"}};
        std::string payload = body.dump();

        for (int attempt = 0;; ++attempt) {
            limiter_.acquire();
            HttpResponse resp;
            try {
                resp = transport_->post(path, payload, headers, cfg_.timeout_ms);
            } catch (...) {
                limiter_.release();
                throw;
            }
            limiter_.release();

            GatewayError::Kind kind;
            if (resp.transport_error) {
                kind = GatewayError::Kind::Timeout;
            } else if (resp.status == 200) {
                try {
                    return json::parse(resp.body);
                } catch (const json::exception& e) {
                    throw GatewayError(GatewayError::Kind::Malformed,
                                       std::string("invalid response JSON: ") + e.what());
                }
            } else if (resp.status == 401 || resp.status == 403) {
                kind = GatewayError::Kind::Auth;
            } else if (resp.status == 429) {
                kind = GatewayError::Kind::RateLimited;
            } else {
                kind = GatewayError::Kind::Malformed;
            }

            bool retryable = kind == GatewayError::Kind::Timeout ||
                             kind == GatewayError::Kind::RateLimited;
            if (!retryable || attempt >= cfg_.max_retries)
                throw GatewayError(kind, "gateway request failed (" + path + "): " +
                                             (resp.transport_error
                                                  ? resp.error
                                                  : "HTTP " + std::to_string(resp.status)));
            double delay = cfg_.backoff_base_ms * static_cast<double>(1ULL << attempt);
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long>(delay)));
        }
    }

    GatewayConfig cfg_;
    std::shared_ptr<HttpTransport> transport_;
    InFlightLimiter limiter_;
};

// ---------------------------------------------------------------------------

namespace stub {

inline std::string_view builtin_corpus() {
    // Reference text for the add-one unigram model: generic prose plus the
    // domain vocabulary the fixtures and canned inferences draw from.
    static const std::string corpus = R"(The patient asked the doctor about treatment options and the doctor explained
the diagnosis in plain language. A treatment plan usually includes medication,
rest, and a follow-up visit at the clinic. Common symptoms such as fever,
fatigue, chest pain, and headache should be recorded with care. Conditions
like diabetes, hypertension, asthma, anemia, arthritis, and migraine require
regular checks. Medication such as metformin, insulin, and antibiotics must be
taken as prescribed after surgery or therapy.

Everyday plans include travel, a birthday party, a family dinner, and a
weekend trip with friends. People write email messages, schedule meetings,
share recipes, recommend movies and restaurants, and plan gifts for friends.
The weather forecast helps to plan a trip or a walk in the park.

A bank account statement lists every transfer, payment, deposit, and balance.
An invoice or insurance claim should match the transaction records. Customers
ask about a loan, an investment fund, interest rates, and the branch office.
Payment by card is confirmed with a receipt, and the account number appears on
the statement. Please review the balance and report any transfer you do not
recognize to the bank.

An assessment of a question restates the important details and then offers
guidance. Here is a summary of the request with the key words kept in order.
The name, the identification number, and the contact address are details that
belong to a person. A person may ask for help with health, money, or daily
plans, and a clear answer improves the result. This reference text provides
word statistics for the readability model, so it mixes medical, daily, and
financial vocabulary with ordinary function words used in questions and
answers. What should I consider, and which option helps with my plan?
)";
    return corpus;
}

} // namespace stub

/// Builds the configured backend. The transport argument is only consulted
/// for the remote backend; stub construction never touches it, which is what
/// keeps stub runs network-free.
inline std::unique_ptr<ModelGateway> make_gateway(
    const GatewayConfig& cfg,
    const std::function<std::shared_ptr<HttpTransport>(const GatewayConfig&)>& transport_factory,
    std::string_view stub_corpus = {}) {
    cfg.validate();
    if (cfg.backend == GatewayBackend::Stub)
        return std::make_unique<StubGateway>(stub_corpus);
    return std::make_unique<RemoteGateway>(cfg, transport_factory(cfg));
}

} // namespace deprompt
