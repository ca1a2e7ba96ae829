#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "prc/metrics.hpp"

namespace prc {

enum class GatewayErrorCode { Auth, RateLimited, MalformedResponse, UnknownPrompt, CacheCorruption };

class GatewayError : public std::runtime_error {
public:
    GatewayError(GatewayErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    GatewayErrorCode code() const { return code_; }

private:
    GatewayErrorCode code_;
};

struct ChatRequest {
    std::string model;
    std::string system_message;
    std::vector<std::string> user_messages;
    double temperature = 1.0;
    int n_samples = 1;
    int max_tokens = 256;
    bool want_logprobs = false;
    std::optional<std::uint64_t> seed;
};

/// Canonical JSON used for cache keys; field order is fixed by nlohmann's
/// sorted object keys.
inline nlohmann::json canonical_request_json(const ChatRequest& req) {
    nlohmann::json j;
    j["model"] = req.model;
    j["system_message"] = req.system_message;
    j["user_messages"] = req.user_messages;
    j["temperature"] = req.temperature;
    j["n_samples"] = req.n_samples;
    j["max_tokens"] = req.max_tokens;
    j["want_logprobs"] = req.want_logprobs;
    j["seed"] = req.seed ? nlohmann::json(*req.seed) : nlohmann::json(nullptr);
    return j;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual std::vector<ResponseRecord> sample_responses(const ChatRequest& req) = 0;
    virtual EmbeddingMatrix embed(const std::vector<std::string>& texts) = 0;
};

/// Scripted backend: an explicit response distribution per prompt key plus
/// fixed embeddings per text. Everything is deterministic given the request
/// seed, so every pipeline is testable offline.
struct MockSpec {
    // prompt key -> response text -> probability
    std::map<std::string, std::map<std::string, double>> prompts;
    // fallback distribution used when a prompt key is absent (optional)
    std::optional<std::map<std::string, double>> fallback;
    std::map<std::string, std::vector<double>> embeddings;
    std::size_t embedding_dim = 4;  // for texts without an explicit vector

    static MockSpec from_json(const nlohmann::json& j) {
        MockSpec spec;
        for (const auto& [key, jd] : j.at("prompts").items())
            for (const auto& [text, p] : jd.items()) spec.prompts[key][text] = p.get<double>();
        if (j.contains("fallback"))
            spec.fallback = j["fallback"].get<std::map<std::string, double>>();
        if (j.contains("embeddings"))
            spec.embeddings = j["embeddings"].get<std::map<std::string, std::vector<double>>>();
        spec.embedding_dim = j.value("embedding_dim", std::size_t{4});
        return spec;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["prompts"] = nlohmann::json::object();
        for (const auto& [key, d] : prompts) j["prompts"][key] = d;
        if (fallback) j["fallback"] = *fallback;
        j["embeddings"] = embeddings;
        j["embedding_dim"] = embedding_dim;
        return j;
    }
};

/// The prompt key a request resolves to: user messages joined by newlines.
inline std::string prompt_key(const ChatRequest& req) {
    std::string key;
    for (std::size_t i = 0; i < req.user_messages.size(); ++i) {
        if (i) key.push_back('\n');
        key += req.user_messages[i];
    }
    return key;
}

class MockBackend : public Backend {
public:
    explicit MockBackend(MockSpec spec) : spec_(std::move(spec)) {
        for (const auto& [key, d] : spec_.prompts) check_dist(key, d);
        if (spec_.fallback) check_dist("<fallback>", *spec_.fallback);
    }

    std::string id() const override { return "mock"; }

    std::vector<ResponseRecord> sample_responses(const ChatRequest& req) override {
        const std::string key = prompt_key(req);
        const std::map<std::string, double>* dist = nullptr;
        if (auto it = spec_.prompts.find(key); it != spec_.prompts.end()) dist = &it->second;
        else if (spec_.fallback) dist = &*spec_.fallback;
        else throw GatewayError(GatewayErrorCode::UnknownPrompt, "mock: unknown prompt '" + key + "'");

        // Distinct prompts get independent streams under the same seed.
        const std::uint64_t base_seed = req.seed.value_or(0) ^ fnv1a64(key);
        std::vector<ResponseRecord> out;
        out.reserve(static_cast<std::size_t>(req.n_samples));
        for (int i = 0; i < req.n_samples; ++i) {
            std::mt19937_64 rng(base_seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(i) + 1)));
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const double r = u(rng);
            double acc = 0.0;
            const std::string* chosen = &dist->begin()->first;
            double chosen_p = dist->begin()->second;
            for (const auto& [text, p] : *dist) {
                acc += p;
                chosen = &text;
                chosen_p = p;
                if (r < acc) break;
            }
            ResponseRecord rec;
            rec.text = *chosen;
            if (req.want_logprobs) rec.seq_logprob = std::log(chosen_p);
            out.push_back(std::move(rec));
        }
        return out;
    }

    EmbeddingMatrix embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> rows;
        for (const auto& t : texts) {
            if (auto it = spec_.embeddings.find(t); it != spec_.embeddings.end()) {
                rows.push_back(it->second);
            } else {
                // Deterministic pseudo-embedding from a hash of the text.
                std::mt19937_64 rng(fnv1a64(t));
                std::uniform_real_distribution<double> u(-1.0, 1.0);
                std::vector<double> row(spec_.embedding_dim);
                for (auto& v : row) v = u(rng);
                rows.push_back(std::move(row));
            }
        }
        if (!rows.empty()) {
            const std::size_t d = rows.front().size();
            for (auto& r : rows) r.resize(d, 0.0);
        }
        return EmbeddingMatrix(std::move(rows));
    }

private:
    static void check_dist(const std::string& key, const std::map<std::string, double>& d) {
        double total = 0.0;
        for (const auto& [text, p] : d) total += p;
        if (std::abs(total - 1.0) > 1e-9)
            throw std::invalid_argument("MockSpec: distribution for '" + key + "' sums to " +
                                        std::to_string(total));
    }

    MockSpec spec_;
};

struct HttpConfig {
    std::string base_url = "https://api.openai.com";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string embedding_model = "text-embedding-3-small";
    int max_n_per_request = 8;
    int max_inflight = 4;
    int max_attempts = 5;
    std::chrono::milliseconds backoff_base{1000};
};

/// OpenAI-compatible chat-completions and embeddings wire bodies. Kept as
/// free functions so the schema is testable without any network.
inline nlohmann::json build_chat_body(const ChatRequest& req, int n) {
    nlohmann::json body;
    body["model"] = req.model;
    body["messages"] = nlohmann::json::array();
    if (!req.system_message.empty())
        body["messages"].push_back({{"role", "system"}, {"content", req.system_message}});
    for (const auto& m : req.user_messages)
        body["messages"].push_back({{"role", "user"}, {"content", m}});
    body["temperature"] = req.temperature;
    body["n"] = n;
    body["max_tokens"] = req.max_tokens;
    if (req.want_logprobs) body["logprobs"] = true;
    if (req.seed) body["seed"] = *req.seed;
    return body;
}

inline nlohmann::json build_embeddings_body(const std::string& model,
                                            const std::vector<std::string>& texts) {
    return nlohmann::json{{"model", model}, {"input", texts}};
}

/// Parse one chat-completions response body into records, appending to out.
inline void parse_chat_response(const nlohmann::json& body, std::vector<ResponseRecord>& out) {
    if (!body.contains("choices") || !body["choices"].is_array())
        throw GatewayError(GatewayErrorCode::MalformedResponse, "chat response lacks choices[]");
    for (const auto& choice : body["choices"]) {
        ResponseRecord rec;
        try {
            rec.text = choice.at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw GatewayError(GatewayErrorCode::MalformedResponse, e.what());
        }
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content")) {
            double total = 0.0;
            for (const auto& tok : choice["logprobs"]["content"]) {
                const double lp = tok.at("logprob").get<double>();
                rec.token_logprobs.push_back(lp);
                total += lp;
            }
            rec.seq_logprob = total;
        }
        out.push_back(std::move(rec));
    }
}

// HTTP transport callback: (path, json body) -> (status, response body text).
// Separated from HttpBackend so retry/batching logic is testable offline.
using HttpTransport =
    std::function<std::pair<int, std::string>(const std::string& path, const std::string& body)>;

class HttpBackend : public Backend {
public:
    HttpBackend(HttpConfig config, HttpTransport transport,
                std::function<void(std::chrono::milliseconds)> sleep_fn = default_sleep)
        : config_(std::move(config)), transport_(std::move(transport)),
          sleep_fn_(std::move(sleep_fn)) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            throw GatewayError(GatewayErrorCode::Auth,
                               "missing credential in env var " + config_.api_key_env);
    }

    std::string id() const override { return "http:" + config_.base_url; }

    std::vector<ResponseRecord> sample_responses(const ChatRequest& req) override {
        // Split n over provider-limit batches; results reassembled in order.
        std::vector<int> batch_sizes;
        int remaining = req.n_samples;
        while (remaining > 0) {
            const int n = std::min(remaining, config_.max_n_per_request);
            batch_sizes.push_back(n);
            remaining -= n;
        }
        std::vector<std::vector<ResponseRecord>> batches(batch_sizes.size());
        run_bounded(batch_sizes.size(), [&](std::size_t b) {
            const nlohmann::json body = build_chat_body(req, batch_sizes[b]);
            const nlohmann::json resp = post_with_retry("/v1/chat/completions", body);
            parse_chat_response(resp, batches[b]);
        });
        std::vector<ResponseRecord> out;
        for (auto& b : batches)
            for (auto& r : b) out.push_back(std::move(r));
        return out;
    }

    EmbeddingMatrix embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) return EmbeddingMatrix{};
        const nlohmann::json body = build_embeddings_body(config_.embedding_model, texts);
        const nlohmann::json resp = post_with_retry("/v1/embeddings", body);
        if (!resp.contains("data") || resp["data"].size() != texts.size())
            throw GatewayError(GatewayErrorCode::MalformedResponse, "embeddings data size mismatch");
        std::vector<std::vector<double>> rows;
        for (const auto& item : resp["data"])
            rows.push_back(item.at("embedding").get<std::vector<double>>());
        return EmbeddingMatrix(std::move(rows));
    }

private:
    static void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

    nlohmann::json post_with_retry(const std::string& path, const nlohmann::json& body) {
        auto delay = config_.backoff_base;
        for (int attempt = 1;; ++attempt) {
            const auto [status, text] = transport_(path, body.dump());
            if (status == 200) {
                try {
                    return nlohmann::json::parse(text);
                } catch (const nlohmann::json::exception& e) {
                    throw GatewayError(GatewayErrorCode::MalformedResponse, e.what());
                }
            }
            if (status == 401 || status == 403)
                throw GatewayError(GatewayErrorCode::Auth, "authorization rejected (" +
                                                               std::to_string(status) + ")");
            const bool transient = status == 429 || status >= 500 || status <= 0;
            if (!transient)
                throw GatewayError(GatewayErrorCode::MalformedResponse,
                                   "unexpected status " + std::to_string(status));
            if (attempt >= config_.max_attempts)
                throw GatewayError(GatewayErrorCode::RateLimited,
                                   "still failing after " + std::to_string(attempt) + " attempts");
            sleep_fn_(delay);
            delay *= 2;
        }
    }

    void run_bounded(std::size_t n_tasks, const std::function<void(std::size_t)>& task) {
        const std::size_t bound = static_cast<std::size_t>(std::max(1, config_.max_inflight));
        for (std::size_t start = 0; start < n_tasks; start += bound) {
            std::vector<std::future<void>> inflight;
            for (std::size_t i = start; i < std::min(n_tasks, start + bound); ++i)
                inflight.push_back(std::async(std::launch::async, task, i));
            for (auto& f : inflight) f.get();
        }
    }

    HttpConfig config_;
    HttpTransport transport_;
    std::function<void(std::chrono::milliseconds)> sleep_fn_;
};

/// Content-addressed on-disk cache around any backend. Layout:
/// cache/<backend>/<model>/<hash>.jsonl, append-only JSON lines. A hit is
/// returned byte-identically; corruption is reported, never ignored.
class CachedBackend : public Backend {
public:
    CachedBackend(std::shared_ptr<Backend> inner, std::filesystem::path cache_dir)
        : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {}

    std::string id() const override { return inner_->id(); }

    std::vector<ResponseRecord> sample_responses(const ChatRequest& req) override {
        const auto path = entry_path(req.model, canonical_request_json(req).dump());
        if (std::filesystem::exists(path)) return load_records(path);
        auto records = inner_->sample_responses(req);
        store_records(path, records);
        return records;
    }

    EmbeddingMatrix embed(const std::vector<std::string>& texts) override {
        nlohmann::json key;
        key["op"] = "embed";
        key["texts"] = texts;
        const auto path = entry_path("embeddings", key.dump());
        if (std::filesystem::exists(path)) return load_matrix(path);
        auto matrix = inner_->embed(texts);
        store_matrix(path, matrix);
        return matrix;
    }

    static nlohmann::json record_to_json(const ResponseRecord& r) {
        nlohmann::json j;
        j["text"] = r.text;
        j["seq_logprob"] = r.seq_logprob ? nlohmann::json(*r.seq_logprob) : nlohmann::json(nullptr);
        j["token_logprobs"] = r.token_logprobs;
        return j;
    }

    static ResponseRecord record_from_json(const nlohmann::json& j) {
        ResponseRecord r;
        r.text = j.at("text").get<std::string>();
        if (!j.at("seq_logprob").is_null()) r.seq_logprob = j["seq_logprob"].get<double>();
        r.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
        return r;
    }

private:
    std::filesystem::path entry_path(const std::string& model, const std::string& key_material) {
        nlohmann::json key;
        key["backend"] = inner_->id();
        key["model"] = model;
        key["request"] = key_material;
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(key.dump())));
        std::string backend_dir = inner_->id();
        std::replace(backend_dir.begin(), backend_dir.end(), '/', '_');
        std::replace(backend_dir.begin(), backend_dir.end(), ':', '_');
        auto dir = cache_dir_ / backend_dir / (model.empty() ? "default" : model);
        std::filesystem::create_directories(dir);
        return dir / (std::string(hex) + ".jsonl");
    }

    static std::vector<ResponseRecord> load_records(const std::filesystem::path& path) {
        std::ifstream in(path);
        std::vector<ResponseRecord> out;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                out.push_back(record_from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::exception& e) {
                throw GatewayError(GatewayErrorCode::CacheCorruption,
                                   path.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        return out;
    }

    static void store_records(const std::filesystem::path& path,
                              const std::vector<ResponseRecord>& records) {
        std::ofstream out(path, std::ios::app);
        for (const auto& r : records) out << record_to_json(r).dump() << '\n';
    }

    static EmbeddingMatrix load_matrix(const std::filesystem::path& path) {
        std::ifstream in(path);
        std::vector<std::vector<double>> rows;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                rows.push_back(nlohmann::json::parse(line).get<std::vector<double>>());
            } catch (const nlohmann::json::exception& e) {
                throw GatewayError(GatewayErrorCode::CacheCorruption,
                                   path.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        return EmbeddingMatrix(std::move(rows));
    }

    static void store_matrix(const std::filesystem::path& path, const EmbeddingMatrix& m) {
        std::ofstream out(path, std::ios::app);
        for (const auto& r : m.rows()) out << nlohmann::json(r).dump() << '\n';
    }

    std::shared_ptr<Backend> inner_;
    std::filesystem::path cache_dir_;
};

}  // namespace prc
