#include "march/llmgateway.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>

#include <json.hpp>

#ifndef MARCH_NO_HTTPLIB
#ifdef MARCH_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#endif

namespace march {

namespace {

uint64_t fnv1a(const std::string& data, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::string fingerprint(const RolePrompt& prompt) {
    uint64_t h = fnv1a(role_name(prompt.role));
    h = fnv1a(std::string(1, '\0'), h);
    h = fnv1a(prompt.text, h);
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BackendError(BackendErrorKind::transport, "cannot open script file: " + path);
    nlohmann::json spec;
    in >> spec;
    auto backend = std::make_shared<ScriptedBackend>();
    for (auto it = spec.begin(); it != spec.end(); ++it) {
        if (it.value().is_string()) {
            backend->program_fingerprint(it.key(), it.value().get<std::string>());
        } else if (it.value().is_array()) {
            std::vector<std::string> seq;
            for (const auto& v : it.value()) seq.push_back(v.get<std::string>());
            backend->programmed_[it.key()] = Slot{std::move(seq), 0};
        }
    }
    return backend;
}

void ScriptedBackend::program(const RolePrompt& prompt, std::string response) {
    program_fingerprint(fingerprint(prompt), std::move(response));
}

void ScriptedBackend::program_fingerprint(std::string fp, std::string response) {
    programmed_[std::move(fp)] = Slot{{std::move(response)}, 0};
}

void ScriptedBackend::program_sequence(const RolePrompt& prompt,
                                       std::vector<std::string> responses) {
    programmed_[fingerprint(prompt)] = Slot{std::move(responses), 0};
}

std::vector<Generation> ScriptedBackend::generate(const RolePrompt& prompt,
                                                  const SamplingConfig& config) {
    const std::string fp = fingerprint(prompt);
    std::lock_guard lock(mutex_);
    auto it = programmed_.find(fp);
    if (it == programmed_.end()) {
        throw BackendError(BackendErrorKind::not_programmed,
                           "no scripted response for fingerprint " + fp +
                               " (role " + role_name(prompt.role) + ")");
    }
    std::vector<Generation> out;
    out.reserve(static_cast<std::size_t>(config.n_samples));
    Slot& slot = it->second;
    for (int i = 0; i < config.n_samples; ++i) {
        Generation g;
        g.text = slot.responses[slot.next % slot.responses.size()];
        ++slot.next;
        g.finish_reason = FinishReason::stop;
        out.push_back(std::move(g));
    }
    return out;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

class HttpBackend::FlightGuard {
public:
    explicit FlightGuard(HttpBackend& backend) : backend_(backend) {
        std::unique_lock lock(backend_.flight_mutex_);
        backend_.flight_cv_.wait(lock, [&] {
            return backend_.in_flight_ < backend_.config_.max_in_flight;
        });
        ++backend_.in_flight_;
    }
    ~FlightGuard() {
        {
            std::lock_guard lock(backend_.flight_mutex_);
            --backend_.in_flight_;
        }
        backend_.flight_cv_.notify_one();
    }

private:
    HttpBackend& backend_;
};

std::pair<int, std::string> HttpBackend::send(const std::string& body) {
    ++requests_sent_;
    if (transport_) return transport_(body);
#ifndef MARCH_NO_HTTPLIB
    httplib::Client client(config_.base_url);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post("/v1/chat/completions", headers, body, "application/json");
    if (!res) throw BackendError(BackendErrorKind::transport, "connection failed");
    return {res->status, res->body};
#else
    throw BackendError(BackendErrorKind::transport, "http transport unavailable");
#endif
}

std::vector<Generation> HttpBackend::generate(const RolePrompt& prompt,
                                              const SamplingConfig& config) {
    // Crude token estimate (4 bytes/token) for the client-side overflow guard.
    if (config_.context_limit_tokens > 0) {
        const long est = static_cast<long>(prompt.text.size() / 4) + config.max_tokens;
        if (est > config_.context_limit_tokens) {
            throw BackendError(BackendErrorKind::context_overflow,
                               "prompt + max_tokens exceeds backend context limit");
        }
    }

    nlohmann::json req;
    req["model"] = config_.model;
    req["messages"] = nlohmann::json::array(
        {nlohmann::json{{"role", "user"}, {"content", prompt.text}}});
    req["temperature"] = config.temperature;
    req["top_p"] = config.top_p;
    req["n"] = config.n_samples;
    req["max_tokens"] = config.max_tokens;
    if (config.seed) req["seed"] = *config.seed;
    // top_k has no slot in the chat-completions schema; dropped on purpose.
    const std::string body = req.dump();

    FlightGuard guard(*this);
    int backoff = config_.retry.initial_backoff_ms;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        try {
            auto [status, response] = send(body);
            if (status == 200) {
                auto parsed = nlohmann::json::parse(response);
                std::vector<Generation> out;
                for (const auto& choice : parsed["choices"]) {
                    Generation g;
                    g.text = choice["message"]["content"].get<std::string>();
                    const std::string reason = choice.value("finish_reason", "stop");
                    g.finish_reason = reason == "length" ? FinishReason::length : FinishReason::stop;
                    out.push_back(std::move(g));
                }
                if (out.size() != static_cast<std::size_t>(config.n_samples)) {
                    throw BackendError(BackendErrorKind::transport,
                                       "backend returned wrong choice count", attempt);
                }
                return out;
            }
            if (status == 400 || status == 401 || status == 403 || status == 404 || status == 422) {
                throw BackendError(BackendErrorKind::refusal,
                                   "backend refused request, status " + std::to_string(status),
                                   attempt);
            }
            last_error = "status " + std::to_string(status);
        } catch (const BackendError& e) {
            if (e.kind != BackendErrorKind::transport) throw;
            last_error = e.what();
        } catch (const std::exception& e) {
            last_error = e.what();
        }
        if (attempt < config_.retry.max_attempts) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff = static_cast<int>(backoff * config_.retry.backoff_multiplier);
        }
    }
    throw BackendError(BackendErrorKind::transport,
                       "transport failed after " + std::to_string(config_.retry.max_attempts) +
                           " attempts: " + last_error,
                       config_.retry.max_attempts);
}

}  // namespace march
