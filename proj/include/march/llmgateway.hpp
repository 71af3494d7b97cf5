#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "march/prompting.hpp"

namespace march {

struct SamplingConfig {
    double temperature = 0.6;
    double top_p = 0.95;
    int top_k = 20;  // 0 disables; ignored by backends that lack it
    int n_samples = 1;
    int max_tokens = 8192;
    std::optional<uint64_t> seed;
};

enum class FinishReason { stop, length, error };

struct Generation {
    std::string text;
    std::optional<std::vector<double>> token_logprobs;  // toy backend only
    FinishReason finish_reason = FinishReason::stop;
};

enum class BackendErrorKind { transport, refusal, context_overflow, not_programmed };

class BackendError : public std::runtime_error {
public:
    BackendError(BackendErrorKind kind, const std::string& what, int attempts = 1)
        : std::runtime_error(what), kind(kind), attempts(attempts) {}
    BackendErrorKind kind;
    int attempts;
};

/// Stable content hash of prompt bytes + role; used to address scripted
/// responses and to audit rollout records.
std::string fingerprint(const RolePrompt& prompt);

class Backend {
public:
    virtual ~Backend() = default;
    /// Returns exactly config.n_samples generations or throws BackendError.
    virtual std::vector<Generation> generate(const RolePrompt& prompt,
                                             const SamplingConfig& config) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic test backend: maps prompt fingerprints to canned responses.
/// Never touches the network.
class ScriptedBackend : public Backend {
public:
    ScriptedBackend() = default;
    /// Loads a JSON object file {fingerprint: response, ...}.
    static std::shared_ptr<ScriptedBackend> from_file(const std::string& path);

    void program(const RolePrompt& prompt, std::string response);
    void program_fingerprint(std::string fp, std::string response);
    /// Responses consumed round-robin when several are programmed for one
    /// fingerprint; lets tests vary the m audit samples.
    void program_sequence(const RolePrompt& prompt, std::vector<std::string> responses);

    std::vector<Generation> generate(const RolePrompt& prompt,
                                     const SamplingConfig& config) override;
    std::string name() const override { return "scripted"; }

private:
    struct Slot {
        std::vector<std::string> responses;
        std::size_t next = 0;
    };
    std::mutex mutex_;
    std::unordered_map<std::string, Slot> programmed_;
};

struct RetryPolicy {
    int max_attempts = 4;
    int initial_backoff_ms = 250;
    double backoff_multiplier = 2.0;
};

struct HttpBackendConfig {
    std::string base_url = "http://localhost:8000";
    std::string model;
    std::string api_key_env = "MARCH_API_KEY";
    RetryPolicy retry;
    int max_in_flight = 4;
    int context_limit_tokens = 0;  // 0 = unknown, no client-side check
};

/// Chat-completions client over HTTP with bounded exponential backoff.
/// Transport failures retry; refusals and context overflows do not.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    std::vector<Generation> generate(const RolePrompt& prompt,
                                     const SamplingConfig& config) override;
    std::string name() const override { return "http"; }

    /// Test seam: replaces the transport with an injected function taking the
    /// request body and returning (status, body) or throwing.
    using Transport = std::function<std::pair<int, std::string>(const std::string& body)>;
    void set_transport(Transport transport) { transport_ = std::move(transport); }

    uint64_t requests_sent() const { return requests_sent_.load(); }

private:
    std::pair<int, std::string> send(const std::string& body);

    // Requests-in-flight cap; excess callers block here.
    class FlightGuard;
    HttpBackendConfig config_;
    Transport transport_;
    std::atomic<uint64_t> requests_sent_{0};
    std::mutex flight_mutex_;
    std::condition_variable flight_cv_;
    int in_flight_ = 0;
};

}  // namespace march
