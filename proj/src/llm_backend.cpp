#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "stepgame/errors.hpp"
#include "stepgame/llm.hpp"

namespace stepgame {
namespace {

using nlohmann::json;

std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Strips leading/trailing characters that cannot be part of a relation word.
std::string strip_punct(const std::string& word) {
    auto keep = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    };
    std::size_t b = 0, e = word.size();
    while (b < e && !keep(word[b])) ++b;
    while (e > b && !keep(word[e - 1])) --e;
    return word.substr(b, e - b);
}

// Last relation mention in the text; two-word forms ("upper left") beat one-word
// matches ending at the same position.
std::optional<Relation> scan_relation(const std::string& text) {
    std::istringstream stream(text);
    std::vector<std::string> words;
    for (std::string w; stream >> w;) {
        w = strip_punct(w);
        if (!w.empty()) words.push_back(w);
    }
    std::optional<Relation> best;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) {
            if (auto r = normalize_relation_word(words[i - 1] + " " + words[i])) {
                best = r;
                continue;
            }
        }
        if (auto r = normalize_relation_word(words[i])) best = r;
    }
    return best;
}

}  // namespace

std::optional<Relation> parse_answer(const std::string& completion) {
    const std::string lower = lowercase(completion);
    const std::size_t marker = lower.rfind("answer:");
    if (marker != std::string::npos) {
        std::size_t begin = marker + 7;
        std::size_t end = completion.find('\n', begin);
        if (end == std::string::npos) end = completion.size();
        if (auto r = scan_relation(completion.substr(begin, end - begin))) return r;
    }
    return scan_relation(completion);
}

VerdictParse parse_verdict(const std::string& completion) {
    const std::string lower = lowercase(completion);
    VerdictParse result;
    std::string word;
    auto flush = [&](std::string& w) {
        if (w == "sure") {
            result = {Verdict::Sure, true};
        } else if (w == "likely") {
            result = {Verdict::Likely, true};
        } else if (w == "impossible") {
            result = {Verdict::Impossible, true};
        }
        w.clear();
    };
    for (const char c : lower) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            word += c;
        } else {
            flush(word);
        }
    }
    flush(word);
    return result;
}

std::vector<Proposal> parse_proposals(const std::string& completion,
                                      const SearchState& parent) {
    std::vector<Proposal> proposals;
    std::istringstream stream(completion);
    for (std::string line; std::getline(stream, line);) {
        if (line.find("chain:") == std::string::npos) continue;
        auto state = parse_state_text(line, parent);
        // A proposal is a single extension; longer jumps are not valid generation output.
        if (!state || state->chain.size() != parent.chain.size() + 1) continue;
        const std::size_t index = *state->chain.back().used_index;
        bool duplicate = false;
        for (const Proposal& p : proposals) duplicate = duplicate || p.used_index == index;
        if (!duplicate) proposals.push_back(Proposal{index, state->last_object()});
    }
    return proposals;
}

void MockCompleter::add_rule(std::vector<std::string> needles, std::string response) {
    rules_.push_back(Rule{std::move(needles), std::move(response)});
}

std::string MockCompleter::complete(const CompletionRequest& request) {
    static std::mutex mutex;
    std::lock_guard<std::mutex> lock(mutex);
    ++calls_;
    for (const Rule& rule : rules_) {
        bool all = true;
        for (const std::string& needle : rule.needles) {
            all = all && request.prompt.find(needle) != std::string::npos;
        }
        if (all) return rule.response;
    }
    if (default_response_) return *default_response_;
    throw BackendError("mock backend has no rule matching the prompt");
}

std::string BudgetedCompleter::complete(const CompletionRequest& request) {
    static std::mutex mutex;
    {
        std::lock_guard<std::mutex> lock(mutex);
        if (budget_ && used_ >= *budget_) {
            throw BackendError("request budget exhausted (" + std::to_string(*budget_) + ")");
        }
        ++used_;
    }
    return inner_.complete(request);
}

BackendConfig load_backend_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config \"" + path + "\"");
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ParseError(path + ": expected a JSON object");

    BackendConfig config;
    config.kind = j.value("kind", std::string("mock"));
    if (config.kind != "mock" && config.kind != "http") {
        throw ParseError(path + ": unknown backend kind \"" + config.kind + "\"");
    }
    config.endpoint = j.value("endpoint", std::string());
    config.model = j.value("model", std::string());
    config.temperature_base = j.value("temperature_base", 0.0);
    config.temperature_tot = j.value("temperature_tot", 0.7);
    config.max_in_flight = j.value("max_in_flight", 4);
    config.api_key_env = j.value("api_key_env", std::string("STEPGAME_API_KEY"));
    if (j.contains("retry")) {
        config.retry.max_attempts = j["retry"].value("max_attempts", 3);
        config.retry.backoff_ms = j["retry"].value("backoff_ms", 250);
    }
    for (const char* forbidden : {"api_key", "apikey", "key", "token", "secret"}) {
        if (j.contains(forbidden)) {
            throw ParseError(path + ": credentials belong in the environment (set $" +
                             config.api_key_env + "), never in config files");
        }
    }
    if (config.max_in_flight < 1) throw ParseError(path + ": max_in_flight must be >= 1");
    if (config.retry.max_attempts < 1) throw ParseError(path + ": max_attempts must be >= 1");
    if (config.kind == "http") {
        if (config.endpoint.empty()) throw ParseError(path + ": http backend needs an endpoint");
        if (config.model.empty()) throw ParseError(path + ": http backend needs a model");
    }
    if (j.contains("mock_rules")) {
        for (const auto& rule : j["mock_rules"]) {
            MockCompleter::Rule r;
            for (const auto& needle : rule.value("needles", json::array())) {
                r.needles.push_back(needle.get<std::string>());
            }
            r.response = rule.value("response", std::string());
            config.mock_rules.push_back(std::move(r));
        }
    }
    if (j.contains("mock_default")) config.mock_default = j["mock_default"].get<std::string>();
    return config;
}

struct HttpCompleter::Impl {
    BackendConfig config;
    std::string base;  // scheme://host[:port]
    std::string path;
    std::string api_key;
    std::counting_semaphore<> slots;

    explicit Impl(const BackendConfig& cfg) : config(cfg), slots(cfg.max_in_flight) {
        const char* key = std::getenv(cfg.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw BackendError("environment variable " + cfg.api_key_env +
                               " is not set (credentials come only from the environment)");
        }
        api_key = key;

        const std::size_t scheme_end = cfg.endpoint.find("://");
        const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        const std::size_t slash = cfg.endpoint.find('/', host_start);
        if (slash == std::string::npos) {
            base = cfg.endpoint;
            path = "/v1/chat/completions";
        } else {
            base = cfg.endpoint.substr(0, slash);
            path = cfg.endpoint.substr(slash);
        }
    }
};

HttpCompleter::HttpCompleter(const BackendConfig& config) : impl_(new Impl(config)) {}
HttpCompleter::~HttpCompleter() = default;

std::string HttpCompleter::complete(const CompletionRequest& request) {
    impl_->slots.acquire();
    struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
    } release{impl_->slots};

    json body;
    body["model"] = impl_->config.model;
    body["temperature"] = request.temperature;
    body["messages"] = json::array({{{"role", "user"}, {"content", request.prompt}}});
    const std::string payload = body.dump();
    const httplib::Headers headers{{"Authorization", "Bearer " + impl_->api_key}};

    std::string last_error;
    for (int attempt = 0; attempt < impl_->config.retry.max_attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(
                impl_->config.retry.backoff_ms << (attempt - 1)));
        }
        std::unique_ptr<httplib::Client> client;
        try {
            client = std::make_unique<httplib::Client>(impl_->base);
        } catch (const std::invalid_argument& e) {
            throw BackendError("endpoint \"" + impl_->base + "\": " + e.what());
        }
        client->set_connection_timeout(10, 0);
        client->set_read_timeout(120, 0);

        auto res = client->Post(impl_->path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 401 || res->status == 403) {
            throw BackendError("authentication failed (HTTP " + std::to_string(res->status) +
                               ")");
        }
        const std::string body_lower = [&] {
            std::string b = res->body;
            for (char& c : b) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            return b;
        }();
        if (body_lower.find("context_length_exceeded") != std::string::npos ||
            body_lower.find("maximum context length") != std::string::npos) {
            throw ContextOverflowError("prompt exceeds the model context window: " + res->body);
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
            continue;
        }
        if (res->status != 200) {
            throw BackendError("HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        try {
            const json reply = json::parse(res->body);
            const auto& choice = reply.at("choices").at(0);
            if (choice.contains("message")) {
                return choice.at("message").at("content").get<std::string>();
            }
            return choice.at("text").get<std::string>();
        } catch (const std::exception& e) {
            throw BackendError("malformed completion response: " + std::string(e.what()));
        }
    }
    throw BackendError("request failed after " +
                       std::to_string(impl_->config.retry.max_attempts) +
                       " attempts; last error: " + last_error);
}

std::unique_ptr<Completer> make_completer(const BackendConfig& config) {
    if (config.kind == "mock") {
        auto mock = std::make_unique<MockCompleter>();
        for (const MockCompleter::Rule& rule : config.mock_rules) {
            mock->add_rule(rule.needles, rule.response);
        }
        if (config.mock_default) mock->set_default(*config.mock_default);
        return mock;
    }
    return std::make_unique<HttpCompleter>(config);
}

}  // namespace stepgame
