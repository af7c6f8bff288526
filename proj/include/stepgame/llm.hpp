#pragma once

// Language-model integration: prompt programs for direct answering, coordinate-trace
// reasoning, and the linking-chain search; completion backends (HTTP endpoint or
// scripted mock); robust output parsers; and the batch evaluation driver.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stepgame/chain_search.hpp"
#include "stepgame/dataset.hpp"
#include "stepgame/relations.hpp"
#include "stepgame/solver.hpp"
#include "stepgame/templates.hpp"

namespace stepgame {

enum class PromptKind : std::uint8_t {
    Base,         // direct answer
    Cot,          // coordinate-trace reasoning
    TotInit,      // initial chain state for a story
    TotGenerate,  // candidate chain extensions for a state
    TotEvaluate,  // sure/likely/impossible verdict for a state
    TotLink,      // final chain construction for a story
    TotReason,    // answer by following a given linking chain
};
std::string prompt_kind_name(PromptKind k);

// --- few-shot examples ---

enum class FewShotPolicyKind : std::uint8_t {
    Fiveshot13571,    // one example each of k = 1, 3, 5, 7, 10
    Tenshot,          // one example each of k = 1..10
    FiveshotSeparate, // five examples of the queried k
};
std::optional<FewShotPolicyKind> parse_fewshot_policy(const std::string& name);
std::string fewshot_policy_name(FewShotPolicyKind k);

// Selects examples from a labeled pool (normally clean generated training data).
// Selection is seeded and deterministic. DomainError if the pool cannot serve the policy.
std::vector<Instance> resolve_fewshot(FewShotPolicyKind policy,
                                      const std::vector<Instance>& pool, int query_k,
                                      std::uint64_t seed);

// --- prompt construction (byte-stable; golden-file tested) ---

// Base / Cot / TotInit / TotLink prompts over a full instance. Few-shot examples are
// rendered with their gold outputs (Cot examples embed the solver's coordinate trace).
std::string build_prompt(PromptKind kind, const std::vector<Instance>& fewshot,
                         const Instance& query, const TemplateBase& base);

// TotGenerate / TotEvaluate prompts over a rendered search state.
std::string build_state_prompt(PromptKind kind, const std::string& state_text);

// TotReason prompt: answer the query by following `chain_text`.
std::string build_reason_prompt(const std::vector<Instance>& fewshot, const Instance& query,
                                const std::string& chain_text, const TemplateBase& base);

// --- output parsing ---

// Takes the text after the last "Answer:" marker and normalizes it to a relation;
// falls back to the last canonical relation word anywhere in the completion.
std::optional<Relation> parse_answer(const std::string& completion);

// Last verdict word in the completion. Unparseable completions default to Impossible
// with parsed=false so the caller can log them.
struct VerdictParse {
    Verdict verdict = Verdict::Impossible;
    bool parsed = false;
};
VerdictParse parse_verdict(const std::string& completion);

// Extracts chain proposals from a generation completion; malformed blocks are dropped.
std::vector<Proposal> parse_proposals(const std::string& completion, const SearchState& parent);

// --- completion backends ---

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.0;
};

class Completer {
  public:
    virtual ~Completer() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
    virtual bool is_mock() const = 0;
};

// Scripted responses for offline runs: the first rule whose needles all occur in the
// prompt wins. BackendError when nothing matches and no default response is set.
class MockCompleter : public Completer {
  public:
    struct Rule {
        std::vector<std::string> needles;
        std::string response;
    };
    void add_rule(std::vector<std::string> needles, std::string response);
    void set_default(std::string response) { default_response_ = std::move(response); }

    std::string complete(const CompletionRequest& request) override;
    bool is_mock() const override { return true; }
    std::size_t calls() const { return calls_; }

  private:
    std::vector<Rule> rules_;
    std::optional<std::string> default_response_;
    std::size_t calls_ = 0;
};

struct RetryPolicy {
    int max_attempts = 3;
    int backoff_ms = 250;  // doubled per attempt
};

struct BackendConfig {
    std::string kind = "mock";  // "mock" or "http"
    std::string endpoint;       // e.g. https://api.example.com/v1
    std::string model;
    double temperature_base = 0.0;  // base / cot / reason prompts
    double temperature_tot = 0.7;   // tot propose / evaluate prompts
    int max_in_flight = 4;
    RetryPolicy retry;
    std::string api_key_env = "STEPGAME_API_KEY";  // credentials come only from the environment
    std::vector<MockCompleter::Rule> mock_rules;   // for kind == "mock"
    std::optional<std::string> mock_default;
};

BackendConfig load_backend_config(const std::string& path);
std::unique_ptr<Completer> make_completer(const BackendConfig& config);

// OpenAI-style chat-completions client over HTTP(S). The API key is read from the
// environment variable named in the config; a missing key is a BackendError. Retries
// transient failures with exponential backoff; a response flagging a context-length
// problem raises ContextOverflowError. At most max_in_flight requests run concurrently.
class HttpCompleter : public Completer {
  public:
    explicit HttpCompleter(const BackendConfig& config);
    ~HttpCompleter() override;
    std::string complete(const CompletionRequest& request) override;
    bool is_mock() const override { return false; }

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Counts completions and enforces an optional request budget (BackendError once spent).
class BudgetedCompleter : public Completer {
  public:
    BudgetedCompleter(Completer& inner, std::optional<std::size_t> budget)
        : inner_(inner), budget_(budget) {}
    std::string complete(const CompletionRequest& request) override;
    bool is_mock() const override { return inner_.is_mock(); }
    std::size_t used() const { return used_; }

  private:
    Completer& inner_;
    std::optional<std::size_t> budget_;
    std::size_t used_ = 0;
};

// --- evaluation ---

enum class EvalMethod : std::uint8_t { Base, Cot, Tot };
std::optional<EvalMethod> parse_method(const std::string& name);
std::string method_name(EvalMethod m);

struct Prediction {
    std::string id;
    int k = 1;
    std::string method;
    std::optional<Relation> prediction;  // empty when unparseable or errored
    Relation gold = Relation::Overlap;
    std::string digest;  // FNV-1a hex of the raw completion(s)
    std::string error;   // non-empty when the pipeline failed for this instance
};

std::string prediction_to_json_line(const Prediction& p);
std::vector<Prediction> read_predictions(std::istream& in, const std::string& origin = "<input>");

struct ScoreCell {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const;  // percent, 1 decimal, half-up
};

struct ScoreTable {
    std::map<int, ScoreCell> per_k;
    ScoreCell overall;
    std::size_t unparseable = 0;
    // gold relation -> wrong-prediction count (the single-sentence extraction view).
    std::map<Relation, std::size_t> wrong_by_relation;
};

ScoreTable score_predictions(const std::vector<Prediction>& predictions);
std::string format_score_table(const ScoreTable& t);
std::string score_table_to_json(const ScoreTable& t);

struct EvalOptions {
    EvalMethod method = EvalMethod::Base;
    FewShotPolicyKind fewshot = FewShotPolicyKind::Fiveshot13571;
    std::uint64_t seed = 0;      // drives few-shot pool generation and selection
    int jobs = 1;
    std::optional<std::size_t> max_requests;  // required for non-mock backends
    SearchConfig search;
    double temperature_base = 0.0;
    double temperature_tot = 0.7;
};

struct EvalResult {
    std::vector<Prediction> predictions;  // input order
    ScoreTable table;
    std::size_t requests_used = 0;
};

// Runs the chosen method over the instances. Base/Cot: one completion per instance.
// Tot: drives the chain search with LLM proposer/evaluator, then links and reasons.
// The few-shot pool is generated internally (clean instances, k = 1..10) from the seed.
EvalResult run_eval(const std::vector<Instance>& instances, const TemplateBase& base,
                    Completer& completer, const EvalOptions& options);

// Same, with distinct backends: chain building (tot init/generate/evaluate/link) goes to
// `chain_completer`, answer production (base/cot prompts, tot reasoning) to
// `reason_completer`. The request budget is shared across both.
EvalResult run_eval(const std::vector<Instance>& instances, const TemplateBase& base,
                    Completer& chain_completer, Completer& reason_completer,
                    const EvalOptions& options);

}  // namespace stepgame
