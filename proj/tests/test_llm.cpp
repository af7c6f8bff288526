#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "stepgame/chain_search.hpp"
#include "stepgame/dataset.hpp"
#include "stepgame/errors.hpp"
#include "stepgame/llm.hpp"
#include "stepgame/rng.hpp"
#include "stepgame/solver.hpp"
#include "stepgame/templates.hpp"

using namespace stepgame;

namespace {

std::string read_golden(const std::string& name) {
    const std::string path = std::string(STEPGAME_GOLDEN_DIR) + "/" + name;
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing golden file " << path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

std::string write_temp(const std::string& name, const std::string& content) {
    const std::filesystem::path path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

std::string hex64(std::uint64_t value) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
    return buffer;
}

// The four-hop reference instance used by the fixed prompt examples.
Instance worked_instance() {
    Instance inst;
    inst.id = "worked";
    inst.story = {
        "Q is to the right of O and is on the same horizontal plane.",
        "Q is slightly off center to the top left and M is slightly off center to the bottom "
        "right.",
        "X and E are next to each other with X on the top and E at the bottom.",
        "O is sitting at the upper right position to E.",
        "W is on the right side and below M.",
    };
    inst.question = "What is the relation of the agent W to the agent E?";
    inst.label = Relation::LowerRight;
    inst.k = 4;
    inst.split = Split::Noise;
    return inst;
}

// The five-sentence query used as the trailing block of the golden prompts.
Instance tail_instance() {
    Instance inst;
    inst.id = "tail";
    inst.story = {
        "The object E is positioned directly above the object W.",
        "E is sitting at the upper right position to I.",
        "W is placed at the upper left of C.",
        "L is over there and Y is on the left.",
        "C and Y are both there with the object Y below the object C.",
    };
    inst.question = "What is the relation of the agent E to the agent Y?";
    inst.label = Relation::Overlap;
    inst.k = 5;
    inst.split = Split::Noise;
    return inst;
}

std::string worked_state_text() {
    const TemplateBase& base = TemplateBase::bundled();
    const Instance inst = worked_instance();
    const RelationGraph g = build_graph(inst.story, base);
    return render_state(init_state(g, base.parse_question(inst.question)));
}

}  // namespace

TEST_CASE("prompt builders reproduce the golden transcripts byte for byte") {
    const TemplateBase& base = TemplateBase::bundled();
    const Instance worked = worked_instance();
    const Instance tail = tail_instance();

    CHECK(build_prompt(PromptKind::Base, {worked}, tail, base) == read_golden("base.txt"));
    CHECK(build_prompt(PromptKind::Cot, {worked}, tail, base) == read_golden("cot.txt"));
    CHECK(build_prompt(PromptKind::TotInit, {}, tail, base) == read_golden("tot_init.txt"));
    CHECK(build_prompt(PromptKind::TotLink, {}, tail, base) == read_golden("tot_link.txt"));
    CHECK(build_state_prompt(PromptKind::TotGenerate, worked_state_text()) ==
          read_golden("tot_generate.txt"));
    CHECK(build_state_prompt(PromptKind::TotEvaluate, worked_state_text()) ==
          read_golden("tot_evaluate.txt"));
    CHECK(build_reason_prompt({}, tail, "E -> W (use 1) -> C (use 3) -> Y (use 5)", base) ==
          read_golden("tot_reason.txt"));
}

TEST_CASE("prompt builders reject mismatched inputs") {
    const TemplateBase& base = TemplateBase::bundled();
    const Instance tail = tail_instance();
    CHECK_THROWS_AS((void)build_prompt(PromptKind::Base, {}, tail, base), DomainError);
    CHECK_THROWS_AS((void)build_prompt(PromptKind::Cot, {}, tail, base), DomainError);
    CHECK_THROWS_AS((void)build_prompt(PromptKind::TotGenerate, {}, tail, base), DomainError);
    CHECK_THROWS_AS((void)build_prompt(PromptKind::TotReason, {}, tail, base), DomainError);
    CHECK_THROWS_AS((void)build_state_prompt(PromptKind::Base, "chain: A ->"), DomainError);
}

TEST_CASE("prompt kind, method, and policy names round-trip") {
    CHECK(prompt_kind_name(PromptKind::Base) == "base");
    CHECK(prompt_kind_name(PromptKind::Cot) == "cot");
    CHECK(prompt_kind_name(PromptKind::TotInit) == "tot_init");
    CHECK(prompt_kind_name(PromptKind::TotGenerate) == "tot_generate");
    CHECK(prompt_kind_name(PromptKind::TotEvaluate) == "tot_evaluate");
    CHECK(prompt_kind_name(PromptKind::TotLink) == "tot_link");
    CHECK(prompt_kind_name(PromptKind::TotReason) == "tot_reason");

    CHECK(parse_method("base") == EvalMethod::Base);
    CHECK(parse_method("cot") == EvalMethod::Cot);
    CHECK(parse_method("tot") == EvalMethod::Tot);
    CHECK(!parse_method("magic").has_value());
    CHECK(method_name(EvalMethod::Tot) == "tot");

    for (const char* name : {"fiveshot_13571", "tenshot", "fiveshot_separate"}) {
        const auto policy = parse_fewshot_policy(name);
        REQUIRE(policy.has_value());
        CHECK(fewshot_policy_name(*policy) == name);
    }
    CHECK(!parse_fewshot_policy("zeroshot").has_value());
}

TEST_CASE("parse_answer prefers the final answer marker and falls back to scanning") {
    CHECK(parse_answer("Answer: lower-right") == Relation::LowerRight);
    CHECK(parse_answer("Answer: above\nno wait\nAnswer: lower-left") == Relation::LowerLeft);
    CHECK(parse_answer("ANSWER: Upper-Left.") == Relation::UpperLeft);
    // No marker: last relation mention wins, two-word mentions included.
    CHECK(parse_answer("the answer should be lower right, I think") == Relation::LowerRight);
    CHECK(parse_answer("above the lower right corner") == Relation::LowerRight);
    // Marker line without a relation falls back to the whole completion.
    CHECK(parse_answer("it is upper-left\nAnswer: unclear") == Relation::UpperLeft);
    CHECK(!parse_answer("The story does not provide direct spatial information.").has_value());
    CHECK(!parse_answer("").has_value());
}

TEST_CASE("parse_verdict takes the last verdict word") {
    CHECK(parse_verdict("sure").verdict == Verdict::Sure);
    CHECK(parse_verdict("sure").parsed);
    CHECK(parse_verdict("The chain can reach the target.\nlikely").verdict == Verdict::Likely);
    CHECK(parse_verdict("it's likely, no - sure!").verdict == Verdict::Sure);
    CHECK(parse_verdict("IMPOSSIBLE").verdict == Verdict::Impossible);
    CHECK(parse_verdict("IMPOSSIBLE").parsed);
    const VerdictParse silent = parse_verdict("no verdict here");
    CHECK(silent.verdict == Verdict::Impossible);
    CHECK(!silent.parsed);
    CHECK(!parse_verdict("").parsed);
}

TEST_CASE("parse_proposals validates candidate chains against the parent state") {
    SearchState parent;
    parent.chain = {ChainLink{"G", std::nullopt}};
    parent.target = "Q";
    parent.unused = {{1, "C", "R"}, {2, "L", "Q"}, {3, "C", "J"}, {4, "J", "E"}, {5, "T", "A"},
                     {6, "G", "N"}, {7, "G", "A"}, {8, "L", "Y"}, {9, "R", "Q"}, {10, "Y", "T"}};

    // Raw generation output in its original shape, stray leading word and all.
    const std::string completion =
        "The last object within the chain is G, and the unused relations 6. G-N and 7. G-A "
        "include G. \n"
        "relation  chain: G -> N (use 6) ->, target: Q, unused: 1. C-R, 2. L-Q, 3. C-J, "
        "4. J-E, 5. T-A, 7. G-A, 8. L-Y, 9. R-Q, 10. Y-T. \n"
        "chain: G -> A (use 7) ->, target: Q, unused: 1. C-R, 2. L-Q, 3. C-J, 4. J-E, 5. T-A, "
        "6. G-N, 8. L-Y, 9. R-Q, 10. Y-T.";
    const auto proposals = parse_proposals(completion, parent);
    REQUIRE(proposals.size() == 2);
    CHECK(proposals[0].used_index == 6);
    CHECK(proposals[0].next_object == "N");
    CHECK(proposals[1].used_index == 7);
    CHECK(proposals[1].next_object == "A");

    // Hallucinated objects, reused indices, multi-step jumps, duplicates, and prose
    // lines are all dropped.
    const std::string noisy =
        "chain: G -> Z (use 6) ->, target: Q, unused: .\n"
        "chain: G -> N (use 99) ->, target: Q, unused: .\n"
        "chain: G -> A (use 7) -> T (use 5) ->, target: Q, unused: .\n"
        "chain: G -> N (use 6) ->, target: Q, unused: .\n"
        "chain: G -> N (use 6) ->, target: Q, unused: .\n"
        "nothing to see here\n";
    const auto filtered = parse_proposals(noisy, parent);
    REQUIRE(filtered.size() == 1);
    CHECK(filtered[0].used_index == 6);
    CHECK(filtered[0].next_object == "N");

    CHECK(parse_proposals("", parent).empty());
}

TEST_CASE("MockCompleter applies the first matching rule") {
    MockCompleter mock;
    mock.add_rule({"alpha", "beta"}, "both");
    mock.add_rule({"alpha"}, "just alpha");
    CHECK(mock.complete({"alpha and beta here", 0.0}) == "both");
    CHECK(mock.complete({"alpha only", 0.0}) == "just alpha");
    CHECK_THROWS_AS((void)mock.complete({"gamma", 0.0}), BackendError);
    CHECK(mock.calls() == 3);
    mock.set_default("fallback");
    CHECK(mock.complete({"gamma", 0.0}) == "fallback");
    CHECK(mock.calls() == 4);
}

TEST_CASE("BudgetedCompleter stops at the budget") {
    MockCompleter mock;
    mock.set_default("ok");
    BudgetedCompleter limited(mock, 2);
    CHECK(limited.complete({"a", 0.0}) == "ok");
    CHECK(limited.complete({"b", 0.0}) == "ok");
    CHECK_THROWS_WITH_AS((void)limited.complete({"c", 0.0}),
                         doctest::Contains("request budget exhausted (2)"), BackendError);
    CHECK(limited.used() == 2);
    CHECK(limited.is_mock());

    BudgetedCompleter unlimited(mock, std::nullopt);
    for (int i = 0; i < 5; ++i) CHECK(unlimited.complete({"x", 0.0}) == "ok");
    CHECK(unlimited.used() == 5);
}

TEST_CASE("load_backend_config reads mock and http configurations") {
    const std::string mock_path = write_temp(
        "stepgame-test-mock.json",
        R"({"kind":"mock","mock_rules":[{"needles":["ping"],"response":"pong"}],)"
        R"("mock_default":"dunno"})");
    const BackendConfig mock_config = load_backend_config(mock_path);
    CHECK(mock_config.kind == "mock");
    REQUIRE(mock_config.mock_rules.size() == 1);
    CHECK(mock_config.mock_rules[0].needles == std::vector<std::string>{"ping"});
    CHECK(mock_config.mock_rules[0].response == "pong");
    REQUIRE(mock_config.mock_default.has_value());
    const auto completer = make_completer(mock_config);
    CHECK(completer->is_mock());
    CHECK(completer->complete({"ping me", 0.0}) == "pong");
    CHECK(completer->complete({"other", 0.0}) == "dunno");

    const std::string http_path = write_temp(
        "stepgame-test-http.json",
        R"({"kind":"http","endpoint":"http://127.0.0.1:1/v1/chat/completions",)"
        R"("model":"m1","temperature_base":0.1,"temperature_tot":0.9,"max_in_flight":2,)"
        R"("retry":{"max_attempts":2,"backoff_ms":5},"api_key_env":"OTHER_KEY"})");
    const BackendConfig http_config = load_backend_config(http_path);
    CHECK(http_config.kind == "http");
    CHECK(http_config.model == "m1");
    CHECK(http_config.temperature_base == doctest::Approx(0.1));
    CHECK(http_config.temperature_tot == doctest::Approx(0.9));
    CHECK(http_config.max_in_flight == 2);
    CHECK(http_config.retry.max_attempts == 2);
    CHECK(http_config.retry.backoff_ms == 5);
    CHECK(http_config.api_key_env == "OTHER_KEY");
}

TEST_CASE("load_backend_config rejects bad files and embedded credentials") {
    CHECK_THROWS_AS((void)load_backend_config("/nonexistent/config.json"), ParseError);

    const std::string bad_json = write_temp("stepgame-test-bad.json", "{nope");
    CHECK_THROWS_AS((void)load_backend_config(bad_json), ParseError);

    const std::string not_object = write_temp("stepgame-test-array.json", "[1,2]");
    CHECK_THROWS_AS((void)load_backend_config(not_object), ParseError);

    const std::string bad_kind = write_temp("stepgame-test-kind.json", R"({"kind":"carrier"})");
    CHECK_THROWS_AS((void)load_backend_config(bad_kind), ParseError);

    // Credentials in the file are refused outright, pointing at the environment.
    const std::string with_key = write_temp(
        "stepgame-test-key.json",
        R"({"kind":"http","endpoint":"http://h/v1","model":"m","api_key":"sk-123"})");
    CHECK_THROWS_WITH_AS((void)load_backend_config(with_key),
                         doctest::Contains("environment"), ParseError);
    const std::string with_token = write_temp("stepgame-test-token.json",
                                              R"({"kind":"mock","token":"t"})");
    CHECK_THROWS_AS((void)load_backend_config(with_token), ParseError);

    const std::string no_endpoint = write_temp("stepgame-test-noend.json",
                                               R"({"kind":"http","model":"m"})");
    CHECK_THROWS_AS((void)load_backend_config(no_endpoint), ParseError);
    const std::string no_model = write_temp("stepgame-test-nomodel.json",
                                            R"({"kind":"http","endpoint":"http://h/v1"})");
    CHECK_THROWS_AS((void)load_backend_config(no_model), ParseError);

    const std::string zero_flight = write_temp("stepgame-test-flight.json",
                                               R"({"kind":"mock","max_in_flight":0})");
    CHECK_THROWS_AS((void)load_backend_config(zero_flight), ParseError);
}

TEST_CASE("HttpCompleter speaks the chat protocol against a loopback server") {
    struct ServerState {
        std::mutex mutex;
        std::string mode = "ok";
        int calls = 0;
        std::string last_auth;
        nlohmann::json last_body;
    } state;

    const auto handler = [&state](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard<std::mutex> lock(state.mutex);
        ++state.calls;
        state.last_auth = req.get_header_value("Authorization");
        state.last_body = nlohmann::json::parse(req.body, nullptr, false);
        if (state.mode == "ok") {
            res.status = 200;
            res.set_content(R"({"choices":[{"message":{"content":"Answer: above"}}]})",
                            "application/json");
        } else if (state.mode == "retry") {
            if (state.calls == 1) {
                res.status = 429;
                res.set_content("slow down", "text/plain");
            } else {
                res.status = 200;
                res.set_content(R"({"choices":[{"text":"Answer: below"}]})",
                                "application/json");
            }
        } else if (state.mode == "auth") {
            res.status = 401;
            res.set_content("who are you", "text/plain");
        } else if (state.mode == "overflow") {
            res.status = 400;
            res.set_content(R"({"error":{"code":"context_length_exceeded"}})",
                            "application/json");
        } else if (state.mode == "malformed") {
            res.status = 200;
            res.set_content("certainly not json", "text/plain");
        } else {  // persistent server failure
            res.status = 500;
            res.set_content("boom", "text/plain");
        }
    };

    httplib::Server server;
    server.Post("/v1/chat/completions", handler);
    server.Post("/custom/complete", handler);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread listener([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    const auto set_mode = [&state](const std::string& mode) {
        std::lock_guard<std::mutex> lock(state.mutex);
        state.mode = mode;
        state.calls = 0;
    };

    setenv("STEPGAME_TEST_KEY", "k3y-for-tests", 1);
    BackendConfig config;
    config.kind = "http";
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.model = "test-model";
    config.api_key_env = "STEPGAME_TEST_KEY";
    config.retry.max_attempts = 3;
    config.retry.backoff_ms = 1;

    {
        HttpCompleter completer(config);
        CHECK(completer.complete({"What is up?", 0.25}) == "Answer: above");
        std::lock_guard<std::mutex> lock(state.mutex);
        CHECK(state.last_auth == "Bearer k3y-for-tests");
        CHECK(state.last_body["model"] == "test-model");
        CHECK(state.last_body["temperature"] == doctest::Approx(0.25));
        REQUIRE(state.last_body["messages"].size() == 1);
        CHECK(state.last_body["messages"][0]["role"] == "user");
        CHECK(state.last_body["messages"][0]["content"] == "What is up?");
    }

    {
        // An explicit path in the endpoint is respected.
        BackendConfig custom = config;
        custom.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/custom/complete";
        HttpCompleter completer(custom);
        set_mode("ok");
        CHECK(completer.complete({"hi", 0.0}) == "Answer: above");
    }

    {
        set_mode("retry");
        HttpCompleter completer(config);
        CHECK(completer.complete({"again", 0.0}) == "Answer: below");
        std::lock_guard<std::mutex> lock(state.mutex);
        CHECK(state.calls == 2);  // 429 then success
    }

    {
        set_mode("auth");
        HttpCompleter completer(config);
        CHECK_THROWS_WITH_AS((void)completer.complete({"x", 0.0}),
                             doctest::Contains("authentication failed"), BackendError);
    }

    {
        set_mode("overflow");
        HttpCompleter completer(config);
        CHECK_THROWS_AS((void)completer.complete({"x", 0.0}), ContextOverflowError);
    }

    {
        set_mode("malformed");
        HttpCompleter completer(config);
        CHECK_THROWS_WITH_AS((void)completer.complete({"x", 0.0}),
                             doctest::Contains("malformed completion response"), BackendError);
    }

    {
        set_mode("fail");
        BackendConfig twice = config;
        twice.retry.max_attempts = 2;
        HttpCompleter completer(twice);
        CHECK_THROWS_WITH_AS((void)completer.complete({"x", 0.0}),
                             doctest::Contains("after 2 attempts"), BackendError);
        std::lock_guard<std::mutex> lock(state.mutex);
        CHECK(state.calls == 2);
    }

    server.stop();
    listener.join();

    unsetenv("STEPGAME_ABSENT_KEY");
    BackendConfig missing = config;
    missing.api_key_env = "STEPGAME_ABSENT_KEY";
    CHECK_THROWS_WITH_AS(HttpCompleter{missing}, doctest::Contains("STEPGAME_ABSENT_KEY"),
                         BackendError);

    // An https endpoint pointed at a dead loopback port is a clean backend error
    // either way: without TLS support the scheme is rejected outright, with TLS
    // support every connection attempt fails until the retry budget runs out.
    BackendConfig https = config;
    https.endpoint = "https://127.0.0.1:1/v1";
    https.retry.max_attempts = 1;
    HttpCompleter secure(https);
    CHECK_THROWS_AS((void)secure.complete({"x", 0.0}), BackendError);
}

TEST_CASE("resolve_fewshot serves each policy deterministically") {
    std::vector<Instance> pool;
    for (int k = 1; k <= 10; ++k) {
        for (int copy = 0; copy < 6; ++copy) {
            Instance inst;
            inst.id = "p" + std::to_string(k) + "-" + std::to_string(copy);
            inst.k = k;
            pool.push_back(inst);
        }
    }

    const auto five = resolve_fewshot(FewShotPolicyKind::Fiveshot13571, pool, 4, 11);
    REQUIRE(five.size() == 5);
    CHECK(five[0].k == 1);
    CHECK(five[1].k == 3);
    CHECK(five[2].k == 5);
    CHECK(five[3].k == 7);
    CHECK(five[4].k == 10);

    const auto ten = resolve_fewshot(FewShotPolicyKind::Tenshot, pool, 4, 11);
    REQUIRE(ten.size() == 10);
    for (int k = 1; k <= 10; ++k) CHECK(ten[static_cast<std::size_t>(k - 1)].k == k);

    const auto separate = resolve_fewshot(FewShotPolicyKind::FiveshotSeparate, pool, 4, 11);
    REQUIRE(separate.size() == 5);
    for (const Instance& inst : separate) CHECK(inst.k == 4);
    for (std::size_t i = 0; i < separate.size(); ++i) {
        for (std::size_t j = i + 1; j < separate.size(); ++j) {
            CHECK(separate[i].id != separate[j].id);
        }
    }

    // Same seed, same picks; the seed participates in selection.
    const auto again = resolve_fewshot(FewShotPolicyKind::FiveshotSeparate, pool, 4, 11);
    for (std::size_t i = 0; i < separate.size(); ++i) CHECK(separate[i].id == again[i].id);

    std::vector<Instance> sparse(pool.begin(), pool.begin() + 6);  // only k = 1
    CHECK_THROWS_WITH_AS((void)resolve_fewshot(FewShotPolicyKind::Fiveshot13571, sparse, 1, 0),
                         doctest::Contains("no instance with k=3"), DomainError);
    CHECK_THROWS_WITH_AS(
        (void)resolve_fewshot(FewShotPolicyKind::FiveshotSeparate, pool, 11, 0),
        doctest::Contains("need 5"), DomainError);
}

TEST_CASE("prediction JSON lines round-trip and validate") {
    Prediction p;
    p.id = "clean-k3-s1-0";
    p.k = 3;
    p.method = "base";
    p.prediction = Relation::Above;
    p.gold = Relation::Below;
    p.digest = "00000000000000aa";
    CHECK(prediction_to_json_line(p) ==
          R"({"id":"clean-k3-s1-0","k":3,"method":"base","prediction":"above",)"
          R"("gold":"below","raw_completion_digest":"00000000000000aa"})");

    Prediction failed;
    failed.id = "x";
    failed.k = 1;
    failed.method = "tot";
    failed.gold = Relation::Left;
    failed.digest = "cbf29ce484222325";
    failed.error = "chain search failed: no candidate extensions";
    const std::string line = prediction_to_json_line(failed);
    CHECK(line.find("\"prediction\":null") != std::string::npos);
    CHECK(line.find("\"error\":\"chain search failed") != std::string::npos);

    std::istringstream stream(prediction_to_json_line(p) + "\n\n" + line + "\n");
    const auto parsed = read_predictions(stream, "t");
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].id == p.id);
    CHECK(parsed[0].k == 3);
    CHECK(parsed[0].method == "base");
    CHECK(parsed[0].prediction == Relation::Above);
    CHECK(parsed[0].gold == Relation::Below);
    CHECK(parsed[0].digest == p.digest);
    CHECK(parsed[0].error.empty());
    CHECK(!parsed[1].prediction.has_value());
    CHECK(parsed[1].error == failed.error);
}

TEST_CASE("read_predictions reports malformed lines precisely") {
    const auto expect_throw = [](const std::string& text, const std::string& needle) {
        std::istringstream stream(text);
        CHECK_THROWS_WITH_AS((void)read_predictions(stream, "pred"),
                             doctest::Contains(needle.c_str()), ParseError);
    };
    expect_throw("{oops", "pred:1: invalid JSON");
    expect_throw(R"({"id":"a","method":"base","prediction":"above","gold":"below"})",
                 "missing integer \"k\"");
    expect_throw(R"({"id":"a","k":2,"prediction":"sideways","gold":"below"})",
                 "unknown prediction \"sideways\"");
    expect_throw(R"({"id":"a","k":2,"prediction":"above"})", "missing \"gold\"");
    expect_throw(R"({"id":"a","k":2,"prediction":"above","gold":"nowhere"})",
                 "unknown gold label \"nowhere\"");
    // The offending line number is 1-based and counts blank lines.
    expect_throw("\n\n{oops", "pred:3");

    std::istringstream defaults(R"({"k":4,"gold":"left"})");
    const auto parsed = read_predictions(defaults, "pred");
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].id == "line-1");
    CHECK(parsed[0].method == "unknown");
    CHECK(!parsed[0].prediction.has_value());
}

TEST_CASE("score_predictions aggregates per k with exact percent rounding") {
    const auto make = [](const char* id, int k, std::optional<Relation> pred, Relation gold) {
        Prediction p;
        p.id = id;
        p.k = k;
        p.method = "base";
        p.prediction = pred;
        p.gold = gold;
        return p;
    };
    const std::vector<Prediction> predictions = {
        make("a", 1, Relation::Above, Relation::Above),
        make("b", 1, Relation::Below, Relation::Above),
        make("c", 3, std::nullopt, Relation::Left),
    };
    const ScoreTable table = score_predictions(predictions);
    CHECK(table.per_k.at(1).correct == 1);
    CHECK(table.per_k.at(1).total == 2);
    CHECK(table.per_k.at(1).accuracy() == doctest::Approx(50.0));
    CHECK(table.per_k.at(3).accuracy() == doctest::Approx(0.0));
    CHECK(table.overall.correct == 1);
    CHECK(table.overall.total == 3);
    CHECK(table.overall.accuracy() == doctest::Approx(33.3));
    CHECK(table.unparseable == 1);
    CHECK(table.wrong_by_relation.at(Relation::Above) == 1);
    CHECK(table.wrong_by_relation.at(Relation::Left) == 1);

    CHECK(format_score_table(table) ==
          "k             1      3\n"
          "accuracy   50.0    0.0\n"
          "overall 33.3 (1/3), unparseable 1\n"
          "wrong by gold relation: above=1 left=1\n");

    const auto j = nlohmann::json::parse(score_table_to_json(table));
    CHECK(j["per_k"]["1"]["correct"] == 1);
    CHECK(j["per_k"]["1"]["total"] == 2);
    CHECK(j["per_k"]["1"]["accuracy"] == doctest::Approx(50.0));
    CHECK(j["overall"]["accuracy"] == doctest::Approx(33.3));
    CHECK(j["unparseable"] == 1);
    CHECK(j["wrong_by_relation"]["above"] == 1);

    // Exact two-thirds rounds half up to one decimal.
    std::vector<Prediction> thirds;
    for (int i = 0; i < 3; ++i) {
        thirds.push_back(make("t", 2, i < 2 ? std::optional<Relation>(Relation::Above)
                                            : std::nullopt,
                              Relation::Above));
    }
    CHECK(score_predictions(thirds).overall.accuracy() == doctest::Approx(66.7));
}

TEST_CASE("run_eval base method scores a mock backend") {
    const TemplateBase& base = TemplateBase::bundled();
    GenerationSpec spec;
    spec.k = 2;
    spec.n = 4;
    spec.seed = 9;
    spec.split = Split::Clean;
    std::vector<Instance> instances;
    for (GeneratedInstance& gen : generate(spec, base)) {
        instances.push_back(std::move(gen.instance));
    }

    MockCompleter mock;
    mock.set_default("Answer: lower-left");
    EvalOptions options;
    options.method = EvalMethod::Base;
    options.seed = 31;
    const EvalResult result = run_eval(instances, base, mock, options);

    REQUIRE(result.predictions.size() == 4);
    CHECK(result.requests_used == 4);
    CHECK(mock.calls() == 4);
    const std::string expected_digest = hex64(fnv1a64("Answer: lower-left"));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < result.predictions.size(); ++i) {
        const Prediction& p = result.predictions[i];
        CHECK(p.id == instances[i].id);
        CHECK(p.method == "base");
        CHECK(p.prediction == Relation::LowerLeft);
        CHECK(p.gold == instances[i].label);
        CHECK(p.digest == expected_digest);
        CHECK(p.error.empty());
        if (p.prediction == p.gold) ++correct;
    }
    CHECK(result.table.overall.total == 4);
    CHECK(result.table.overall.correct == correct);
}

TEST_CASE("run_eval requires a budget for live backends and enforces it") {
    struct FakeLive : Completer {
        std::string complete(const CompletionRequest&) override { return "Answer: above"; }
        bool is_mock() const override { return false; }
    } live;
    const TemplateBase& base = TemplateBase::bundled();
    std::vector<Instance> instances = {worked_instance()};
    EvalOptions options;
    options.method = EvalMethod::Base;

    CHECK_THROWS_WITH_AS((void)run_eval(instances, base, live, options),
                         doctest::Contains("request budget"), DomainError);
    MockCompleter mock;
    mock.set_default("Answer: above");
    CHECK_THROWS_AS((void)run_eval(instances, base, mock, live, options), DomainError);

    options.max_requests = 1;
    const EvalResult budgeted = run_eval(instances, base, live, options);
    CHECK(budgeted.requests_used == 1);
    CHECK(budgeted.predictions[0].prediction == Relation::Above);

    // Two instances against a budget of one: the second records the exhaustion.
    instances.push_back(tail_instance());
    instances[1].label = Relation::UpperRight;
    const EvalResult exhausted = run_eval(instances, base, live, options);
    CHECK(exhausted.requests_used == 1);
    CHECK(exhausted.predictions[0].error.empty());
    CHECK(exhausted.predictions[1].error.find("request budget exhausted (1)") !=
          std::string::npos);
    CHECK(!exhausted.predictions[1].prediction.has_value());
}

TEST_CASE("run_eval records few-shot resolution failures per instance") {
    const TemplateBase& base = TemplateBase::bundled();
    Instance inst = worked_instance();
    inst.k = 11;  // internal pool only spans k = 1..10
    EvalOptions options;
    options.method = EvalMethod::Base;
    options.fewshot = FewShotPolicyKind::FiveshotSeparate;
    MockCompleter mock;
    mock.set_default("Answer: above");

    const EvalResult result = run_eval({inst}, base, mock, options);
    REQUIRE(result.predictions.size() == 1);
    CHECK(result.predictions[0].error.find("need 5") != std::string::npos);
    CHECK(!result.predictions[0].prediction.has_value());
    CHECK(result.predictions[0].digest == hex64(fnv1a64("")));
    CHECK(mock.calls() == 0);
}

TEST_CASE("run_eval tot method replays a scripted search transcript") {
    const TemplateBase& base = TemplateBase::bundled();
    Instance inst = worked_instance();

    MockCompleter chain_mock;
    // Initialization: echo the canonical opening state.
    chain_mock.add_rule({"Provided with a sequence"},
                        "chain: W ->, target: E, unused: 1. Q-O, 2. Q-M, 3. X-E, 4. O-E, "
                        "5. W-M.");
    // One proposal per depth, walking W -> M -> Q -> O -> E.
    chain_mock.add_rule(
        {"enumerate all potential expansions",
         "Input: chain: W -> M (use 5) -> Q (use 2) -> O (use 1) ->,"},
        "chain: W -> M (use 5) -> Q (use 2) -> O (use 1) -> E (use 4) ->, target: E, "
        "unused: 3. X-E.");
    chain_mock.add_rule(
        {"enumerate all potential expansions", "Input: chain: W -> M (use 5) -> Q (use 2) ->,"},
        "chain: W -> M (use 5) -> Q (use 2) -> O (use 1) ->, target: E, unused: 3. X-E, "
        "4. O-E.");
    chain_mock.add_rule(
        {"enumerate all potential expansions", "Input: chain: W -> M (use 5) ->,"},
        "chain: W -> M (use 5) -> Q (use 2) ->, target: E, unused: 1. Q-O, 3. X-E, 4. O-E.");
    chain_mock.add_rule(
        {"enumerate all potential expansions", "Input: chain: W ->,"},
        "The last object within the chain is W, and the unused relation 5. W-M includes W.\n"
        "chain: W -> M (use 5) ->, target: E, unused: 1. Q-O, 2. Q-M, 3. X-E, 4. O-E.");
    // Evaluation: the completed chain is sure, everything else likely.
    chain_mock.add_rule({"Evaluate whether", "E (use 4) ->,"},
                        "The chain already reaches the target object E.\nsure");
    chain_mock.add_rule({"Evaluate whether"},
                        "There are unused relations that include the current object.\nlikely");
    // Final chain construction.
    chain_mock.add_rule({"build the linking chain"},
                        "Steps:\n"
                        "chain: W ->, target: E, unused: 1. Q-O, 2. Q-M, 3. X-E, 4. O-E, "
                        "5. W-M.\n"
                        "Answer: W -> M (use 5) -> Q (use 2) -> O (use 1) -> E (use 4)");

    MockCompleter reason_mock;
    reason_mock.add_rule(
        {"Linking chain: W -> M (use 5) -> Q (use 2) -> O (use 1) -> E (use 4)"},
        "Let's suppose W is at (0,0). We can analyze the relation of W to E by following "
        "the linking chain and considering the relations provided in the story step by "
        "step.\n"
        "We've reached E. So, considering W(0,0) and E(-4,1), W is to the lower-right of "
        "E.\n"
        "Answer: lower-right");

    EvalOptions options;
    options.method = EvalMethod::Tot;
    options.seed = 5;
    const EvalResult result = run_eval({inst}, base, chain_mock, reason_mock, options);

    REQUIRE(result.predictions.size() == 1);
    const Prediction& p = result.predictions[0];
    CHECK(p.error.empty());
    CHECK(p.method == "tot");
    CHECK(p.prediction == Relation::LowerRight);
    CHECK(p.gold == Relation::LowerRight);
    CHECK(result.table.overall.correct == 1);

    // 1 init + 4 proposals + 4 states x 3 verdict samples + 1 link on the chain
    // backend; the single reasoning completion goes to the other backend.
    CHECK(chain_mock.calls() == 18);
    CHECK(reason_mock.calls() == 1);
    CHECK(result.requests_used == 19);
}

TEST_CASE("run_eval tot method surfaces search failures in the prediction record") {
    const TemplateBase& base = TemplateBase::bundled();
    Instance inst;
    inst.id = "stranded";
    inst.story = {"A is above B.", "C is positioned below D."};
    inst.question = "What is the relation of the agent A to the agent D?";
    inst.label = Relation::Above;
    inst.k = 2;
    inst.split = Split::Noise;

    MockCompleter mock;
    mock.add_rule({"Provided with a sequence"}, "chain: A ->, target: D, unused: 1. A-B, "
                                                "2. C-D.");
    mock.add_rule({"enumerate all potential expansions", "Input: chain: A ->,"},
                  "chain: A -> B (use 1) ->, target: D, unused: 2. C-D.");
    mock.add_rule({"enumerate all potential expansions"}, "no further expansions");
    mock.add_rule({"Evaluate whether"}, "impossible");

    EvalOptions options;
    options.method = EvalMethod::Tot;
    const EvalResult result = run_eval({inst}, base, mock, options);
    REQUIRE(result.predictions.size() == 1);
    CHECK(!result.predictions[0].prediction.has_value());
    CHECK(result.predictions[0].error.find("chain search failed") != std::string::npos);
    CHECK(result.table.unparseable == 1);
}

TEST_CASE("run_eval cot method answers through the reasoning backend") {
    const TemplateBase& base = TemplateBase::bundled();
    GenerationSpec spec;
    spec.k = 3;
    spec.n = 2;
    spec.seed = 21;
    spec.split = Split::Clean;
    std::vector<Instance> instances;
    for (GeneratedInstance& gen : generate(spec, base)) {
        instances.push_back(std::move(gen.instance));
    }

    MockCompleter mock;
    mock.add_rule({"Reasoning"}, "thinking...\nAnswer: upper-right");
    EvalOptions options;
    options.method = EvalMethod::Cot;
    options.fewshot = FewShotPolicyKind::Tenshot;
    const EvalResult result = run_eval(instances, base, mock, options);
    REQUIRE(result.predictions.size() == 2);
    for (const Prediction& p : result.predictions) {
        CHECK(p.method == "cot");
        CHECK(p.prediction == Relation::UpperRight);
    }
    CHECK(result.requests_used == 2);
}
