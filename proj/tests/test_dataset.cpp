#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "stepgame/dataset.hpp"
#include "stepgame/errors.hpp"
#include "stepgame/solver.hpp"
#include "stepgame/templates.hpp"
#include "support/oracles.hpp"

using namespace stepgame;

namespace {

std::string dump(const std::vector<GeneratedInstance>& gens) {
    std::string out;
    for (const auto& gen : gens) out += instance_to_json_line(gen.instance) + "\n";
    return out;
}

// Fixture sentences rendered through known-faulty catalog templates. The repairable one
// intends below(J,B) but actually states above(J,B); the irreparable ones cannot be
// read back at all.
Instance repairable_instance(const std::string& id) {
    Instance inst;
    inst.id = id;
    inst.story = {"B is placed at the bottom of J."};
    inst.question = "What is the relation of the agent J to the agent B?";
    inst.label = Relation::Below;  // the generator's intended label, wrong as written
    inst.k = 1;
    return inst;
}

Instance irreparable_instance(const std::string& id) {
    Instance inst;
    inst.id = id;
    inst.story = {"J is to the right and above B at an angle of about 45 degrees."};
    inst.question = "What is the relation of the agent J to the agent B?";
    inst.label = Relation::UpperLeft;
    inst.k = 1;
    return inst;
}

Instance clean_instance(const std::string& id) {
    Instance inst;
    inst.id = id;
    inst.story = {"J is above B."};
    inst.question = "What is the relation of the agent J to the agent B?";
    inst.label = Relation::Above;
    inst.k = 1;
    return inst;
}

}  // namespace

TEST_CASE("generation is bit-identical across runs") {
    GenerationSpec spec;
    spec.k = 5;
    spec.n = 25;
    spec.seed = 42;
    spec.split = Split::Noise;
    const TemplateBase& base = TemplateBase::bundled();
    CHECK(dump(generate(spec, base)) == dump(generate(spec, base)));
}

TEST_CASE("generated labels agree with the brute-force oracle") {
    const TemplateBase& base = TemplateBase::bundled();
    for (const Split split : {Split::Clean, Split::Noise}) {
        for (int k = 1; k <= 6; ++k) {
            GenerationSpec spec;
            spec.k = k;
            spec.n = 10;
            spec.seed = 1000 + static_cast<std::uint64_t>(k);
            spec.split = split;
            for (const GeneratedInstance& gen : generate(spec, base)) {
                CAPTURE(gen.instance.id);
                std::vector<RelationTriple> triples;
                for (const std::string& sentence : gen.instance.story) {
                    triples.push_back(base.extract_relation(sentence));
                }
                const Query q = base.parse_question(gen.instance.question);
                const auto answer = oracle::solve(triples, q.from_object, q.to_object);
                REQUIRE(answer.has_value());
                CHECK(*answer == gen.instance.label);
            }
        }
    }
}

TEST_CASE("generation provenance names the chain and its sentences") {
    const TemplateBase& base = TemplateBase::bundled();
    GenerationSpec spec;
    spec.k = 4;
    spec.n = 8;
    spec.seed = 7;
    spec.split = Split::Noise;
    spec.noise_extra = 3;
    SUBCASE("forward query") {}
    SUBCASE("reverse query") { spec.reverse_query = true; }
    for (const GeneratedInstance& gen : generate(spec, base)) {
        CAPTURE(gen.instance.id);
        CHECK(gen.instance.story.size() == 7);  // k + noise_extra
        REQUIRE(gen.chain_objects.size() == 5);
        REQUIRE(gen.chain_sentence_indices.size() == 4);
        const std::set<std::string> unique(gen.chain_objects.begin(), gen.chain_objects.end());
        CHECK(unique.size() == 5);
        const Query q = base.parse_question(gen.instance.question);
        CHECK(q.from_object == gen.chain_objects.front());
        CHECK(q.to_object == gen.chain_objects.back());
        std::set<std::size_t> used;
        for (std::size_t hop = 0; hop < gen.chain_sentence_indices.size(); ++hop) {
            const std::size_t index = gen.chain_sentence_indices[hop];
            REQUIRE(index >= 1);
            REQUIRE(index <= gen.instance.story.size());
            used.insert(index);
            const RelationTriple triple =
                base.extract_relation(gen.instance.story[index - 1]);
            const std::set<std::string> endpoints{triple.head, triple.tail};
            CHECK(endpoints.count(gen.chain_objects[hop]) == 1);
            CHECK(endpoints.count(gen.chain_objects[hop + 1]) == 1);
        }
        CHECK(used.size() == 4);  // each hop has its own sentence
    }
}

TEST_CASE("clean instances have exactly k sentences") {
    GenerationSpec spec;
    spec.k = 3;
    spec.n = 5;
    spec.seed = 9;
    for (const GeneratedInstance& gen : generate(spec, TemplateBase::bundled())) {
        CHECK(gen.instance.story.size() == 3);
        CHECK(gen.instance.split == Split::Clean);
    }
}

TEST_CASE("generation rejects impossible specs") {
    const TemplateBase& base = TemplateBase::bundled();
    GenerationSpec spec;
    spec.k = 10;
    spec.n = 1;
    spec.split = Split::Noise;
    spec.noise_extra = 20;  // 11 chain + 20 distractors > 26 letters
    CHECK_THROWS_AS(generate(spec, base), DomainError);
    GenerationSpec dup;
    dup.alphabet = "AAB";
    CHECK_THROWS_AS(generate(dup, base), DomainError);
    GenerationSpec zero;
    zero.k = 0;
    CHECK_THROWS_AS(generate(zero, base), DomainError);
}

TEST_CASE("instances round-trip through JSONL") {
    GenerationSpec spec;
    spec.k = 2;
    spec.n = 4;
    spec.seed = 3;
    const auto gens = generate(spec, TemplateBase::bundled());
    std::stringstream stream;
    std::vector<Instance> original;
    for (const auto& gen : gens) original.push_back(gen.instance);
    write_instances(stream, original);
    const IngestResult result = read_instances(stream, "roundtrip");
    REQUIRE(result.instances.size() == original.size());
    for (std::size_t i = 0; i < original.size(); ++i) {
        CHECK(instance_to_json_line(result.instances[i]) ==
              instance_to_json_line(original[i]));
    }
}

TEST_CASE("read_instances diagnoses bad input precisely") {
    const auto read_one = [](const std::string& text) {
        std::stringstream stream(text);
        return read_instances(stream, "test");
    };
    // Near-miss labels point at the canonical spelling.
    CHECK_THROWS_WITH_AS(
        read_one(R"({"story":["J is above B."],"question":"Q?","label":"lower right"})"),
        "test:1: unknown label \"lower right\" (did you mean \"lower-right\"?)", ParseError);
    CHECK_THROWS_AS(read_one(R"({"story":["s"],"question":"q"})"), ParseError);
    CHECK_THROWS_AS(read_one(R"({"question":"q","label":"above"})"), ParseError);
    CHECK_THROWS_AS(read_one("not json"), ParseError);
    CHECK_THROWS_AS(
        read_one(R"({"story":["s"],"question":"q","label":"above","k":0})"), ParseError);

    // k defaults to the story length, split to clean when story size == k.
    const IngestResult inferred =
        read_one(R"({"story":["a","b","c"],"question":"q","label":"left"})");
    REQUIRE(inferred.instances.size() == 1);
    CHECK(inferred.instances[0].k == 3);
    CHECK(inferred.instances[0].split == Split::Clean);
    CHECK(inferred.instances[0].id == "line-1");

    const IngestResult noisy =
        read_one(R"({"story":["a","b","c"],"question":"q","label":"left","k":2})");
    CHECK(noisy.instances[0].split == Split::Noise);

    // Blank lines are skipped; an empty stream warns instead of failing.
    const IngestResult empty = read_one("\n   \n");
    CHECK(empty.instances.empty());
    CHECK(!empty.warnings.empty());
}

TEST_CASE("validate reports exact half-up percentages from integer counts") {
    const TemplateBase& base = TemplateBase::bundled();
    std::vector<Instance> instances;
    for (int i = 0; i < 4; ++i) instances.push_back(clean_instance("c" + std::to_string(i)));
    for (int i = 0; i < 5; ++i) {
        instances.push_back(repairable_instance("r" + std::to_string(i)));
    }
    // 5 faulty of 9 = 55.555...% -> 55.56 exactly, no binary-float drift.
    const ValidationReport report = validate(instances, base);
    CHECK(report.total == 9);
    CHECK(report.faulty == 5);
    CHECK(report.faulty_irreparable == 0);
    CHECK(report.per_k.at(1) == doctest::Approx(55.56).epsilon(1e-12));

    std::vector<Instance> thirds = {clean_instance("a"), clean_instance("b"),
                                    repairable_instance("c")};
    CHECK(validate(thirds, base).per_k.at(1) == doctest::Approx(33.33).epsilon(1e-12));
    std::vector<Instance> two_thirds = {clean_instance("a"), repairable_instance("b"),
                                        repairable_instance("c")};
    CHECK(validate(two_thirds, base).per_k.at(1) == doctest::Approx(66.67).epsilon(1e-12));
}

TEST_CASE("validate counts template hits, irreparable instances, unmatched sentences") {
    const TemplateBase& base = TemplateBase::bundled();
    Instance gibberish = clean_instance("g");
    gibberish.story.push_back("The quick brown fox jumps over the lazy dog.");
    const std::vector<Instance> instances = {clean_instance("c"), repairable_instance("r"),
                                             irreparable_instance("x"), gibberish};
    const ValidationReport report = validate(instances, base);
    CHECK(report.faulty == 2);
    CHECK(report.faulty_irreparable == 1);
    CHECK(report.unmatched_sentences == 1);
    CHECK(report.per_template.at("below-r01") == 1);
    // The ambiguous 45-degrees sentence charges both candidate templates.
    CHECK(report.per_template.count("lower-right-x01") == 1);
    CHECK(report.per_template.count("upper-left-r01") == 1);
    const std::string json = report_to_json(report);
    CHECK(json.find("\"faulty\":2") != std::string::npos);
}

TEST_CASE("round2_half_up rounds half away from zero on decimal readings") {
    CHECK(round2_half_up(55.555) == doctest::Approx(55.56).epsilon(1e-12));
    CHECK(round2_half_up(2.675) == doctest::Approx(2.68).epsilon(1e-12));
    CHECK(round2_half_up(0.125) == doctest::Approx(0.13).epsilon(1e-12));
    CHECK(round2_half_up(-55.555) == doctest::Approx(-55.56).epsilon(1e-12));
    CHECK(round2_half_up(1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(round2_half_up(1.0049) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rectify drop_faulty removes repairable and irreparable instances") {
    const TemplateBase& base = TemplateBase::bundled();
    const std::vector<Instance> instances = {clean_instance("c"), repairable_instance("r"),
                                             irreparable_instance("x")};
    const RectifyResult result = rectify(instances, base, RectifyPolicy::DropFaulty, 0);
    REQUIRE(result.instances.size() == 1);
    CHECK(result.instances[0].id == "c");
    REQUIRE(result.log.size() == 2);
    CHECK(result.log[0].action == "drop_faulty");
    CHECK(result.log[0].instance_id == "r");
    CHECK(result.log[1].action == "drop_irreparable");
    CHECK(result.log[1].instance_id == "x");
    CHECK(rectify_log_line(result.log[0]).find("r | drop_faulty | below-r01 | ") == 0);
}

TEST_CASE("rectify regenerate re-renders the intended relation") {
    const TemplateBase& base = TemplateBase::bundled();
    const std::vector<Instance> instances = {repairable_instance("r"),
                                             irreparable_instance("x")};
    const RectifyResult result = rectify(instances, base, RectifyPolicy::Regenerate, 11);
    REQUIRE(result.instances.size() == 1);
    const Instance& fixed = result.instances[0];
    // The repaired sentence now states the intended below(J,B), matching the label.
    CHECK(base.extract_relation(fixed.story[0]) == RelationTriple{"J", Relation::Below, "B"});
    const RelationGraph graph = build_graph(fixed.story, base);
    const SolveResult solved = solve(graph, base.parse_question(fixed.question));
    REQUIRE(solved.answered);
    CHECK(solved.answer == fixed.label);
    CHECK(validate(result.instances, base).faulty == 0);
}

TEST_CASE("rectify repair_label rewrites the label to the sentence's actual meaning") {
    const TemplateBase& base = TemplateBase::bundled();
    const std::vector<Instance> instances = {repairable_instance("r")};
    const RectifyResult result = rectify(instances, base, RectifyPolicy::RepairLabel, 0);
    REQUIRE(result.instances.size() == 1);
    CHECK(result.instances[0].label == Relation::Above);
    REQUIRE(result.log.size() == 1);
    CHECK(result.log[0].action == "repair_label");
    CHECK(result.log[0].detail == "label below -> above");
}

TEST_CASE("rectify is idempotent under every policy") {
    const TemplateBase& base = TemplateBase::bundled();
    const std::vector<Instance> instances = {clean_instance("c"), repairable_instance("r"),
                                             irreparable_instance("x")};
    for (const RectifyPolicy policy : {RectifyPolicy::Regenerate, RectifyPolicy::DropFaulty,
                                       RectifyPolicy::RepairLabel}) {
        CAPTURE(policy_name(policy));
        const RectifyResult once = rectify(instances, base, policy, 5);
        const RectifyResult twice = rectify(once.instances, base, policy, 5);
        CHECK(twice.log.empty());
        REQUIRE(twice.instances.size() == once.instances.size());
        for (std::size_t i = 0; i < once.instances.size(); ++i) {
            CHECK(instance_to_json_line(twice.instances[i]) ==
                  instance_to_json_line(once.instances[i]));
        }
    }
}

TEST_CASE("split names round-trip") {
    CHECK(split_name(Split::Clean) == "clean");
    CHECK(split_name(Split::Noise) == "noise");
    CHECK(parse_policy("regenerate") == RectifyPolicy::Regenerate);
    CHECK(parse_policy("drop_faulty") == RectifyPolicy::DropFaulty);
    CHECK(parse_policy("repair_label") == RectifyPolicy::RepairLabel);
    CHECK(!parse_policy("explode").has_value());
}
