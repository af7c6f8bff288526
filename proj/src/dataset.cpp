#include "stepgame/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "stepgame/errors.hpp"
#include "stepgame/rng.hpp"
#include "stepgame/solver.hpp"

namespace stepgame {
namespace {

using nlohmann::ordered_json;

std::string make_id(const GenerationSpec& spec, int index) {
    return split_name(spec.split) + "-k" + std::to_string(spec.k) + "-s" +
           std::to_string(spec.seed) + "-" + std::to_string(index);
}

// One story fact plus which chain hop it renders (-1 for distractors).
struct Fact {
    RelationTriple triple;
    int hop = -1;
};

}  // namespace

std::string split_name(Split s) { return s == Split::Clean ? "clean" : "noise"; }

std::vector<GeneratedInstance> generate(const GenerationSpec& spec, const TemplateBase& base) {
    if (spec.k < 1) throw DomainError("k must be >= 1");
    if (spec.n < 1) throw DomainError("n must be >= 1");
    if (spec.split == Split::Noise && spec.noise_extra < 1) {
        throw DomainError("noise_extra must be >= 1 for the noise split");
    }
    std::vector<std::string> alphabet;
    for (const char c : spec.alphabet) {
        const std::string token(1, c);
        if (std::find(alphabet.begin(), alphabet.end(), token) != alphabet.end()) {
            throw DomainError("alphabet contains duplicate object \"" + token + "\"");
        }
        alphabet.push_back(token);
    }
    const std::size_t chain_objects = static_cast<std::size_t>(spec.k) + 1;
    const std::size_t distractors =
        spec.split == Split::Noise ? static_cast<std::size_t>(spec.noise_extra) : 0;
    if (alphabet.size() < chain_objects + distractors) {
        throw DomainError("alphabet too small: need at least " +
                          std::to_string(chain_objects + distractors) + " objects, have " +
                          std::to_string(alphabet.size()));
    }

    std::vector<GeneratedInstance> out;
    out.reserve(static_cast<std::size_t>(spec.n));
    for (int index = 0; index < spec.n; ++index) {
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));

        std::vector<std::string> letters = alphabet;
        rng.shuffle(letters);
        const std::vector<std::string> chain(letters.begin(),
                                             letters.begin() + static_cast<long>(chain_objects));
        std::size_t fresh = chain_objects;  // next unused letter for distractor objects

        // Chain hops: relations[j] is the relation of chain[j+1] to chain[j].
        std::vector<Relation> relations;
        std::vector<Fact> facts;
        Delta end_position{0, 0};
        for (int j = 0; j < spec.k; ++j) {
            const Relation r = kStoryRelations[rng.below(8)];
            relations.push_back(r);
            const Offset o = offset(r);
            end_position = Delta{end_position.dx + o.dx, end_position.dy + o.dy};
            // Either endpoint may be the sentence subject; flip keeps both readings common.
            if (rng.below(2) == 0) {
                facts.push_back(Fact{RelationTriple{chain[j + 1], r, chain[j]}, j});
            } else {
                facts.push_back(Fact{RelationTriple{chain[j], inverse(r), chain[j + 1]}, j});
            }
        }

        // Distractors: a dangling branch off a chain object, or a pair of fresh objects
        // disconnected from everything. Neither can form a second path or a contradiction.
        for (std::size_t d = 0; d < distractors; ++d) {
            // A pair consumes two fresh letters; allow it only when every later
            // distractor can still get at least one.
            const bool pair_fits = letters.size() - fresh >= 2 + (distractors - d - 1);
            const bool pair = pair_fits && rng.below(2) == 1;
            const Relation r = kStoryRelations[rng.below(8)];
            if (pair) {
                const std::string& a = letters[fresh++];
                const std::string& b = letters[fresh++];
                facts.push_back(Fact{RelationTriple{a, r, b}, -1});
            } else {
                const std::string& fresh_object = letters[fresh++];
                const std::string& anchor = chain[rng.below(chain_objects)];
                if (rng.below(2) == 0) {
                    facts.push_back(Fact{RelationTriple{fresh_object, r, anchor}, -1});
                } else {
                    facts.push_back(Fact{RelationTriple{anchor, r, fresh_object}, -1});
                }
            }
        }

        std::vector<std::size_t> order(facts.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);

        GeneratedInstance gen;
        gen.instance.id = make_id(spec, index);
        gen.instance.k = spec.k;
        gen.instance.split = spec.split;
        gen.chain_sentence_indices.assign(static_cast<std::size_t>(spec.k), 0);
        for (std::size_t position = 0; position < order.size(); ++position) {
            const Fact& fact = facts[order[position]];
            gen.instance.story.push_back(render_any(fact.triple, base, rng));
            if (fact.hop >= 0) {
                gen.chain_sentence_indices[static_cast<std::size_t>(fact.hop)] = position + 1;
            }
        }

        const Query q = spec.reverse_query ? Query{chain.back(), chain.front()}
                                           : Query{chain.front(), chain.back()};
        gen.instance.question = render_question(q, base);
        // chain[i] sits at the sum of the first i hop offsets, chain[0] at (0,0).
        gen.instance.label = spec.reverse_query ? classify_delta(end_position)
                                                : classify_delta(Delta{-end_position.dx,
                                                                       -end_position.dy});
        gen.chain_objects = chain;
        if (spec.reverse_query) {
            std::reverse(gen.chain_objects.begin(), gen.chain_objects.end());
            std::reverse(gen.chain_sentence_indices.begin(), gen.chain_sentence_indices.end());
        }
        out.push_back(std::move(gen));
    }
    return out;
}

IngestResult read_instances(std::istream& in, const std::string& origin) {
    IngestResult result;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = origin + ":" + std::to_string(line_number);
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError(where + ": invalid JSON: " + e.what());
        }
        if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
        if (!j.contains("story") || !j["story"].is_array()) {
            throw ParseError(where + ": missing \"story\" array");
        }
        if (!j.contains("question") || !j["question"].is_string()) {
            throw ParseError(where + ": missing \"question\" string");
        }
        if (!j.contains("label") || !j["label"].is_string()) {
            throw ParseError(where + ": missing \"label\" string");
        }

        Instance inst;
        for (const auto& s : j["story"]) {
            if (!s.is_string()) throw ParseError(where + ": story entries must be strings");
            inst.story.push_back(s.get<std::string>());
        }
        inst.question = j["question"].get<std::string>();

        const std::string label = j["label"].get<std::string>();
        if (auto parsed = parse_relation_name(label)) {
            inst.label = *parsed;
        } else if (auto normalized = normalize_relation_word(label)) {
            throw ParseError(where + ": unknown label \"" + label + "\" (did you mean \"" +
                             relation_name(*normalized) + "\"?)");
        } else {
            throw ParseError(where + ": unknown label \"" + label + "\"");
        }

        if (j.contains("k")) {
            if (!j["k"].is_number_integer()) throw ParseError(where + ": \"k\" must be an integer");
            inst.k = j["k"].get<int>();
            if (inst.k < 1) throw ParseError(where + ": \"k\" must be >= 1");
        } else {
            inst.k = static_cast<int>(inst.story.size());
        }

        if (j.contains("split")) {
            const std::string split = j["split"].get<std::string>();
            if (split == "clean") {
                inst.split = Split::Clean;
            } else if (split == "noise") {
                inst.split = Split::Noise;
            } else {
                throw ParseError(where + ": unknown split \"" + split + "\"");
            }
        } else {
            inst.split = inst.story.size() > static_cast<std::size_t>(inst.k) ? Split::Noise
                                                                              : Split::Clean;
        }

        inst.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                          : "line-" + std::to_string(line_number);
        result.instances.push_back(std::move(inst));
    }
    if (result.instances.empty()) {
        result.warnings.push_back(origin + ": no instances found");
    }
    return result;
}

IngestResult read_instances_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open \"" + path + "\"");
    return read_instances(in, path);
}

std::string instance_to_json_line(const Instance& inst) {
    ordered_json j;
    j["id"] = inst.id;
    j["story"] = inst.story;
    j["question"] = inst.question;
    j["label"] = relation_name(inst.label);
    j["k"] = inst.k;
    j["split"] = split_name(inst.split);
    return j.dump();
}

void write_instances(std::ostream& out, const std::vector<Instance>& instances) {
    for (const Instance& inst : instances) out << instance_to_json_line(inst) << '\n';
}

InstanceAnalysis analyze_instance(const Instance& inst, const TemplateBase& base) {
    InstanceAnalysis analysis;
    for (std::size_t i = 0; i < inst.story.size(); ++i) {
        const MatchOutcome outcome = base.match_sentence(inst.story[i]);
        if (std::holds_alternative<NoMatch>(outcome)) {
            ++analysis.unmatched;
            continue;
        }
        if (const auto* ambiguous = std::get_if<AmbiguousMatch>(&outcome)) {
            // Ambiguity can only arise among non-correct templates (the loader rejects
            // duplicate correct patterns), so the sentence's meaning is unrecoverable.
            std::string ids;
            for (const std::string& id : ambiguous->candidate_ids) {
                if (!ids.empty()) ids += ",";
                ids += id;
            }
            analysis.flags.push_back(SentenceFlag{i + 1, ids, TemplateStatus::Irreparable});
            analysis.faulty = true;
            analysis.irreparable = true;
            continue;
        }
        const auto& matched = std::get<Matched>(outcome);
        const Template* t = base.find(matched.template_id);
        if (t == nullptr || t->status == TemplateStatus::Correct) continue;
        analysis.flags.push_back(SentenceFlag{i + 1, t->id, t->status});
        analysis.faulty = true;
        if (t->status == TemplateStatus::Irreparable) analysis.irreparable = true;
    }
    return analysis;
}

ValidationReport validate(const std::vector<Instance>& instances, const TemplateBase& base) {
    ValidationReport report;
    report.total = instances.size();
    std::map<int, std::pair<std::size_t, std::size_t>> by_k;  // k -> (faulty, total)
    for (const Instance& inst : instances) {
        const InstanceAnalysis analysis = analyze_instance(inst, base);
        auto& [faulty_k, total_k] = by_k[inst.k];
        ++total_k;
        report.unmatched_sentences += analysis.unmatched;
        if (analysis.faulty) {
            ++report.faulty;
            ++faulty_k;
        }
        if (analysis.irreparable) ++report.faulty_irreparable;
        for (const SentenceFlag& flag : analysis.flags) {
            std::stringstream ids(flag.template_ids);
            std::string id;
            while (std::getline(ids, id, ',')) ++report.per_template[id];
        }
    }
    for (const auto& [k, counts] : by_k) {
        // Integer arithmetic keeps the half-up rounding exact for every count.
        const std::size_t scaled = (20000 * counts.first + counts.second) / (2 * counts.second);
        report.per_k[k] = static_cast<double>(scaled) / 100.0;
    }
    return report;
}

std::string report_to_json(const ValidationReport& report) {
    ordered_json j;
    j["total"] = report.total;
    j["faulty"] = report.faulty;
    j["faulty_irreparable"] = report.faulty_irreparable;
    j["unmatched_sentences"] = report.unmatched_sentences;
    j["per_k"] = ordered_json::object();
    for (const auto& [k, percent] : report.per_k) j["per_k"][std::to_string(k)] = percent;
    j["per_template"] = ordered_json::object();
    for (const auto& [id, count] : report.per_template) j["per_template"][id] = count;
    return j.dump();
}

double round2_half_up(double value) {
    // The epsilon absorbs binary representation error in values like 55.555 that sit
    // a hair below their decimal reading; inputs here are ratios of small integers.
    const double scaled = value * 100.0;
    const double rounded = value >= 0 ? std::floor(scaled + 0.5 + 1e-9)
                                      : std::ceil(scaled - 0.5 - 1e-9);
    return rounded / 100.0;
}

std::optional<RectifyPolicy> parse_policy(const std::string& name) {
    if (name == "regenerate") return RectifyPolicy::Regenerate;
    if (name == "drop_faulty") return RectifyPolicy::DropFaulty;
    if (name == "repair_label") return RectifyPolicy::RepairLabel;
    return std::nullopt;
}

std::string policy_name(RectifyPolicy p) {
    switch (p) {
        case RectifyPolicy::Regenerate: return "regenerate";
        case RectifyPolicy::DropFaulty: return "drop_faulty";
        case RectifyPolicy::RepairLabel: return "repair_label";
    }
    return "regenerate";
}

RectifyResult rectify(const std::vector<Instance>& instances, const TemplateBase& base,
                      RectifyPolicy policy, std::uint64_t seed) {
    RectifyResult result;
    for (std::size_t index = 0; index < instances.size(); ++index) {
        const Instance& inst = instances[index];
        const InstanceAnalysis analysis = analyze_instance(inst, base);
        if (!analysis.faulty) {
            result.instances.push_back(inst);
            continue;
        }

        std::string all_ids;
        for (const SentenceFlag& flag : analysis.flags) {
            if (!all_ids.empty()) all_ids += ",";
            all_ids += flag.template_ids;
        }

        if (analysis.irreparable) {
            result.log.push_back(RectifyLogEntry{inst.id, "drop_irreparable", all_ids,
                                                 "story contains irreparable sentence(s)"});
            continue;
        }

        switch (policy) {
            case RectifyPolicy::DropFaulty: {
                result.log.push_back(RectifyLogEntry{inst.id, "drop_faulty", all_ids,
                                                     "story contains repairable sentence(s)"});
                break;
            }
            case RectifyPolicy::Regenerate: {
                Instance fixed = inst;
                Rng rng(derive_seed(seed, index));
                for (const SentenceFlag& flag : analysis.flags) {
                    const std::string& sentence = fixed.story[flag.sentence_index - 1];
                    const auto outcome = base.match_sentence(sentence);
                    const auto& matched = std::get<Matched>(outcome);
                    const Template* t = base.find(matched.template_id);
                    const RelationTriple intended{matched.slot1, t->intended_relation,
                                                  matched.slot2};
                    fixed.story[flag.sentence_index - 1] = render_any(intended, base, rng);
                    result.log.push_back(RectifyLogEntry{
                        inst.id, "regenerate", flag.template_ids,
                        "sentence " + std::to_string(flag.sentence_index) +
                            " re-rendered as " + relation_name(t->intended_relation) + "(" +
                            matched.slot1 + "," + matched.slot2 + ")"});
                }
                result.instances.push_back(std::move(fixed));
                break;
            }
            case RectifyPolicy::RepairLabel: {
                // Extraction already reads repairable templates by their actual relation,
                // so solving the story as written yields the repaired gold label.
                const RelationGraph graph = build_graph(inst.story, base, /*strict=*/false);
                Query q;
                try {
                    q = base.parse_question(inst.question);
                } catch (const DomainError& e) {
                    result.log.push_back(
                        RectifyLogEntry{inst.id, "drop_unanswerable", all_ids, e.what()});
                    break;
                }
                const SolveResult solved = solve(graph, q);
                if (!solved.answered) {
                    result.log.push_back(RectifyLogEntry{inst.id, "drop_unanswerable", all_ids,
                                                         "no path from " + q.from_object +
                                                             " to " + q.to_object});
                    break;
                }
                if (solved.answer == inst.label) {
                    // Label already matches the story's actual reading: nothing to repair.
                    result.instances.push_back(inst);
                    break;
                }
                Instance fixed = inst;
                fixed.label = solved.answer;
                result.log.push_back(RectifyLogEntry{
                    inst.id, "repair_label", all_ids,
                    "label " + relation_name(inst.label) + " -> " +
                        relation_name(solved.answer)});
                result.instances.push_back(std::move(fixed));
                break;
            }
        }
    }
    return result;
}

std::string rectify_log_line(const RectifyLogEntry& e) {
    return e.instance_id + " | " + e.action + " | " + e.template_ids + " | " + e.detail;
}

}  // namespace stepgame
