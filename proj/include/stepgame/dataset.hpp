#pragma once

// Dataset plumbing: deterministic instance generation, ingestion of existing JSONL data,
// template-fault validation, and rectification of faulty instances.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stepgame/relations.hpp"
#include "stepgame/templates.hpp"

namespace stepgame {

enum class Split : std::uint8_t { Clean, Noise };
std::string split_name(Split s);

struct Instance {
    std::string id;
    std::vector<std::string> story;
    std::string question;
    Relation label = Relation::Overlap;
    int k = 1;
    Split split = Split::Clean;
};

// Generation provenance: the chain an instance was built from, with the post-shuffle
// 1-based sentence index of each hop. Consumers that only need the data use .instance.
struct GeneratedInstance {
    Instance instance;
    std::vector<std::string> chain_objects;        // k+1 objects, query order o0..ok
    std::vector<std::size_t> chain_sentence_indices;  // k entries, 1-based into story
};

struct GenerationSpec {
    int k = 1;
    int n = 1;
    std::uint64_t seed = 0;
    Split split = Split::Clean;
    int noise_extra = 3;          // distractor sentences appended when split == Noise
    bool reverse_query = false;   // ask relation of o_k to o_0 instead of o_0 to o_k
    std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
};

// Deterministic generation: each instance draws from an independent sub-seed
// derive_seed(spec.seed, index), so output is bit-identical across runs, platforms,
// and serial/parallel schedules. Distractors are dangling branches off chain objects
// or disconnected fresh pairs; they never add a second path and never contradict.
std::vector<GeneratedInstance> generate(const GenerationSpec& spec, const TemplateBase& base);

// --- JSONL I/O ---

struct IngestResult {
    std::vector<Instance> instances;
    std::vector<std::string> warnings;
};

// Reads line-delimited JSON instances. Accepts the original field names
// (story/question/label) and infers k from the story length when the k field is
// absent. Unknown labels and malformed JSON raise ParseError with the line number.
IngestResult read_instances(std::istream& in, const std::string& origin = "<input>");
IngestResult read_instances_file(const std::string& path);

std::string instance_to_json_line(const Instance& inst);
void write_instances(std::ostream& out, const std::vector<Instance>& instances);

// --- validation ---

struct SentenceFlag {
    std::size_t sentence_index = 0;  // 1-based
    std::string template_ids;        // matched non-correct template id(s)
    TemplateStatus status = TemplateStatus::Repairable;  // repairable or irreparable
};

struct InstanceAnalysis {
    bool faulty = false;
    bool irreparable = false;
    std::vector<SentenceFlag> flags;     // non-correct sentences only
    std::size_t unmatched = 0;           // sentences matching no template
};

InstanceAnalysis analyze_instance(const Instance& inst, const TemplateBase& base);

struct ValidationReport {
    std::size_t total = 0;
    std::size_t faulty = 0;
    std::size_t faulty_irreparable = 0;
    std::size_t unmatched_sentences = 0;
    std::map<int, double> per_k;                   // percent faulty, 2 decimals, half-up
    std::map<std::string, std::size_t> per_template;  // non-correct template id -> hits
};

ValidationReport validate(const std::vector<Instance>& instances, const TemplateBase& base);
std::string report_to_json(const ValidationReport& report);

// Rounds to 2 decimals, half away from zero (55.555 -> 55.56).
double round2_half_up(double value);

// --- rectification ---

enum class RectifyPolicy : std::uint8_t { Regenerate, DropFaulty, RepairLabel };
std::optional<RectifyPolicy> parse_policy(const std::string& name);
std::string policy_name(RectifyPolicy p);

struct RectifyLogEntry {
    std::string instance_id;
    std::string action;       // regenerate | drop_faulty | drop_irreparable | repair_label | drop_unanswerable
    std::string template_ids;
    std::string detail;
};

struct RectifyResult {
    std::vector<Instance> instances;
    std::vector<RectifyLogEntry> log;
};

// Applies the policy. Instances containing irreparable sentences are dropped under every
// policy. The operation is idempotent: rectifying its own output changes nothing. The
// seed drives replacement-template choice under the regenerate policy.
RectifyResult rectify(const std::vector<Instance>& instances, const TemplateBase& base,
                      RectifyPolicy policy, std::uint64_t seed);

std::string rectify_log_line(const RectifyLogEntry& e);

}  // namespace stepgame
