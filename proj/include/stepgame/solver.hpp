#pragma once

// Exact solver: parses a story into a relation graph, finds the path between the two
// queried objects, accumulates unit offsets along it, and classifies the resulting
// displacement. Also renders the step-by-step coordinate trace for that walk.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stepgame/relations.hpp"
#include "stepgame/templates.hpp"

namespace stepgame {

struct Edge {
    std::string head;
    Relation relation = Relation::Overlap;  // head is `relation` of tail
    std::string tail;
    std::size_t sentence_index = 0;  // 1-based story position
};

struct RelationGraph {
    std::vector<Edge> edges;
    std::map<std::string, std::vector<std::size_t>> adjacency;  // object -> edge indices
    std::vector<std::string> warnings;  // sentences skipped in lenient mode

    std::size_t node_count() const { return adjacency.size(); }
    bool has_object(const std::string& name) const { return adjacency.count(name) > 0; }
};

// Extracts one edge per story sentence. strict=true turns any unusable sentence
// (no match, irreparable template, degenerate triple) into a DomainError naming the
// 1-based sentence index; strict=false skips it and records a warning.
RelationGraph build_graph(const std::vector<std::string>& story, const TemplateBase& base,
                          bool strict = true);

// One hop of a walk: the object stepped onto, its relation to the previous object,
// and the 1-based index of the sentence that justifies the hop.
struct PathStep {
    std::string object;
    Relation relation_to_previous = Relation::Overlap;
    std::size_t sentence_index = 0;
};

// BFS shortest path from q.from_object to q.to_object, deterministic (neighbors in
// sentence order). nullopt when the objects are not connected or absent.
std::optional<std::vector<PathStep>> find_path(const RelationGraph& graph, const Query& q);

struct SolveResult {
    bool answered = false;
    Relation answer = Relation::Overlap;
    std::vector<PathStep> path;   // empty when unanswerable
    Delta to_position;            // position of q.to_object with q.from_object at (0,0)
};

// Places q.from_object at (0,0), walks to q.to_object, classifies the query delta.
// Unanswerable (disconnected) is a result value, not an exception.
SolveResult solve(const RelationGraph& graph, const Query& q);

struct TraceStep {
    std::size_t sentence_index = 0;
    std::string object;               // the object reached by this step
    Relation mapped_relation = Relation::Overlap;  // relation of `object` to the previous one
    Delta position_before;
    Delta position_after;
    std::string link_text;            // "Start with W. According to 5, \"...\""
    std::string map_text;             // "This means M is to the upper-left of W."
    std::string calc_text;            // "M= W+ offset(upper-left) = (0,0)+(-1,1)=(-1,1). ..."
};

struct Trace {
    Query query;
    Delta start_position;  // always (0,0)
    std::vector<TraceStep> steps;
    Relation final_answer = Relation::Overlap;
    std::string preamble;    // "Let's suppose W is at (0,0). ..."
    std::string conclusion;  // "We've reached E. So, considering ..." + "Answer: ..."
    std::string text;        // the full rendered block
};

// Renders the trace for a precomputed path (used both by the solver and by
// chain-search reasoning over a found linking chain).
Trace trace_from_path(const std::vector<std::string>& story, const Query& q,
                      const std::vector<PathStep>& path);

// find_path + trace_from_path; DomainError when the query is unanswerable.
Trace cot_trace(const std::vector<std::string>& story, const RelationGraph& graph, const Query& q);

std::string trace_to_json(const Trace& t);

// Full coordinate propagation over the component of `root`; reports the first edge that
// disagrees with already-assigned coordinates, if any (two derivation paths that imply
// different positions for one object). Detection only; nothing is resolved.
struct Contradiction {
    std::string object;
    std::size_t sentence_index = 0;  // the closing edge's sentence
    std::string detail;
};
std::optional<Contradiction> detect_contradiction(const RelationGraph& graph,
                                                  const std::string& root);

}  // namespace stepgame
