#include "stepgame/solver.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "json.hpp"
#include "stepgame/errors.hpp"

namespace stepgame {
namespace {

Delta to_delta(const Offset& o) { return Delta{o.dx, o.dy}; }

Delta plus(const Delta& a, const Offset& o) { return Delta{a.dx + o.dx, a.dy + o.dy}; }

// Relation of `next` relative to `cur` when walking the edge from cur to next.
Relation hop_relation(const Edge& e, const std::string& cur) {
    return e.head == cur ? inverse(e.relation) : e.relation;
}

std::string other_end(const Edge& e, const std::string& cur) {
    return e.head == cur ? e.tail : e.head;
}

}  // namespace

RelationGraph build_graph(const std::vector<std::string>& story, const TemplateBase& base,
                          bool strict) {
    RelationGraph g;
    for (std::size_t i = 0; i < story.size(); ++i) {
        RelationTriple triple;
        try {
            triple = base.extract_relation(story[i]);
        } catch (const DomainError& e) {
            if (strict) {
                throw DomainError("sentence " + std::to_string(i + 1) + ": " + e.what());
            }
            g.warnings.push_back("sentence " + std::to_string(i + 1) + " skipped: " + e.what());
            continue;
        }
        const std::size_t edge_index = g.edges.size();
        g.edges.push_back(Edge{triple.head, triple.relation, triple.tail, i + 1});
        g.adjacency[triple.head].push_back(edge_index);
        g.adjacency[triple.tail].push_back(edge_index);
    }
    return g;
}

std::optional<std::vector<PathStep>> find_path(const RelationGraph& graph, const Query& q) {
    if (!graph.has_object(q.from_object)) {
        throw DomainError("unknown object \"" + q.from_object + "\"");
    }
    if (!graph.has_object(q.to_object)) {
        throw DomainError("unknown object \"" + q.to_object + "\"");
    }
    if (q.from_object == q.to_object) return std::vector<PathStep>{};

    // Breadth-first over objects; adjacency lists are in story order, so the first
    // discovery of each object (and hence the reconstructed path) is deterministic.
    std::map<std::string, std::pair<std::string, std::size_t>> parent;  // object -> (prev, edge)
    std::set<std::string> seen{q.from_object};
    std::deque<std::string> queue{q.from_object};
    while (!queue.empty() && !seen.count(q.to_object)) {
        const std::string cur = queue.front();
        queue.pop_front();
        auto it = graph.adjacency.find(cur);
        if (it == graph.adjacency.end()) continue;
        for (const std::size_t edge_index : it->second) {
            const std::string next = other_end(graph.edges[edge_index], cur);
            if (seen.count(next)) continue;
            seen.insert(next);
            parent.emplace(next, std::make_pair(cur, edge_index));
            queue.push_back(next);
        }
    }
    if (!seen.count(q.to_object)) return std::nullopt;

    std::vector<PathStep> path;
    for (std::string cur = q.to_object; cur != q.from_object;) {
        const auto& [prev, edge_index] = parent.at(cur);
        const Edge& e = graph.edges[edge_index];
        path.push_back(PathStep{cur, hop_relation(e, prev), e.sentence_index});
        cur = prev;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

SolveResult solve(const RelationGraph& graph, const Query& q) {
    SolveResult result;
    if (!graph.has_object(q.from_object) || !graph.has_object(q.to_object)) return result;
    auto path = find_path(graph, q);
    if (!path) return result;
    Delta p{0, 0};
    for (const PathStep& step : *path) p = plus(p, offset(step.relation_to_previous));
    result.answered = true;
    result.path = std::move(*path);
    result.to_position = p;
    result.answer = answer_query(Delta{0, 0}, p);
    return result;
}

Trace trace_from_path(const std::vector<std::string>& story, const Query& q,
                      const std::vector<PathStep>& path) {
    Trace t;
    t.query = q;
    t.start_position = Delta{0, 0};
    t.preamble = "Let's suppose " + q.from_object + " is at (0,0). We can connect " +
                 q.from_object + " and " + q.to_object + " using the relations given in the story.";

    Delta pos{0, 0};
    std::string prev = q.from_object;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const PathStep& step = path[i];
        if (step.sentence_index < 1 || step.sentence_index > story.size()) {
            throw DomainError("path step " + std::to_string(i + 1) +
                              " references sentence " + std::to_string(step.sentence_index) +
                              " outside the story");
        }
        TraceStep ts;
        ts.sentence_index = step.sentence_index;
        ts.object = step.object;
        ts.mapped_relation = step.relation_to_previous;
        ts.position_before = pos;
        ts.position_after = plus(pos, offset(step.relation_to_previous));

        const std::string& rel = relation_name(step.relation_to_previous);
        const std::string idx = std::to_string(step.sentence_index);
        ts.link_text = (i == 0 ? "Start with " + q.from_object : "Then search for " + prev) +
                       ". According to " + idx + ", \"" + story[step.sentence_index - 1] + "\"";
        ts.map_text = "This means " + step.object + " is to the " + rel + " of " + prev + ".";
        ts.calc_text = step.object + "= " + prev + "+ offset(" + rel + ") = " +
                       format_point(ts.position_before) + "+" +
                       format_point(to_delta(offset(step.relation_to_previous))) + "=" +
                       format_point(ts.position_after) + ". Therefore, " + step.object +
                       " is at " + format_point(ts.position_after) + ".";

        pos = ts.position_after;
        prev = step.object;
        t.steps.push_back(std::move(ts));
    }

    t.final_answer = answer_query(Delta{0, 0}, pos);
    const std::string& answer = relation_name(t.final_answer);
    t.conclusion = "We've reached " + q.to_object + ". So, considering " + q.from_object +
                   "(0,0) and " + q.to_object + format_point(pos) + ", " + q.from_object +
                   " is to the " + answer + " of " + q.to_object + ".\nAnswer: " + answer;

    t.text = t.preamble;
    for (const TraceStep& ts : t.steps) {
        t.text += "\n" + ts.link_text + " " + ts.map_text + " " + ts.calc_text;
    }
    t.text += "\n" + t.conclusion;
    return t;
}

Trace cot_trace(const std::vector<std::string>& story, const RelationGraph& graph,
                const Query& q) {
    auto path = find_path(graph, q);
    if (!path) {
        throw DomainError("no path from \"" + q.from_object + "\" to \"" + q.to_object + "\"");
    }
    return trace_from_path(story, q, *path);
}

std::string trace_to_json(const Trace& t) {
    nlohmann::ordered_json j;
    j["query"] = {{"from", t.query.from_object}, {"to", t.query.to_object}};
    j["start_position"] = {t.start_position.dx, t.start_position.dy};
    j["steps"] = nlohmann::ordered_json::array();
    for (const TraceStep& s : t.steps) {
        j["steps"].push_back({
            {"sentence_index", s.sentence_index},
            {"object", s.object},
            {"relation", relation_name(s.mapped_relation)},
            {"position_before", {s.position_before.dx, s.position_before.dy}},
            {"position_after", {s.position_after.dx, s.position_after.dy}},
            {"text", s.link_text + " " + s.map_text + " " + s.calc_text},
        });
    }
    j["answer"] = relation_name(t.final_answer);
    j["text"] = t.text;
    return j.dump();
}

std::optional<Contradiction> detect_contradiction(const RelationGraph& graph,
                                                  const std::string& root) {
    if (!graph.has_object(root)) throw DomainError("unknown object \"" + root + "\"");
    std::map<std::string, Delta> pos{{root, Delta{0, 0}}};
    std::deque<std::string> queue{root};
    while (!queue.empty()) {
        const std::string cur = queue.front();
        queue.pop_front();
        auto it = graph.adjacency.find(cur);
        if (it == graph.adjacency.end()) continue;
        for (const std::size_t edge_index : it->second) {
            const Edge& e = graph.edges[edge_index];
            const std::string next = other_end(e, cur);
            const Delta implied = plus(pos.at(cur), offset(hop_relation(e, cur)));
            auto found = pos.find(next);
            if (found == pos.end()) {
                pos.emplace(next, implied);
                queue.push_back(next);
            } else if (!(found->second == implied)) {
                return Contradiction{
                    next, e.sentence_index,
                    next + " is at " + format_point(found->second) + " but sentence " +
                        std::to_string(e.sentence_index) + " implies " + format_point(implied)};
            }
        }
    }
    return std::nullopt;
}

}  // namespace stepgame
