#include "stepgame/templates.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "stepgame/errors.hpp"

namespace stepgame {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Collapses whitespace runs, strips one terminal '.', '?' or '!', splits into words.
std::vector<std::string> tokenize(const std::string& text) {
    std::string t = trim(text);
    if (!t.empty() && (t.back() == '.' || t.back() == '?' || t.back() == '!')) t.pop_back();
    std::vector<std::string> words;
    std::istringstream in(t);
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (const char c : line) {
        if (c == '|') {
            fields.push_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(trim(current));
    return fields;
}

std::optional<TemplateStatus> parse_status(const std::string& s) {
    if (s == "correct") return TemplateStatus::Correct;
    if (s == "repairable") return TemplateStatus::Repairable;
    if (s == "irreparable") return TemplateStatus::Irreparable;
    return std::nullopt;
}

// A template's pattern reduced to its comparable word shape: literal words plus
// slot-position markers. Two templates with the same shape match the same sentences.
std::string shape_key(const Template& t) {
    std::string key;
    for (const auto& tok : t.tokens) {
        if (tok.kind == Template::Token::Literal) key += tok.word;
        else key += (tok.kind == Template::Token::Slot1) ? "\x01" : "\x02";
        key += '\x1f';
    }
    return key;
}

}  // namespace

std::string status_name(TemplateStatus s) {
    switch (s) {
        case TemplateStatus::Correct: return "correct";
        case TemplateStatus::Repairable: return "repairable";
        case TemplateStatus::Irreparable: return "irreparable";
    }
    return "?";
}

TemplateBase TemplateBase::load_from_text(const std::string& text, const std::string& origin) {
    TemplateBase base;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool any_record = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        any_record = true;
        const auto where = origin + ":" + std::to_string(line_no);

        const auto fields = split_fields(stripped);
        if (fields.size() != 5) {
            throw ParseError(where + ": expected 5 '|'-separated fields, got " +
                             std::to_string(fields.size()));
        }
        Template t;
        t.id = fields[0];
        if (t.id.empty()) throw ParseError(where + ": empty template id");

        const bool is_question = (fields[1] == "query");
        if (!is_question) {
            const auto rel = parse_relation_name(fields[1]);
            if (!rel) throw ParseError(where + ": unknown relation '" + fields[1] + "'");
            t.intended_relation = *rel;
        }
        t.is_question = is_question;

        const auto status = parse_status(fields[2]);
        if (!status) throw ParseError(where + ": unknown status '" + fields[2] + "'");
        t.status = *status;

        if (t.status == TemplateStatus::Repairable) {
            const auto actual = parse_relation_name(fields[3]);
            if (!actual) {
                throw ParseError(where + ": repairable template needs an actual_relation, got '" +
                                 fields[3] + "'");
            }
            t.actual_relation = *actual;
        } else if (fields[3] != "-") {
            throw ParseError(where + ": actual_relation must be '-' unless status is repairable");
        }
        if (is_question && t.status != TemplateStatus::Correct) {
            throw ParseError(where + ": question patterns must have status correct");
        }

        t.pattern = fields[4];
        bool has_slot1 = false, has_slot2 = false;
        for (const auto& word : tokenize(t.pattern)) {
            Template::Token tok;
            if (word == "{o1}") {
                tok.kind = Template::Token::Slot1;
                has_slot1 = true;
            } else if (word == "{o2}") {
                tok.kind = Template::Token::Slot2;
                has_slot2 = true;
            } else if (word.find('{') != std::string::npos || word.find('}') != std::string::npos) {
                throw ParseError(where + ": slot markers must be standalone {o1}/{o2} words, got '" +
                                 word + "'");
            } else {
                tok.kind = Template::Token::Literal;
                tok.word = lowercase(word);
                t.anchor_length += tok.word.size();
            }
            t.tokens.push_back(tok);
        }
        if (t.tokens.empty()) throw ParseError(where + ": empty pattern");
        if (t.status != TemplateStatus::Irreparable && (!has_slot1 || !has_slot2)) {
            throw ParseError(where + ": pattern must contain both {o1} and {o2}");
        }

        if (base.by_id_.count(t.id)) throw ParseError(where + ": duplicate template id '" + t.id + "'");
        base.by_id_[t.id] = 0;  // reindexed below
        (is_question ? base.question_ : base.sentence_).push_back(std::move(t));
    }
    if (!any_record) throw ParseError(origin + ": catalog contains no template records");

    base.index();

    // Duplicate-shape templates are tolerated only when every one of them is non-correct:
    // that is the known ambiguous-mapping case, and match reports it as ambiguous.
    std::map<std::string, std::vector<const Template*>> by_shape;
    for (const auto& t : base.sentence_) by_shape[shape_key(t)].push_back(&t);
    for (const auto& [key, group] : by_shape) {
        (void)key;
        if (group.size() < 2) continue;
        std::string ids;
        bool any_correct = false;
        for (const Template* t : group) {
            if (!ids.empty()) ids += ", ";
            ids += t->id;
            any_correct |= (t->status == TemplateStatus::Correct);
        }
        if (any_correct) {
            throw ParseError(origin + ": templates {" + ids +
                             "} share one pattern shape and at least one is correct; "
                             "matching would be ambiguous");
        }
        base.warnings_.push_back("ambiguous non-correct templates share one pattern: {" + ids +
                                 "}; their sentences are treated as irreparable");
    }
    return base;
}

TemplateBase TemplateBase::load_from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open template catalog: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_from_text(buf.str(), path);
}

namespace detail {
const char* embedded_catalog_text();  // defined in the generated catalog_default.cpp
}

const TemplateBase& TemplateBase::bundled() {
    static const TemplateBase base = load_from_text(detail::embedded_catalog_text(), "<bundled>");
    return base;
}

void TemplateBase::index() {
    by_id_.clear();
    correct_by_relation_.clear();
    for (std::size_t i = 0; i < sentence_.size(); ++i) {
        by_id_[sentence_[i].id] = i;
        if (sentence_[i].status == TemplateStatus::Correct) {
            correct_by_relation_[static_cast<int>(sentence_[i].intended_relation)].push_back(
                &sentence_[i]);
        }
    }
    for (std::size_t i = 0; i < question_.size(); ++i) by_id_[question_[i].id] = sentence_.size() + i;
}

const Template* TemplateBase::find(const std::string& id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) return nullptr;
    return it->second < sentence_.size() ? &sentence_[it->second]
                                         : &question_[it->second - sentence_.size()];
}

const std::vector<const Template*>& TemplateBase::correct_for(Relation r) const {
    static const std::vector<const Template*> empty;
    const auto it = correct_by_relation_.find(static_cast<int>(r));
    return it == correct_by_relation_.end() ? empty : it->second;
}

CatalogStats TemplateBase::stats() const {
    CatalogStats s;
    s.total = sentence_.size();
    s.questions = question_.size();
    for (const auto& t : sentence_) {
        switch (t.status) {
            case TemplateStatus::Correct: ++s.correct; break;
            case TemplateStatus::Repairable: ++s.repairable; break;
            case TemplateStatus::Irreparable: ++s.irreparable; break;
        }
    }
    return s;
}

MatchOutcome TemplateBase::match_against(const std::vector<Template>& pool, const std::string& text) {
    const auto words = tokenize(text);
    if (words.empty()) return NoMatch{};

    struct Hit {
        const Template* t;
        std::string slot1, slot2;
    };
    std::vector<Hit> hits;
    for (const auto& t : pool) {
        if (t.tokens.size() != words.size()) continue;
        std::string s1, s2;
        bool ok = true;
        for (std::size_t i = 0; i < words.size() && ok; ++i) {
            const auto& tok = t.tokens[i];
            switch (tok.kind) {
                case Template::Token::Literal:
                    ok = (lowercase(words[i]) == tok.word);
                    break;
                case Template::Token::Slot1:
                    if (s1.empty()) s1 = words[i];
                    else ok = (s1 == words[i]);  // repeated slot must bind consistently
                    break;
                case Template::Token::Slot2:
                    if (s2.empty()) s2 = words[i];
                    else ok = (s2 == words[i]);
                    break;
            }
        }
        if (ok) hits.push_back({&t, std::move(s1), std::move(s2)});
    }
    if (hits.empty()) return NoMatch{};

    std::size_t best = 0;
    for (const auto& h : hits) best = std::max(best, h.t->anchor_length);
    std::vector<const Hit*> winners;
    for (const auto& h : hits) {
        if (h.t->anchor_length == best) winners.push_back(&h);
    }
    if (winners.size() == 1) {
        return Matched{winners[0]->t->id, winners[0]->slot1, winners[0]->slot2};
    }
    AmbiguousMatch amb;
    for (const auto* w : winners) amb.candidate_ids.push_back(w->t->id);
    std::sort(amb.candidate_ids.begin(), amb.candidate_ids.end());
    return amb;
}

MatchOutcome TemplateBase::match_sentence(const std::string& sentence) const {
    return match_against(sentence_, sentence);
}

MatchOutcome TemplateBase::match_question(const std::string& question) const {
    return match_against(question_, question);
}

RelationTriple TemplateBase::extract_relation(const std::string& sentence) const {
    const MatchOutcome outcome = match_sentence(sentence);
    if (std::holds_alternative<NoMatch>(outcome)) {
        throw DomainError("no template matches sentence: \"" + sentence + "\"");
    }
    if (const auto* amb = std::get_if<AmbiguousMatch>(&outcome)) {
        // Equal-anchor ties among non-correct templates are the known shared-pattern case:
        // the sentence's original meaning is unrecoverable, i.e. an irreparable template.
        bool all_non_correct = true;
        for (const auto& id : amb->candidate_ids) {
            const Template* t = find(id);
            all_non_correct &= (t && t->status != TemplateStatus::Correct);
        }
        std::string ids;
        for (const auto& id : amb->candidate_ids) {
            if (!ids.empty()) ids += ", ";
            ids += id;
        }
        if (all_non_correct) {
            throw DomainError("irreparable template (ambiguous candidates: " + ids +
                              ") for sentence: \"" + sentence + "\"");
        }
        throw DomainError("ambiguous match (candidates: " + ids + ") for sentence: \"" + sentence +
                          "\"");
    }
    const auto& m = std::get<Matched>(outcome);
    const Template* t = find(m.template_id);
    if (t->status == TemplateStatus::Irreparable) {
        throw DomainError("irreparable template (" + t->id + ") for sentence: \"" + sentence + "\"");
    }
    const Relation reading = *t->reading();
    if (m.slot1.empty() || m.slot2.empty()) {
        throw DomainError("template " + t->id + " did not bind both objects for sentence: \"" +
                          sentence + "\"");
    }
    if (m.slot1 == m.slot2) {
        throw DomainError("degenerate triple (both slots are '" + m.slot1 + "') in sentence: \"" +
                          sentence + "\"");
    }
    return RelationTriple{m.slot1, reading, m.slot2};
}

Query TemplateBase::parse_question(const std::string& question) const {
    const MatchOutcome outcome = match_question(question);
    if (!std::holds_alternative<Matched>(outcome)) {
        throw DomainError("question does not match any question pattern: \"" + question + "\"");
    }
    const auto& m = std::get<Matched>(outcome);
    if (m.slot1.empty() || m.slot2.empty() || m.slot1 == m.slot2) {
        throw DomainError("question must name two distinct objects: \"" + question + "\"");
    }
    return Query{m.slot1, m.slot2};
}

std::string render(const RelationTriple& triple, const Template& t) {
    if (t.status != TemplateStatus::Correct || t.is_question) {
        throw DomainError("render requires a correct sentence template, got " + t.id);
    }
    if (t.intended_relation != triple.relation) {
        throw DomainError("template " + t.id + " renders " + relation_name(t.intended_relation) +
                          ", not " + relation_name(triple.relation));
    }
    if (triple.head == triple.tail) {
        throw DomainError("degenerate triple: head and tail are both '" + triple.head + "'");
    }
    std::string out = t.pattern;
    for (const auto& [marker, value] :
         {std::pair<std::string, const std::string*>{"{o1}", &triple.head},
          std::pair<std::string, const std::string*>{"{o2}", &triple.tail}}) {
        std::size_t pos = 0;
        while ((pos = out.find(marker, pos)) != std::string::npos) {
            out.replace(pos, marker.size(), *value);
            pos += value->size();
        }
    }
    return out;
}

std::string render_any(const RelationTriple& triple, const TemplateBase& base, Rng& rng) {
    const auto& pool = base.correct_for(triple.relation);
    if (pool.empty()) {
        throw DomainError("no correct templates for relation " + relation_name(triple.relation));
    }
    return render(triple, *rng.pick(pool));
}

std::string render_question(const Query& q, const TemplateBase& base) {
    if (base.question_templates().empty()) throw DomainError("catalog has no question patterns");
    const Template& t = base.question_templates().front();
    std::string out = t.pattern;
    for (const auto& [marker, value] :
         {std::pair<std::string, const std::string*>{"{o1}", &q.from_object},
          std::pair<std::string, const std::string*>{"{o2}", &q.to_object}}) {
        std::size_t pos = 0;
        while ((pos = out.find(marker, pos)) != std::string::npos) {
            out.replace(pos, marker.size(), *value);
            pos += value->size();
        }
    }
    return out;
}

}  // namespace stepgame
