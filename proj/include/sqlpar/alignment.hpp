#pragma once

// String-match schema linking and clause-level segments.
//
// A schema element is matched by the longest n-gram of its name tokens that
// occurs in the question; a value by exact token equality. A clause's segment
// is the shortest question window holding one occurrence of every matched
// element of the clause (leftmost window on ties).

#include <algorithm>
#include <array>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqlpar/ast.hpp"
#include "sqlpar/schema.hpp"

namespace sqlpar {

enum class ElementKind { Column, Table, Value };

inline std::string_view element_kind_name(ElementKind k) {
    switch (k) {
        case ElementKind::Column: return "column";
        case ElementKind::Table: return "table";
        case ElementKind::Value: return "value";
    }
    return "?";
}

/// Where one element occurs: every window [s, s + length) for s in starts.
struct ElementMatch {
    ElementKind kind = ElementKind::Column;
    int ref = -1;  // column/table id; for values the bound token index
    std::string text;
    int length = 0;
    std::vector<int> starts;

    bool linked() const { return !starts.empty(); }
};

/// All occurrences of the longest n-gram of `name` present in the question.
inline ElementMatch match_name(std::span<const std::string> question, std::span<const std::string> name) {
    ElementMatch m;
    const int n = static_cast<int>(question.size());
    for (int L = static_cast<int>(name.size()); L >= 1 && m.starts.empty(); --L) {
        for (int s = 0; s + L <= n; ++s) {
            for (int off = 0; off + L <= static_cast<int>(name.size()); ++off) {
                if (std::equal(question.begin() + s, question.begin() + s + L, name.begin() + off)) {
                    m.starts.push_back(s);
                    break;
                }
            }
        }
        if (!m.starts.empty()) m.length = L;
    }
    return m;
}

/// Exact occurrences of a value's token sequence.
inline ElementMatch match_value(std::span<const std::string> question, std::span<const std::string> value) {
    ElementMatch m;
    const int n = static_cast<int>(question.size()), L = static_cast<int>(value.size());
    if (L == 0) return m;
    for (int s = 0; s + L <= n; ++s)
        if (std::equal(question.begin() + s, question.begin() + s + L, value.begin())) m.starts.push_back(s);
    if (!m.starts.empty()) m.length = L;
    return m;
}

/// The distinct elements under one clause subtree, with their matches.
inline std::vector<ElementMatch> clause_elements(const AstNode& clause, std::span<const std::string> question,
                                                 const SchemaDef& schema, const Grammar& g) {
    LeafRefs leaves;
    collect_leaves(clause, g, leaves);
    std::vector<ElementMatch> out;
    auto seen = [&](ElementKind k, int ref, const std::string& text) {
        for (const auto& e : out)
            if (e.kind == k && (k == ElementKind::Value ? e.text == text : e.ref == ref)) return true;
        return false;
    };
    for (int c : leaves.columns) {
        if (c < 0 || seen(ElementKind::Column, c, {})) continue;
        auto m = match_name(question, schema.column(c).tokens);
        m.kind = ElementKind::Column;
        m.ref = c;
        m.text = schema.column(c).name;
        out.push_back(std::move(m));
    }
    for (int t : leaves.tables) {
        if (seen(ElementKind::Table, t, {})) continue;
        auto m = match_name(question, schema.table(t).tokens);
        m.kind = ElementKind::Table;
        m.ref = t;
        m.text = schema.table(t).name;
        out.push_back(std::move(m));
    }
    for (const AstNode* v : leaves.values) {
        if (seen(ElementKind::Value, -1, v->leaf_text)) continue;
        auto m = match_value(question, split_ws(v->leaf_text));
        m.kind = ElementKind::Value;
        m.ref = v->leaf_ref;
        m.text = v->leaf_text;
        out.push_back(std::move(m));
    }
    return out;
}

struct TokenLink {
    int token = 0;
    ElementKind kind = ElementKind::Column;
    int ref = -1;
    ClauseKind clause = ClauseKind::Select;
    bool operator==(const TokenLink&) const = default;
};

struct TokenAlignment {
    std::vector<TokenLink> links;
};

/// Links the leftmost occurrence of every element in every clause.
inline TokenAlignment token_align(std::span<const std::string> question, const AstNode& gold,
                                  const SchemaDef& schema, const Grammar& g) {
    TokenAlignment ta;
    for (auto k : kClauseOrder) {
        for (const auto& e : clause_elements(clause_subtree(gold, g, k), question, schema, g)) {
            if (!e.linked()) continue;
            for (int i = e.starts.front(); i < e.starts.front() + e.length; ++i)
                ta.links.push_back({i, e.kind, e.ref, k});
        }
    }
    return ta;
}

struct ClauseSegment {
    ClauseKind clause = ClauseKind::Select;
    int begin = 0;
    int end = 0;
    bool whole_question = true;
    int elements = 0;  // distinct elements in the clause
    int linked = 0;    // of which matched the question

    int length(int question_len) const { return whole_question ? question_len : end - begin; }
    /// The clause mentions something but none of it was found in the question.
    bool missing() const { return elements > 0 && linked == 0; }
};

/// Shortest window [begin, end) containing one occurrence of every element;
/// leftmost on ties. Elements must all be linked.
inline std::pair<int, int> shortest_cover(const std::vector<const ElementMatch*>& es, int n) {
    int best_b = 0, best_e = n + 1;
    for (int s = 0; s < n; ++s) {
        int end = s;
        bool ok = true;
        for (const auto* e : es) {
            auto it = std::lower_bound(e->starts.begin(), e->starts.end(), s);
            if (it == e->starts.end()) {
                ok = false;
                break;
            }
            end = std::max(end, *it + e->length);
        }
        if (!ok) break;
        if (end - s < best_e - best_b) {
            best_b = s;
            best_e = end;
        }
    }
    return {best_b, best_e};
}

using ClauseSegments = std::array<ClauseSegment, kClauseCount>;

inline ClauseSegments clause_segments(std::span<const std::string> question, const AstNode& gold,
                                      const SchemaDef& schema, const Grammar& g) {
    ClauseSegments out;
    for (auto k : kClauseOrder) {
        auto& seg = out[static_cast<std::size_t>(clause_index(k))];
        seg.clause = k;
        auto elems = clause_elements(clause_subtree(gold, g, k), question, schema, g);
        std::vector<const ElementMatch*> linked;
        for (const auto& e : elems)
            if (e.linked()) linked.push_back(&e);
        seg.elements = static_cast<int>(elems.size());
        seg.linked = static_cast<int>(linked.size());
        if (linked.empty()) continue;
        auto [b, e] = shortest_cover(linked, static_cast<int>(question.size()));
        seg.begin = b;
        seg.end = e;
        seg.whole_question = false;
    }
    return out;
}

/// True when some clause with elements found none of them in the question.
inline bool is_fallback_pair(const ClauseSegments& segs) {
    return std::any_of(segs.begin(), segs.end(), [](const ClauseSegment& s) { return s.missing(); });
}

/// 1/len(S) inside the segment, 0 outside.
inline std::vector<double> prior_distribution(const ClauseSegment& seg, int question_len) {
    if (question_len <= 0) throw std::invalid_argument("prior over an empty question");
    std::vector<double> p(static_cast<std::size_t>(question_len), 0.0);
    const int b = seg.whole_question ? 0 : seg.begin;
    const int e = seg.whole_question ? question_len : seg.end;
    if (b < 0 || e > question_len || b >= e) throw std::invalid_argument("segment outside the question");
    const double w = 1.0 / static_cast<double>(e - b);
    for (int i = b; i < e; ++i) p[static_cast<std::size_t>(i)] = w;
    return p;
}

using AlignmentPrior = std::array<std::vector<double>, kClauseCount>;

inline AlignmentPrior alignment_prior(const ClauseSegments& segs, int question_len) {
    AlignmentPrior p;
    for (std::size_t k = 0; k < kClauseCount; ++k) p[k] = prior_distribution(segs[k], question_len);
    return p;
}

struct AlignmentStats {
    std::size_t pairs = 0;
    std::size_t fallback_pairs = 0;
    double fallback_fraction = 0;
    /// Per clause: segment length -> count, over clauses with a proper segment.
    std::array<std::map<int, std::size_t>, kClauseCount> length_histogram;
};

inline AlignmentStats alignment_stats(std::span<const ClauseSegments> corpus) {
    if (corpus.empty()) throw std::invalid_argument("alignment stats over an empty corpus");
    AlignmentStats st;
    for (const auto& segs : corpus) {
        ++st.pairs;
        if (is_fallback_pair(segs)) ++st.fallback_pairs;
        for (std::size_t k = 0; k < kClauseCount; ++k)
            if (!segs[k].whole_question) ++st.length_histogram[k][segs[k].end - segs[k].begin];
    }
    st.fallback_fraction = static_cast<double>(st.fallback_pairs) / static_cast<double>(st.pairs);
    return st;
}

/// Clause-by-token matrix of prior probabilities, then one `link` row per token link.
inline void write_alignment_matrix(std::ostream& os, std::span<const std::string> question,
                                   const ClauseSegments& segs, const TokenAlignment& ta) {
    os << "clause";
    for (const auto& t : question) os << ',' << t;
    os << '\n';
    const auto prior = alignment_prior(segs, static_cast<int>(question.size()));
    for (auto k : kClauseOrder) {
        os << clause_name(k);
        for (double v : prior[static_cast<std::size_t>(clause_index(k))]) os << ',' << v;
        os << '\n';
    }
    for (const auto& l : ta.links)
        os << "link," << l.token << ',' << element_kind_name(l.kind) << ',' << l.ref << ',' << clause_name(l.clause)
           << '\n';
}

}  // namespace sqlpar
