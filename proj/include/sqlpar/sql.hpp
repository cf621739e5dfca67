#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqlpar/ast.hpp"
#include "sqlpar/grammar.hpp"
#include "sqlpar/schema.hpp"

namespace sqlpar {

class SqlError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Structured view of one flat query body. It sits between SQL text and the
// AST: parse_sql goes text -> SqlQuery -> AST, render_sql goes the other way.

struct SqlColumn {
    bool star = false;
    int column = -1;
    bool operator==(const SqlColumn&) const = default;
    auto operator<=>(const SqlColumn&) const = default;
};

struct SqlAgg {
    std::string fn;  // empty, max, min, count, sum, avg
    SqlColumn col;
    bool operator==(const SqlAgg&) const = default;
    auto operator<=>(const SqlAgg&) const = default;
};

struct SqlCond {
    SqlAgg lhs;
    std::string op;  // = != > < >= <=
    std::string value;
    int value_token = -1;
    bool operator==(const SqlCond& o) const { return lhs == o.lhs && op == o.op && value == o.value; }
};

struct SqlQuery {
    bool distinct = false;
    std::vector<SqlAgg> select;
    std::vector<int> from;
    std::string connector;  // "and" or "or" when where has several conditions
    std::vector<SqlCond> where;
    std::optional<SqlAgg> group;  // the grouped value unit (fn always empty)
    std::optional<SqlCond> having;
    std::optional<SqlAgg> order;
    bool descending = false;
    std::optional<SqlCond> limit;  // only value/value_token are used
    std::string set_op;            // intersect, except, union, or empty
    std::shared_ptr<SqlQuery> set_body;
};

namespace detail {

inline const std::map<std::string, std::string>& op_by_keyword() {
    static const std::map<std::string, std::string> m = {
        {"EQ", "="}, {"NE", "!="}, {"GT", ">"}, {"LT", "<"}, {"GE", ">="}, {"LE", "<="}};
    return m;
}

inline std::string keyword_for_op(const std::string& op) {
    for (const auto& [k, v] : op_by_keyword())
        if (v == op) return k;
    throw SqlError("unsupported operator '" + op + "'");
}

inline std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

inline bool is_number(const std::string& s) {
    if (s.empty()) return false;
    std::size_t i = s[0] == '-' ? 1 : 0;
    if (i == s.size()) return false;
    bool dot = false;
    for (; i < s.size(); ++i) {
        if (s[i] == '.' && !dot) {
            dot = true;
            continue;
        }
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    }
    return true;
}

/// Rule lookup by label, memoized per grammar.
class RuleIndex {
public:
    explicit RuleIndex(const Grammar& g) : g_(&g) {
        for (const auto& r : g.rules()) by_label_.emplace(g.rule_label(r.id), r.id);
    }
    int operator()(const std::string& label) const {
        auto it = by_label_.find(label);
        if (it == by_label_.end()) throw SqlError("unsupported construct: grammar has no rule `" + label + "`");
        return it->second;
    }
    const Grammar& grammar() const { return *g_; }

private:
    const Grammar* g_;
    std::map<std::string, int> by_label_;
};

inline AstNode make_node(const Grammar& g, int rule, std::vector<AstNode> children) {
    const auto& r = g.rule(rule);
    if (children.size() != r.children.size()) throw SqlError("internal: child count mismatch for " + g.rule_label(rule));
    AstNode n;
    n.node_type = r.lhs;
    n.rule = rule;
    for (std::size_t i = 0; i < children.size(); ++i) {
        if (children[i].node_type != r.children[i])
            throw SqlError("internal: child type mismatch for " + g.rule_label(rule));
        children[i].field = r.child_fields[i];
    }
    n.children = std::move(children);
    return n;
}

inline AstNode make_leaf(int type, int ref, std::string text = {}) {
    AstNode n;
    n.node_type = type;
    n.leaf_ref = ref;
    n.leaf_text = std::move(text);
    return n;
}

inline std::vector<std::string> keywords(const Grammar& g, int rule) {
    std::vector<std::string> out;
    for (const auto& s : g.rule(rule).rhs)
        if (!s.is_node()) out.push_back(s.keyword);
    return out;
}

inline AstNode col_unit_node(const RuleIndex& R, const SqlColumn& c) {
    const auto& g = R.grammar();
    if (c.star) return make_node(g, R("col_unit -> STAR"), {});
    return make_node(g, R("col_unit -> col"), {make_leaf(g.column_slot(), c.column)});
}

inline AstNode val_unit_node(const RuleIndex& R, const SqlColumn& c) {
    return make_node(R.grammar(), R("val_unit -> col_unit"), {col_unit_node(R, c)});
}

inline AstNode agg_node(const RuleIndex& R, const SqlAgg& a) {
    const auto& g = R.grammar();
    auto id = make_node(g, R("agg_id -> " + (a.fn.empty() ? std::string("NO_AGG") : upper(a.fn))), {});
    return make_node(g, R("agg -> agg_id val_unit"), {std::move(id), val_unit_node(R, a.col)});
}

inline AstNode value_node(const Grammar& g, const SqlCond& c) {
    return make_leaf(g.value_slot(), c.value_token, c.value);
}

inline AstNode cond_node(const RuleIndex& R, const SqlCond& c) {
    const auto& g = R.grammar();
    auto cmp = make_node(g, R("cmp -> " + keyword_for_op(c.op)), {});
    return make_node(g, R("cond -> agg cmp val"), {agg_node(R, c.lhs), std::move(cmp), value_node(g, c)});
}

inline std::vector<AstNode> body_clauses(const RuleIndex& R, const SqlQuery& q, bool top);

inline AstNode query_clause_select(const RuleIndex& R, const SqlQuery& q) {
    const auto& g = R.grammar();
    if (q.select.empty()) throw SqlError("empty select list");
    std::string label = "select_clause -> SELECT distinct";
    std::vector<AstNode> kids;
    kids.push_back(make_node(g, R(q.distinct ? "distinct -> DISTINCT" : "distinct -> ALL"), {}));
    for (const auto& a : q.select) {
        label += " agg";
        kids.push_back(agg_node(R, a));
    }
    return make_node(g, R(label), std::move(kids));
}

inline AstNode query_clause_where(const RuleIndex& R, const SqlQuery& q) {
    const auto& g = R.grammar();
    if (q.where.empty()) return make_node(g, R("where_clause -> None"), {});
    std::string label = "where_clause -> WHERE cond";
    std::vector<AstNode> kids;
    kids.push_back(cond_node(R, q.where[0]));
    for (std::size_t i = 1; i < q.where.size(); ++i) {
        label += " " + upper(q.connector) + " cond";
        kids.push_back(cond_node(R, q.where[i]));
    }
    return make_node(g, R(label), std::move(kids));
}

inline AstNode query_clause_group(const RuleIndex& R, const SqlQuery& q) {
    const auto& g = R.grammar();
    if (!q.group) {
        if (q.having) throw SqlError("unsupported construct: having without group by");
        return make_node(g, R("group_clause -> None"), {});
    }
    if (q.having)
        return make_node(g, R("group_clause -> GROUP_BY val_unit HAVING cond"),
                         {val_unit_node(R, q.group->col), cond_node(R, *q.having)});
    return make_node(g, R("group_clause -> GROUP_BY val_unit"), {val_unit_node(R, q.group->col)});
}

inline AstNode query_clause_order(const RuleIndex& R, const SqlQuery& q) {
    const auto& g = R.grammar();
    if (!q.order) {
        if (q.limit) throw SqlError("unsupported construct: limit without order by");
        return make_node(g, R("order_clause -> None"), {});
    }
    auto dir = make_node(g, R(q.descending ? "dir -> DESC" : "dir -> ASC"), {});
    if (q.limit)
        return make_node(g, R("order_clause -> ORDER_BY agg dir LIMIT val"),
                         {agg_node(R, *q.order), std::move(dir), value_node(g, *q.limit)});
    return make_node(g, R("order_clause -> ORDER_BY agg dir"), {agg_node(R, *q.order), std::move(dir)});
}

inline AstNode query_clause_from(const RuleIndex& R, const SqlQuery& q) {
    const auto& g = R.grammar();
    if (q.from.empty()) throw SqlError("missing from clause");
    std::string label = "from_clause -> FROM";
    std::vector<AstNode> kids;
    for (int t : q.from) {
        label += " tab";
        kids.push_back(make_leaf(g.table_slot(), t));
    }
    return make_node(g, R(label), std::move(kids));
}

inline std::vector<AstNode> body_clauses(const RuleIndex& R, const SqlQuery& q, bool top) {
    const auto& g = R.grammar();
    std::vector<AstNode> out;
    out.push_back(query_clause_select(R, q));
    out.push_back(query_clause_where(R, q));
    out.push_back(query_clause_group(R, q));
    out.push_back(query_clause_order(R, q));
    if (top) {
        if (q.set_op.empty()) {
            out.push_back(make_node(g, R("ieu_clause -> None"), {}));
        } else {
            if (!q.set_body) throw SqlError("set operation without a body");
            if (!q.set_body->set_op.empty())
                throw SqlError("unsupported construct: set operations nested beyond one level");
            auto inner = body_clauses(R, *q.set_body, false);
            out.push_back(make_node(g,
                                    R("ieu_clause -> " + upper(q.set_op) +
                                      " select_clause where_clause group_clause order_clause from_clause"),
                                    std::move(inner)));
        }
    }
    out.push_back(query_clause_from(R, q));
    return out;
}

}  // namespace detail

/// SqlQuery -> AST over the shipped grammar's node types.
inline AstNode query_to_ast(const SqlQuery& q, const Grammar& g) {
    detail::RuleIndex R(g);
    auto root = detail::make_node(g, g.root_rule().id, detail::body_clauses(R, q, true));
    stamp_dfs(root);
    return root;
}

namespace detail {

inline std::string lower_keyword(const Grammar& g, int rule, std::size_t i = 0) {
    auto kw = keywords(g, rule);
    if (i >= kw.size()) throw AstError("rule " + g.rule_label(rule) + " has no keyword " + std::to_string(i));
    return to_lower(kw[i]);
}

inline void require_rule(const AstNode& n, const Grammar& g) {
    if (n.rule < 0) throw AstError("dangling slot: node '" + g.node_type(n.node_type).name + "' is unexpanded");
}

inline SqlColumn read_col_unit(const AstNode& n, const Grammar& g) {
    require_rule(n, g);
    if (n.children.empty()) return {true, -1};
    const auto& leaf = n.children[0];
    if (leaf.leaf_ref < 0) throw AstError("dangling slot: unfilled column");
    return {false, leaf.leaf_ref};
}

inline SqlColumn read_val_unit(const AstNode& n, const Grammar& g) {
    require_rule(n, g);
    return read_col_unit(n.children.at(0), g);
}

inline SqlAgg read_agg(const AstNode& n, const Grammar& g) {
    require_rule(n, g);
    const auto& id = n.children.at(0);
    require_rule(id, g);
    auto fn = lower_keyword(g, id.rule);
    if (fn == "no_agg") fn.clear();
    return {fn, read_val_unit(n.children.at(1), g)};
}

inline SqlCond read_value(const AstNode& leaf) {
    if (leaf.leaf_ref < 0 && leaf.leaf_text.empty()) throw AstError("dangling slot: unfilled value");
    SqlCond c;
    c.value = leaf.leaf_text;
    c.value_token = leaf.leaf_ref;
    return c;
}

inline SqlCond read_cond(const AstNode& n, const Grammar& g) {
    require_rule(n, g);
    auto c = read_value(n.children.at(2));
    c.lhs = read_agg(n.children.at(0), g);
    const auto& cmp = n.children.at(1);
    require_rule(cmp, g);
    c.op = op_by_keyword().at(keywords(g, cmp.rule).at(0));
    return c;
}

inline void read_clause(const AstNode& n, const Grammar& g, SqlQuery& q) {
    require_rule(n, g);
    auto kind = g.clause_of(n.node_type);
    const auto& r = g.rule(n.rule);
    if (r.is_none) return;
    switch (*kind) {
        case ClauseKind::Select: {
            const auto& d = n.children.at(0);
            require_rule(d, g);
            q.distinct = lower_keyword(g, d.rule) == "distinct";
            for (std::size_t i = 1; i < n.children.size(); ++i) q.select.push_back(read_agg(n.children[i], g));
            break;
        }
        case ClauseKind::Where: {
            auto kw = keywords(g, n.rule);
            q.connector = kw.size() > 1 ? to_lower(kw[1]) : "";
            for (const auto& c : n.children) q.where.push_back(read_cond(c, g));
            break;
        }
        case ClauseKind::Group:
            q.group = SqlAgg{"", read_val_unit(n.children.at(0), g)};
            if (n.children.size() > 1) q.having = read_cond(n.children[1], g);
            break;
        case ClauseKind::Order: {
            q.order = read_agg(n.children.at(0), g);
            const auto& d = n.children.at(1);
            require_rule(d, g);
            q.descending = lower_keyword(g, d.rule) == "desc";
            if (n.children.size() > 2) q.limit = read_value(n.children[2]);
            break;
        }
        case ClauseKind::Ieu: {
            q.set_op = lower_keyword(g, n.rule);
            auto body = std::make_shared<SqlQuery>();
            for (const auto& c : n.children) read_clause(c, g, *body);
            q.set_body = std::move(body);
            break;
        }
        case ClauseKind::From:
            for (const auto& t : n.children) {
                if (t.leaf_ref < 0) throw AstError("dangling slot: unfilled table");
                q.from.push_back(t.leaf_ref);
            }
            break;
    }
}

}  // namespace detail

/// AST -> SqlQuery. Throws AstError on unexpanded nodes or unfilled slots.
inline SqlQuery ast_to_query(const AstNode& ast, const Grammar& g) {
    if (ast.node_type != g.root()) throw AstError("expected a query root");
    detail::require_rule(ast, g);
    SqlQuery q;
    for (const auto& c : ast.children) detail::read_clause(c, g, q);
    return q;
}

namespace detail {

inline std::string render_column(const SqlColumn& c, const SqlQuery& q, const SchemaDef& s) {
    if (c.star) return "*";
    const auto& col = s.column(c.column);
    auto pos = std::find(q.from.begin(), q.from.end(), col.table);
    if (pos == q.from.end()) return s.table(col.table).name + "." + col.name;
    return "T" + std::to_string(pos - q.from.begin() + 1) + "." + col.name;
}

inline std::string render_agg(const SqlAgg& a, const SqlQuery& q, const SchemaDef& s) {
    auto col = render_column(a.col, q, s);
    return a.fn.empty() ? col : a.fn + "(" + col + ")";
}

inline std::string render_value(const std::string& v) { return is_number(v) ? v : "'" + v + "'"; }

inline std::string render_cond(const SqlCond& c, const SqlQuery& q, const SchemaDef& s) {
    return render_agg(c.lhs, q, s) + " " + c.op + " " + render_value(c.value);
}

inline std::string render_body(const SqlQuery& q, const SchemaDef& s) {
    std::string out = "select ";
    if (q.distinct) out += "distinct ";
    for (std::size_t i = 0; i < q.select.size(); ++i) {
        if (i) out += ", ";
        out += render_agg(q.select[i], q, s);
    }
    out += " from ";
    for (std::size_t i = 0; i < q.from.size(); ++i) {
        if (i) out += " join ";
        out += s.table(q.from[i]).name + " as T" + std::to_string(i + 1);
    }
    if (!q.where.empty()) {
        out += " where ";
        for (std::size_t i = 0; i < q.where.size(); ++i) {
            if (i) out += " " + q.connector + " ";
            out += render_cond(q.where[i], q, s);
        }
    }
    if (q.group) {
        out += " group by " + render_column(q.group->col, q, s);
        if (q.having) out += " having " + render_cond(*q.having, q, s);
    }
    if (q.order) {
        out += " order by " + render_agg(*q.order, q, s) + (q.descending ? " desc" : " asc");
        if (q.limit) out += " limit " + q.limit->value;
    }
    if (!q.set_op.empty()) out += " " + q.set_op + " " + render_body(*q.set_body, s);
    return out;
}

}  // namespace detail

/// Canonical SQL: lowercase keywords, single spaces, aliases T1..Tn in FROM
/// order, joins implied by the FROM list.
inline std::string render_sql(const AstNode& ast, const SchemaDef& schema, const Grammar& g) {
    auto q = ast_to_query(ast, g);
    for (int t : q.from)
        if (t >= static_cast<int>(schema.tables.size())) throw AstError("table id out of range for schema");
    return detail::render_body(q, schema);
}

namespace detail {

struct SqlToken {
    enum Kind { Word, Number, String, Punct } kind;
    std::string text;
};

inline std::vector<SqlToken> lex_sql(std::string_view sql) {
    std::vector<SqlToken> out;
    std::size_t i = 0;
    while (i < sql.size()) {
        unsigned char c = static_cast<unsigned char>(sql[i]);
        if (std::isspace(c)) {
            ++i;
        } else if (std::isalpha(c) || c == '_') {
            std::size_t j = i;
            while (j < sql.size() && (std::isalnum(static_cast<unsigned char>(sql[j])) || sql[j] == '_')) ++j;
            out.push_back({SqlToken::Word, to_lower(sql.substr(i, j - i))});
            i = j;
        } else if (std::isdigit(c)) {
            std::size_t j = i;
            while (j < sql.size() && (std::isdigit(static_cast<unsigned char>(sql[j])) || sql[j] == '.')) ++j;
            out.push_back({SqlToken::Number, std::string(sql.substr(i, j - i))});
            i = j;
        } else if (c == '\'' || c == '"') {
            auto close = sql.find(static_cast<char>(c), i + 1);
            if (close == std::string_view::npos) throw SqlError("unterminated string literal");
            out.push_back({SqlToken::String, to_lower(sql.substr(i + 1, close - i - 1))});
            i = close + 1;
        } else {
            static const char* two[] = {">=", "<=", "!=", "<>"};
            bool matched = false;
            for (const char* t : two)
                if (sql.substr(i, 2) == t) {
                    out.push_back({SqlToken::Punct, std::string(t) == "<>" ? "!=" : t});
                    i += 2;
                    matched = true;
                    break;
                }
            if (matched) continue;
            if (std::string_view("(),.*=<>;").find(static_cast<char>(c)) == std::string_view::npos)
                throw SqlError(std::string("unexpected character '") + static_cast<char>(c) + "'");
            out.push_back({SqlToken::Punct, std::string(1, static_cast<char>(c))});
            ++i;
        }
    }
    return out;
}

struct RawColumn {
    std::string qualifier;
    std::string name;  // "*" for star
};

struct RawAgg {
    std::string fn;
    RawColumn col;
};

struct RawCond {
    RawAgg lhs;
    std::string op;
    std::string value;
};

class SqlParser {
public:
    SqlParser(std::vector<SqlToken> toks, const SchemaDef& s) : t_(std::move(toks)), s_(s) {}

    SqlQuery parse_top() {
        auto q = parse_body(true);
        if (peek_punct(";")) ++i_;
        if (i_ != t_.size()) throw SqlError("unexpected trailing input near '" + t_[i_].text + "'");
        return q;
    }

private:
    static bool is_agg_fn(const std::string& w) {
        return w == "max" || w == "min" || w == "count" || w == "sum" || w == "avg";
    }

    bool at_end() const { return i_ >= t_.size(); }
    bool peek_word(std::string_view w, std::size_t ahead = 0) const {
        return i_ + ahead < t_.size() && t_[i_ + ahead].kind == SqlToken::Word && t_[i_ + ahead].text == w;
    }
    bool peek_punct(std::string_view p, std::size_t ahead = 0) const {
        return i_ + ahead < t_.size() && t_[i_ + ahead].kind == SqlToken::Punct && t_[i_ + ahead].text == p;
    }
    void expect_word(std::string_view w) {
        if (!peek_word(w)) throw SqlError("expected '" + std::string(w) + "'" + near());
        ++i_;
    }
    void expect_punct(std::string_view p) {
        if (!peek_punct(p)) throw SqlError("expected '" + std::string(p) + "'" + near());
        ++i_;
    }
    std::string near() const { return at_end() ? " at end of input" : " near '" + t_[i_].text + "'"; }
    std::string take_word() {
        if (at_end() || t_[i_].kind != SqlToken::Word) throw SqlError("expected identifier" + near());
        return t_[i_++].text;
    }
    void reject_nesting() const {
        if (peek_punct("(") && peek_word("select", 1))
            throw SqlError("unsupported construct: nested sub-query");
    }

    RawColumn parse_column() {
        if (peek_punct("*")) {
            ++i_;
            return {"", "*"};
        }
        auto first = take_word();
        if (peek_punct(".")) {
            ++i_;
            if (peek_punct("*")) {
                ++i_;
                return {first, "*"};
            }
            return {first, take_word()};
        }
        return {"", first};
    }

    RawAgg parse_agg() {
        reject_nesting();
        if (!at_end() && t_[i_].kind == SqlToken::Word && is_agg_fn(t_[i_].text) && peek_punct("(", 1)) {
            auto fn = t_[i_].text;
            i_ += 2;
            if (peek_word("distinct")) throw SqlError("unsupported construct: distinct inside aggregate");
            reject_nesting();
            auto c = parse_column();
            expect_punct(")");
            return {fn, c};
        }
        return {"", parse_column()};
    }

    std::string parse_value() {
        reject_nesting();
        if (at_end()) throw SqlError("expected a value at end of input");
        const auto& tok = t_[i_];
        if (tok.kind == SqlToken::Number || tok.kind == SqlToken::String) {
            ++i_;
            return tok.text;
        }
        if (tok.kind == SqlToken::Punct && tok.text == "(") throw SqlError("unsupported construct: nested sub-query");
        throw SqlError("expected a literal value" + near());
    }

    RawCond parse_cond() {
        RawCond c;
        c.lhs = parse_agg();
        if (at_end() || t_[i_].kind != SqlToken::Punct || !(t_[i_].text == "=" || t_[i_].text == "!=" ||
                                                              t_[i_].text == ">" || t_[i_].text == "<" ||
                                                              t_[i_].text == ">=" || t_[i_].text == "<="))
            throw SqlError("unsupported construct: expected comparison operator" + near());
        c.op = t_[i_++].text;
        c.value = parse_value();
        return c;
    }

    SqlQuery parse_body(bool top) {
        expect_word("select");
        SqlQuery q;
        if (peek_word("distinct")) {
            q.distinct = true;
            ++i_;
        }
        std::vector<RawAgg> select;
        select.push_back(parse_agg());
        while (peek_punct(",")) {
            ++i_;
            select.push_back(parse_agg());
        }

        expect_word("from");
        std::vector<std::pair<std::string, int>> aliases;  // alias or table name -> position
        auto parse_table_ref = [&]() {
            reject_nesting();
            auto name = take_word();
            auto t = s_.find_table(name);
            if (!t) throw SqlError("unknown table '" + name + "'");
            int pos = static_cast<int>(q.from.size());
            q.from.push_back(*t);
            aliases.emplace_back(name, pos);
            if (peek_word("as")) {
                ++i_;
                aliases.emplace_back(take_word(), pos);
            }
        };
        parse_table_ref();
        while (true) {
            if (peek_punct(",")) {
                ++i_;
                parse_table_ref();
            } else if (peek_word("join")) {
                ++i_;
                parse_table_ref();
                if (peek_word("on")) {
                    // Join predicates are implied by the FROM list; they are
                    // parsed for validity and dropped.
                    ++i_;
                    do {
                        parse_column();
                        expect_punct("=");
                        parse_column();
                    } while (peek_word("and") && (++i_, true));
                }
            } else {
                break;
            }
        }

        auto resolve = [&](const RawColumn& rc) -> SqlColumn {
            if (rc.name == "*") {
                if (!rc.qualifier.empty()) throw SqlError("unsupported construct: qualified star");
                return {true, -1};
            }
            if (!rc.qualifier.empty()) {
                auto it = std::find_if(aliases.begin(), aliases.end(),
                                       [&](const auto& a) { return a.first == rc.qualifier; });
                if (it == aliases.end()) throw SqlError("unknown table alias '" + rc.qualifier + "'");
                int table = q.from[static_cast<std::size_t>(it->second)];
                for (const auto& c : s_.columns)
                    if (c.table == table && c.name == rc.name) return {false, c.id};
                throw SqlError("unknown column '" + rc.qualifier + "." + rc.name + "'");
            }
            std::vector<int> candidates;
            for (int id : s_.columns_named(rc.name))
                if (std::find(q.from.begin(), q.from.end(), s_.column(id).table) != q.from.end())
                    candidates.push_back(id);
            if (candidates.empty()) throw SqlError("unknown column '" + rc.name + "'");
            if (candidates.size() > 1) {
                std::string msg = "ambiguous column '" + rc.name + "' (candidates:";
                for (int id : candidates) msg += " " + s_.table(s_.column(id).table).name + "." + rc.name;
                throw SqlError(msg + ")");
            }
            return {false, candidates[0]};
        };
        auto resolve_agg = [&](const RawAgg& a) { return SqlAgg{a.fn, resolve(a.col)}; };
        auto resolve_cond = [&](const RawCond& c) {
            SqlCond out;
            out.lhs = resolve_agg(c.lhs);
            out.op = c.op;
            out.value = c.value;
            return out;
        };
        for (const auto& a : select) q.select.push_back(resolve_agg(a));

        if (peek_word("where")) {
            ++i_;
            q.where.push_back(resolve_cond(parse_cond()));
            while (peek_word("and") || peek_word("or")) {
                auto conn = t_[i_++].text;
                if (!q.connector.empty() && q.connector != conn)
                    throw SqlError("unsupported construct: mixed and/or in where");
                q.connector = conn;
                q.where.push_back(resolve_cond(parse_cond()));
            }
        }
        if (peek_word("group")) {
            ++i_;
            expect_word("by");
            auto c = resolve(parse_column());
            if (peek_punct(",")) throw SqlError("unsupported construct: multiple group-by columns");
            q.group = SqlAgg{"", c};
            if (peek_word("having")) {
                ++i_;
                q.having = resolve_cond(parse_cond());
                if (peek_word("and") || peek_word("or"))
                    throw SqlError("unsupported construct: compound having");
            }
        }
        if (peek_word("order")) {
            ++i_;
            expect_word("by");
            q.order = resolve_agg(parse_agg());
            if (peek_word("asc")) {
                ++i_;
            } else if (peek_word("desc")) {
                q.descending = true;
                ++i_;
            }
            if (peek_punct(",")) throw SqlError("unsupported construct: multiple order-by keys");
            if (peek_word("limit")) {
                ++i_;
                SqlCond lim;
                lim.value = parse_value();
                q.limit = lim;
            }
        }
        if (peek_word("intersect") || peek_word("except") || peek_word("union")) {
            if (!top) throw SqlError("unsupported construct: set operations nested beyond one level");
            q.set_op = t_[i_++].text;
            q.set_body = std::make_shared<SqlQuery>(parse_body(false));
        }
        return q;
    }

    std::vector<SqlToken> t_;
    const SchemaDef& s_;
    std::size_t i_ = 0;
};

inline void bind_values(AstNode& n, const Grammar& g, std::span<const std::string> question) {
    if (g.node_type(n.node_type).kind == NodeKind::ValueSlot) {
        auto it = std::find(question.begin(), question.end(), n.leaf_text);
        if (it == question.end()) throw SqlError("value '" + n.leaf_text + "' does not occur in the question");
        n.leaf_ref = static_cast<int>(it - question.begin());
        return;
    }
    for (auto& c : n.children) bind_values(c, g, question);
}

}  // namespace detail

/// Parses SQL in the supported subset. When `question` is given, condition and
/// limit values are bound to their leftmost equal question token.
inline AstNode parse_sql(std::string_view sql, const SchemaDef& schema, const Grammar& g,
                         std::optional<std::span<const std::string>> question = std::nullopt) {
    detail::SqlParser p(detail::lex_sql(sql), schema);
    auto q = p.parse_top();
    auto ast = query_to_ast(q, g);
    if (question) detail::bind_values(ast, g, *question);
    return ast;
}

inline std::string canonical_sql(std::string_view sql, const SchemaDef& schema, const Grammar& g) {
    return render_sql(parse_sql(sql, schema, g), schema, g);
}

/// Whitespace token count of a SQL string.
inline std::size_t sql_token_count(std::string_view sql) { return split_ws(sql).size(); }

}  // namespace sqlpar
