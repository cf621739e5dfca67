#pragma once

// Datasets: examples with cached gold trees, oracle traces and alignment
// priors; JSON-lines records plus a schema file; and a seeded generator of
// templated toy corpora over a small pool of schemas.

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqlpar/alignment.hpp"
#include "sqlpar/ast.hpp"
#include "sqlpar/eval.hpp"
#include "sqlpar/sql.hpp"

namespace sqlpar {

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Example {
    std::string db_id;
    std::string question_text;
    std::vector<std::string> question;
    std::string sql;

    // Caches, valid for the grammar with this fingerprint.
    std::uint64_t grammar_fingerprint = 0;
    AstNode gold;
    ActionTrace trace;
    ClauseSegments segments;
    AlignmentPrior prior;
    bool paraphrased = false;  // generator bookkeeping; not serialized
};

/// Parses the SQL and fills every cache.
inline void prepare_example(Example& ex, const SchemaDef& schema, const Grammar& g) {
    if (ex.question.empty()) ex.question = tokenize_question(ex.question_text);
    if (ex.question.empty()) throw CorpusError("example with an empty question (" + ex.db_id + ")");
    try {
        ex.gold = parse_sql(ex.sql, schema, g, std::span<const std::string>(ex.question));
    } catch (const std::exception& e) {
        throw CorpusError("cannot parse '" + ex.sql + "': " + e.what());
    }
    ex.trace = oracle_actions(ex.gold, g);
    ex.segments = clause_segments(ex.question, ex.gold, schema, g);
    ex.prior = alignment_prior(ex.segments, static_cast<int>(ex.question.size()));
    ex.grammar_fingerprint = g.fingerprint();
}

inline void check_cache(const Example& ex, const Grammar& g) {
    if (ex.grammar_fingerprint != g.fingerprint())
        throw CorpusError("example caches were built for another grammar (" + ex.db_id + ": " + ex.sql + ")");
}

struct Dataset {
    std::map<std::string, SchemaDef> schemas;
    std::vector<Example> examples;

    const SchemaDef& schema_of(const Example& ex) const {
        auto it = schemas.find(ex.db_id);
        if (it == schemas.end()) throw CorpusError("unknown db_id '" + ex.db_id + "'");
        return it->second;
    }

    void prepare(const Grammar& g) {
        for (auto& ex : examples) prepare_example(ex, schema_of(ex), g);
    }
};

// ---------------------------------------------------------------------------
// Files
//
// Examples: one JSON object per line, {"db_id", "question", "sql"}.
// Schemas: a JSON array of {"db_id", "tables": [name...],
//   "columns": [[table index, name, "text"|"number"]...], "foreign_keys": [[col, col]...]}.

inline void write_examples(std::ostream& os, const std::vector<Example>& examples) {
    for (const auto& ex : examples) {
        nlohmann::ordered_json j;
        j["db_id"] = ex.db_id;
        j["question"] = ex.question_text;
        j["sql"] = ex.sql;
        os << j.dump() << '\n';
    }
}

inline std::vector<Example> read_examples(std::istream& is) {
    std::vector<Example> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            Example ex;
            ex.db_id = j.at("db_id").get<std::string>();
            ex.question_text = j.at("question").get<std::string>();
            ex.sql = j.at("sql").get<std::string>();
            ex.question = tokenize_question(ex.question_text);
            out.push_back(std::move(ex));
        } catch (const nlohmann::json::exception& e) {
            throw CorpusError("examples line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void write_schemas(std::ostream& os, const std::map<std::string, SchemaDef>& schemas) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [id, s] : schemas) {
        nlohmann::ordered_json j;
        j["db_id"] = s.db_id;
        j["tables"] = nlohmann::ordered_json::array();
        for (const auto& t : s.tables) j["tables"].push_back(t.name);
        j["columns"] = nlohmann::ordered_json::array();
        for (const auto& c : s.columns)
            j["columns"].push_back({c.table, c.name, c.domain == ValueDomain::Number ? "number" : "text"});
        j["foreign_keys"] = nlohmann::ordered_json::array();
        for (auto [a, b] : s.foreign_keys) j["foreign_keys"].push_back({a, b});
        arr.push_back(std::move(j));
    }
    os << arr.dump(2) << '\n';
}

inline std::map<std::string, SchemaDef> read_schemas(std::istream& is) {
    std::map<std::string, SchemaDef> out;
    try {
        auto arr = nlohmann::json::parse(is);
        for (const auto& j : arr) {
            SchemaDef s;
            s.db_id = j.at("db_id").get<std::string>();
            for (const auto& t : j.at("tables")) s.add_table(to_lower(t.get<std::string>()));
            for (const auto& c : j.at("columns")) {
                const auto dom = c.at(2).get<std::string>();
                if (dom != "text" && dom != "number") throw CorpusError(s.db_id + ": unknown column type " + dom);
                s.add_column(c.at(0).get<int>(), to_lower(c.at(1).get<std::string>()),
                             dom == "number" ? ValueDomain::Number : ValueDomain::Text);
            }
            if (j.contains("foreign_keys"))
                for (const auto& fk : j.at("foreign_keys")) s.foreign_keys.emplace_back(fk.at(0), fk.at(1));
            s.validate();
            if (out.contains(s.db_id)) throw CorpusError("duplicate schema '" + s.db_id + "'");
            out.emplace(s.db_id, std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorpusError(std::string("schema file: ") + e.what());
    } catch (const SchemaError& e) {
        throw CorpusError(std::string("schema file: ") + e.what());
    }
    return out;
}

inline Dataset load_dataset(const std::string& examples_path, const std::string& schemas_path, const Grammar& g) {
    std::ifstream es(examples_path), ss(schemas_path);
    if (!es) throw CorpusError("cannot open " + examples_path);
    if (!ss) throw CorpusError("cannot open " + schemas_path);
    Dataset d;
    d.schemas = read_schemas(ss);
    d.examples = read_examples(es);
    d.prepare(g);
    return d;
}

inline void save_dataset(const Dataset& d, const std::string& examples_path, const std::string& schemas_path) {
    std::ofstream es(examples_path), ss(schemas_path);
    if (!es) throw CorpusError("cannot write " + examples_path);
    if (!ss) throw CorpusError("cannot write " + schemas_path);
    write_examples(es, d.examples);
    write_schemas(ss, d.schemas);
}

// ---------------------------------------------------------------------------
// Generator

struct GenConfig {
    std::uint64_t seed = 1;
    int n = 1000;
    double paraphrase_rate = 0.0;  // fraction of examples whose schema mentions are all paraphrased
    int min_clauses = 2;           // non-None top-level clauses, SELECT and FROM included
    int max_select = 4;
    int max_conditions = 3;
    int max_tables = 3;
    std::vector<std::string> clauses = {"SELECT", "WHERE", "GROUP", "ORDER", "IEU", "FROM"};
};

/// Every problem with the config, checked against what the grammar can express.
inline std::vector<std::string> validate(const GenConfig& c, const Grammar& g) {
    std::vector<std::string> errs;
    if (c.n < 1) errs.push_back("n must be at least 1");
    if (!(c.paraphrase_rate >= 0.0 && c.paraphrase_rate <= 1.0)) errs.push_back("paraphrase_rate must lie in [0, 1]");
    auto widest = [&](ClauseKind k, const std::string& child) {
        std::size_t best = 0;
        for (int r : g.rules_for(g.clause_root(k))) {
            const auto& kids = g.rule(r).children;
            best = std::max<std::size_t>(best, static_cast<std::size_t>(std::count(kids.begin(), kids.end(),
                                                                                   g.type_id(child))));
        }
        return static_cast<int>(best);
    };
    if (c.max_select < 1 || c.max_select > widest(ClauseKind::Select, "agg"))
        errs.push_back("max_select=" + std::to_string(c.max_select) + " has no SELECT rule in the grammar");
    if (c.max_conditions < 1 || c.max_conditions > widest(ClauseKind::Where, "cond"))
        errs.push_back("max_conditions=" + std::to_string(c.max_conditions) + " has no WHERE rule in the grammar");
    if (c.max_tables < 1 || c.max_tables > std::min(3, widest(ClauseKind::From, "tab")))
        errs.push_back("max_tables=" + std::to_string(c.max_tables) + " is not supported");
    std::set<ClauseKind> on;
    for (const auto& name : c.clauses) {
        auto k = parse_clause_name(name);
        if (!k)
            errs.push_back("unknown clause '" + name + "'");
        else
            on.insert(*k);
    }
    if (!on.contains(ClauseKind::Select) || !on.contains(ClauseKind::From))
        errs.push_back("SELECT and FROM cannot be switched off");
    if (c.min_clauses < 2 || c.min_clauses > static_cast<int>(on.size()))
        errs.push_back("min_clauses=" + std::to_string(c.min_clauses) + " cannot be met with " +
                       std::to_string(on.size()) + " clauses enabled");
    return errs;
}

namespace gen {

struct ColumnSpec {
    const char* name;
    ValueDomain domain;
    const char* synonym;
    std::vector<const char*> values;  // text columns
};

struct TableSpec {
    const char* name;
    const char* synonym;
    std::vector<ColumnSpec> columns;
};

struct Domain {
    const char* db_id;
    std::vector<TableSpec> tables;  // a join chain, first to last
};

constexpr auto T = ValueDomain::Text;
constexpr auto N = ValueDomain::Number;

inline const std::vector<Domain>& domains() {
    static const std::vector<Domain> d = {
        {"concert_singer",
         {{"singer", "vocalist",
           {{"name", T, "called", {"adele", "shakira", "prince"}},
            {"country", T, "nation", {"france", "japan", "brazil"}},
            {"age", N, "oldness", {}}}},
          {"concert", "gig",
           {{"concert_name", T, "event", {"spring", "autumn"}},
            {"theme", T, "motif", {"jazz", "rock", "folk"}},
            {"year", N, "season", {}}}},
          {"stadium", "arena",
           {{"location", T, "place", {"paris", "tokyo", "lima"}},
            {"capacity", N, "seats", {}},
            {"attendance", N, "crowd", {}}}}}},
        {"car_1",
         {{"car_makers", "manufacturers",
           {{"maker", T, "brand", {"ford", "volvo", "fiat"}},
            {"country", T, "nation", {"germany", "italy", "sweden"}},
            {"founded", N, "established", {}}}},
          {"model_list", "lineup",
           {{"model", T, "version", {"golf", "panda", "civic"}},
            {"weight", N, "mass", {}},
            {"price", N, "cost", {}}}},
          {"cars_data", "vehicles",
           {{"horsepower", N, "power", {}}, {"mpg", N, "economy", {}}, {"year", N, "season", {}}}}}},
        {"college",
         {{"student", "pupil",
           {{"name", T, "called", {"maria", "chen", "omar"}},
            {"major", T, "discipline", {"physics", "history", "biology"}},
            {"age", N, "oldness", {}}}},
          {"course", "class",
           {{"course_title", T, "subject", {"algebra", "poetry", "ethics"}},
            {"credits", N, "units", {}},
            {"dept", T, "faculty", {"science", "arts"}}}},
          {"enrollment", "registration",
           {{"grade", N, "mark", {}},
            {"semester", T, "term", {"fall", "winter"}},
            {"hours", N, "duration", {}}}}}},
        {"flight_1",
         {{"airline", "operator",
           {{"airline_name", T, "carrier", {"delta", "lufthansa", "qantas"}},
            {"abbreviation", T, "acronym", {"dl", "lh", "qf"}},
            {"country", T, "nation", {"usa", "germany", "australia"}}}},
          {"airport", "terminal",
           {{"city", T, "town", {"boston", "denver", "austin"}},
            {"elevation", N, "altitude", {}},
            {"gates", N, "doors", {}}}},
          {"flight", "trip",
           {{"flight_no", N, "designation", {}}, {"distance", N, "length", {}}, {"price", N, "fare", {}}}}}},
        {"company",
         {{"employee", "worker",
           {{"name", T, "called", {"alice", "bob", "carol"}},
            {"salary", N, "pay", {}},
            {"age", N, "oldness", {}}}},
          {"department", "unit",
           {{"dept_name", T, "division", {"sales", "legal", "support"}},
            {"budget", N, "funding", {}},
            {"floor", N, "level", {}}}},
          {"project", "assignment",
           {{"project_title", T, "initiative", {"apollo", "gemini"}},
            {"duration", N, "span", {}},
            {"status", T, "state", {"open", "closed"}}}}}},
        {"pets_1",
         {{"owner", "guardian",
           {{"owner_name", T, "keeper", {"kim", "lee", "ana"}},
            {"city", T, "town", {"oslo", "rome", "cairo"}},
            {"age", N, "oldness", {}}}},
          {"pet", "animal",
           {{"pet_type", T, "species", {"dog", "cat", "parrot"}},
            {"weight", N, "mass", {}},
            {"pet_age", N, "maturity", {}}}},
          {"visit", "appointment",
           {{"cost", N, "fee", {}}, {"visit_year", N, "season", {}}, {"clinic", T, "hospital", {"central", "north"}}}}}},
    };
    return d;
}

inline const std::vector<const char*>& numbers() {
    static const std::vector<const char*> v = {"3", "5", "10", "20", "50", "100", "1990", "2000", "2010"};
    return v;
}

/// Template words; none of them may be a schema token, or paraphrased
/// examples would still link.
inline const std::set<std::string>& filler_words() {
    static const std::set<std::string> w = {
        "show", "find", "give", "distinct", "and", "or", "maximum", "minimum", "number", "of", "rows",
        "total", "average", "from", "joined", "with", "where", "equal", "to", "is", "not", "above", "below",
        "at", "least", "most", "for", "each", "having", "sorted", "by", "ascending", "descending", "top",
        "union", "intersect", "except", "also"};
    return w;
}

inline SchemaDef schema_of(const Domain& d) {
    SchemaDef s;
    s.db_id = d.db_id;
    for (const auto& t : d.tables) s.add_table(t.name);
    std::vector<int> first;
    for (std::size_t ti = 0; ti < d.tables.size(); ++ti) {
        first.push_back(static_cast<int>(s.columns.size()));
        for (const auto& c : d.tables[ti].columns) s.add_column(static_cast<int>(ti), c.name, c.domain);
    }
    // Each table refers to the previous one through its first column.
    for (std::size_t ti = 1; ti < first.size(); ++ti) s.foreign_keys.emplace_back(first[ti], first[ti - 1]);
    return s;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : e_(seed) {}
    // Modulo draws rather than std distributions: the sequence is then the same
    // under every standard library.
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(e_() % n); }
    bool chance(double p) { return static_cast<double>(e_() >> 11) * 0x1.0p-53 < p; }
    template <class V>
    const auto& pick(const V& v) {
        if (v.empty()) throw std::logic_error("generator drew from an empty pool");
        return v[below(v.size())];
    }

private:
    std::mt19937_64 e_;
};

struct Builder {
    const Domain& dom;
    const SchemaDef& schema;
    const GenConfig& cfg;
    const std::set<ClauseKind>& on;
    bool paraphrase;
    Rng& rng;

    struct Pick {
        int column;
        const ColumnSpec* spec;
    };

    std::string col_words(const Pick& p) const {
        return paraphrase ? std::string(p.spec->synonym) : join(name_tokens(p.spec->name), " ");
    }
    std::string table_words(int t) const {
        const auto& ts = dom.tables[static_cast<std::size_t>(t)];
        return paraphrase ? std::string(ts.synonym) : join(name_tokens(ts.name), " ");
    }

    Pick column(const std::vector<int>& tables, bool numeric_only) {
        std::vector<Pick> pool;
        for (int t : tables) {
            const auto& ts = dom.tables[static_cast<std::size_t>(t)];
            int base = 0;
            for (int u = 0; u < t; ++u) base += static_cast<int>(dom.tables[static_cast<std::size_t>(u)].columns.size());
            for (std::size_t c = 0; c < ts.columns.size(); ++c)
                if (!numeric_only || ts.columns[c].domain == ValueDomain::Number)
                    pool.push_back({base + static_cast<int>(c), &ts.columns[c]});
        }
        return rng.pick(pool);
    }

    bool has_numeric(const std::vector<int>& tables) const {
        for (int t : tables)
            for (const auto& c : dom.tables[static_cast<std::size_t>(t)].columns)
                if (c.domain == ValueDomain::Number) return true;
        return false;
    }

    // fn: "", max, min, count, sum, avg.
    std::pair<SqlAgg, std::string> agg(const std::vector<int>& tables, bool plain_allowed) {
        static const std::vector<std::string> fns = {"", "max", "min", "count", "sum", "avg"};
        std::string fn = plain_allowed && rng.chance(0.4) ? "" : fns[1 + rng.below(5)];
        // max/min/sum/avg need a numeric column among the joined tables.
        if (fn != "" && fn != "count" && !has_numeric(tables)) fn = "count";
        SqlAgg a;
        a.fn = fn;
        if (fn == "count" && rng.chance(0.5)) {
            a.col.star = true;
            return {a, "number of rows"};
        }
        auto p = column(tables, !fn.empty() && fn != "count");
        a.col.column = p.column;
        const auto w = col_words(p);
        if (fn.empty()) return {a, w};
        if (fn == "max") return {a, "maximum " + w};
        if (fn == "min") return {a, "minimum " + w};
        if (fn == "count") return {a, "number of " + w};
        if (fn == "sum") return {a, "total " + w};
        return {a, "average " + w};
    }

    static std::string op_words(const std::string& op) {
        if (op == "=") return "equal to";
        if (op == "!=") return "is not";
        if (op == ">") return "above";
        if (op == "<") return "below";
        if (op == ">=") return "at least";
        return "at most";
    }

    std::pair<SqlCond, std::string> where_cond(const std::vector<int>& tables) {
        static const std::vector<std::string> num_ops = {"=", "!=", ">", "<", ">=", "<="};
        auto p = column(tables, false);
        SqlCond c;
        c.lhs.col.column = p.column;
        if (p.spec->domain == ValueDomain::Text) {
            c.op = rng.chance(0.5) ? "=" : "!=";
            c.value = rng.pick(p.spec->values);
        } else {
            c.op = rng.pick(num_ops);
            c.value = rng.pick(numbers());
        }
        return {c, col_words(p) + " " + op_words(c.op) + " " + c.value};
    }

    std::pair<SqlCond, std::string> having_cond(const std::vector<int>& tables) {
        static const std::vector<std::string> ops = {"=", "!=", ">", "<", ">=", "<="};
        auto [a, w] = agg(tables, false);
        SqlCond c;
        c.lhs = a;
        c.op = rng.pick(ops);
        c.value = rng.pick(numbers());
        return {c, w + " " + op_words(c.op) + " " + c.value};
    }

    std::vector<int> tables() {
        const std::size_t n_tab = dom.tables.size();
        std::size_t want = 1;
        const double u = static_cast<double>(rng.below(1000)) / 1000.0;
        if (cfg.max_tables >= 2 && u >= 0.5) want = 2;
        if (cfg.max_tables >= 3 && u >= 0.75) want = 3;
        want = std::min(want, n_tab);
        const std::size_t start = rng.below(n_tab - want + 1);
        std::vector<int> out;
        for (std::size_t i = 0; i < want; ++i) out.push_back(static_cast<int>(start + i));
        return out;
    }

    /// One query body and its question phrase. Optional clauses are drawn
    /// independently; `top` permits a set operation.
    std::pair<SqlQuery, std::string> body(bool top, int min_clauses) {
        while (true) {
            SqlQuery q;
            std::vector<std::string> words;
            static const std::vector<std::string> verbs = {"show", "find", "give"};
            words.push_back(rng.pick(verbs));
            const auto tabs = tables();
            q.from = tabs;
            q.distinct = rng.chance(0.2);
            if (q.distinct) words.push_back("distinct");
            const std::size_t n_sel = 1 + std::min<std::size_t>(static_cast<std::size_t>(cfg.max_select - 1),
                                                                weighted({50, 25, 15, 10}));
            for (std::size_t i = 0; i < n_sel; ++i) {
                auto [a, w] = agg(tabs, true);
                if (i) words.push_back("and");
                words.push_back(w);
                q.select.push_back(a);
            }
            words.push_back("from");
            for (std::size_t i = 0; i < tabs.size(); ++i) {
                if (i) words.push_back("joined with");
                words.push_back(table_words(tabs[i]));
            }
            int clauses = 2;
            if (on.contains(ClauseKind::Where) && rng.chance(0.5)) {
                ++clauses;
                const std::size_t n_cond = 1 + std::min<std::size_t>(static_cast<std::size_t>(cfg.max_conditions - 1),
                                                                     weighted({40, 35, 25}));
                q.connector = n_cond == 2 && rng.chance(0.35) ? "or" : "and";
                words.push_back("where");
                for (std::size_t i = 0; i < n_cond; ++i) {
                    auto [c, w] = where_cond(tabs);
                    if (i) words.push_back(q.connector);
                    words.push_back(w);
                    q.where.push_back(c);
                }
            }
            if (on.contains(ClauseKind::Group) && rng.chance(0.3)) {
                ++clauses;
                auto p = column(tabs, false);
                SqlAgg gcol;
                gcol.col.column = p.column;
                q.group = gcol;
                words.push_back("for each " + col_words(p));
                if (rng.chance(0.5)) {
                    auto [c, w] = having_cond(tabs);
                    q.having = c;
                    words.push_back("having " + w);
                }
            }
            if (on.contains(ClauseKind::Order) && rng.chance(0.35)) {
                ++clauses;
                auto [a, w] = agg(tabs, true);
                q.order = a;
                q.descending = rng.chance(0.5);
                words.push_back("sorted by " + w + (q.descending ? " descending" : " ascending"));
                if (rng.chance(0.5)) {
                    SqlCond lim;
                    lim.value = rng.pick(numbers());
                    q.limit = lim;
                    words.push_back("top " + lim.value);
                }
            }
            if (top && on.contains(ClauseKind::Ieu) && rng.chance(0.15)) {
                ++clauses;
                static const std::vector<std::string> ops = {"intersect", "except", "union"};
                q.set_op = rng.pick(ops);
                auto [b, w] = body(false, 2);
                q.set_body = std::make_shared<SqlQuery>(std::move(b));
                words.push_back(q.set_op + " " + w);
            }
            if (clauses >= min_clauses) return {std::move(q), join(words, " ")};
        }
    }

    std::size_t weighted(std::initializer_list<int> w) {
        int total = 0;
        for (int x : w) total += x;
        int r = static_cast<int>(rng.below(static_cast<std::size_t>(total)));
        std::size_t i = 0;
        for (int x : w) {
            if (r < x) return i;
            r -= x;
            ++i;
        }
        return i - 1;
    }
};

}  // namespace gen

/// The schema pool the generator draws from, keyed by db_id.
inline std::map<std::string, SchemaDef> generator_schemas() {
    std::map<std::string, SchemaDef> out;
    for (const auto& d : gen::domains()) out.emplace(d.db_id, gen::schema_of(d));
    return out;
}

inline Dataset generate_corpus(const GenConfig& cfg, const Grammar& g) {
    if (auto errs = validate(cfg, g); !errs.empty()) {
        std::string msg = "invalid generator config:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw CorpusError(msg);
    }
    std::set<ClauseKind> on;
    for (const auto& name : cfg.clauses) on.insert(*parse_clause_name(name));
    Dataset d;
    d.schemas = generator_schemas();
    gen::Rng rng(cfg.seed);
    const auto& doms = gen::domains();
    for (int i = 0; i < cfg.n; ++i) {
        const auto& dom = doms[rng.below(doms.size())];
        const auto& schema = d.schemas.at(dom.db_id);
        const bool para = rng.chance(cfg.paraphrase_rate);
        gen::Builder b{dom, schema, cfg, on, para, rng};
        auto [q, text] = b.body(true, cfg.min_clauses);
        Example ex;
        ex.db_id = dom.db_id;
        ex.question_text = text;
        ex.question = tokenize_question(text);
        ex.sql = detail::render_body(q, schema);
        ex.paraphrased = para;
        prepare_example(ex, schema, g);
        d.examples.push_back(std::move(ex));
    }
    return d;
}

/// Fraction of examples in which each rule is applied at least once.
inline std::vector<double> rule_coverage(const std::vector<Example>& examples, const Grammar& g) {
    std::vector<double> out(g.rules().size(), 0.0);
    if (examples.empty()) return out;
    for (const auto& ex : examples) {
        std::vector<char> seen(out.size(), 0);
        for (const auto& s : ex.trace.steps)
            if (s.action.kind == ActionKind::ApplyRule) seen[static_cast<std::size_t>(s.action.id)] = 1;
        for (std::size_t r = 0; r < out.size(); ++r) out[r] += seen[r];
    }
    for (double& v : out) v /= static_cast<double>(examples.size());
    return out;
}

}  // namespace sqlpar
