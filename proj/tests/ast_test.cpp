#include <gtest/gtest.h>

#include <sstream>

#include "sqlpar/ast.hpp"
#include "sqlpar/sql.hpp"
#include "test_support.hpp"

using namespace sqlpar;
using sqlpar::testing::car_schema;
using sqlpar::testing::shipped_grammar;
using sqlpar::testing::words;

namespace {

std::string sql_error(std::string_view sql) {
    try {
        parse_sql(sql, car_schema(), shipped_grammar());
    } catch (const SqlError& e) {
        return e.what();
    }
    return {};
}

int count_kind(const std::vector<Action>& actions, ActionKind k) {
    return static_cast<int>(std::count_if(actions.begin(), actions.end(), [&](const Action& a) { return a.kind == k; }));
}

}  // namespace

TEST(Ast, SelectClauseOfFigureStyleQueryTakesSevenActions) {
    const auto& g = shipped_grammar();
    auto s = car_schema();
    auto gold = parse_sql("select T1.model from model_list as T1", s, g);
    auto trace = oracle_actions(gold, g);
    auto parts = split_by_clause(trace);
    const auto& sel = parts[clause_index(ClauseKind::Select)];
    EXPECT_EQ(sel.size(), 7u);
    EXPECT_EQ(count_kind(sel, ActionKind::ApplyRule), 6);
    EXPECT_EQ(count_kind(sel, ActionKind::SelectColumn), 1);
    EXPECT_EQ(render_sql(gold, s, g).rfind("select T1.model", 0), 0u);
}

TEST(Ast, AbsentWhereIsOneNoneAction) {
    const auto& g = shipped_grammar();
    auto gold = parse_sql("select model from model_list", car_schema(), g);
    auto parts = split_by_clause(oracle_actions(gold, g));
    for (auto k : {ClauseKind::Where, ClauseKind::Group, ClauseKind::Order, ClauseKind::Ieu}) {
        const auto& p = parts[clause_index(k)];
        ASSERT_EQ(p.size(), 1u) << clause_name(k);
        EXPECT_EQ(p[0], Action::apply_rule(*g.none_rule(g.clause_root(k))));
    }
    EXPECT_EQ(parts[clause_index(ClauseKind::From)].size(), 2u);
}

TEST(Ast, ParseSimpleQueryHasSelectFromAndFourNones) {
    const auto& g = shipped_grammar();
    auto s = car_schema();
    auto ast = parse_sql("select country from car_makers", s, g);
    ASSERT_EQ(ast.children.size(), 6u);
    for (auto k : kClauseOrder) {
        const auto& c = clause_subtree(ast, g, k);
        EXPECT_EQ(clause_present(c, g), k == ClauseKind::Select || k == ClauseKind::From) << clause_name(k);
    }
    EXPECT_EQ(render_sql(ast, s, g), "select T1.country from car_makers as T1");
}

TEST(Ast, OracleReplayRoundTripIncludesTimestamps) {
    const auto& g = shipped_grammar();
    auto s = car_schema();
    auto q = words("which maker of cars from usa has more than 3 models , sorted by year");
    auto gold = parse_sql(
        "SELECT T1.maker, count(*) FROM car_makers AS T1 JOIN model_list AS T2 ON T1.id = T2.maker "
        "WHERE T1.country = 'usa' GROUP BY T1.maker HAVING count(*) > 3",
        s, g, std::span<const std::string>(q));
    auto trace = oracle_actions(gold, g);
    auto rebuilt = replay(trace.actions(), g, q);
    EXPECT_EQ(rebuilt, gold);
    EXPECT_EQ(render_sql(rebuilt, s, g), render_sql(gold, s, g));
    EXPECT_EQ(render_sql(gold, s, g),
              "select T1.maker, count(*) from car_makers as T1 join model_list as T2 where T1.country = 'usa' "
              "group by T1.maker having count(*) > 3");
}

TEST(Ast, ClauseSpansPartitionTraceInDecodingOrder) {
    const auto& g = shipped_grammar();
    auto q = words("models with year 1990 union models with year 2000");
    auto gold = parse_sql(
        "select model from cars_data where year = 1990 union select model from cars_data where year = 2000",
        car_schema(), g, std::span<const std::string>(q));
    auto trace = oracle_actions(gold, g);
    int expect_begin = 0;
    for (auto k : kClauseOrder) {
        auto [b, e] = trace.clause_spans[static_cast<std::size_t>(clause_index(k))];
        EXPECT_EQ(b, expect_begin);
        EXPECT_GT(e, b);
        for (int i = b; i < e; ++i) EXPECT_EQ(trace.steps[static_cast<std::size_t>(i)].clause, k);
        expect_begin = e;
    }
    EXPECT_EQ(expect_begin, static_cast<int>(trace.size()));

    std::vector<Action> concatenated;
    for (const auto& part : split_by_clause(trace)) concatenated.insert(concatenated.end(), part.begin(), part.end());
    EXPECT_EQ(concatenated, trace.actions());

    // The IEU span holds one rule step plus five contiguous body clauses.
    auto [b, e] = trace.clause_spans[clause_index(ClauseKind::Ieu)];
    EXPECT_EQ(trace.steps[static_cast<std::size_t>(b)].body_clause, -1);
    int last = -1;
    for (int i = b + 1; i < e; ++i) {
        int bc = trace.steps[static_cast<std::size_t>(i)].body_clause;
        EXPECT_GE(bc, last);
        EXPECT_NE(bc, clause_index(ClauseKind::Ieu));
        last = bc;
    }
    EXPECT_EQ(last, clause_index(ClauseKind::From));
}

TEST(Ast, ApplyRuleOnAggPushesTwoChildren) {
    const auto& g = shipped_grammar();
    auto b = TreeBuilder::for_query(g);
    b.apply(Action::apply_rule(g.rules_for("select_clause")[0]));
    b.apply(Action::apply_rule(g.rules_for("distinct")[0]));
    ASSERT_EQ(b.focus().node_type, g.type_id("agg"));
    auto before = b.frontier_size();
    int agg_step = b.step();
    b.apply(Action::apply_rule(g.rules_for("agg")[0]));
    EXPECT_EQ(b.frontier_size(), before + 1);  // agg popped, agg_id and val_unit pushed
    EXPECT_EQ(b.focus().node_type, g.type_id("agg_id"));
    EXPECT_EQ(b.focus().parent_step, agg_step);
}

TEST(Ast, SelectColumnFillsSlot) {
    const auto& g = shipped_grammar();
    auto b = TreeBuilder::for_subtree(g, g.type_id("col_unit"), -1);
    b.apply(Action::apply_rule(g.rules_for("col_unit")[0]));
    ASSERT_EQ(b.focus().kind, NodeKind::ColumnSlot);
    auto before = b.frontier_size();
    b.apply(Action::select_column(3));
    EXPECT_EQ(b.frontier_size(), before - 1);
    EXPECT_TRUE(b.done());
    EXPECT_EQ(b.tree().children[0].leaf_ref, 3);
    EXPECT_EQ(b.tree().children[0].born_at, 1);
}

TEST(Ast, ApplyActionErrors) {
    const auto& g = shipped_grammar();
    auto b = TreeBuilder::for_subtree(g, g.column_slot(), -1);
    try {
        b.apply(Action::apply_rule(0));
        FAIL() << "expected kind mismatch";
    } catch (const AstError& e) {
        EXPECT_NE(std::string(e.what()).find("kind mismatch"), std::string::npos);
    }
    auto t = TreeBuilder::for_subtree(g, g.column_slot(), -1);
    EXPECT_THROW(t.apply(Action::select_table(0)), AstError);

    auto w = TreeBuilder::for_subtree(g, g.clause_root(ClauseKind::Where), -1);
    try {
        w.apply(Action::apply_rule(g.rules_for("order_clause")[0]));
        FAIL() << "expected lhs mismatch";
    } catch (const AstError& e) {
        EXPECT_NE(std::string(e.what()).find("lhs mismatch"), std::string::npos);
    }
    auto v = TreeBuilder::for_subtree(g, g.value_slot(), -1);
    EXPECT_THROW(v.apply(Action::select_value(0)), AstError);  // no question bound

    auto done = TreeBuilder::for_subtree(g, g.table_slot(), -1);
    done.apply(Action::select_table(1));
    EXPECT_THROW(done.apply(Action::select_table(1)), AstError);
}

TEST(Ast, RenderAllOptionalClausesNone) {
    const auto& g = shipped_grammar();
    auto s = car_schema();
    auto b = TreeBuilder::for_query(g);
    b.apply(Action::apply_rule(g.rules_for("select_clause")[0]));
    b.apply(Action::apply_rule(g.rules_for("distinct")[0]));
    b.apply(Action::apply_rule(g.rules_for("agg")[0]));
    b.apply(Action::apply_rule(g.rules_for("agg_id")[0]));
    b.apply(Action::apply_rule(g.rules_for("val_unit")[0]));
    b.apply(Action::apply_rule(g.rules_for("col_unit")[0]));
    b.apply(Action::select_column(9));
    for (auto k : {ClauseKind::Where, ClauseKind::Group, ClauseKind::Order, ClauseKind::Ieu})
        b.apply(Action::apply_rule(*g.none_rule(g.clause_root(k))));
    b.apply(Action::apply_rule(g.rules_for("from_clause")[0]));
    b.apply(Action::select_table(2));
    ASSERT_TRUE(b.done());
    EXPECT_EQ(render_sql(b.tree(), s, g), "select T1.year from cars_data as T1");
}

TEST(Ast, RenderRejectsDanglingSlot) {
    const auto& g = shipped_grammar();
    auto b = TreeBuilder::for_query(g);
    b.apply(Action::apply_rule(g.rules_for("select_clause")[0]));
    EXPECT_THROW(render_sql(b.tree(), car_schema(), g), AstError);
}

TEST(Ast, GroupByHavingUsesHavingRule) {
    const auto& g = shipped_grammar();
    auto ast = parse_sql("select count(*) from model_list group by maker having count(*) > 2", car_schema(), g);
    const auto& group = clause_subtree(ast, g, ClauseKind::Group);
    EXPECT_EQ(g.rule_label(group.rule), "group_clause -> GROUP_BY val_unit HAVING cond");
}

TEST(Ast, SqlSubsetBoundaries) {
    EXPECT_NE(sql_error("select model from model_list where maker = (select id from car_makers)")
                  .find("unsupported construct"),
              std::string::npos);
    EXPECT_NE(sql_error("select model from (select model from model_list)").find("unsupported construct"),
              std::string::npos);
    EXPECT_NE(sql_error("select model from model_list union select model from cars_data union select model "
                        "from model_list")
                  .find("unsupported construct"),
              std::string::npos);
    EXPECT_NE(sql_error("select model from planes").find("unknown table"), std::string::npos);
    EXPECT_NE(sql_error("select wingspan from model_list").find("unknown column"), std::string::npos);
    auto amb = sql_error("select maker from car_makers join model_list");
    EXPECT_NE(amb.find("ambiguous column 'maker'"), std::string::npos);
    EXPECT_NE(amb.find("car_makers.maker"), std::string::npos);
    EXPECT_NE(amb.find("model_list.maker"), std::string::npos);
    EXPECT_NE(sql_error("select model from model_list where maker = 1 and model_id = 2 or model = 'x'")
                  .find("mixed and/or"),
              std::string::npos);
}

TEST(Ast, CanonicalFormIsAFixedPoint) {
    const auto& g = shipped_grammar();
    auto s = car_schema();
    for (const char* sql :
         {"SELECT DISTINCT maker FROM car_makers WHERE country = 'usa' ORDER BY maker DESC LIMIT 3",
          "select avg(horsepower), max(year) from cars_data as T9 where year > 1990 and horsepower < 200",
          "select T2.model from car_makers as T1 join model_list as T2 on T1.id = T2.maker where T1.maker = 'bmw' "
          "intersect select model from cars_data where year >= 2000"}) {
        auto canon = canonical_sql(sql, s, g);
        EXPECT_EQ(canonical_sql(canon, s, g), canon) << sql;
    }
}

TEST(Ast, ValuesBindToLeftmostQuestionToken) {
    const auto& g = shipped_grammar();
    auto q = words("cars from 1990 or 1990 again");
    auto ast = parse_sql("select model from cars_data where year = 1990", car_schema(), g,
                         std::span<const std::string>(q));
    auto trace = oracle_actions(ast, g);
    auto acts = trace.actions();
    auto it = std::find_if(acts.begin(), acts.end(), [](const Action& a) { return a.kind == ActionKind::SelectValue; });
    ASSERT_NE(it, acts.end());
    EXPECT_EQ(it->id, 2);
    EXPECT_THROW(parse_sql("select model from cars_data where year = 1777", car_schema(), g,
                           std::span<const std::string>(q)),
                 SqlError);
    // Without a bound question the oracle cannot produce SelectValue.
    auto unbound = parse_sql("select model from cars_data where year = 1990", car_schema(), g);
    EXPECT_THROW(oracle_actions(unbound, g), AstError);
}

TEST(Ast, TraceDumpFormat) {
    const auto& g = shipped_grammar();
    auto gold = parse_sql("select model from model_list", car_schema(), g);
    std::ostringstream os;
    dump_trace(os, oracle_actions(gold, g), g);
    const std::string expected =
        "0\tSELECT\tApplyRule(select_clause -> SELECT distinct agg)\n"
        "1\tSELECT\tApplyRule(distinct -> ALL)\n"
        "2\tSELECT\tApplyRule(agg -> agg_id val_unit)\n"
        "3\tSELECT\tApplyRule(agg_id -> NO_AGG)\n"
        "4\tSELECT\tApplyRule(val_unit -> col_unit)\n"
        "5\tSELECT\tApplyRule(col_unit -> col)\n"
        "6\tSELECT\tSelectColumn(5)\n"
        "7\tWHERE\tApplyRule(where_clause -> None)\n"
        "8\tGROUP\tApplyRule(group_clause -> None)\n"
        "9\tORDER\tApplyRule(order_clause -> None)\n"
        "10\tIEU\tApplyRule(ieu_clause -> None)\n"
        "11\tFROM\tApplyRule(from_clause -> FROM tab)\n"
        "12\tFROM\tSelectTable(1)\n";
    EXPECT_EQ(os.str(), expected);
}

TEST(Ast, OracleRejectsForeignRule) {
    const auto& g = shipped_grammar();
    auto gold = parse_sql("select model from model_list", car_schema(), g);
    gold.children[0].rule = g.rules_for("where_clause")[0];
    EXPECT_THROW(oracle_actions(gold, g), AstError);
}
