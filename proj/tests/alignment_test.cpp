#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "sqlpar/alignment.hpp"
#include "sqlpar/sql.hpp"
#include "test_support.hpp"

using namespace sqlpar;
using namespace sqlpar::testing;

namespace {

const ClauseSegment& seg_of(const ClauseSegments& s, ClauseKind k) { return s[clause_index(k)]; }

ClauseSegments segments(const std::string& question, const std::string& sql) {
    auto q = words(question);
    auto ast = parse_sql(sql, car_schema(), shipped_grammar(), std::span<const std::string>(q));
    return clause_segments(q, ast, car_schema(), shipped_grammar());
}

// Brute force: every window, keep those holding one full occurrence of each element.
std::pair<int, int> brute_cover(const std::vector<ElementMatch>& es, int n) {
    std::pair<int, int> best{0, n + 1};
    for (int b = 0; b < n; ++b)
        for (int e = b + 1; e <= n; ++e) {
            bool all = true;
            for (const auto& m : es) {
                bool inside = false;
                for (int s : m.starts) inside = inside || (s >= b && s + m.length <= e);
                all = all && inside;
            }
            if (all && e - b < best.second - best.first) best = {b, e};
        }
    return best;
}

}  // namespace

TEST(TokenAlign, LinksColumnAtItsToken) {
    auto q = words("which model has the most versions");
    auto ast = parse_sql("select T1.model from model_list as T1", car_schema(), shipped_grammar());
    auto ta = token_align(q, ast, car_schema(), shipped_grammar());
    ASSERT_FALSE(ta.links.empty());
    EXPECT_EQ(ta.links[0], (TokenLink{1, ElementKind::Column, 5, ClauseKind::Select}));
}

TEST(TokenAlign, AbsentNameHasNoLink) {
    auto q = words("how many rows are there");
    auto ast = parse_sql("select horsepower from cars_data", car_schema(), shipped_grammar());
    EXPECT_TRUE(token_align(q, ast, car_schema(), shipped_grammar()).links.empty());
}

TEST(TokenAlign, LeftmostOccurrenceWins) {
    auto q = words("year by year");
    auto ast = parse_sql("select year from cars_data", car_schema(), shipped_grammar());
    auto ta = token_align(q, ast, car_schema(), shipped_grammar());
    ASSERT_EQ(ta.links.size(), 1u);
    EXPECT_EQ(ta.links[0].token, 0);
}

TEST(TokenAlign, LongestNgramPreferred) {
    auto q = words("the model id and the model list");
    auto m = match_name(q, name_tokens("model_list"));
    EXPECT_EQ(m.length, 2);
    EXPECT_EQ(m.starts, (std::vector<int>{5}));
    auto partial = match_name(q, name_tokens("model_name"));
    EXPECT_EQ(partial.length, 1);
    EXPECT_EQ(partial.starts, (std::vector<int>{1, 5}));
}

TEST(ClauseSegments, SelectModelSegment) {
    // String matching finds "model"; the interrogative word carries no schema match.
    auto s = segments("which model has the most versions", "select T1.model from model_list as T1");
    const auto& sel = seg_of(s, ClauseKind::Select);
    EXPECT_FALSE(sel.whole_question);
    EXPECT_EQ(sel.begin, 1);
    EXPECT_EQ(sel.end, 2);
    EXPECT_TRUE(seg_of(s, ClauseKind::Where).whole_question);
    EXPECT_FALSE(seg_of(s, ClauseKind::Where).missing());
}

TEST(ClauseSegments, AllElementsOnOneTokenGiveLengthOne) {
    auto s = segments("show every model", "select model from model_list");
    const auto& sel = seg_of(s, ClauseKind::Select);
    EXPECT_EQ(sel.end - sel.begin, 1);
    const auto& from = seg_of(s, ClauseKind::From);
    EXPECT_EQ(from.begin, 2);
    EXPECT_EQ(from.end, 3);
}

TEST(ClauseSegments, SpanCoversColumnAndValue) {
    auto s = segments("horsepower of cars data from year 1970",
                      "select horsepower from cars_data where year = 1970");
    const auto& w = seg_of(s, ClauseKind::Where);
    EXPECT_EQ(w.begin, 5);
    EXPECT_EQ(w.end, 7);
    EXPECT_EQ(seg_of(s, ClauseKind::From).begin, 2);
    EXPECT_EQ(seg_of(s, ClauseKind::From).end, 4);
    EXPECT_FALSE(is_fallback_pair(s));
}

TEST(ClauseSegments, NoLinksMeansWholeQuestionEverywhere) {
    auto s = segments("what are the strongest engines", "select horsepower from cars_data");
    for (const auto& seg : s) EXPECT_TRUE(seg.whole_question);
    EXPECT_TRUE(is_fallback_pair(s));
}

TEST(ClauseSegments, ShortestCoverMatchesBruteForce) {
    std::mt19937 rng(17);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 14);
        std::vector<ElementMatch> es(1 + rng() % 4);
        for (auto& e : es) {
            e.length = 1 + static_cast<int>(rng() % 2);
            for (int s = 0; s + e.length <= n; ++s)
                if (rng() % 4 == 0) e.starts.push_back(s);
            if (e.starts.empty()) e.starts.push_back(static_cast<int>(rng() % (n - e.length + 1)));
        }
        std::vector<const ElementMatch*> ptrs;
        for (const auto& e : es) ptrs.push_back(&e);
        EXPECT_EQ(shortest_cover(ptrs, n), brute_cover(es, n)) << "trial " << trial;
    }
}

TEST(ClauseSegments, ShrinkingBySideDropsALink) {
    auto q = words("maker from germany with model and horsepower above 100 in year 1990");
    auto ast = parse_sql(
        "select T1.maker , T2.model from car_makers as T1 join model_list as T2 where T1.country = 'germany' "
        "and T2.model_id > 100",
        car_schema(), shipped_grammar(), std::span<const std::string>(q));
    auto segs = clause_segments(q, ast, car_schema(), shipped_grammar());
    for (auto k : kClauseOrder) {
        const auto& seg = seg_of(segs, k);
        if (seg.whole_question) continue;
        auto elems = clause_elements(clause_subtree(ast, shipped_grammar(), k), q, car_schema(), shipped_grammar());
        std::erase_if(elems, [](const ElementMatch& e) { return !e.linked(); });
        auto covered = [&](int b, int e) {
            for (const auto& m : elems) {
                bool in = false;
                for (int s : m.starts) in = in || (s >= b && s + m.length <= e);
                if (!in) return false;
            }
            return true;
        };
        EXPECT_TRUE(covered(seg.begin, seg.end));
        EXPECT_FALSE(covered(seg.begin + 1, seg.end)) << clause_name(k);
        EXPECT_FALSE(covered(seg.begin, seg.end - 1)) << clause_name(k);
    }
}

TEST(Prior, SegmentAndWholeQuestion) {
    ClauseSegment seg;
    seg.whole_question = false;
    seg.begin = 0;
    seg.end = 2;
    EXPECT_EQ(prior_distribution(seg, 5), (std::vector<double>{0.5, 0.5, 0, 0, 0}));
    ClauseSegment whole;
    auto p = prior_distribution(whole, 8);
    for (double v : p) EXPECT_EQ(v, 0.125);
    EXPECT_THROW(prior_distribution(whole, 0), std::invalid_argument);
}

TEST(Stats, FallbackFractionAndEmptyCorpus) {
    std::vector<ClauseSegments> corpus{segments("show every model", "select model from model_list"),
                                       segments("what are the strongest engines", "select horsepower from cars_data")};
    auto st = alignment_stats(corpus);
    EXPECT_EQ(st.pairs, 2u);
    EXPECT_EQ(st.fallback_pairs, 1u);
    EXPECT_DOUBLE_EQ(st.fallback_fraction, 0.5);
    EXPECT_EQ(st.length_histogram[clause_index(ClauseKind::Select)].at(1), 1u);
    EXPECT_THROW(alignment_stats(std::span<const ClauseSegments>{}), std::invalid_argument);
}

TEST(Export, MatrixRowsAndLinks) {
    auto q = words("show every model");
    auto ast = parse_sql("select model from model_list", car_schema(), shipped_grammar());
    auto segs = clause_segments(q, ast, car_schema(), shipped_grammar());
    std::ostringstream os;
    write_alignment_matrix(os, q, segs, token_align(q, ast, car_schema(), shipped_grammar()));
    EXPECT_EQ(os.str(),
              "clause,show,every,model\n"
              "SELECT,0,0,1\n"
              "WHERE,0.333333,0.333333,0.333333\n"
              "GROUP,0.333333,0.333333,0.333333\n"
              "ORDER,0.333333,0.333333,0.333333\n"
              "IEU,0.333333,0.333333,0.333333\n"
              "FROM,0,0,1\n"
              "link,2,column,5,SELECT\n"
              "link,2,table,1,FROM\n");
}
