#include <gtest/gtest.h>

#include <algorithm>

#include "sqlpar/encoder.hpp"
#include "sqlpar/nn/grad_check.hpp"
#include "test_support.hpp"

using namespace sqlpar;
using namespace sqlpar::testing;

TEST(Encoder, OutputShapes) {
    Model m(shipped_grammar(), ModelDims{}, 1);
    auto q = words("show the model of the cars");
    q.resize(5);
    auto out = encode(m, q, car_schema());
    EXPECT_EQ(out.tokens.rows, 5u);
    EXPECT_EQ(out.tokens.cols, 128u);
    EXPECT_EQ(out.columns.rows, 10u);
    EXPECT_EQ(out.columns.cols, 32u);
    EXPECT_EQ(out.tables.rows, 3u);
    EXPECT_TRUE(out.tokens.all_finite() && out.columns.all_finite() && out.tables.all_finite());
}

TEST(Encoder, ColumnPermutationPermutesRows) {
    Model m(shipped_grammar(), ModelDims{}, 2);
    auto s = car_schema();
    const std::vector<int> perm{7, 2, 9, 0, 4, 1, 8, 3, 6, 5};  // new position -> old column id
    SchemaDef p;
    p.db_id = s.db_id;
    for (const auto& t : s.tables) p.add_table(t.name);
    for (int old : perm) p.add_column(s.column(old).table, s.column(old).name, s.column(old).domain);
    auto q = words("which model has the largest horsepower in year 1970");
    auto a = encode(m, q, s);
    auto b = encode(m, q, p);
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t d = 0; d < a.columns.cols; ++d)
            EXPECT_EQ(b.columns.at(i, d), a.columns.at(static_cast<std::size_t>(perm[i]), d));
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.tables, b.tables);
}

TEST(Encoder, ReversingTheQuestionChangesTokenVectors) {
    Model m(shipped_grammar(), ModelDims{}, 3);
    auto q = words("list every maker from germany ordered by name");
    auto r = q;
    std::reverse(r.begin(), r.end());
    auto a = encode(m, q, car_schema());
    auto b = encode(m, r, car_schema());
    // Compare each token's vector with the same token's vector in the reversed run.
    bool differs = false;
    for (std::size_t i = 0; i < q.size(); ++i)
        for (std::size_t d = 0; d < a.tokens.cols; ++d)
            differs = differs || a.tokens.at(i, d) != b.tokens.at(q.size() - 1 - i, d);
    EXPECT_TRUE(differs);
}

TEST(Encoder, LinkFlagsFollowTheMatcher) {
    auto q = words("what is the horsepower of model x");
    auto f = link_flags(q, car_schema());
    EXPECT_EQ(f.tokens, (std::vector<int>{0, 0, 0, 1, 0, 1, 0}));
    EXPECT_EQ(f.columns[8], 1);  // horsepower
    EXPECT_EQ(f.columns[9], 0);  // year
    EXPECT_EQ(f.tables[1], 1);   // model_list through "model"
    EXPECT_EQ(f.tables[0], 0);   // car_makers: neither "car" nor "makers" appears
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
    Model m(shipped_grammar(), tiny_dims(), 4);
    auto q = words("horsepower of model with year 1970");
    auto s = car_schema();
    auto rep = nn::grad_check(m.params, [&](nn::Tape& t) {
        auto v = encode(t, m, q, s);
        return t.sum({probe_all(t, v.tokens, 1), probe_all(t, v.columns, 2), probe_all(t, v.tables, 3)});
    });
    EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst_param << "[" << rep.worst_index << "] analytic "
                                       << rep.worst_analytic << " numeric " << rep.worst_numeric;
}

TEST(Encoder, Errors) {
    Model m(shipped_grammar(), tiny_dims(), 5);
    std::vector<std::string> empty;
    EXPECT_THROW(encode(m, empty, car_schema()), EncoderError);
    SchemaDef none;
    none.db_id = "empty";
    auto q = words("anything");
    EXPECT_THROW(encode(m, q, none), EncoderError);
}
