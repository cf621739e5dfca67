#pragma once

// Question tokens: hashed word embedding plus a linking flag, run through a
// single-layer BiLSTM. Schema items: mean of name-token embeddings, a kind
// embedding, and a linking flag; columns also see their table's name.

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqlpar/alignment.hpp"
#include "sqlpar/model.hpp"
#include "sqlpar/nn/tape.hpp"

namespace sqlpar {

class EncoderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EncoderOutput {
    nn::Tensor tokens;   // n x 2*enc_hidden
    nn::Tensor columns;  // C x emb
    nn::Tensor tables;   // T x emb
};

struct EncodedVars {
    nn::Var tokens, columns, tables;
};

/// Linking flags from the shared matcher: which question tokens sit inside the
/// leftmost best match of some schema name, and which schema items match at all.
struct LinkFlags {
    std::vector<int> tokens, columns, tables;
};

inline LinkFlags link_flags(std::span<const std::string> question, const SchemaDef& schema) {
    LinkFlags f;
    f.tokens.assign(question.size(), 0);
    auto mark = [&](const std::vector<std::string>& name) {
        auto m = match_name(question, name);
        if (!m.linked()) return 0;
        for (int i = m.starts.front(); i < m.starts.front() + m.length; ++i) f.tokens[static_cast<std::size_t>(i)] = 1;
        return 1;
    };
    for (const auto& c : schema.columns) f.columns.push_back(mark(c.tokens));
    for (const auto& t : schema.tables) f.tables.push_back(mark(t.tokens));
    return f;
}

inline int word_bucket(const std::string& token, std::size_t buckets) {
    return static_cast<int>(fnv1a(token) % buckets);
}

namespace detail {

inline std::vector<int> buckets_of(const std::vector<std::string>& toks, std::size_t n) {
    std::vector<int> out;
    for (const auto& t : toks) out.push_back(word_bucket(t, n));
    return out;
}

inline std::vector<nn::Var> lstm_pass(nn::Tape& t, const std::vector<nn::Var>& xs, nn::Var W, nn::Var b,
                                      std::size_t H, bool reverse) {
    std::vector<nn::Var> hs(xs.size());
    nn::Var h = t.constant(nn::Tensor(1, H));
    nn::Var c = t.constant(nn::Tensor(1, H));
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const std::size_t i = reverse ? xs.size() - 1 - k : k;
        nn::Var ch = t.lstm(t.affine(t.concat_cols({xs[i], h}), W, b), c);
        c = t.slice_cols(ch, 0, H);
        h = t.slice_cols(ch, H, H);
        hs[i] = h;
    }
    return hs;
}

}  // namespace detail

inline EncodedVars encode(nn::Tape& t, const Model& m, std::span<const std::string> question,
                          const SchemaDef& schema) {
    if (question.empty()) throw EncoderError("cannot encode an empty question");
    if (schema.tables.empty()) throw EncoderError("schema '" + schema.db_id + "' has no tables");
    const auto B = m.dims.word_buckets;
    const auto flags = link_flags(question, schema);

    nn::Var words = t.param(*m.word_emb);
    std::vector<int> qb;
    for (const auto& tok : question) qb.push_back(word_bucket(tok, B));
    nn::Var x = t.add(t.rows(words, qb), t.rows(t.param(*m.token_link_emb), flags.tokens));
    std::vector<nn::Var> xs;
    for (std::size_t i = 0; i < question.size(); ++i) xs.push_back(t.slice_row(x, i));

    const auto EH = m.dims.enc_hidden;
    auto fwd = detail::lstm_pass(t, xs, t.param(*m.enc_fwd_W), t.param(*m.enc_fwd_b), EH, false);
    auto bwd = detail::lstm_pass(t, xs, t.param(*m.enc_bwd_W), t.param(*m.enc_bwd_b), EH, true);
    std::vector<nn::Var> rows;
    for (std::size_t i = 0; i < question.size(); ++i) rows.push_back(t.concat_cols({fwd[i], bwd[i]}));

    nn::Var kind = t.param(*m.schema_kind_emb);
    nn::Var link = t.param(*m.schema_link_emb);
    nn::Var proj = t.param(*m.col_table_proj);
    std::vector<nn::Var> tabs;
    std::vector<nn::Var> tab_names;
    for (const auto& tb : schema.tables) {
        nn::Var name = t.mean_rows(t.rows(words, detail::buckets_of(tb.tokens, B)));
        tab_names.push_back(name);
        tabs.push_back(t.add(t.add(name, t.rows(kind, {1})),
                             t.rows(link, {flags.tables[static_cast<std::size_t>(tb.id)]})));
    }
    nn::Var columns{};
    if (!schema.columns.empty()) {
        std::vector<nn::Var> cols;
        for (const auto& c : schema.columns) {
            nn::Var name = t.mean_rows(t.rows(words, detail::buckets_of(c.tokens, B)));
            nn::Var parent = t.affine(tab_names[static_cast<std::size_t>(c.table)], proj);
            cols.push_back(t.add(t.add(t.add(name, parent), t.rows(kind, {0})),
                                 t.rows(link, {flags.columns[static_cast<std::size_t>(c.id)]})));
        }
        columns = t.stack_rows(cols);
    }
    return {t.stack_rows(rows), columns, t.stack_rows(tabs)};
}

inline EncoderOutput encode(const Model& m, std::span<const std::string> question, const SchemaDef& schema) {
    nn::Tape t;
    auto v = encode(t, m, question, schema);
    EncoderOutput out;
    out.tokens = t.value(v.tokens);
    out.tables = t.value(v.tables);
    out.columns = v.columns.valid() ? t.value(v.columns) : nn::Tensor(0, m.dims.emb);
    return out;
}

}  // namespace sqlpar
