#pragma once

#include <string>
#include <vector>

#include "sqlpar/grammar.hpp"
#include "sqlpar/model.hpp"
#include "sqlpar/nn/tape.hpp"
#include "sqlpar/schema.hpp"
#include "sqlpar/text.hpp"

namespace sqlpar::testing {

inline const Grammar& shipped_grammar() {
    static const Grammar g = load_grammar_file(std::string(SQLPAR_DATA_DIR) + "/sql.grammar");
    return g;
}

/// car_makers(id, maker, country) <- model_list(model_id, maker, model) <-
/// cars_data(id, model, horsepower, year)
inline SchemaDef car_schema() {
    SchemaDef s;
    s.db_id = "car_1";
    int makers = s.add_table("car_makers");
    int models = s.add_table("model_list");
    int data = s.add_table("cars_data");
    int maker_id = s.add_column(makers, "id", ValueDomain::Number);
    s.add_column(makers, "maker", ValueDomain::Text);
    s.add_column(makers, "country", ValueDomain::Text);
    s.add_column(models, "model_id", ValueDomain::Number);
    int model_maker = s.add_column(models, "maker", ValueDomain::Number);
    int model = s.add_column(models, "model", ValueDomain::Text);
    s.add_column(data, "id", ValueDomain::Number);
    int data_model = s.add_column(data, "model", ValueDomain::Text);
    s.add_column(data, "horsepower", ValueDomain::Number);
    s.add_column(data, "year", ValueDomain::Number);
    s.foreign_keys = {{model_maker, maker_id}, {data_model, model}};
    return s;
}

inline std::vector<std::string> words(const std::string& text) { return tokenize_question(text); }

/// Dimensions small enough that a gradient check can visit every entry.
inline ModelDims tiny_dims() {
    ModelDims d;
    d.word_buckets = 64;
    d.emb = 4;
    d.type_emb = 3;
    d.hidden = 5;
    d.enc_hidden = 3;
    return d;
}

/// Sum over rows of <r_i, X_i> with fixed pseudo-random r; turns any matrix into a scalar.
inline nn::Var probe_all(nn::Tape& t, nn::Var X, std::uint64_t seed) {
    const auto& v = t.value(X);
    std::vector<nn::Var> parts;
    std::uint64_t state = seed;
    for (std::size_t r = 0; r < v.rows; ++r) {
        nn::Tensor dir(1, v.cols);
        for (double& d : dir.data) {
            state = state * 6364136223846793005ULL + 1442695040888963407ULL;
            d = static_cast<double>(state >> 11) / 9007199254740992.0 * 2.0 - 1.0;
        }
        parts.push_back(t.dot_rows(t.constant(std::move(dir)), t.slice_row(X, r)));
    }
    return t.sum(parts);
}

}  // namespace sqlpar::testing
