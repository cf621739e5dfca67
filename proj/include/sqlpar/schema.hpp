#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqlpar/text.hpp"

namespace sqlpar {

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ValueDomain { Text, Number };

struct TableDef {
    int id = 0;
    std::string name;
    std::vector<std::string> tokens;
};

struct ColumnDef {
    int id = 0;
    int table = 0;
    std::string name;
    std::vector<std::string> tokens;
    ValueDomain domain = ValueDomain::Text;
};

struct SchemaDef {
    std::string db_id;
    std::vector<TableDef> tables;
    std::vector<ColumnDef> columns;
    std::vector<std::pair<int, int>> foreign_keys;

    int add_table(const std::string& name) {
        int id = static_cast<int>(tables.size());
        tables.push_back({id, name, name_tokens(name)});
        return id;
    }

    int add_column(int table, const std::string& name, ValueDomain domain) {
        int id = static_cast<int>(columns.size());
        columns.push_back({id, table, name, name_tokens(name), domain});
        return id;
    }

    void validate() const {
        if (db_id.empty()) throw SchemaError("schema without db_id");
        for (std::size_t i = 0; i < tables.size(); ++i)
            if (tables[i].id != static_cast<int>(i)) throw SchemaError(db_id + ": table ids must be dense");
        for (std::size_t i = 0; i < columns.size(); ++i) {
            const auto& c = columns[i];
            if (c.id != static_cast<int>(i)) throw SchemaError(db_id + ": column ids must be dense");
            if (c.table < 0 || c.table >= static_cast<int>(tables.size()))
                throw SchemaError(db_id + ": column '" + c.name + "' has no parent table");
        }
        for (auto [a, b] : foreign_keys)
            if (a < 0 || b < 0 || a >= static_cast<int>(columns.size()) || b >= static_cast<int>(columns.size()))
                throw SchemaError(db_id + ": foreign key endpoint out of range");
    }

    std::optional<int> find_table(std::string_view name) const {
        auto lower = to_lower(name);
        for (const auto& t : tables)
            if (t.name == lower) return t.id;
        return std::nullopt;
    }

    std::vector<int> columns_named(std::string_view name) const {
        auto lower = to_lower(name);
        std::vector<int> out;
        for (const auto& c : columns)
            if (c.name == lower) out.push_back(c.id);
        return out;
    }

    const ColumnDef& column(int id) const { return columns.at(static_cast<std::size_t>(id)); }
    const TableDef& table(int id) const { return tables.at(static_cast<std::size_t>(id)); }
};

}  // namespace sqlpar
