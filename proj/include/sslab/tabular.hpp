#pragma once

// Ingestion of headered delimiter-separated tabular data driven by a schema:
// label mapping, group column with category merges/drops, numeric columns
// (optionally with value maps for yes/no style fields), one-hot expansion of
// categorical columns, missing-row drops, and seeded subsampling.
//
// Group categories map to ids in sorted order after merges, and the group
// one-hot block is appended as the final feature columns. Numeric columns
// stay raw here; scaling happens against train-split statistics (see
// split_normalized in data.hpp).

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslab/core.hpp"
#include "sslab/rng.hpp"

namespace sslab {

struct TabularSchema {
    std::string name;
    char delimiter = ',';

    std::string label_column;
    std::vector<std::string> positive_labels;

    std::string group_column;
    std::map<std::string, std::string> group_merges;  // category -> replacement
    std::vector<std::string> group_drop_categories;   // rows with these are dropped

    std::vector<std::string> numeric_columns;
    std::map<std::string, std::map<std::string, double>> numeric_value_maps;

    std::vector<std::string> categorical_columns;  // one-hot expanded (group excluded)
    std::map<std::string, std::map<std::string, std::string>> category_merges;

    std::string missing_token;            // empty disables the check
    bool drop_missing_any_column = true;  // scan every column, used or not

    struct GroupSubsample {
        std::string category;
        double remove_fraction = 0.0;
    };
    std::vector<GroupSubsample> group_subsamples;
    double negative_remove_fraction = 0.0;

    static TabularSchema adult();
    static TabularSchema bank();
    static TabularSchema from_json(const nlohmann::json& j);
    static TabularSchema from_json_file(const std::string& path);
    nlohmann::json to_json() const;
};

inline TabularSchema TabularSchema::adult() {
    TabularSchema s;
    s.name = "adult";
    s.delimiter = ',';
    s.label_column = "income";
    s.positive_labels = {">50K", ">50K."};
    s.group_column = "race";
    s.group_merges = {{"Amer-Indian-Eskimo", "Other"}};
    s.numeric_columns = {"age", "fnlwgt", "education_num", "capital_gain", "capital_loss",
                         "hours_per_week"};
    s.categorical_columns = {"workclass", "marital_status", "relationship", "sex", "occupation"};
    // occupation collapsed from 15 values to 5 coarse buckets
    s.category_merges["occupation"] = {
        {"Exec-managerial", "professional"}, {"Prof-specialty", "professional"},
        {"Adm-clerical", "office"},          {"Sales", "office"},
        {"Tech-support", "office"},          {"Craft-repair", "manual"},
        {"Machine-op-inspct", "manual"},     {"Transport-moving", "manual"},
        {"Handlers-cleaners", "manual"},     {"Farming-fishing", "manual"},
        {"Other-service", "service"},        {"Priv-house-serv", "service"},
        {"Protective-serv", "service"},      {"Armed-Forces", "other"},
    };
    s.missing_token = "?";
    s.drop_missing_any_column = true;
    s.group_subsamples = {{"White", 0.75}};
    return s;
}

inline TabularSchema TabularSchema::bank() {
    TabularSchema s;
    s.name = "bank";
    s.delimiter = ';';
    s.label_column = "y";
    s.positive_labels = {"yes"};
    s.group_column = "job";
    s.group_drop_categories = {"unknown", "housemaid"};
    s.numeric_columns = {"age",     "balance", "duration", "campaign", "pdays",
                         "previous", "default", "housing",  "loan"};
    s.numeric_value_maps["default"] = {{"yes", 1.0}, {"no", 0.0}};
    s.numeric_value_maps["housing"] = {{"yes", 1.0}, {"no", 0.0}};
    s.numeric_value_maps["loan"] = {{"yes", 1.0}, {"no", 0.0}};
    s.categorical_columns = {"marital", "education", "contact", "poutcome"};
    s.negative_remove_fraction = 0.30;
    return s;
}

inline nlohmann::json TabularSchema::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["delimiter"] = std::string(1, delimiter);
    j["label"] = {{"column", label_column}, {"positive_values", positive_labels}};
    j["group"] = {{"column", group_column},
                  {"merges", group_merges},
                  {"drop_categories", group_drop_categories}};
    j["numeric_columns"] = numeric_columns;
    j["numeric_value_maps"] = numeric_value_maps;
    j["categorical_columns"] = categorical_columns;
    j["category_merges"] = category_merges;
    j["missing"] = {{"token", missing_token}, {"scan_all_columns", drop_missing_any_column}};
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& g : group_subsamples) {
        subs.push_back({{"group_category", g.category}, {"remove_fraction", g.remove_fraction}});
    }
    j["subsample"] = {{"groups", subs}, {"negative_remove_fraction", negative_remove_fraction}};
    return j;
}

inline TabularSchema TabularSchema::from_json(const nlohmann::json& j) {
    TabularSchema s;
    s.name = j.value("name", "");
    const std::string d = j.value("delimiter", ",");
    if (d.size() != 1) throw std::invalid_argument("schema: delimiter must be one character");
    s.delimiter = d[0];
    s.label_column = j.at("label").at("column").get<std::string>();
    s.positive_labels = j.at("label").at("positive_values").get<std::vector<std::string>>();
    s.group_column = j.at("group").at("column").get<std::string>();
    if (j.at("group").contains("merges")) {
        s.group_merges = j.at("group").at("merges").get<std::map<std::string, std::string>>();
    }
    if (j.at("group").contains("drop_categories")) {
        s.group_drop_categories =
            j.at("group").at("drop_categories").get<std::vector<std::string>>();
    }
    s.numeric_columns = j.value("numeric_columns", std::vector<std::string>{});
    if (j.contains("numeric_value_maps")) {
        s.numeric_value_maps =
            j.at("numeric_value_maps").get<std::map<std::string, std::map<std::string, double>>>();
    }
    s.categorical_columns = j.value("categorical_columns", std::vector<std::string>{});
    if (j.contains("category_merges")) {
        s.category_merges =
            j.at("category_merges")
                .get<std::map<std::string, std::map<std::string, std::string>>>();
    }
    if (j.contains("missing")) {
        s.missing_token = j.at("missing").value("token", "");
        s.drop_missing_any_column = j.at("missing").value("scan_all_columns", true);
    }
    if (j.contains("subsample")) {
        for (const auto& g : j.at("subsample").value("groups", nlohmann::json::array())) {
            s.group_subsamples.push_back(
                {g.at("group_category").get<std::string>(), g.at("remove_fraction").get<double>()});
        }
        s.negative_remove_fraction = j.at("subsample").value("negative_remove_fraction", 0.0);
    }
    return s;
}

inline TabularSchema TabularSchema::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read schema " + path);
    nlohmann::json j;
    f >> j;
    return from_json(j);
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n\"");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n\"");
    return s.substr(a, b - a + 1);
}

inline std::string canonical_column(const std::string& s) {
    std::string out;
    for (char c : trim(s)) {
        if (c == '-' || c == '.' || c == ' ') {
            out.push_back('_');
        } else {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    return out;
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delim)) cells.push_back(trim(cell));
    return cells;
}

}  // namespace detail

// Loads and preprocesses a headered delimiter-separated file. Column names
// are canonicalized (lowercase, [-. ] -> _) before matching the schema.
inline Dataset load_tabular(const std::string& path, const TabularSchema& schema,
                            std::uint64_t seed) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);

    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("load_tabular: empty file");
    std::vector<std::string> header = detail::split_line(line, schema.delimiter);
    std::map<std::string, std::size_t> col;
    for (std::size_t j = 0; j < header.size(); ++j) col[detail::canonical_column(header[j])] = j;

    const auto column_of = [&](const std::string& name) {
        const auto it = col.find(detail::canonical_column(name));
        if (it == col.end()) throw std::invalid_argument("load_tabular: missing column '" + name + "'");
        return it->second;
    };
    const std::size_t label_col = column_of(schema.label_column);
    const std::size_t group_col = column_of(schema.group_column);
    std::vector<std::size_t> numeric_idx, categorical_idx;
    for (const auto& c : schema.numeric_columns) numeric_idx.push_back(column_of(c));
    for (const auto& c : schema.categorical_columns) categorical_idx.push_back(column_of(c));

    struct RawRow {
        std::vector<double> numeric;
        std::vector<std::string> categorical;
        std::string group;
        int label = 0;
    };
    std::vector<RawRow> rows;
    const std::set<std::string> group_drops(schema.group_drop_categories.begin(),
                                            schema.group_drop_categories.end());

    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells = detail::split_line(line, schema.delimiter);
        if (cells.size() != header.size()) {
            throw std::invalid_argument("load_tabular: row " + std::to_string(line_no) +
                                        " has " + std::to_string(cells.size()) + " cells, expected " +
                                        std::to_string(header.size()));
        }
        if (!schema.missing_token.empty()) {
            bool missing = false;
            if (schema.drop_missing_any_column) {
                for (const auto& c : cells) {
                    if (c == schema.missing_token) {
                        missing = true;
                        break;
                    }
                }
            } else {
                const auto check = [&](std::size_t j) { missing = missing || cells[j] == schema.missing_token; };
                check(label_col);
                check(group_col);
                for (std::size_t j : numeric_idx) check(j);
                for (std::size_t j : categorical_idx) check(j);
            }
            if (missing) continue;
        }

        RawRow r;
        std::string g = cells[group_col];
        if (const auto it = schema.group_merges.find(g); it != schema.group_merges.end()) g = it->second;
        if (group_drops.count(g)) continue;
        r.group = g;

        const std::string& label_value = cells[label_col];
        r.label = std::count(schema.positive_labels.begin(), schema.positive_labels.end(),
                             label_value) > 0
                      ? 1
                      : 0;

        for (std::size_t k = 0; k < numeric_idx.size(); ++k) {
            const std::string& v = cells[numeric_idx[k]];
            const auto vm = schema.numeric_value_maps.find(schema.numeric_columns[k]);
            if (vm != schema.numeric_value_maps.end()) {
                const auto it = vm->second.find(v);
                if (it == vm->second.end()) {
                    throw std::invalid_argument("load_tabular: unmapped value '" + v +
                                                "' in column " + schema.numeric_columns[k]);
                }
                r.numeric.push_back(it->second);
            } else {
                try {
                    r.numeric.push_back(std::stod(v));
                } catch (const std::exception&) {
                    throw std::invalid_argument("load_tabular: non-numeric value '" + v +
                                                "' in column " + schema.numeric_columns[k]);
                }
            }
        }
        for (std::size_t k = 0; k < categorical_idx.size(); ++k) {
            std::string v = cells[categorical_idx[k]];
            const auto cm = schema.category_merges.find(schema.categorical_columns[k]);
            if (cm != schema.category_merges.end()) {
                if (const auto it = cm->second.find(v); it != cm->second.end()) v = it->second;
            }
            r.categorical.push_back(v);
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::invalid_argument("load_tabular: no usable rows");

    // seeded subsampling: per-group removals first, then global negatives
    Rng rng(seed);
    for (const auto& sub : schema.group_subsamples) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].group == sub.category) members.push_back(i);
        }
        const auto remove =
            static_cast<std::size_t>(std::llround(sub.remove_fraction * static_cast<double>(members.size())));
        rng.shuffle(members);
        std::set<std::size_t> drop(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(remove));
        std::vector<RawRow> kept;
        kept.reserve(rows.size() - remove);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!drop.count(i)) kept.push_back(std::move(rows[i]));
        }
        rows = std::move(kept);
    }
    if (schema.negative_remove_fraction > 0.0) {
        std::vector<std::size_t> negatives;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].label == 0) negatives.push_back(i);
        }
        const auto remove = static_cast<std::size_t>(
            std::llround(schema.negative_remove_fraction * static_cast<double>(negatives.size())));
        rng.shuffle(negatives);
        std::set<std::size_t> drop(negatives.begin(),
                                   negatives.begin() + static_cast<std::ptrdiff_t>(remove));
        std::vector<RawRow> kept;
        kept.reserve(rows.size() - remove);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!drop.count(i)) kept.push_back(std::move(rows[i]));
        }
        rows = std::move(kept);
    }

    // category vocabularies in sorted order; group ids likewise
    std::set<std::string> group_set;
    std::vector<std::set<std::string>> cat_sets(schema.categorical_columns.size());
    for (const auto& r : rows) {
        group_set.insert(r.group);
        for (std::size_t k = 0; k < r.categorical.size(); ++k) cat_sets[k].insert(r.categorical[k]);
    }
    std::vector<std::string> group_names(group_set.begin(), group_set.end());
    std::map<std::string, int> group_id;
    for (std::size_t z = 0; z < group_names.size(); ++z) group_id[group_names[z]] = static_cast<int>(z);
    std::vector<std::vector<std::string>> cat_names;
    std::vector<std::map<std::string, std::size_t>> cat_id(cat_sets.size());
    for (std::size_t k = 0; k < cat_sets.size(); ++k) {
        cat_names.emplace_back(cat_sets[k].begin(), cat_sets[k].end());
        for (std::size_t v = 0; v < cat_names[k].size(); ++v) cat_id[k][cat_names[k][v]] = v;
    }

    Dataset ds;
    const std::size_t n_num = schema.numeric_columns.size();
    std::size_t n_cat = 0;
    for (const auto& names : cat_names) n_cat += names.size();
    const std::size_t K = group_names.size();
    ds.dim = n_num + n_cat + K;
    ds.group_count = static_cast<int>(K);
    ds.group_onehot_start = n_num + n_cat;
    for (std::size_t j = 0; j < n_num; ++j) {
        ds.numeric_columns.push_back(j);
        ds.feature_names.push_back(schema.numeric_columns[j]);
    }
    for (std::size_t k = 0; k < cat_names.size(); ++k) {
        for (const auto& v : cat_names[k]) {
            ds.feature_names.push_back(schema.categorical_columns[k] + "=" + v);
        }
    }
    for (const auto& g : group_names) ds.feature_names.push_back(schema.group_column + "=" + g);

    ds.features.assign(rows.size() * ds.dim, 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double* out = ds.features.data() + i * ds.dim;
        for (std::size_t j = 0; j < n_num; ++j) out[j] = rows[i].numeric[j];
        std::size_t base = n_num;
        for (std::size_t k = 0; k < cat_names.size(); ++k) {
            out[base + cat_id[k][rows[i].categorical[k]]] = 1.0;
            base += cat_names[k].size();
        }
        const int z = group_id[rows[i].group];
        out[base + static_cast<std::size_t>(z)] = 1.0;
        ds.labels.push_back(rows[i].label);
        ds.groups.push_back(z);
    }
    ds.validate();

    bool any_positive = false, any_negative = false;
    for (int y : ds.labels) (y == 1 ? any_positive : any_negative) = true;
    if (!any_positive || !any_negative) {
        throw std::invalid_argument("load_tabular: label is constant after mapping");
    }
    return ds;
}

}  // namespace sslab
