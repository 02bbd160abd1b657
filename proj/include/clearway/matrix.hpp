#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "clearway/errors.hpp"

namespace clearway {

// Missing cells are carried as quiet NaN behind these two helpers; no finite
// value is ever used as a sentinel.
inline constexpr double missing() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) { return std::isnan(v); }

enum class ColumnKind { numeric, categorical, boolean };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;

    bool operator==(const ColumnSpec&) const = default;
};

inline const char* to_string(ColumnKind k) {
    switch (k) {
        case ColumnKind::numeric: return "numeric";
        case ColumnKind::categorical: return "categorical";
        case ColumnKind::boolean: return "boolean";
    }
    return "numeric";
}

inline ColumnKind column_kind_from_string(const std::string& s) {
    if (s == "categorical") return ColumnKind::categorical;
    if (s == "boolean") return ColumnKind::boolean;
    if (s == "numeric") return ColumnKind::numeric;
    throw CorruptModel("unknown column kind: " + s);
}

// Row-major numeric matrix with a column schema and an optional target vector.
// Immutable once built; cheap to subset by row for fold handling.
struct FeatureMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> values;     // n_rows * n_cols, row-major
    std::vector<ColumnSpec> schema; // size n_cols
    std::vector<double> target;     // size n_rows (may be empty for predict-only data)

    double at(std::size_t r, std::size_t c) const { return values[r * n_cols + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * n_cols + c]; }

    const double* row(std::size_t r) const { return values.data() + r * n_cols; }
    double* row(std::size_t r) { return values.data() + r * n_cols; }

    static FeatureMatrix zeros(std::size_t rows, std::size_t cols) {
        FeatureMatrix m;
        m.n_rows = rows;
        m.n_cols = cols;
        m.values.assign(rows * cols, 0.0);
        m.schema.resize(cols);
        return m;
    }

    FeatureMatrix subset(const std::vector<int>& rows) const {
        FeatureMatrix m;
        m.n_rows = rows.size();
        m.n_cols = n_cols;
        m.schema = schema;
        m.values.resize(m.n_rows * n_cols);
        if (!target.empty()) m.target.resize(m.n_rows);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::size_t r = static_cast<std::size_t>(rows[i]);
            std::copy(row(r), row(r) + n_cols, m.values.begin() + i * n_cols);
            if (!target.empty()) m.target[i] = target[r];
        }
        return m;
    }

    FeatureMatrix from_single_row(std::size_t r) const {
        return subset({static_cast<int>(r)});
    }

    int column_index(const std::string& name) const {
        for (std::size_t c = 0; c < n_cols; ++c)
            if (schema[c].name == name) return static_cast<int>(c);
        return -1;
    }

    void check_consistent() const {
        if (schema.size() != n_cols) throw DimensionMismatch("schema length != n_cols");
        if (!target.empty() && target.size() != n_rows)
            throw DimensionMismatch("target length != n_rows");
        if (values.size() != n_rows * n_cols)
            throw DimensionMismatch("values size != n_rows * n_cols");
    }
};

inline void require_same_schema(const std::vector<ColumnSpec>& a,
                                const std::vector<ColumnSpec>& b) {
    if (a.size() != b.size())
        throw SchemaMismatch("expected " + std::to_string(a.size()) + " columns, got " +
                             std::to_string(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] == b[i]))
            throw SchemaMismatch("column " + std::to_string(i) + " is '" + b[i].name +
                                 "', expected '" + a[i].name + "'");
    }
}

}  // namespace clearway
