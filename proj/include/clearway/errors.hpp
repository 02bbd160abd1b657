#pragma once

#include <stdexcept>
#include <string>

namespace clearway {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// data ingestion
struct MissingColumn : Error {
    explicit MissingColumn(const std::string& name)
        : Error("missing column: " + name), column(name) {}
    std::string column;
};
struct BadValue : Error {
    BadValue(std::size_t row, const std::string& col, const std::string& what_value)
        : Error("bad value in row " + std::to_string(row) + ", column " + col + ": '" +
                what_value + "'"),
          row(row), column(col) {}
    std::size_t row;
    std::string column;
};
struct EmptyFile : Error {
    explicit EmptyFile(const std::string& path) : Error("empty file: " + path) {}
};
struct EmptyInput : Error {
    EmptyInput() : Error("empty input") {}
};
struct IoFailure : Error {
    explicit IoFailure(const std::string& msg) : Error("io failure: " + msg) {}
};

// learners
struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error("dimension mismatch: " + msg) {}
};
struct SchemaMismatch : Error {
    explicit SchemaMismatch(const std::string& msg) : Error("schema mismatch: " + msg) {}
};
struct NonPositiveTarget : Error {
    NonPositiveTarget() : Error("targets must be positive for mape/log-space training") {}
};
struct CorruptModel : Error {
    explicit CorruptModel(const std::string& msg) : Error("corrupt model: " + msg) {}
};
struct KTooLarge : Error {
    KTooLarge(int k, std::size_t n_rows)
        : Error("k=" + std::to_string(k) + " exceeds " + std::to_string(n_rows) +
                " training rows") {}
};
struct SingularSystem : Error {
    SingularSystem() : Error("singular linear system (try ridge_alpha > 0)") {}
};
struct NoConvergence : Error {
    explicit NoConvergence(int iters)
        : Error("solver did not converge within " + std::to_string(iters) + " iterations") {}
};

// metrics
struct LengthMismatch : Error {
    LengthMismatch() : Error("vectors differ in length") {}
};
struct NonBinary : Error {
    NonBinary() : Error("labels must be 0 or 1") {}
};
struct EmptyEvaluation : Error {
    EmptyEvaluation() : Error("nothing to evaluate") {}
};
struct NonPositiveTruth : Error {
    NonPositiveTruth() : Error("mape requires positive true values") {}
};
struct ZeroVariance : Error {
    ZeroVariance() : Error("r2 undefined for constant true values") {}
};

// tuning
struct ClassTooSmall : Error {
    explicit ClassTooSmall(int klass, int count, int k)
        : Error("class " + std::to_string(klass) + " has " + std::to_string(count) +
                " rows, fewer than k=" + std::to_string(k)) {}
};

// spatial features
struct NoDetectorSections : Error {
    NoDetectorSections() : Error("no detector-equipped sections available") {}
};

// shapley
struct TooManyFeatures : Error {
    TooManyFeatures(int n, int limit)
        : Error("exact shapley refused: " + std::to_string(n) + " features exceeds limit " +
                std::to_string(limit) + " (use the monte-carlo estimator)") {}
};

// synth / pipeline
struct InfeasibleConfig : Error {
    explicit InfeasibleConfig(const std::string& msg) : Error("infeasible config: " + msg) {}
};
struct NoShortIncidents : Error {
    NoShortIncidents() : Error("no incidents at or below the class threshold") {}
};

}  // namespace clearway
