#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "clearway/errors.hpp"
#include "clearway/matrix.hpp"
#include "clearway/parallel.hpp"
#include "clearway/rng.hpp"

namespace clearway {

// Single-row predictor over raw feature values.
using RowPredictor = std::function<double(const double*)>;

// Interventional value function: v(S) is the mean model output over the
// background rows with the coalition's features replaced by the instance's.
struct ValueFunction {
    RowPredictor predict;
    const FeatureMatrix* background = nullptr;
    std::vector<double> instance;

    std::size_t n_features() const { return instance.size(); }

    double operator()(const std::vector<char>& in_coalition) const {
        const FeatureMatrix& bg = *background;
        std::vector<double> row(instance.size());
        double acc = 0.0;
        for (std::size_t b = 0; b < bg.n_rows; ++b) {
            const double* base = bg.row(b);
            for (std::size_t c = 0; c < row.size(); ++c)
                row[c] = in_coalition[c] ? instance[c] : base[c];
            acc += predict(row.data());
        }
        return acc / static_cast<double>(bg.n_rows);
    }
};

enum class ShapEstimator { exact, monte_carlo };

struct ShapReport {
    std::vector<double> phi;
    double base_value = 0.0;   // v(empty)
    double prediction = 0.0;   // v(all)
    ShapEstimator estimator = ShapEstimator::exact;
    int n_permutations = 0;              // monte_carlo only
    std::vector<double> stderr_phi;      // monte_carlo only
};

inline constexpr int kExactShapleyLimit = 15;

// Full subset enumeration of the Shapley sum: every coalition value is
// computed once (memoized by bitmask) and each feature's phi accumulates
// |S|!(n-|S|-1)!/n! weighted marginals.
inline ShapReport exact_shapley(const ValueFunction& vf, int exact_limit = kExactShapleyLimit) {
    const int n = static_cast<int>(vf.n_features());
    if (n > exact_limit) throw TooManyFeatures(n, exact_limit);
    const std::size_t n_masks = std::size_t{1} << n;

    std::vector<double> value(n_masks);
    std::vector<char> members(static_cast<std::size_t>(n));
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        for (int f = 0; f < n; ++f)
            members[static_cast<std::size_t>(f)] = (mask >> f) & 1 ? 1 : 0;
        value[mask] = vf(members);
    }

    std::vector<double> factorial(static_cast<std::size_t>(n) + 1, 1.0);
    for (std::size_t i = 1; i < factorial.size(); ++i)
        factorial[i] = factorial[i - 1] * static_cast<double>(i);

    ShapReport report;
    report.phi.assign(static_cast<std::size_t>(n), 0.0);
    report.base_value = value[0];
    report.prediction = value[n_masks - 1];
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        const int size = static_cast<int>(std::popcount(mask));
        for (int f = 0; f < n; ++f) {
            if ((mask >> f) & 1) continue;
            const double w = factorial[static_cast<std::size_t>(size)] *
                             factorial[static_cast<std::size_t>(n - size - 1)] /
                             factorial[static_cast<std::size_t>(n)];
            report.phi[static_cast<std::size_t>(f)] +=
                w * (value[mask | (std::size_t{1} << f)] - value[mask]);
        }
    }
    return report;
}

namespace detail {

// Shared by the seeded Monte-Carlo estimator and the exhaustive-permutation
// test hook: averages per-position marginal contributions over the given
// orderings. Efficiency holds permutation by permutation.
inline ShapReport shapley_from_permutations(const ValueFunction& vf,
                                            const std::vector<std::vector<int>>& permutations) {
    const std::size_t n = vf.n_features();
    const std::size_t n_perm = permutations.size();
    std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
    std::vector<char> members(n, 0);
    const double v_empty = vf(std::vector<char>(n, 0));
    const double v_full = vf(std::vector<char>(n, 1));
    for (const auto& perm : permutations) {
        std::fill(members.begin(), members.end(), 0);
        double prev = v_empty;
        for (std::size_t pos = 0; pos < n; ++pos) {
            const int f = perm[pos];
            members[static_cast<std::size_t>(f)] = 1;
            // The full coalition's value is known; skip one evaluation.
            const double cur = pos + 1 == n ? v_full : vf(members);
            const double marginal = cur - prev;
            sum[static_cast<std::size_t>(f)] += marginal;
            sum_sq[static_cast<std::size_t>(f)] += marginal * marginal;
            prev = cur;
        }
    }
    ShapReport report;
    report.estimator = ShapEstimator::monte_carlo;
    report.n_permutations = static_cast<int>(n_perm);
    report.base_value = v_empty;
    report.prediction = v_full;
    report.phi.resize(n);
    report.stderr_phi.assign(n, 0.0);
    for (std::size_t f = 0; f < n; ++f) {
        const double mean = sum[f] / static_cast<double>(n_perm);
        report.phi[f] = mean;
        if (n_perm > 1) {
            const double var =
                (sum_sq[f] - static_cast<double>(n_perm) * mean * mean) /
                static_cast<double>(n_perm - 1);
            report.stderr_phi[f] = std::sqrt(std::max(var, 0.0) / static_cast<double>(n_perm));
        }
    }
    return report;
}

}  // namespace detail

inline ShapReport mc_shapley(const ValueFunction& vf, int n_permutations, std::uint64_t seed) {
    if (n_permutations < 1) throw Error("n_permutations must be >= 1");
    const std::size_t n = vf.n_features();
    Rng rng(seed);
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    std::vector<std::vector<int>> perms;
    perms.reserve(static_cast<std::size_t>(n_permutations));
    for (int p = 0; p < n_permutations; ++p) {
        rng.shuffle(order);
        perms.push_back(order);
    }
    return detail::shapley_from_permutations(vf, perms);
}

// ---------------------------------------------------------------------------
// Dataset-level summaries and per-prediction breakdowns
// ---------------------------------------------------------------------------

struct ShapConfig {
    int exact_limit = kExactShapleyLimit;
    int n_permutations = 200;  // used above the exact limit
    std::uint64_t seed = 7;
    bool force_exact = false;  // refuse (rather than fall back) above the limit
    int threads = 1;
};

inline ShapReport explain_row(const RowPredictor& predict, const FeatureMatrix& background,
                              const std::vector<double>& instance, const ShapConfig& cfg) {
    ValueFunction vf{predict, &background, instance};
    if (static_cast<int>(vf.n_features()) <= cfg.exact_limit)
        return exact_shapley(vf, cfg.exact_limit);
    if (cfg.force_exact) return exact_shapley(vf, cfg.exact_limit);  // throws TooManyFeatures
    return mc_shapley(vf, cfg.n_permutations, cfg.seed);
}

struct ShapSummary {
    std::vector<std::string> feature_names;
    std::vector<double> mean_abs_phi;  // indexed like feature_names
    std::vector<int> ranking;          // feature indices, descending mean |phi|
};

// Mean |phi| per feature over all instances, ranked descending; ties break by
// feature index. Instance explanations run independently in parallel.
inline ShapSummary shap_summary(const RowPredictor& predict, const FeatureMatrix& matrix,
                                const FeatureMatrix& background, const ShapConfig& cfg) {
    if (matrix.n_rows == 0) throw EmptyInput();
    const std::size_t n = matrix.n_cols;
    std::vector<std::vector<double>> abs_phi(matrix.n_rows);
    parallel_for(matrix.n_rows, cfg.threads, [&](std::size_t r) {
        std::vector<double> inst(matrix.row(r), matrix.row(r) + n);
        ShapConfig row_cfg = cfg;
        row_cfg.seed = Rng::derive(cfg.seed, r);
        const ShapReport rep = explain_row(predict, background, inst, row_cfg);
        abs_phi[r].resize(n);
        for (std::size_t f = 0; f < n; ++f) abs_phi[r][f] = std::abs(rep.phi[f]);
    });
    ShapSummary summary;
    summary.mean_abs_phi.assign(n, 0.0);
    for (const auto& row : abs_phi)
        for (std::size_t f = 0; f < n; ++f) summary.mean_abs_phi[f] += row[f];
    for (double& v : summary.mean_abs_phi) v /= static_cast<double>(matrix.n_rows);
    for (std::size_t f = 0; f < n; ++f) summary.feature_names.push_back(matrix.schema[f].name);
    summary.ranking.resize(n);
    for (std::size_t f = 0; f < n; ++f) summary.ranking[f] = static_cast<int>(f);
    std::stable_sort(summary.ranking.begin(), summary.ranking.end(), [&](int a, int b) {
        return summary.mean_abs_phi[static_cast<std::size_t>(a)] >
               summary.mean_abs_phi[static_cast<std::size_t>(b)];
    });
    return summary;
}

struct ShapBreakdown {
    double base_value = 0.0;
    double prediction = 0.0;
    std::vector<std::pair<std::string, double>> increasing;  // phi > 0, by |phi| desc
    std::vector<std::pair<std::string, double>> decreasing;  // phi < 0, by |phi| desc
};

// The per-prediction force layout as data: positive and negative attributions
// sorted by magnitude around the base value.
inline ShapBreakdown explain_prediction(const RowPredictor& predict,
                                        const std::vector<double>& instance,
                                        const std::vector<std::string>& feature_names,
                                        const FeatureMatrix& background, const ShapConfig& cfg) {
    const ShapReport rep = explain_row(predict, background, instance, cfg);
    ShapBreakdown out;
    out.base_value = rep.base_value;
    out.prediction = rep.prediction;
    for (std::size_t f = 0; f < rep.phi.size(); ++f) {
        if (rep.phi[f] > 0.0) out.increasing.emplace_back(feature_names[f], rep.phi[f]);
        else if (rep.phi[f] < 0.0) out.decreasing.emplace_back(feature_names[f], rep.phi[f]);
    }
    auto by_mag = [](const auto& a, const auto& b) {
        return std::abs(a.second) > std::abs(b.second);
    };
    std::stable_sort(out.increasing.begin(), out.increasing.end(), by_mag);
    std::stable_sort(out.decreasing.begin(), out.decreasing.end(), by_mag);
    return out;
}

}  // namespace clearway
