#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "clearway/booster.hpp"
#include "clearway/errors.hpp"
#include "clearway/matrix.hpp"
#include "clearway/rng.hpp"

namespace clearway {

enum class Task { classify, regress };

inline const char* to_string(Task t) { return t == Task::classify ? "classify" : "regress"; }
inline Task task_from_string(const std::string& s) {
    if (s == "classify") return Task::classify;
    if (s == "regress") return Task::regress;
    throw CorruptModel("unknown task: " + s);
}

// ---------------------------------------------------------------------------
// Median imputation + standardization (kNN and linear models cannot route
// MISSING; statistics always come from the training rows they were fit on)
// ---------------------------------------------------------------------------

struct ColumnStats {
    std::vector<double> median;
    std::vector<double> mean;
    std::vector<double> scale;  // population std; constant columns get 1

    static ColumnStats fit(const FeatureMatrix& m) {
        if (m.n_rows == 0) throw EmptyInput();
        ColumnStats s;
        s.median.resize(m.n_cols);
        s.mean.resize(m.n_cols);
        s.scale.resize(m.n_cols);
        std::vector<double> present;
        for (std::size_t c = 0; c < m.n_cols; ++c) {
            present.clear();
            for (std::size_t r = 0; r < m.n_rows; ++r) {
                const double v = m.at(r, c);
                if (!is_missing(v)) present.push_back(v);
            }
            if (present.empty()) {
                s.median[c] = 0.0;
            } else {
                std::sort(present.begin(), present.end());
                const std::size_t n = present.size();
                s.median[c] = n % 2 == 1 ? present[n / 2]
                                         : 0.5 * (present[n / 2 - 1] + present[n / 2]);
            }
            double sum = 0.0;
            for (std::size_t r = 0; r < m.n_rows; ++r) {
                const double v = m.at(r, c);
                sum += is_missing(v) ? s.median[c] : v;
            }
            const double mu = sum / static_cast<double>(m.n_rows);
            double ss = 0.0;
            for (std::size_t r = 0; r < m.n_rows; ++r) {
                double v = m.at(r, c);
                if (is_missing(v)) v = s.median[c];
                ss += (v - mu) * (v - mu);
            }
            const double sd = std::sqrt(ss / static_cast<double>(m.n_rows));
            s.mean[c] = mu;
            s.scale[c] = sd < 1e-12 ? 1.0 : sd;
        }
        return s;
    }

    // Impute by training medians, then center/scale by training statistics.
    FeatureMatrix apply(const FeatureMatrix& m) const {
        if (m.n_cols != median.size()) throw DimensionMismatch("column stats width");
        FeatureMatrix out = m;
        for (std::size_t r = 0; r < m.n_rows; ++r) {
            for (std::size_t c = 0; c < m.n_cols; ++c) {
                double v = out.at(r, c);
                if (is_missing(v)) v = median[c];
                out.at(r, c) = (v - mean[c]) / scale[c];
            }
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// k-nearest neighbours
// ---------------------------------------------------------------------------

struct KnnModel {
    int k = 5;
    Task task = Task::regress;
    ColumnStats stats;
    FeatureMatrix train;  // standardized
    std::vector<double> targets;
    std::vector<ColumnSpec> schema;
};

inline KnnModel knn_fit(const FeatureMatrix& m, const std::vector<double>& targets, int k,
                        Task task) {
    if (k < 1) throw Error("k must be >= 1");
    if (targets.size() != m.n_rows) throw DimensionMismatch("targets length != n_rows");
    if (static_cast<std::size_t>(k) > m.n_rows) throw KTooLarge(k, m.n_rows);
    KnnModel model;
    model.k = k;
    model.task = task;
    model.schema = m.schema;
    model.stats = ColumnStats::fit(m);
    model.train = model.stats.apply(m);
    model.targets = targets;
    return model;
}

// Classification returns the fraction of the k neighbours labeled 1, so the
// 0.5 decision rule resolves vote ties toward the short class. Regression
// returns the mean neighbour target. Distance ties break by row index.
inline std::vector<double> knn_predict(const KnnModel& model, const FeatureMatrix& rows) {
    require_same_schema(model.schema, rows.schema);
    const FeatureMatrix q = model.stats.apply(rows);
    std::vector<double> out(q.n_rows);
    std::vector<std::pair<double, int>> dist(model.train.n_rows);
    for (std::size_t i = 0; i < q.n_rows; ++i) {
        const double* qr = q.row(i);
        for (std::size_t r = 0; r < model.train.n_rows; ++r) {
            const double* tr = model.train.row(r);
            double d2 = 0.0;
            for (std::size_t c = 0; c < q.n_cols; ++c) {
                const double diff = qr[c] - tr[c];
                d2 += diff * diff;
            }
            dist[r] = {d2, static_cast<int>(r)};
        }
        std::partial_sort(dist.begin(), dist.begin() + model.k, dist.end());
        double acc = 0.0;
        for (int j = 0; j < model.k; ++j) acc += model.targets[static_cast<std::size_t>(dist[static_cast<std::size_t>(j)].second)];
        out[i] = acc / static_cast<double>(model.k);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear models (ridge regression / logistic regression)
// ---------------------------------------------------------------------------

enum class Link { identity, logit };

inline const char* to_string(Link l) { return l == Link::logit ? "logit" : "identity"; }
inline Link link_from_string(const std::string& s) {
    if (s == "identity") return Link::identity;
    if (s == "logit") return Link::logit;
    throw CorruptModel("unknown link: " + s);
}

struct LinearFitOptions {
    int max_iter = 100;
    double tol = 1e-8;
};

struct LinearModel {
    std::vector<double> weights;  // raw-feature space
    double intercept = 0.0;
    Link link = Link::identity;
    double ridge_alpha = 0.0;
    std::vector<double> medians;  // imputation baked into prediction
    std::vector<ColumnSpec> schema;
};

namespace detail {

// Gaussian elimination with partial pivoting; A is n×n row-major.
inline std::vector<double> solve_linear_system(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::abs(a[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(a[r * n + col]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best < 1e-12) throw SingularSystem();
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[pivot * n + c], a[col * n + c]);
            std::swap(b[pivot], b[col]);
        }
        const double diag = a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / diag;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) acc -= a[ri * n + c] * x[c];
        x[ri] = acc / a[ri * n + ri];
    }
    return x;
}

}  // namespace detail

inline LinearModel linear_fit(const FeatureMatrix& m, const std::vector<double>& targets,
                              Link link, double ridge_alpha,
                              const LinearFitOptions& opts = {}) {
    if (targets.size() != m.n_rows) throw DimensionMismatch("targets length != n_rows");
    if (ridge_alpha < 0.0) throw Error("ridge_alpha must be >= 0");
    const ColumnStats stats = ColumnStats::fit(m);
    const FeatureMatrix xs = stats.apply(m);
    const std::size_t n = xs.n_rows, p = xs.n_cols;

    std::vector<double> w_std(p, 0.0);
    double b_std = 0.0;

    if (link == Link::identity) {
        // (Xs'Xs + alpha I) w = Xs'(y - ybar); centered target keeps the
        // intercept out of the penalized system.
        double ybar = 0.0;
        for (double t : targets) ybar += t;
        ybar /= static_cast<double>(n);
        std::vector<double> a(p * p, 0.0), rhs(p, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const double* row = xs.row(r);
            const double yc = targets[r] - ybar;
            for (std::size_t i = 0; i < p; ++i) {
                rhs[i] += row[i] * yc;
                for (std::size_t j = i; j < p; ++j) a[i * p + j] += row[i] * row[j];
            }
        }
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < i; ++j) a[i * p + j] = a[j * p + i];
            a[i * p + i] += ridge_alpha;
        }
        w_std = detail::solve_linear_system(std::move(a), std::move(rhs));
        b_std = ybar;
    } else {
        // IRLS / Newton on [w, b]; alpha added to the weight block of the
        // Hessian diagonal (intercept unpenalized).
        for (double t : targets)
            if (t != 0.0 && t != 1.0) throw NonBinary();
        const std::size_t dim = p + 1;
        for (int iter = 0; iter < opts.max_iter; ++iter) {
            std::vector<double> grad(dim, 0.0);
            std::vector<double> hess(dim * dim, 0.0);
            for (std::size_t r = 0; r < n; ++r) {
                const double* row = xs.row(r);
                double z = b_std;
                for (std::size_t j = 0; j < p; ++j) z += w_std[j] * row[j];
                const double pr = detail::sigmoid(z);
                const double g = pr - targets[r];
                const double wgt = std::max(pr * (1.0 - pr), 1e-12);
                for (std::size_t i = 0; i < p; ++i) {
                    grad[i] += row[i] * g;
                    for (std::size_t j = i; j < p; ++j) hess[i * dim + j] += wgt * row[i] * row[j];
                    hess[i * dim + p] += wgt * row[i];
                }
                grad[p] += g;
                hess[p * dim + p] += wgt;
            }
            for (std::size_t i = 0; i < p; ++i) {
                grad[i] += ridge_alpha * w_std[i];
                hess[i * dim + i] += ridge_alpha;
            }
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < i; ++j) hess[i * dim + j] = hess[j * dim + i];
            double gnorm = 0.0;
            for (double g : grad) gnorm += g * g;
            if (std::sqrt(gnorm) <= opts.tol) break;
            if (iter == opts.max_iter - 1) throw NoConvergence(opts.max_iter);
            std::vector<double> neg(grad);
            for (double& g : neg) g = -g;
            const std::vector<double> step = detail::solve_linear_system(std::move(hess), std::move(neg));
            for (std::size_t j = 0; j < p; ++j) w_std[j] += step[j];
            b_std += step[p];
        }
    }

    // Fold standardization into raw-space coefficients so prediction is a
    // plain dot product after median imputation.
    LinearModel model;
    model.link = link;
    model.ridge_alpha = ridge_alpha;
    model.medians = stats.median;
    model.schema = m.schema;
    model.weights.resize(p);
    double b_raw = b_std;
    for (std::size_t j = 0; j < p; ++j) {
        model.weights[j] = w_std[j] / stats.scale[j];
        b_raw -= w_std[j] * stats.mean[j] / stats.scale[j];
    }
    model.intercept = b_raw;
    for (double w : model.weights)
        if (!std::isfinite(w)) throw SingularSystem();
    return model;
}

inline std::vector<double> linear_predict(const LinearModel& model, const FeatureMatrix& rows) {
    require_same_schema(model.schema, rows.schema);
    std::vector<double> out(rows.n_rows);
    for (std::size_t r = 0; r < rows.n_rows; ++r) {
        const double* row = rows.row(r);
        double z = model.intercept;
        for (std::size_t c = 0; c < rows.n_cols; ++c) {
            double v = row[c];
            if (is_missing(v)) v = model.medians[c];
            z += model.weights[c] * v;
        }
        out[r] = model.link == Link::logit ? detail::sigmoid(z) : z;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Random forest (bagged trees on top of the booster's tree builder)
// ---------------------------------------------------------------------------

struct ForestModel {
    std::vector<Tree> trees;
    std::vector<std::uint64_t> tree_seeds;  // bootstrap reproducible per tree
    Task task = Task::regress;
    std::vector<ColumnSpec> schema;
};

// Each tree fits the raw targets on a bootstrap sample: with squared error
// and zero current prediction, g = -count*y and h = count make every leaf the
// (multiplicity-weighted) mean target, and the gain is variance reduction.
inline ForestModel forest_fit(const FeatureMatrix& m, const std::vector<double>& targets,
                              int n_trees, const HyperParams& params, std::uint64_t seed,
                              Task task, bool bootstrap = true) {
    if (n_trees < 1) throw Error("n_trees must be >= 1");
    if (targets.size() != m.n_rows) throw DimensionMismatch("targets length != n_rows");
    if (m.n_rows == 0) throw EmptyInput();
    params.validate();
    ForestModel model;
    model.task = task;
    model.schema = m.schema;
    const ColumnOrder order = ColumnOrder::build(m);
    const std::size_t n = m.n_rows;
    for (int t = 0; t < n_trees; ++t) {
        const std::uint64_t tree_seed = Rng::derive(seed, static_cast<std::uint64_t>(t));
        Rng rng(tree_seed);
        std::vector<int> count(n, 1);
        if (bootstrap) {
            std::fill(count.begin(), count.end(), 0);
            for (std::size_t d = 0; d < n; ++d)
                ++count[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n) - 1))];
        }
        std::vector<double> grad(n), hess(n);
        std::vector<char> mask(n);
        for (std::size_t r = 0; r < n; ++r) {
            grad[r] = -static_cast<double>(count[r]) * targets[r];
            hess[r] = static_cast<double>(count[r]);
            mask[r] = count[r] > 0 ? 1 : 0;
        }
        std::vector<int> cols(m.n_cols);
        for (std::size_t c = 0; c < m.n_cols; ++c) cols[c] = static_cast<int>(c);
        if (params.colsample_bytree < 1.0) {
            const int take = std::max(
                1, static_cast<int>(params.colsample_bytree * static_cast<double>(m.n_cols) + 0.5));
            cols = rng.sample_without_replacement(static_cast<int>(m.n_cols), take);
        }
        model.trees.push_back(grow_tree(m, grad, hess, mask, cols, params, &order));
        model.tree_seeds.push_back(tree_seed);
    }
    return model;
}

// Regression: mean tree output. Classification: fraction of trees voting 1
// (leaf value >= 0.5), so the 0.5 decision rule sends even-vote ties to 1.
inline std::vector<double> forest_predict(const ForestModel& model, const FeatureMatrix& rows) {
    require_same_schema(model.schema, rows.schema);
    std::vector<double> out(rows.n_rows, 0.0);
    const double n_trees = static_cast<double>(model.trees.size());
    for (std::size_t r = 0; r < rows.n_rows; ++r) {
        double acc = 0.0;
        for (const Tree& t : model.trees) {
            const double leaf = tree_leaf_weight(t, rows.row(r));
            acc += model.task == Task::classify ? (leaf >= 0.5 ? 1.0 : 0.0) : leaf;
        }
        out[r] = acc / n_trees;
    }
    return out;
}

}  // namespace clearway
