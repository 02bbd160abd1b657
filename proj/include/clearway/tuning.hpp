#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clearway/errors.hpp"
#include "clearway/matrix.hpp"
#include "clearway/metrics.hpp"
#include "clearway/model.hpp"
#include "clearway/parallel.hpp"
#include "clearway/rng.hpp"

namespace clearway {

// ---------------------------------------------------------------------------
// Fold plans
// ---------------------------------------------------------------------------

struct FoldPlan {
    int k = 5;
    std::vector<int> assignments;  // per-row fold index in [0, k)
    bool stratified = false;
    std::uint64_t seed = 0;

    std::vector<int> test_rows(int fold) const {
        std::vector<int> out;
        for (std::size_t r = 0; r < assignments.size(); ++r)
            if (assignments[r] == fold) out.push_back(static_cast<int>(r));
        return out;
    }
    std::vector<int> train_rows(int fold) const {
        std::vector<int> out;
        for (std::size_t r = 0; r < assignments.size(); ++r)
            if (assignments[r] != fold) out.push_back(static_cast<int>(r));
        return out;
    }
};

// Plain k-fold: seeded shuffle, then round-robin deal.
inline FoldPlan kfold(std::size_t n_rows, int k, std::uint64_t seed) {
    if (k < 2) throw Error("k must be >= 2");
    if (n_rows < static_cast<std::size_t>(k)) throw Error("fewer rows than folds");
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.resize(n_rows);
    std::vector<int> order(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) order[i] = static_cast<int>(i);
    Rng rng(seed);
    rng.shuffle(order);
    for (std::size_t i = 0; i < n_rows; ++i)
        plan.assignments[static_cast<std::size_t>(order[i])] = static_cast<int>(i % static_cast<std::size_t>(k));
    return plan;
}

// Stratified k-fold: within each class, rows are shuffled by the seed and
// dealt round-robin, so per-fold class counts differ by at most 1.
inline FoldPlan stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed) {
    if (k < 2) throw Error("k must be >= 2");
    std::vector<int> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) pos.push_back(static_cast<int>(i));
        else if (labels[i] == 0) neg.push_back(static_cast<int>(i));
        else throw NonBinary();
    }
    if (static_cast<int>(pos.size()) < k) throw ClassTooSmall(1, static_cast<int>(pos.size()), k);
    if (static_cast<int>(neg.size()) < k) throw ClassTooSmall(0, static_cast<int>(neg.size()), k);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.stratified = true;
    plan.assignments.resize(labels.size());
    Rng rng(seed);
    for (auto* cls : {&pos, &neg}) {
        rng.shuffle(*cls);
        for (std::size_t i = 0; i < cls->size(); ++i)
            plan.assignments[static_cast<std::size_t>((*cls)[i])] =
                static_cast<int>(i % static_cast<std::size_t>(k));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Metrics over folds
// ---------------------------------------------------------------------------

enum class Metric { accuracy, precision, recall, f1, mape, r2 };

inline const char* to_string(Metric m) {
    switch (m) {
        case Metric::accuracy: return "accuracy";
        case Metric::precision: return "precision";
        case Metric::recall: return "recall";
        case Metric::f1: return "f1";
        case Metric::mape: return "mape";
        case Metric::r2: return "r2";
    }
    return "";
}
inline Metric metric_from_string(const std::string& s) {
    if (s == "accuracy") return Metric::accuracy;
    if (s == "precision") return Metric::precision;
    if (s == "recall") return Metric::recall;
    if (s == "f1") return Metric::f1;
    if (s == "mape") return Metric::mape;
    if (s == "r2") return Metric::r2;
    throw Error("unknown metric: " + s);
}

inline bool metric_is_maximized(Metric m) { return m != Metric::mape; }

inline std::vector<Metric> default_metrics(Task task) {
    if (task == Task::classify)
        return {Metric::accuracy, Metric::precision, Metric::recall, Metric::f1};
    return {Metric::mape, Metric::r2};
}

namespace detail {

// Scores one metric on a fold; degenerate folds report 0 rather than abort.
inline double score_metric(Metric metric, Task task, const FittedModel& model,
                           const FeatureMatrix& m, const std::vector<double>& targets) {
    if (task == Task::classify) {
        std::vector<int> truth(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i)
            truth[i] = targets[i] == 1.0 ? 1 : 0;
        const std::vector<int> pred = model.classify(m);
        const ClassificationScores s = classification_scores(confusion(truth, pred));
        switch (metric) {
            case Metric::accuracy: return s.accuracy;
            case Metric::precision: return s.precision;
            case Metric::recall: return s.recall;
            case Metric::f1: return s.f1;
            default: throw Error("metric not defined for classification");
        }
    }
    const std::vector<double> pred = model.predict(m);
    switch (metric) {
        case Metric::mape: return mape(targets, pred);
        case Metric::r2:
            try {
                return r2(targets, pred);
            } catch (const ZeroVariance&) {
                return 0.0;
            } catch (const EmptyEvaluation&) {
                return 0.0;
            }
        default: throw Error("metric not defined for regression");
    }
}

inline std::vector<double> gather(const std::vector<double>& v, const std::vector<int>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (int r : rows) out.push_back(v[static_cast<std::size_t>(r)]);
    return out;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// Counts learner fits performed inside cross_validate; reset before a run to
// audit tuning budgets (10 outer x 5 inner x 500 trials = 25,000 inner fits).
struct FitCounter {
    static std::atomic<std::int64_t>& counter() {
        static std::atomic<std::int64_t> n{0};
        return n;
    }
    static void reset() { counter().store(0); }
    static std::int64_t count() { return counter().load(); }
};

struct FoldScores {
    std::vector<Metric> metrics;
    std::vector<std::vector<double>> train;  // [fold][metric]
    std::vector<std::vector<double>> test;

    std::vector<double> mean_test() const { return column_means(test); }
    std::vector<double> std_test() const { return column_stds(test); }
    std::vector<double> mean_train() const { return column_means(train); }
    std::vector<double> std_train() const { return column_stds(train); }

    double mean_test_of(Metric m) const {
        for (std::size_t i = 0; i < metrics.size(); ++i)
            if (metrics[i] == m) return mean_test()[i];
        throw Error("metric not in fold scores");
    }
    double std_test_of(Metric m) const {
        for (std::size_t i = 0; i < metrics.size(); ++i)
            if (metrics[i] == m) return std_test()[i];
        throw Error("metric not in fold scores");
    }

  private:
    std::vector<double> column_means(const std::vector<std::vector<double>>& rows) const {
        std::vector<double> out(metrics.size(), 0.0);
        for (const auto& row : rows)
            for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
        if (!rows.empty())
            for (double& v : out) v /= static_cast<double>(rows.size());
        return out;
    }
    std::vector<double> column_stds(const std::vector<std::vector<double>>& rows) const {
        std::vector<double> out(metrics.size(), 0.0);
        for (std::size_t c = 0; c < metrics.size(); ++c) {
            std::vector<double> col;
            col.reserve(rows.size());
            for (const auto& row : rows) col.push_back(row[c]);
            out[c] = detail::sample_std(col);
        }
        return out;
    }
};

// Fits on each fold's complement and scores both portions. All preprocessing
// statistics (imputation medians, standardization) are computed inside the
// learner on the training rows only, so folds never leak.
inline FoldScores cross_validate(const LearnerSpec& spec, const FeatureMatrix& m,
                                 const std::vector<double>& targets, const FoldPlan& plan,
                                 const std::vector<Metric>& metrics, std::uint64_t seed) {
    if (plan.assignments.size() != m.n_rows) throw DimensionMismatch("fold plan covers all rows");
    if (targets.size() != m.n_rows) throw DimensionMismatch("targets length != n_rows");
    FoldScores scores;
    scores.metrics = metrics;
    scores.train.resize(static_cast<std::size_t>(plan.k));
    scores.test.resize(static_cast<std::size_t>(plan.k));
    for (int fold = 0; fold < plan.k; ++fold) {
        try {
            const std::vector<int> tr = plan.train_rows(fold);
            const std::vector<int> te = plan.test_rows(fold);
            const FeatureMatrix m_tr = m.subset(tr);
            const FeatureMatrix m_te = m.subset(te);
            const std::vector<double> y_tr = detail::gather(targets, tr);
            const std::vector<double> y_te = detail::gather(targets, te);
            const FittedModel model =
                fit_model(spec, m_tr, y_tr, Rng::derive(seed, static_cast<std::uint64_t>(fold)));
            ++FitCounter::counter();
            for (Metric metric : metrics) {
                scores.train[static_cast<std::size_t>(fold)].push_back(
                    detail::score_metric(metric, spec.task, model, m_tr, y_tr));
                scores.test[static_cast<std::size_t>(fold)].push_back(
                    detail::score_metric(metric, spec.task, model, m_te, y_te));
            }
        } catch (const Error& e) {
            throw Error("fold " + std::to_string(fold) + ": " + e.what());
        }
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Randomized hyperparameter search
// ---------------------------------------------------------------------------

struct ParamRange {
    enum class Kind { int_uniform, real_uniform, real_log };
    Kind kind = Kind::real_uniform;
    double lo = 0.0;
    double hi = 1.0;

    static ParamRange ints(int lo, int hi) {
        return {Kind::int_uniform, static_cast<double>(lo), static_cast<double>(hi)};
    }
    static ParamRange reals(double lo, double hi) { return {Kind::real_uniform, lo, hi}; }
    static ParamRange log_reals(double lo, double hi) { return {Kind::real_log, lo, hi}; }

    void validate() const {
        if (!(lo <= hi)) throw Error("param range lo > hi");
        if (kind == Kind::real_log && !(lo > 0.0)) throw Error("log-uniform bounds must be > 0");
    }
    double draw(Rng& rng) const {
        switch (kind) {
            case Kind::int_uniform:
                return static_cast<double>(
                    rng.uniform_int(static_cast<int>(lo), static_cast<int>(hi)));
            case Kind::real_uniform: return rng.uniform(lo, hi);
            case Kind::real_log: return rng.log_uniform(lo, hi);
        }
        return lo;
    }
};

struct SearchSpace {
    // std::map keeps draw order deterministic (alphabetical by name).
    std::map<std::string, ParamRange> dims;

    void validate() const {
        for (const auto& [name, range] : dims) {
            (void)name;
            range.validate();
        }
    }

    // Conventional ranges for the named parameters; fully overridable.
    static SearchSpace default_booster() {
        SearchSpace s;
        s.dims["max_depth"] = ParamRange::ints(2, 10);
        s.dims["learning_rate"] = ParamRange::log_reals(0.01, 0.5);
        s.dims["min_child_weight"] = ParamRange::reals(0.0, 10.0);
        s.dims["gamma"] = ParamRange::log_reals(1e-3, 10.0);
        s.dims["reg_lambda"] = ParamRange::log_reals(1e-3, 10.0);
        s.dims["subsample"] = ParamRange::reals(0.5, 1.0);
        s.dims["colsample_bytree"] = ParamRange::reals(0.5, 1.0);
        s.dims["scale_pos_weight"] = ParamRange::reals(0.5, 4.0);
        s.dims["n_rounds"] = ParamRange::ints(50, 500);
        return s;
    }
    static SearchSpace default_knn() {
        SearchSpace s;
        s.dims["k"] = ParamRange::ints(1, 25);
        return s;
    }
    static SearchSpace default_linear() {
        SearchSpace s;
        s.dims["ridge_alpha"] = ParamRange::log_reals(1e-3, 100.0);
        return s;
    }
    static SearchSpace default_forest() {
        SearchSpace s;
        s.dims["n_trees"] = ParamRange::ints(50, 300);
        s.dims["max_depth"] = ParamRange::ints(2, 12);
        s.dims["colsample_bytree"] = ParamRange::reals(0.5, 1.0);
        s.dims["min_child_weight"] = ParamRange::reals(0.0, 10.0);
        return s;
    }
    static SearchSpace defaults_for(ModelFamily family) {
        switch (family) {
            case ModelFamily::booster: return default_booster();
            case ModelFamily::knn: return default_knn();
            case ModelFamily::linear: return default_linear();
            case ModelFamily::forest: return default_forest();
        }
        return default_booster();
    }
};

// Applies a named draw onto a LearnerSpec.
inline void apply_param(LearnerSpec& spec, const std::string& name, double value) {
    if (name == "max_depth") spec.params.max_depth = static_cast<int>(value);
    else if (name == "learning_rate") spec.params.learning_rate = value;
    else if (name == "min_child_weight") spec.params.min_child_weight = value;
    else if (name == "gamma") spec.params.gamma = value;
    else if (name == "reg_lambda") spec.params.reg_lambda = value;
    else if (name == "subsample") spec.params.subsample = value;
    else if (name == "colsample_bytree") spec.params.colsample_bytree = value;
    else if (name == "scale_pos_weight") spec.params.scale_pos_weight = value;
    else if (name == "n_rounds") spec.params.n_rounds = static_cast<int>(value);
    else if (name == "k") spec.k = static_cast<int>(value);
    else if (name == "ridge_alpha") spec.ridge_alpha = value;
    else if (name == "n_trees") spec.n_trees = static_cast<int>(value);
    else throw Error("unknown hyperparameter: " + name);
}

struct Trial {
    std::map<std::string, double> draws;
    double mean_score = 0.0;
    double std_score = 0.0;
};

struct SearchResult {
    LearnerSpec best_spec;
    double best_score = 0.0;
    int best_trial = -1;
    Metric objective = Metric::mape;
    std::vector<Trial> trials;
};

// Draws n_iter parameter vectors, evaluates each by inner-k cross-validation
// on the given (training) data, and returns the best by mean test score of
// the objective metric; ties break toward the lower trial index. Trials may
// be evaluated in parallel — all seeds and draws are fixed up front.
inline SearchResult random_search(const SearchSpace& space, int n_iter, const LearnerSpec& base,
                                  const FeatureMatrix& m, const std::vector<double>& targets,
                                  int inner_k, Metric objective, std::uint64_t seed,
                                  int threads = 1) {
    if (n_iter < 1) throw Error("n_iter must be >= 1");
    space.validate();

    FoldPlan plan;
    if (base.task == Task::classify) {
        std::vector<int> labels(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) labels[i] = targets[i] == 1.0 ? 1 : 0;
        plan = stratified_folds(labels, inner_k, Rng::derive(seed, 0));
    } else {
        plan = kfold(m.n_rows, inner_k, Rng::derive(seed, 0));
    }

    Rng rng(Rng::derive(seed, 1));
    std::vector<LearnerSpec> specs(static_cast<std::size_t>(n_iter), base);
    std::vector<Trial> trials(static_cast<std::size_t>(n_iter));
    for (int t = 0; t < n_iter; ++t) {
        for (const auto& [name, range] : space.dims) {
            const double v = range.draw(rng);
            trials[static_cast<std::size_t>(t)].draws[name] = v;
            apply_param(specs[static_cast<std::size_t>(t)], name, v);
        }
    }

    const std::vector<Metric> metrics{objective};
    parallel_for(static_cast<std::size_t>(n_iter), threads, [&](std::size_t t) {
        const FoldScores fs = cross_validate(specs[t], m, targets, plan, metrics,
                                             Rng::derive(seed, 100 + t));
        trials[t].mean_score = fs.mean_test()[0];
        trials[t].std_score = fs.std_test()[0];
    });

    SearchResult result;
    result.objective = objective;
    result.trials = trials;
    const bool maximize = metric_is_maximized(objective);
    for (int t = 0; t < n_iter; ++t) {
        const double s = trials[static_cast<std::size_t>(t)].mean_score;
        if (result.best_trial < 0 || (maximize ? s > result.best_score : s < result.best_score)) {
            result.best_trial = t;
            result.best_score = s;
        }
    }
    result.best_spec = specs[static_cast<std::size_t>(result.best_trial)];
    return result;
}

// ---------------------------------------------------------------------------
// Nested evaluation
// ---------------------------------------------------------------------------

struct NestedFold {
    LearnerSpec tuned_spec;
    double search_score = 0.0;
    std::vector<double> train_scores;  // by metric
    std::vector<double> test_scores;
};

struct NestedResult {
    std::vector<Metric> metrics;
    std::vector<NestedFold> folds;

    FoldScores as_fold_scores() const {
        FoldScores fs;
        fs.metrics = metrics;
        for (const NestedFold& f : folds) {
            fs.train.push_back(f.train_scores);
            fs.test.push_back(f.test_scores);
        }
        return fs;
    }
};

// For each outer fold: tune on the outer-training portion via random_search,
// refit with the winning parameters on that portion, then score the held-out
// outer-test fold. n_iter = 0 skips the search and uses the base spec as-is.
inline NestedResult nested_evaluate(const LearnerSpec& base, const FeatureMatrix& m,
                                    const std::vector<double>& targets, int outer_k, int inner_k,
                                    int n_iter, const SearchSpace& space,
                                    const std::vector<Metric>& metrics, std::uint64_t seed,
                                    int threads = 1) {
    if (outer_k < 2) throw Error("outer_k must be >= 2");
    const Metric objective = base.task == Task::classify ? Metric::f1 : Metric::mape;

    FoldPlan outer;
    if (base.task == Task::classify) {
        std::vector<int> labels(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) labels[i] = targets[i] == 1.0 ? 1 : 0;
        outer = stratified_folds(labels, outer_k, Rng::derive(seed, 11));
    } else {
        outer = kfold(m.n_rows, outer_k, Rng::derive(seed, 11));
    }

    NestedResult result;
    result.metrics = metrics;
    result.folds.resize(static_cast<std::size_t>(outer_k));
    for (int fold = 0; fold < outer_k; ++fold) {
        const std::vector<int> tr = outer.train_rows(fold);
        const std::vector<int> te = outer.test_rows(fold);
        const FeatureMatrix m_tr = m.subset(tr);
        const FeatureMatrix m_te = m.subset(te);
        const std::vector<double> y_tr = detail::gather(targets, tr);
        const std::vector<double> y_te = detail::gather(targets, te);

        NestedFold& nf = result.folds[static_cast<std::size_t>(fold)];
        nf.tuned_spec = base;
        if (n_iter > 0) {
            const SearchResult sr =
                random_search(space, n_iter, base, m_tr, y_tr, inner_k, objective,
                              Rng::derive(seed, 1000 + static_cast<std::uint64_t>(fold)), threads);
            nf.tuned_spec = sr.best_spec;
            nf.search_score = sr.best_score;
        }
        const FittedModel model = fit_model(nf.tuned_spec, m_tr, y_tr,
                                            Rng::derive(seed, 2000 + static_cast<std::uint64_t>(fold)));
        for (Metric metric : metrics) {
            nf.train_scores.push_back(detail::score_metric(metric, base.task, model, m_tr, y_tr));
            nf.test_scores.push_back(detail::score_metric(metric, base.task, model, m_te, y_te));
        }
    }
    return result;
}

}  // namespace clearway
