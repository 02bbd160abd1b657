#include "catch2/catch_amalgamated.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "clearway/clearway.hpp"
#include "oracles.hpp"

namespace cw = clearway;

namespace {

cw::LearnerSpec knn_spec(cw::Task task, int k = 3) {
    cw::LearnerSpec s;
    s.family = cw::ModelFamily::knn;
    s.task = task;
    s.k = k;
    return s;
}

// random_matrix draws its row count from [2, max_rows]; regenerate until the
// matrix is big enough for the k-NN neighbourhoods the test exercises.
cw::FeatureMatrix sized_matrix(cw::Rng& rng, int min_rows, int max_rows, int cols) {
    cw::FeatureMatrix m = oracles::random_matrix(rng, max_rows, cols, 0.0);
    while (m.n_rows < min_rows) m = oracles::random_matrix(rng, max_rows, cols, 0.0);
    return m;
}

std::vector<int> fold_sizes(const cw::FoldPlan& plan) {
    std::vector<int> sizes(static_cast<std::size_t>(plan.k), 0);
    for (int a : plan.assignments) ++sizes[static_cast<std::size_t>(a)];
    return sizes;
}

}  // namespace

TEST_CASE("kfold deals every row into balanced folds") {
    const cw::FoldPlan plan = cw::kfold(53, 5, 7);
    REQUIRE(plan.assignments.size() == 53);
    for (int a : plan.assignments) {
        CHECK(a >= 0);
        CHECK(a < 5);
    }
    const std::vector<int> sizes = fold_sizes(plan);
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);

    // train/test partition the rows for every fold
    for (int fold = 0; fold < plan.k; ++fold) {
        const auto tr = plan.train_rows(fold);
        const auto te = plan.test_rows(fold);
        CHECK(tr.size() + te.size() == plan.assignments.size());
    }

    CHECK(cw::kfold(53, 5, 7).assignments == plan.assignments);
    CHECK(cw::kfold(53, 5, 8).assignments != plan.assignments);
    CHECK_THROWS_AS(cw::kfold(10, 1, 7), cw::Error);
    CHECK_THROWS_AS(cw::kfold(3, 4, 7), cw::Error);
}

TEST_CASE("stratified folds keep class counts within one of each other") {
    cw::Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(20, 120));
        const int k = static_cast<int>(rng.uniform_int(2, 6));
        std::vector<int> labels(static_cast<std::size_t>(n));
        int pos = 0;
        for (int& l : labels) {
            l = rng.bernoulli(0.3) ? 1 : 0;
            pos += l;
        }
        if (pos < k || n - pos < k) continue;

        const cw::FoldPlan plan = cw::stratified_folds(labels, k, trial);
        std::vector<int> pos_count(static_cast<std::size_t>(k), 0);
        std::vector<int> neg_count(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == 1) ++pos_count[static_cast<std::size_t>(plan.assignments[i])];
            else ++neg_count[static_cast<std::size_t>(plan.assignments[i])];
        }
        const auto [plo, phi] = std::minmax_element(pos_count.begin(), pos_count.end());
        const auto [nlo, nhi] = std::minmax_element(neg_count.begin(), neg_count.end());
        CHECK(*phi - *plo <= 1);
        CHECK(*nhi - *nlo <= 1);
    }

    CHECK_THROWS_AS(cw::stratified_folds({0, 1, 2, 0}, 2, 1), cw::NonBinary);
    CHECK_THROWS_AS(cw::stratified_folds({0, 0, 0, 1}, 2, 1), cw::ClassTooSmall);
}

TEST_CASE("cross_validate scores match a manual refit of each fold") {
    cw::Rng rng(3);
    const cw::FeatureMatrix m = oracles::random_matrix(rng, 40, 3, 0.1);
    const cw::FoldPlan plan = cw::kfold(m.n_rows, 4, 11);
    const cw::LearnerSpec spec = knn_spec(cw::Task::regress);
    const std::vector<cw::Metric> metrics{cw::Metric::mape, cw::Metric::r2};

    const cw::FoldScores fs = cw::cross_validate(spec, m, m.target, plan, metrics, 21);
    REQUIRE(fs.test.size() == 4);

    for (int fold = 0; fold < plan.k; ++fold) {
        const auto tr = plan.train_rows(fold);
        const auto te = plan.test_rows(fold);
        const cw::FeatureMatrix m_tr = m.subset(tr);
        const cw::FeatureMatrix m_te = m.subset(te);
        std::vector<double> y_tr, y_te;
        for (int r : tr) y_tr.push_back(m.target[static_cast<std::size_t>(r)]);
        for (int r : te) y_te.push_back(m.target[static_cast<std::size_t>(r)]);
        const cw::FittedModel model =
            cw::fit_model(spec, m_tr, y_tr, cw::Rng::derive(21, static_cast<std::uint64_t>(fold)));
        const std::vector<double> pred = model.predict(m_te);
        CHECK(fs.test[static_cast<std::size_t>(fold)][0] ==
              Catch::Approx(cw::mape(y_te, pred)).margin(1e-12));
        CHECK(fs.test[static_cast<std::size_t>(fold)][1] ==
              Catch::Approx(cw::r2(y_te, pred)).margin(1e-12));
    }
}

TEST_CASE("constant targets give zero MAPE in every fold") {
    cw::Rng rng(5);
    cw::FeatureMatrix m = sized_matrix(rng, 12, 24, 2);
    std::fill(m.target.begin(), m.target.end(), 42.0);
    const cw::FoldScores fs =
        cw::cross_validate(knn_spec(cw::Task::regress), m, m.target, cw::kfold(m.n_rows, 3, 1),
                           {cw::Metric::mape}, 1);
    for (const auto& fold : fs.test) CHECK(fold[0] == 0.0);
    CHECK(fs.mean_test_of(cw::Metric::mape) == 0.0);
}

TEST_CASE("the fit counter audits inner fits exactly") {
    cw::Rng rng(9);
    const cw::FeatureMatrix m = sized_matrix(rng, 16, 30, 3);

    cw::FitCounter::reset();
    cw::cross_validate(knn_spec(cw::Task::regress), m, m.target, cw::kfold(m.n_rows, 4, 1),
                       {cw::Metric::mape}, 1);
    CHECK(cw::FitCounter::count() == 4);

    cw::SearchSpace space;
    space.dims["k"] = cw::ParamRange::ints(1, 5);

    cw::FitCounter::reset();
    cw::random_search(space, 6, knn_spec(cw::Task::regress), m, m.target, 3, cw::Metric::mape, 2);
    CHECK(cw::FitCounter::count() == 6 * 3);

    // nested accounting: outer_k x n_iter x inner_k inner fits; the final
    // refit per outer fold bypasses cross_validate and is not counted
    cw::FitCounter::reset();
    cw::nested_evaluate(knn_spec(cw::Task::regress), m, m.target, 2, 2, 5, space,
                        {cw::Metric::mape}, 3);
    CHECK(cw::FitCounter::count() == 2 * 5 * 2);
}

TEST_CASE("parameter ranges draw inside their bounds") {
    cw::Rng rng(13);
    const cw::ParamRange ints = cw::ParamRange::ints(2, 7);
    const cw::ParamRange reals = cw::ParamRange::reals(-1.5, 2.5);
    const cw::ParamRange logs = cw::ParamRange::log_reals(1e-3, 10.0);
    for (int i = 0; i < 500; ++i) {
        const double a = ints.draw(rng);
        CHECK(a >= 2.0);
        CHECK(a <= 7.0);
        CHECK(a == std::floor(a));
        const double b = reals.draw(rng);
        CHECK(b >= -1.5);
        CHECK(b < 2.5);
        const double c = logs.draw(rng);
        CHECK(c >= 1e-3);
        CHECK(c <= 10.0);
    }

    cw::ParamRange bad = cw::ParamRange::reals(2.0, 1.0);
    CHECK_THROWS_AS(bad.validate(), cw::Error);
    cw::ParamRange badlog = cw::ParamRange::log_reals(0.0, 1.0);
    badlog.lo = 0.0;
    CHECK_THROWS_AS(badlog.validate(), cw::Error);
}

TEST_CASE("apply_param reaches every tunable field") {
    cw::LearnerSpec s;
    cw::apply_param(s, "max_depth", 4.0);
    cw::apply_param(s, "learning_rate", 0.07);
    cw::apply_param(s, "min_child_weight", 2.5);
    cw::apply_param(s, "gamma", 0.25);
    cw::apply_param(s, "reg_lambda", 3.5);
    cw::apply_param(s, "subsample", 0.8);
    cw::apply_param(s, "colsample_bytree", 0.6);
    cw::apply_param(s, "scale_pos_weight", 2.0);
    cw::apply_param(s, "n_rounds", 77.0);
    cw::apply_param(s, "k", 9.0);
    cw::apply_param(s, "ridge_alpha", 0.4);
    cw::apply_param(s, "n_trees", 33.0);
    CHECK(s.params.max_depth == 4);
    CHECK(s.params.learning_rate == 0.07);
    CHECK(s.params.min_child_weight == 2.5);
    CHECK(s.params.gamma == 0.25);
    CHECK(s.params.reg_lambda == 3.5);
    CHECK(s.params.subsample == 0.8);
    CHECK(s.params.colsample_bytree == 0.6);
    CHECK(s.params.scale_pos_weight == 2.0);
    CHECK(s.params.n_rounds == 77);
    CHECK(s.k == 9);
    CHECK(s.ridge_alpha == 0.4);
    CHECK(s.n_trees == 33);
    CHECK_THROWS_AS(cw::apply_param(s, "dropout", 0.5), cw::Error);
}

TEST_CASE("random search is deterministic and thread-invariant") {
    cw::Rng rng(17);
    const cw::FeatureMatrix m = sized_matrix(rng, 20, 36, 3);
    cw::SearchSpace space;
    space.dims["k"] = cw::ParamRange::ints(1, 8);

    const cw::SearchResult a = cw::random_search(space, 8, knn_spec(cw::Task::regress), m,
                                                 m.target, 3, cw::Metric::mape, 5, 1);
    const cw::SearchResult b = cw::random_search(space, 8, knn_spec(cw::Task::regress), m,
                                                 m.target, 3, cw::Metric::mape, 5, 1);
    const cw::SearchResult c = cw::random_search(space, 8, knn_spec(cw::Task::regress), m,
                                                 m.target, 3, cw::Metric::mape, 5, 3);
    CHECK(a.best_trial == b.best_trial);
    CHECK(a.best_score == b.best_score);
    CHECK(a.best_trial == c.best_trial);
    CHECK(a.best_score == c.best_score);
    REQUIRE(a.trials.size() == c.trials.size());
    for (std::size_t t = 0; t < a.trials.size(); ++t) {
        CHECK(a.trials[t].mean_score == c.trials[t].mean_score);
        CHECK(a.trials[t].draws == c.trials[t].draws);
    }
    CHECK(a.best_spec.k == static_cast<int>(a.trials[static_cast<std::size_t>(a.best_trial)]
                                                .draws.at("k")));

    CHECK_THROWS_AS(cw::random_search(space, 0, knn_spec(cw::Task::regress), m, m.target, 3,
                                      cw::Metric::mape, 5),
                    cw::Error);
}

TEST_CASE("tied search scores keep the earliest trial") {
    cw::Rng rng(23);
    cw::FeatureMatrix m = oracles::random_matrix(rng, 24, 2, 0.0);
    std::fill(m.target.begin(), m.target.end(), 10.0);  // every trial scores MAPE 0
    cw::SearchSpace space;
    space.dims["k"] = cw::ParamRange::ints(1, 6);
    const cw::SearchResult r = cw::random_search(space, 5, knn_spec(cw::Task::regress), m,
                                                 m.target, 3, cw::Metric::mape, 1);
    CHECK(r.best_trial == 0);
    CHECK(r.best_score == 0.0);
}

TEST_CASE("nested evaluation without search keeps the base spec") {
    cw::Rng rng(29);
    const cw::FeatureMatrix m = oracles::random_matrix(rng, 40, 3, 0.0);
    const cw::LearnerSpec base = knn_spec(cw::Task::regress, 4);
    const std::vector<cw::Metric> metrics{cw::Metric::mape, cw::Metric::r2};
    const cw::NestedResult nr =
        cw::nested_evaluate(base, m, m.target, 4, 2, 0, cw::SearchSpace{}, metrics, 31);

    REQUIRE(nr.folds.size() == 4);
    for (const cw::NestedFold& f : nr.folds) {
        CHECK(f.tuned_spec.k == 4);
        CHECK(f.search_score == 0.0);
        REQUIRE(f.test_scores.size() == 2);
    }

    // spot-check one outer fold against a manual refit
    const cw::FoldPlan outer = cw::kfold(m.n_rows, 4, cw::Rng::derive(31, 11));
    const auto tr = outer.train_rows(0);
    const auto te = outer.test_rows(0);
    std::vector<double> y_tr, y_te;
    for (int r : tr) y_tr.push_back(m.target[static_cast<std::size_t>(r)]);
    for (int r : te) y_te.push_back(m.target[static_cast<std::size_t>(r)]);
    const cw::FittedModel model =
        cw::fit_model(base, m.subset(tr), y_tr, cw::Rng::derive(31, 2000));
    const double want = cw::mape(y_te, model.predict(m.subset(te)));
    CHECK(nr.folds[0].test_scores[0] == Catch::Approx(want).margin(1e-12));

    const cw::FoldScores fs = nr.as_fold_scores();
    CHECK(fs.mean_test_of(cw::Metric::mape) >= 0.0);

    CHECK_THROWS_AS(cw::nested_evaluate(base, m, m.target, 1, 2, 0, cw::SearchSpace{}, metrics, 1),
                    cw::Error);
}

TEST_CASE("classification search stratifies its inner folds") {
    cw::Rng rng(37);
    const cw::FeatureMatrix m = oracles::random_matrix(rng, 60, 3, 0.0);
    std::vector<double> labels(m.n_rows);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = rng.bernoulli(0.25) ? 1.0 : 0.0;

    cw::SearchSpace space;
    space.dims["k"] = cw::ParamRange::ints(1, 5);
    const cw::SearchResult r = cw::random_search(space, 4, knn_spec(cw::Task::classify), m,
                                                 labels, 3, cw::Metric::f1, 9);
    CHECK(r.best_trial >= 0);
    CHECK(r.objective == cw::Metric::f1);
    for (const cw::Trial& t : r.trials) {
        CHECK(t.mean_score >= 0.0);
        CHECK(t.mean_score <= 1.0);
    }
}

TEST_CASE("metric names round-trip") {
    using cw::Metric;
    for (Metric m : {Metric::accuracy, Metric::precision, Metric::recall, Metric::f1,
                     Metric::mape, Metric::r2})
        CHECK(cw::metric_from_string(cw::to_string(m)) == m);
    CHECK_THROWS_AS(cw::metric_from_string("auc"), cw::Error);
    CHECK_FALSE(cw::metric_is_maximized(Metric::mape));
    CHECK(cw::metric_is_maximized(Metric::f1));
    CHECK(cw::default_metrics(cw::Task::classify).size() == 4);
    CHECK(cw::default_metrics(cw::Task::regress).size() == 2);
}
