#include "catch2/catch_amalgamated.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "clearway/clearway.hpp"
#include "oracles.hpp"

namespace cw = clearway;

namespace {

cw::FeatureMatrix tiny_regression(cw::Rng& rng, int rows, int cols, double missing_rate = 0.2) {
    return oracles::random_matrix(rng, rows, cols, missing_rate);
}

std::vector<int> every_column(const cw::FeatureMatrix& m) {
    std::vector<int> cols(m.n_cols);
    for (std::size_t c = 0; c < m.n_cols; ++c) cols[c] = static_cast<int>(c);
    return cols;
}

// The tests' own loss definitions, written from the formulas rather than the
// library's derivative code, so finite differences of these check the
// analytic gradients independently.
double loss_at(cw::Loss loss, double y, double yhat) {
    switch (loss) {
        case cw::Loss::squared_error: return 0.5 * (yhat - y) * (yhat - y);
        case cw::Loss::logistic: {
            const double softplus =
                yhat > 0.0 ? yhat + std::log1p(std::exp(-yhat)) : std::log1p(std::exp(yhat));
            return softplus - y * yhat;
        }
        case cw::Loss::absolute: return std::abs(yhat - y);
        case cw::Loss::mape: return std::abs(yhat - y) / y;
    }
    return 0.0;
}

}  // namespace

TEST_CASE("single-depth trees match the brute-force split finder") {
    cw::Rng rng(42);
    for (int trial = 0; trial < 40; ++trial) {
        const cw::FeatureMatrix m = tiny_regression(rng, 12, 4);
        std::vector<double> grad(m.n_rows), hess(m.n_rows);
        for (std::size_t r = 0; r < m.n_rows; ++r) {
            grad[r] = rng.uniform(-3.0, 3.0);
            hess[r] = rng.uniform(0.5, 2.0);
        }
        cw::HyperParams p;
        p.max_depth = 1;
        p.reg_lambda = trial % 3 == 0 ? 0.0 : (trial % 3 == 1 ? 1.0 : 3.0);
        p.gamma = trial % 2 == 0 ? 0.0 : 0.5;
        p.min_child_weight = trial % 4 == 0 ? 1.5 : 1e-9;

        const cw::Tree grown = cw::grow_tree(m, grad, hess, {}, every_column(m), p);

        std::vector<int> all_rows(m.n_rows);
        double g_total = 0.0, h_total = 0.0;
        for (std::size_t r = 0; r < m.n_rows; ++r) {
            all_rows[r] = static_cast<int>(r);
            g_total += grad[r];
            h_total += hess[r];
        }
        const oracles::SplitChoice want =
            oracles::brute_force_split(m, grad, hess, all_rows, g_total, h_total, p);

        if (want.feature >= 0 && want.gain > 0.0) {
            REQUIRE(grown.size() == 3);
            CHECK(grown[0].feature == want.feature);
            CHECK(grown[0].threshold == want.threshold);
            CHECK(grown[0].default_left == want.default_left);
        } else {
            CHECK(grown.size() == 1);
        }
        CHECK(oracles::trees_equal(grown, oracles::naive_tree(m, grad, hess, p)));
    }
}

TEST_CASE("deep trees match the level-order naive reference node for node") {
    cw::Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const cw::FeatureMatrix m = tiny_regression(rng, 16, 5);
        std::vector<double> grad(m.n_rows), hess(m.n_rows, 1.0);
        for (std::size_t r = 0; r < m.n_rows; ++r) grad[r] = rng.uniform(-3.0, 3.0);
        cw::HyperParams p;
        p.max_depth = 4;
        p.reg_lambda = trial % 2 == 0 ? 0.0 : 2.0;
        p.gamma = trial % 5 == 0 ? 0.3 : 0.0;

        const cw::Tree grown = cw::grow_tree(m, grad, hess, {}, every_column(m), p);
        const cw::Tree naive = oracles::naive_tree(m, grad, hess, p);
        CHECK(oracles::trees_equal(grown, naive));
    }
}

TEST_CASE("unregularized boosting matches the naive gradient-boosting loop") {
    cw::Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const cw::FeatureMatrix m = tiny_regression(rng, 20, 4);
        cw::HyperParams p;
        p.max_depth = 3;
        p.learning_rate = 0.3;
        p.n_rounds = 8;
        p.reg_lambda = 0.0;
        p.gamma = 0.0;

        const cw::TreeEnsemble e = cw::train(m, m.target, cw::Loss::squared_error, p, 1);
        double naive_base = 0.0;
        const std::vector<cw::Tree> naive = oracles::naive_boost(m, m.target, p, naive_base);

        CHECK(e.base_score == naive_base);
        REQUIRE(e.trees.size() == naive.size());
        for (std::size_t t = 0; t < naive.size(); ++t)
            CHECK(oracles::trees_equal(e.trees[t], naive[t]));
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    const double h = 1e-3;
    cw::Rng rng(99);
    for (cw::Loss loss : {cw::Loss::squared_error, cw::Loss::logistic, cw::Loss::absolute,
                          cw::Loss::mape}) {
        std::vector<double> ys(200), yhats(200);
        for (std::size_t i = 0; i < ys.size(); ++i) {
            if (loss == cw::Loss::logistic) {
                ys[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
                yhats[i] = rng.uniform(-6.0, 6.0);
            } else {
                ys[i] = rng.uniform(5.0, 719.0);
                const double delta = rng.uniform(1.0, 100.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
                yhats[i] = ys[i] + delta;
            }
        }
        const cw::GradHess gh = cw::loss_derivatives(loss, ys, yhats);
        for (std::size_t i = 0; i < ys.size(); ++i) {
            const double fd =
                (loss_at(loss, ys[i], yhats[i] + h) - loss_at(loss, ys[i], yhats[i] - h)) /
                (2.0 * h);
            CHECK(std::abs(fd - gh.grad[i]) <= 1e-6 * std::max(std::abs(gh.grad[i]), 1e-12));
        }
    }
}

TEST_CASE("logistic curvature matches the finite-difference slope of the gradient") {
    const double h = 1e-4;
    cw::Rng rng(5);
    std::vector<double> ys(50, 1.0), z0(50), zp(50), zm(50);
    for (std::size_t i = 0; i < z0.size(); ++i) {
        z0[i] = rng.uniform(-4.0, 4.0);
        zp[i] = z0[i] + h;
        zm[i] = z0[i] - h;
    }
    const cw::GradHess at = cw::loss_derivatives(cw::Loss::logistic, ys, z0);
    const cw::GradHess up = cw::loss_derivatives(cw::Loss::logistic, ys, zp);
    const cw::GradHess dn = cw::loss_derivatives(cw::Loss::logistic, ys, zm);
    for (std::size_t i = 0; i < z0.size(); ++i) {
        const double fd = (up.grad[i] - dn.grad[i]) / (2.0 * h);
        CHECK(std::abs(fd - at.hess[i]) <= 1e-5 * std::max(at.hess[i], 1e-12));
    }
}

TEST_CASE("missing values follow the recorded default direction") {
    cw::Tree tree(3);
    tree[0].feature = 0;
    tree[0].threshold = 1.5;
    tree[0].default_left = false;
    tree[0].left = 1;
    tree[0].right = 2;
    tree[1].weight = -7.0;
    tree[2].weight = 3.0;

    const double lo[] = {1.0};
    const double hi[] = {2.0};
    const double gap[] = {cw::missing()};
    CHECK(cw::tree_leaf_weight(tree, lo) == -7.0);
    CHECK(cw::tree_leaf_weight(tree, hi) == 3.0);
    CHECK(cw::tree_leaf_weight(tree, gap) == 3.0);

    tree[0].default_left = true;
    CHECK(cw::tree_leaf_weight(tree, gap) == -7.0);
}

TEST_CASE("zero rounds yield the constant base-score predictor") {
    cw::Rng rng(3);
    const cw::FeatureMatrix m = tiny_regression(rng, 15, 3);
    cw::HyperParams p;
    p.n_rounds = 0;
    const cw::TreeEnsemble e = cw::train(m, m.target, cw::Loss::squared_error, p, 1);

    double mean = 0.0;
    for (double t : m.target) mean += t;
    mean /= static_cast<double>(m.target.size());
    CHECK(e.base_score == mean);
    for (double pred : cw::predict(e, m)) CHECK(pred == mean);
}

TEST_CASE("training reduces squared error against the constant predictor") {
    cw::Rng rng(17);
    const cw::FeatureMatrix m = tiny_regression(rng, 60, 5, 0.1);
    cw::HyperParams p;
    p.max_depth = 3;
    p.learning_rate = 0.2;
    p.n_rounds = 40;
    const cw::TreeEnsemble e = cw::train(m, m.target, cw::Loss::squared_error, p, 1);

    double mean = 0.0;
    for (double t : m.target) mean += t;
    mean /= static_cast<double>(m.target.size());
    double sse_model = 0.0, sse_base = 0.0;
    const std::vector<double> pred = cw::predict(e, m);
    for (std::size_t r = 0; r < m.n_rows; ++r) {
        sse_model += (pred[r] - m.target[r]) * (pred[r] - m.target[r]);
        sse_base += (mean - m.target[r]) * (mean - m.target[r]);
    }
    CHECK(sse_model < 0.5 * sse_base);
}

TEST_CASE("row and column subsampling are seed-deterministic") {
    cw::Rng rng(23);
    const cw::FeatureMatrix m = tiny_regression(rng, 40, 6, 0.1);
    cw::HyperParams p;
    p.max_depth = 3;
    p.n_rounds = 12;
    p.subsample = 0.7;
    p.colsample_bytree = 0.5;

    const cw::TreeEnsemble a = cw::train(m, m.target, cw::Loss::squared_error, p, 5);
    const cw::TreeEnsemble b = cw::train(m, m.target, cw::Loss::squared_error, p, 5);
    CHECK(cw::serialize(a) == cw::serialize(b));

    const cw::TreeEnsemble c = cw::train(m, m.target, cw::Loss::squared_error, p, 6);
    CHECK(cw::serialize(a) != cw::serialize(c));

    // with colsample 0.5 of 6 columns each tree may use at most 3 features
    const int take = 3;
    for (const cw::Tree& t : a.trees) {
        std::set<int> used;
        for (const cw::TreeNode& n : t)
            if (!n.is_leaf()) used.insert(n.feature);
        CHECK(static_cast<int>(used.size()) <= take);
    }
}

TEST_CASE("scale_pos_weight pushes logistic margins toward the positive class") {
    cw::Rng rng(31);
    const cw::FeatureMatrix m = tiny_regression(rng, 80, 4, 0.0);
    std::vector<double> labels(m.n_rows);
    for (std::size_t r = 0; r < m.n_rows; ++r)
        labels[r] = (m.at(r, 0) + 0.3 * rng.normal() > 1.0) ? 1.0 : 0.0;

    cw::HyperParams p;
    p.max_depth = 3;
    p.n_rounds = 20;
    auto mean_positive_margin = [&](double spw) {
        cw::HyperParams q = p;
        q.scale_pos_weight = spw;
        const cw::TreeEnsemble e = cw::train(m, labels, cw::Loss::logistic, q, 1);
        const std::vector<double> margin = cw::predict(e, m);
        double s = 0.0;
        int n = 0;
        for (std::size_t r = 0; r < m.n_rows; ++r)
            if (labels[r] == 1.0) {
                s += margin[r];
                ++n;
            }
        return s / static_cast<double>(n);
    };
    CHECK(mean_positive_margin(8.0) > mean_positive_margin(1.0));
}

TEST_CASE("log-transform training predicts in the original scale") {
    cw::Rng rng(41);
    const cw::FeatureMatrix m = tiny_regression(rng, 30, 3, 0.0);
    cw::HyperParams p;
    p.n_rounds = 0;
    const cw::TreeEnsemble e =
        cw::train(m, m.target, cw::Loss::squared_error, p, 1, cw::TargetTransform::log);

    double log_mean = 0.0;
    for (double t : m.target) log_mean += std::log(t);
    log_mean /= static_cast<double>(m.target.size());
    CHECK(e.base_score == log_mean);
    for (double pred : cw::predict(e, m))
        CHECK(pred == Catch::Approx(std::exp(log_mean)).epsilon(1e-12));
}

TEST_CASE("serialized ensembles round-trip exactly") {
    cw::Rng rng(53);
    const cw::FeatureMatrix m = tiny_regression(rng, 25, 4);
    cw::HyperParams p;
    p.max_depth = 4;
    p.n_rounds = 10;
    const cw::TreeEnsemble e = cw::train(m, m.target, cw::Loss::mape, p, 2);

    const std::string text = cw::serialize(e);
    const cw::TreeEnsemble back = cw::deserialize(text);
    CHECK(cw::serialize(back) == text);

    const std::vector<double> a = cw::predict(e, m);
    const std::vector<double> b = cw::predict(back, m);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("corrupt model documents are rejected") {
    cw::Rng rng(61);
    const cw::FeatureMatrix m = tiny_regression(rng, 20, 3);
    cw::HyperParams p;
    p.max_depth = 2;
    p.n_rounds = 2;
    const cw::TreeEnsemble e = cw::train(m, m.target, cw::Loss::squared_error, p, 1);
    REQUIRE_FALSE(e.trees[0][0].is_leaf());

    CHECK_THROWS_AS(cw::deserialize("not json at all"), cw::CorruptModel);
    CHECK_THROWS_AS(cw::deserialize("{}"), cw::CorruptModel);

    nlohmann::json j = cw::ensemble_to_json(e);
    j["format"] = "something-else/9";
    CHECK_THROWS_AS(cw::ensemble_from_json(j), cw::CorruptModel);

    j = cw::ensemble_to_json(e);
    j["objective"] = "hinge";
    CHECK_THROWS_AS(cw::ensemble_from_json(j), cw::CorruptModel);

    j = cw::ensemble_to_json(e);
    j["trees"][0]["left"][0] = 999;
    CHECK_THROWS_AS(cw::ensemble_from_json(j), cw::CorruptModel);

    j = cw::ensemble_to_json(e);
    j["base_score"] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(cw::ensemble_from_json(j), cw::CorruptModel);

    j = cw::ensemble_to_json(e);
    j["trees"][0]["threshold"][0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(cw::ensemble_from_json(j), cw::CorruptModel);
}

TEST_CASE("invalid inputs and parameters are rejected") {
    cw::Rng rng(71);
    const cw::FeatureMatrix m = tiny_regression(rng, 10, 2);

    cw::HyperParams p;
    std::vector<double> zeros(m.n_rows, 0.0);
    CHECK_THROWS_AS(cw::train(m, zeros, cw::Loss::mape, p, 1), cw::NonPositiveTarget);
    CHECK_THROWS_AS(cw::train(m, zeros, cw::Loss::squared_error, p, 1, cw::TargetTransform::log),
                    cw::NonPositiveTarget);

    std::vector<double> short_y(m.n_rows - 1, 1.0);
    CHECK_THROWS_AS(cw::train(m, short_y, cw::Loss::squared_error, p, 1), cw::DimensionMismatch);

    const cw::FeatureMatrix empty = cw::FeatureMatrix::zeros(0, 2);
    CHECK_THROWS_AS(cw::train(empty, {}, cw::Loss::squared_error, p, 1), cw::EmptyInput);

    cw::HyperParams bad = p;
    bad.max_depth = 0;
    CHECK_THROWS_AS(bad.validate(), cw::Error);
    bad = p;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), cw::Error);
    bad = p;
    bad.subsample = 1.5;
    CHECK_THROWS_AS(bad.validate(), cw::Error);
    bad = p;
    bad.reg_lambda = -1.0;
    CHECK_THROWS_AS(bad.validate(), cw::Error);

    CHECK_THROWS_AS(cw::loss_from_string("nope"), cw::CorruptModel);
    CHECK_THROWS_AS(cw::transform_from_string("exp"), cw::CorruptModel);
    CHECK(std::string(cw::to_string(cw::Loss::mape)) == "mape");
    CHECK(cw::loss_from_string("logistic") == cw::Loss::logistic);
}
