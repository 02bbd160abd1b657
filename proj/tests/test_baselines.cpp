#include "catch2/catch_amalgamated.hpp"

#include <cmath>
#include <vector>

#include "clearway/clearway.hpp"
#include "oracles.hpp"

namespace cw = clearway;

namespace {

cw::FeatureMatrix matrix_from(const std::vector<std::vector<double>>& rows,
                              std::vector<double> targets = {}) {
    cw::FeatureMatrix m = cw::FeatureMatrix::zeros(rows.size(), rows.front().size());
    for (std::size_t c = 0; c < m.n_cols; ++c)
        m.schema[c] = {"f" + std::to_string(c), cw::ColumnKind::numeric};
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < m.n_cols; ++c) m.at(r, c) = rows[r][c];
    m.target = std::move(targets);
    return m;
}

// Ordinary least squares via the test's own Gaussian elimination on the
// augmented [1 X] design, the reference for the alpha = 0 ridge path.
std::vector<double> ols_predictions(const cw::FeatureMatrix& m, const std::vector<double>& y) {
    const std::size_t n = m.n_rows, p = m.n_cols + 1;
    std::vector<double> a(p * p, 0.0), rhs(p, 0.0);
    auto x_at = [&](std::size_t r, std::size_t j) {
        return j == 0 ? 1.0 : m.at(r, j - 1);
    };
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < p; ++i) {
            rhs[i] += x_at(r, i) * y[r];
            for (std::size_t j = 0; j < p; ++j) a[i * p + j] += x_at(r, i) * x_at(r, j);
        }
    }
    // Gaussian elimination with partial pivoting
    std::vector<double> w(p);
    for (std::size_t col = 0; col < p; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < p; ++r)
            if (std::abs(a[r * p + col]) > std::abs(a[piv * p + col])) piv = r;
        for (std::size_t j = 0; j < p; ++j) std::swap(a[col * p + j], a[piv * p + j]);
        std::swap(rhs[col], rhs[piv]);
        for (std::size_t r = col + 1; r < p; ++r) {
            const double f = a[r * p + col] / a[col * p + col];
            for (std::size_t j = col; j < p; ++j) a[r * p + j] -= f * a[col * p + j];
            rhs[r] -= f * rhs[col];
        }
    }
    for (std::size_t col = p; col-- > 0;) {
        double acc = rhs[col];
        for (std::size_t j = col + 1; j < p; ++j) acc -= a[col * p + j] * w[j];
        w[col] = acc / a[col * p + col];
    }
    std::vector<double> pred(n);
    for (std::size_t r = 0; r < n; ++r) {
        double z = w[0];
        for (std::size_t j = 1; j < p; ++j) z += w[j] * x_at(r, j);
        pred[r] = z;
    }
    return pred;
}

}  // namespace

TEST_CASE("column statistics impute medians and standardize") {
    const double miss = cw::missing();
    const cw::FeatureMatrix m = matrix_from({{1.0, 7.0}, {3.0, 7.0}, {miss, 7.0}, {5.0, 7.0}});
    const cw::ColumnStats s = cw::ColumnStats::fit(m);

    CHECK(s.median[0] == 3.0);  // middle of {1,3,5}
    CHECK(s.mean[0] == 3.0);    // imputed column is {1,3,3,5}
    CHECK(s.scale[0] == Catch::Approx(std::sqrt(2.0)).margin(1e-15));
    CHECK(s.scale[1] == 1.0);  // constant column keeps scale 1

    const cw::FeatureMatrix z = s.apply(m);
    CHECK(z.at(0, 0) == Catch::Approx(-2.0 / std::sqrt(2.0)).margin(1e-15));
    CHECK(z.at(2, 0) == 0.0);  // imputed to the median, which equals the mean
    CHECK(z.at(0, 1) == 0.0);
}

TEST_CASE("knn finds hand-checkable neighbours") {
    const cw::FeatureMatrix train = matrix_from({{0.0}, {2.0}, {2.0}, {10.0}});
    const std::vector<double> targets = {10.0, 20.0, 30.0, 40.0};

    const cw::KnnModel one = cw::knn_fit(train, targets, 1, cw::Task::regress);
    const cw::FeatureMatrix query = matrix_from({{2.0}});
    // rows 1 and 2 are both at distance zero; the tie breaks by row index
    CHECK(cw::knn_predict(one, query)[0] == 20.0);

    const cw::KnnModel three = cw::knn_fit(train, targets, 3, cw::Task::regress);
    CHECK(cw::knn_predict(three, query)[0] == Catch::Approx(20.0).margin(1e-12));

    // classification: fraction of the k neighbours labeled 1
    const std::vector<double> labels = {0.0, 1.0, 0.0, 1.0};
    const cw::KnnModel vote = cw::knn_fit(train, labels, 3, cw::Task::classify);
    CHECK(cw::knn_predict(vote, query)[0] == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("knn distances use standardized coordinates") {
    // Feature 1 has a huge raw scale; standardization makes feature 0 decide.
    const cw::FeatureMatrix train =
        matrix_from({{0.0, 0.0}, {1.0, 3000.0}, {8.0, 1000.0}, {9.0, 2000.0}});
    const std::vector<double> targets = {1.0, 1.0, 2.0, 2.0};
    const cw::KnnModel knn = cw::knn_fit(train, targets, 2, cw::Task::regress);

    const cw::FeatureMatrix stored_expected = cw::ColumnStats::fit(train).apply(train);
    for (std::size_t r = 0; r < train.n_rows; ++r)
        for (std::size_t c = 0; c < train.n_cols; ++c)
            CHECK(knn.train.at(r, c) == stored_expected.at(r, c));

    const cw::FeatureMatrix q = matrix_from({{0.5, 1500.0}});
    CHECK(cw::knn_predict(knn, q)[0] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("knn rejects impossible k") {
    const cw::FeatureMatrix train = matrix_from({{0.0}, {1.0}, {2.0}});
    const std::vector<double> targets = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(cw::knn_fit(train, targets, 4, cw::Task::regress), cw::KTooLarge);
    CHECK_THROWS_AS(cw::knn_fit(train, targets, 0, cw::Task::regress), cw::Error);
    CHECK_THROWS_AS(cw::knn_fit(train, {1.0, 2.0}, 1, cw::Task::regress),
                    cw::DimensionMismatch);
}

TEST_CASE("unpenalized ridge equals ordinary least squares") {
    cw::Rng rng(19);
    const int n = 30, p = 3;
    cw::FeatureMatrix m = cw::FeatureMatrix::zeros(n, p);
    for (std::size_t c = 0; c < m.n_cols; ++c)
        m.schema[c] = {"f" + std::to_string(c), cw::ColumnKind::numeric};
    std::vector<double> y(n);
    for (std::size_t r = 0; r < m.n_rows; ++r) {
        for (std::size_t c = 0; c < m.n_cols; ++c) m.at(r, c) = rng.uniform(-2.0, 2.0);
        y[r] = 1.5 + 2.0 * m.at(r, 0) - 0.7 * m.at(r, 1) + 0.1 * rng.normal();
    }

    const cw::LinearModel fit = cw::linear_fit(m, y, cw::Link::identity, 0.0);
    const std::vector<double> got = cw::linear_predict(fit, m);
    const std::vector<double> want = ols_predictions(m, y);
    for (std::size_t r = 0; r < m.n_rows; ++r)
        CHECK(got[r] == Catch::Approx(want[r]).margin(1e-8));
}

TEST_CASE("extreme ridge penalty shrinks to the mean predictor") {
    cw::Rng rng(29);
    const cw::FeatureMatrix m = oracles::random_matrix(rng, 25, 3, 0.0);
    const cw::LinearModel fit = cw::linear_fit(m, m.target, cw::Link::identity, 1e12);
    double ybar = 0.0;
    for (double t : m.target) ybar += t;
    ybar /= static_cast<double>(m.target.size());
    for (double pred : cw::linear_predict(fit, m))
        CHECK(pred == Catch::Approx(ybar).margin(1e-6 * std::abs(ybar)));
}

TEST_CASE("logistic regression satisfies its stationarity condition") {
    cw::Rng rng(37);
    const int n = 60;
    cw::FeatureMatrix m = cw::FeatureMatrix::zeros(n, 2);
    for (std::size_t c = 0; c < m.n_cols; ++c)
        m.schema[c] = {"f" + std::to_string(c), cw::ColumnKind::numeric};
    std::vector<double> y(n);
    for (std::size_t r = 0; r < m.n_rows; ++r) {
        m.at(r, 0) = rng.uniform(-2.0, 2.0);
        m.at(r, 1) = rng.uniform(-2.0, 2.0);
        const double z = 1.2 * m.at(r, 0) - 0.5 + rng.normal();
        y[r] = z > 0.0 ? 1.0 : 0.0;
    }
    const double alpha = 0.5;
    const cw::LinearModel fit = cw::linear_fit(m, y, cw::Link::logit, alpha);
    const std::vector<double> prob = cw::linear_predict(fit, m);

    // gradient of the penalized likelihood at the solution, in the
    // standardized space the solver works in
    const cw::ColumnStats stats = cw::ColumnStats::fit(m);
    const cw::FeatureMatrix xs = stats.apply(m);
    std::vector<double> w_std(m.n_cols);
    for (std::size_t j = 0; j < m.n_cols; ++j) w_std[j] = fit.weights[j] * stats.scale[j];
    std::vector<double> grad(m.n_cols + 1, 0.0);
    for (std::size_t r = 0; r < m.n_rows; ++r) {
        const double g = prob[r] - y[r];
        for (std::size_t j = 0; j < m.n_cols; ++j) grad[j] += xs.at(r, j) * g;
        grad[m.n_cols] += g;
    }
    for (std::size_t j = 0; j < m.n_cols; ++j) grad[j] += alpha * w_std[j];
    for (double g : grad) CHECK(std::abs(g) <= 1e-6);

    // probabilities line up with the planted direction
    int correct = 0;
    for (std::size_t r = 0; r < m.n_rows; ++r)
        if ((prob[r] >= 0.5 ? 1.0 : 0.0) == y[r]) ++correct;
    CHECK(correct >= 45);
}

TEST_CASE("logistic regression rejects non-binary targets") {
    const cw::FeatureMatrix m = matrix_from({{0.0}, {1.0}, {2.0}});
    CHECK_THROWS_AS(cw::linear_fit(m, {0.0, 1.0, 2.0}, cw::Link::logit, 1.0), cw::NonBinary);
}

TEST_CASE("single unbagged forest tree is the plain regression tree") {
    cw::Rng rng(43);
    const cw::FeatureMatrix m = oracles::random_matrix(rng, 18, 3, 0.0);
    cw::HyperParams p;
    p.max_depth = 3;
    p.reg_lambda = 0.0;
    const cw::ForestModel f =
        cw::forest_fit(m, m.target, 1, p, 9, cw::Task::regress, /*bootstrap=*/false);

    std::vector<double> grad(m.n_rows), hess(m.n_rows, 1.0);
    for (std::size_t r = 0; r < m.n_rows; ++r) grad[r] = -m.target[r];
    const cw::Tree want = oracles::naive_tree(m, grad, hess, p);
    REQUIRE(f.trees.size() == 1);
    CHECK(oracles::trees_equal(f.trees[0], want));
}

TEST_CASE("deep unbagged tree reproduces training targets exactly") {
    // distinct single-feature values, zero lambda: every leaf becomes pure
    const cw::FeatureMatrix m =
        matrix_from({{1.0}, {2.0}, {3.0}, {4.0}, {5.0}, {6.0}}, {7.0, 9.0, 4.0, 12.0, 1.0, 30.0});
    cw::HyperParams p;
    p.max_depth = 8;
    p.reg_lambda = 0.0;
    const cw::ForestModel f =
        cw::forest_fit(m, m.target, 1, p, 1, cw::Task::regress, /*bootstrap=*/false);
    const std::vector<double> pred = cw::forest_predict(f, m);
    for (std::size_t r = 0; r < m.n_rows; ++r)
        CHECK(pred[r] == Catch::Approx(m.target[r]).margin(1e-12));
}

TEST_CASE("forests are seed-deterministic and vote fractions for classification") {
    cw::Rng rng(47);
    const cw::FeatureMatrix m = oracles::random_matrix(rng, 40, 4, 0.1);
    std::vector<double> labels(m.n_rows);
    for (std::size_t r = 0; r < m.n_rows; ++r) labels[r] = rng.bernoulli(0.5) ? 1.0 : 0.0;

    cw::HyperParams p;
    p.max_depth = 4;
    p.colsample_bytree = 0.75;
    const cw::ForestModel a = cw::forest_fit(m, labels, 15, p, 3, cw::Task::classify);
    const cw::ForestModel b = cw::forest_fit(m, labels, 15, p, 3, cw::Task::classify);
    const std::vector<double> pa = cw::forest_predict(a, m);
    const std::vector<double> pb = cw::forest_predict(b, m);
    for (std::size_t r = 0; r < m.n_rows; ++r) {
        CHECK(pa[r] == pb[r]);
        // fraction of 15 trees voting 1
        const double scaled = pa[r] * 15.0;
        CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
        CHECK(pa[r] >= 0.0);
        CHECK(pa[r] <= 1.0);
    }
    CHECK(a.tree_seeds == b.tree_seeds);

    const cw::ForestModel c = cw::forest_fit(m, labels, 15, p, 4, cw::Task::classify);
    CHECK(c.tree_seeds != a.tree_seeds);
}

TEST_CASE("forest input validation") {
    const cw::FeatureMatrix m = matrix_from({{0.0}, {1.0}});
    cw::HyperParams p;
    CHECK_THROWS_AS(cw::forest_fit(m, {1.0, 2.0}, 0, p, 1, cw::Task::regress), cw::Error);
    CHECK_THROWS_AS(cw::forest_fit(m, {1.0}, 3, p, 1, cw::Task::regress),
                    cw::DimensionMismatch);
    const cw::FeatureMatrix empty = cw::FeatureMatrix::zeros(0, 1);
    CHECK_THROWS_AS(cw::forest_fit(empty, {}, 3, p, 1, cw::Task::regress), cw::EmptyInput);
    CHECK(cw::task_from_string("classify") == cw::Task::classify);
    CHECK_THROWS_AS(cw::task_from_string("cluster"), cw::CorruptModel);
}
