#include "catch2/catch_amalgamated.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "clearway/clearway.hpp"

namespace cw = clearway;

namespace {

struct Corpus {
    std::vector<cw::IncidentRecord> train;
    std::vector<cw::IncidentRecord> test;
    std::vector<cw::RoadSection> sections;
    std::vector<cw::FlowObservation> flows;
};

Corpus make_corpus(std::uint64_t seed) {
    cw::GeneratorConfig cfg;
    cfg.n_incidents = 160;
    cfg.n_sections = 15;
    cfg.n_sentinels = 4;
    cfg.n_days = 2;
    cfg.outlier_count = 8;
    cfg.seed = seed;
    const cw::SynthBundle b = cw::generate(cfg);
    Corpus c;
    c.sections = b.sections;
    c.flows = b.flows;
    for (std::size_t i = 0; i < b.incidents.size(); ++i)
        (i % 4 == 3 ? c.test : c.train).push_back(b.incidents[i]);
    return c;
}

cw::BiLevelConfig quick_config() {
    cw::BiLevelConfig cfg = cw::BiLevelConfig::defaults();
    cfg.classifier.spec.params.max_depth = 3;
    cfg.classifier.spec.params.n_rounds = 40;
    cfg.classifier.spec.params.learning_rate = 0.2;
    cfg.classifier.features.variant = cw::FeatureSet::BFS;
    cfg.regressor.spec.params.max_depth = 3;
    cfg.regressor.spec.params.n_rounds = 60;
    cfg.regressor.spec.params.learning_rate = 0.15;
    cfg.regressor.features.variant = cw::FeatureSet::BFS;
    return cfg;
}

}  // namespace

TEST_CASE("the 45-minute labeling boundary counts as short") {
    CHECK(cw::label(44.0, 45.0) == 1);
    CHECK(cw::label(45.0, 45.0) == 1);
    CHECK(cw::label(46.0, 45.0) == 0);
    CHECK(cw::label(0.1, 45.0) == 1);
    CHECK(cw::label(719.0, 45.0) == 0);
}

TEST_CASE("sub-cutoff rows are dropped before any stage sees them") {
    Corpus c = make_corpus(2);
    const std::size_t before = c.train.size();
    std::size_t sub = 0;
    for (const auto& r : c.train)
        if (r.duration_min < 5.0) ++sub;
    REQUIRE(sub > 0);
    const auto kept = cw::filter_outliers(c.train, 5.0);
    CHECK(kept.size() == before - sub);
    for (const auto& r : kept) CHECK(r.duration_min >= 5.0);
}

TEST_CASE("fit, predict, and evaluate a bi-level model end to end") {
    const Corpus c = make_corpus(3);
    const cw::BiLevelConfig cfg = quick_config();
    const cw::BiLevelModel model = cw::fit_bilevel(c.train, c.sections, c.flows, cfg);
    CHECK_FALSE(model.degenerate_classifier);
    CHECK(model.threshold == 45.0);

    const cw::FlowStore store = cw::FlowStore::build(c.flows);
    const auto outcomes = cw::predict_bilevel(model, c.test, c.sections, store);
    REQUIRE(outcomes.size() == c.test.size());
    for (const auto& o : outcomes) {
        if (o.predicted_class == 1) {
            REQUIRE(o.duration_estimate.has_value());
            CHECK(std::isfinite(*o.duration_estimate));
            CHECK(o.note.empty());
        } else {
            CHECK_FALSE(o.duration_estimate.has_value());
            CHECK(o.note == cw::kStepThreeNote);
        }
    }

    // single-record overload agrees with the batch path
    const cw::BiLevelOutcome solo = cw::predict_bilevel(model, c.test[0], c.sections, store);
    CHECK(solo.predicted_class == outcomes[0].predicted_class);
    CHECK(solo.duration_estimate == outcomes[0].duration_estimate);

    const cw::BiLevelReport rep = cw::evaluate_bilevel(model, c.test, c.sections, c.flows);
    CHECK(rep.n == cw::filter_outliers(c.test, 5.0).size());
    CHECK(rep.true_short_pred_short + rep.true_short_pred_long + rep.true_long_pred_short +
              rep.true_long_pred_long ==
          rep.n);
    CHECK(rep.classification.accuracy ==
          Catch::Approx(static_cast<double>(rep.true_short_pred_short + rep.true_long_pred_long) /
                        static_cast<double>(rep.n))
              .margin(1e-12));
    CHECK(rep.conditioned.n == rep.true_short_pred_short);
    CHECK(rep.unconditioned.n == rep.true_short_pred_short + rep.true_short_pred_long);
    if (rep.conditioned.mape_defined) CHECK(rep.conditioned.mape >= 0.0);
    if (rep.unconditioned.r2_defined) CHECK(std::isfinite(rep.unconditioned.r2));

    // the model learned something: train-set accuracy beats the majority rate
    const cw::BiLevelReport train_rep = cw::evaluate_bilevel(model, c.train, c.sections, c.flows);
    const double short_rate =
        static_cast<double>(train_rep.true_short_pred_short + train_rep.true_short_pred_long) /
        static_cast<double>(train_rep.n);
    CHECK(train_rep.classification.accuracy > std::max(short_rate, 1.0 - short_rate));
}

TEST_CASE("all-short training data short-circuits the classifier stage") {
    Corpus c = make_corpus(4);
    for (auto& r : c.train) r.duration_min = std::clamp(r.duration_min, 6.0, 44.0);
    const cw::BiLevelModel model = cw::fit_bilevel(c.train, c.sections, c.flows, quick_config());
    CHECK(model.degenerate_classifier);
    CHECK(model.degenerate_class == 1);

    const cw::FlowStore store = cw::FlowStore::build(c.flows);
    const auto outcomes = cw::predict_bilevel(model, c.test, c.sections, store);
    for (const auto& o : outcomes) {
        CHECK(o.predicted_class == 1);
        CHECK(o.duration_estimate.has_value());
    }
}

TEST_CASE("degenerate inputs raise typed errors") {
    Corpus c = make_corpus(5);
    const cw::BiLevelConfig cfg = quick_config();

    CHECK_THROWS_AS(cw::fit_bilevel({}, c.sections, c.flows, cfg), cw::EmptyInput);

    std::vector<cw::IncidentRecord> all_sub = c.train;
    for (auto& r : all_sub) r.duration_min = 1.0;
    CHECK_THROWS_AS(cw::fit_bilevel(all_sub, c.sections, c.flows, cfg), cw::EmptyInput);

    std::vector<cw::IncidentRecord> all_long = c.train;
    for (auto& r : all_long) r.duration_min = 200.0;
    CHECK_THROWS_AS(cw::fit_bilevel(all_long, c.sections, c.flows, cfg), cw::NoShortIncidents);

    const cw::BiLevelModel model = cw::fit_bilevel(c.train, c.sections, c.flows, cfg);
    const cw::FlowStore store = cw::FlowStore::build(c.flows);
    CHECK_THROWS_AS(cw::predict_bilevel(model, std::vector<cw::IncidentRecord>{}, c.sections, store),
                    cw::EmptyInput);
    CHECK_THROWS_AS(cw::evaluate_bilevel(model, all_sub, c.sections, c.flows),
                    cw::EmptyEvaluation);
}

TEST_CASE("per-stage randomized search runs when requested and is logged") {
    const Corpus c = make_corpus(6);
    cw::BiLevelConfig cfg = quick_config();
    cfg.classifier.spec.params.n_rounds = 20;
    cfg.regressor.spec.params.n_rounds = 20;
    cfg.regressor.n_iter = 3;
    cfg.regressor.inner_k = 3;
    cfg.regressor.space.dims["max_depth"] = cw::ParamRange::ints(2, 4);

    cw::BiLevelFitLog log;
    const cw::BiLevelModel model = cw::fit_bilevel(c.train, c.sections, c.flows, cfg, &log);
    CHECK_FALSE(log.classifier_search.has_value());
    REQUIRE(log.regressor_search.has_value());
    CHECK(log.regressor_search->trials.size() == 3);
    const auto& best = log.regressor_search->best_spec;
    CHECK(best.params.max_depth >= 2);
    CHECK(best.params.max_depth <= 4);

    const cw::FlowStore store = cw::FlowStore::build(c.flows);
    CHECK_NOTHROW(cw::predict_bilevel(model, c.test, c.sections, store));
}

TEST_CASE("model bundles survive a save/load round trip") {
    const Corpus c = make_corpus(7);
    cw::BiLevelConfig cfg = quick_config();
    cfg.regressor.features.variant = cw::FeatureSet::FSC;  // exercise flow features in the bundle
    const cw::BiLevelModel model = cw::fit_bilevel(c.train, c.sections, c.flows, cfg);

    const std::string dir = (std::filesystem::temp_directory_path() / "cw_bundle_rt").string();
    cw::save_bundle(model, dir);
    const cw::BiLevelModel loaded = cw::load_bundle(dir);
    CHECK(loaded.threshold == model.threshold);
    CHECK(loaded.min_duration == model.min_duration);
    CHECK(loaded.degenerate_classifier == model.degenerate_classifier);

    const cw::FlowStore store = cw::FlowStore::build(c.flows);
    const auto a = cw::predict_bilevel(model, c.test, c.sections, store);
    const auto b = cw::predict_bilevel(loaded, c.test, c.sections, store);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].predicted_class == b[i].predicted_class);
        CHECK(a[i].duration_estimate == b[i].duration_estimate);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt bundles are refused") {
    const Corpus c = make_corpus(8);
    const cw::BiLevelModel model = cw::fit_bilevel(c.train, c.sections, c.flows, quick_config());
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "cw_bundle_bad";
    cw::save_bundle(model, dir.string());

    auto overwrite = [&](const char* file, const std::string& text) {
        std::ofstream out(dir / file);
        out << text;
    };

    overwrite("manifest.json", "not json at all");
    CHECK_THROWS_AS(cw::load_bundle(dir.string()), cw::CorruptModel);

    overwrite("manifest.json",
              "{\"format\":\"clearway-bundle/9\",\"threshold\":45,\"min_duration\":5,"
              "\"degenerate_classifier\":false,\"degenerate_class\":1}");
    CHECK_THROWS_AS(cw::load_bundle(dir.string()), cw::CorruptModel);

    overwrite("manifest.json", "{\"format\":\"clearway-bundle/1\"}");
    CHECK_THROWS_AS(cw::load_bundle(dir.string()), cw::CorruptModel);

    cw::save_bundle(model, dir.string());
    overwrite("classifier.json", "{}");
    CHECK_THROWS_AS(cw::load_bundle(dir.string()), cw::CorruptModel);

    CHECK_THROWS_AS(cw::load_bundle((dir / "missing").string()), cw::IoFailure);
    std::filesystem::remove_all(dir);
}
