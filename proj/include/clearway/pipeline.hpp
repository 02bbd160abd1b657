#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "clearway/data_model.hpp"
#include "clearway/errors.hpp"
#include "clearway/flow_features.hpp"
#include "clearway/metrics.hpp"
#include "clearway/model.hpp"
#include "clearway/tuning.hpp"

namespace clearway {

// Eq.-style labeling: 1 = short (duration <= threshold), 0 = long. The
// boundary itself counts as short.
inline int label(double duration_min, double threshold) {
    return duration_min <= threshold ? 1 : 0;
}

// Per-stage learner choice. n_iter > 0 runs a randomized search (inner CV on
// the stage's training rows) and refits the best draw; n_iter = 0 uses the
// spec as given. An empty space falls back to the family's default space.
struct StageConfig {
    LearnerSpec spec;
    FeatureSetSpec features;
    int n_iter = 0;
    int inner_k = 5;
    SearchSpace space;
};

struct BiLevelConfig {
    double threshold = 45.0;     // minutes; boundary labeled short
    double min_duration = 5.0;   // outlier filter cutoff
    StageConfig classifier;      // step 1
    StageConfig regressor;       // step 2, trained on truly-short rows
    std::uint64_t seed = 1;
    int threads = 1;

    static BiLevelConfig defaults() {
        BiLevelConfig c;
        c.classifier.spec.family = ModelFamily::booster;
        c.classifier.spec.task = Task::classify;
        c.classifier.features.variant = FeatureSet::BFS;
        c.regressor.spec.family = ModelFamily::booster;
        c.regressor.spec.task = Task::regress;
        c.regressor.spec.loss = Loss::mape;
        c.regressor.features.variant = FeatureSet::FSC;
        return c;
    }
};

struct BiLevelModel {
    double threshold = 45.0;
    double min_duration = 5.0;
    FittedModel classifier;
    FittedModel regressor;
    FeatureBuilder classifier_features;
    FeatureBuilder regressor_features;
    // Single-class training data: the classifier stage is bypassed and every
    // incident routes to this class.
    bool degenerate_classifier = false;
    int degenerate_class = 1;
};

struct BiLevelOutcome {
    int predicted_class = 0;  // 1 = short
    std::optional<double> duration_estimate;  // present iff predicted short
    std::string note;  // set for long-classified incidents
};

inline constexpr const char* kStepThreeNote = "extended features required (Step 3)";

// Search results captured while fitting, for trial logs.
struct BiLevelFitLog {
    std::optional<SearchResult> classifier_search;
    std::optional<SearchResult> regressor_search;
};

namespace detail {

inline FittedModel fit_stage(const StageConfig& stage, const FeatureMatrix& m,
                             const std::vector<double>& targets, std::uint64_t seed,
                             int threads, std::optional<SearchResult>* log) {
    LearnerSpec spec = stage.spec;
    if (stage.n_iter > 0) {
        const SearchSpace space =
            stage.space.dims.empty() ? SearchSpace::defaults_for(spec.family) : stage.space;
        const Metric objective = spec.task == Task::classify ? Metric::f1 : Metric::mape;
        SearchResult found = random_search(space, stage.n_iter, spec, m, targets, stage.inner_k,
                                           objective, Rng::derive(seed, 1), threads);
        spec = found.best_spec;
        if (log) *log = std::move(found);
    }
    return fit_model(spec, m, targets, Rng::derive(seed, 2));
}

}  // namespace detail

inline BiLevelModel fit_bilevel(const std::vector<IncidentRecord>& incidents,
                                const std::vector<RoadSection>& sections,
                                const std::vector<FlowObservation>& flows,
                                const BiLevelConfig& config, BiLevelFitLog* log = nullptr) {
    const std::vector<IncidentRecord> records = filter_outliers(incidents, config.min_duration);
    if (records.empty()) throw EmptyInput();
    const FlowStore store = FlowStore::build(flows);

    std::vector<double> labels(records.size());
    std::vector<IncidentRecord> short_records;
    for (std::size_t i = 0; i < records.size(); ++i) {
        labels[i] = static_cast<double>(label(records[i].duration_min, config.threshold));
        if (labels[i] == 1.0) short_records.push_back(records[i]);
    }
    if (short_records.empty()) throw NoShortIncidents();

    BiLevelModel model;
    model.threshold = config.threshold;
    model.min_duration = config.min_duration;

    // Step 1: classifier on its configured (default baseline) features.
    model.classifier_features.spec = config.classifier.features;
    const FeatureMatrix xc = model.classifier_features.fit_transform(records, sections, store);
    if (short_records.size() == records.size()) {
        // Degenerate all-short data: route everything to the short class and
        // keep a zero-round booster as the stored stage model.
        model.degenerate_classifier = true;
        model.degenerate_class = 1;
        LearnerSpec stub;
        stub.family = ModelFamily::booster;
        stub.task = Task::classify;
        stub.params.n_rounds = 0;
        model.classifier = fit_model(stub, xc, labels, Rng::derive(config.seed, 2));
    } else {
        LearnerSpec spec = config.classifier.spec;
        spec.task = Task::classify;
        StageConfig stage = config.classifier;
        stage.spec = spec;
        model.classifier =
            detail::fit_stage(stage, xc, labels, Rng::derive(config.seed, 10), config.threads,
                              log ? &log->classifier_search : nullptr);
    }

    // Step 2: regressor on truly-short rows with flow features.
    model.regressor_features.spec = config.regressor.features;
    const FeatureMatrix xr = model.regressor_features.fit_transform(short_records, sections, store);
    std::vector<double> durations(short_records.size());
    for (std::size_t i = 0; i < short_records.size(); ++i)
        durations[i] = short_records[i].duration_min;
    LearnerSpec rspec = config.regressor.spec;
    rspec.task = Task::regress;
    StageConfig rstage = config.regressor;
    rstage.spec = rspec;
    model.regressor =
        detail::fit_stage(rstage, xr, durations, Rng::derive(config.seed, 20), config.threads,
                          log ? &log->regressor_search : nullptr);
    return model;
}

// Batch prediction; the regressor runs only on short-classified rows.
inline std::vector<BiLevelOutcome> predict_bilevel(const BiLevelModel& model,
                                                   const std::vector<IncidentRecord>& incidents,
                                                   const std::vector<RoadSection>& sections,
                                                   const FlowStore& flows) {
    if (incidents.empty()) throw EmptyInput();
    const FeatureMatrix xc = model.classifier_features.transform(incidents, sections, flows);
    std::vector<int> predicted(incidents.size(), model.degenerate_class);
    if (!model.degenerate_classifier) predicted = model.classifier.classify(xc);

    std::vector<BiLevelOutcome> out(incidents.size());
    std::vector<IncidentRecord> short_rows;
    std::vector<std::size_t> short_at;
    for (std::size_t i = 0; i < incidents.size(); ++i) {
        out[i].predicted_class = predicted[i];
        if (predicted[i] == 1) {
            short_rows.push_back(incidents[i]);
            short_at.push_back(i);
        } else {
            out[i].note = kStepThreeNote;
        }
    }
    if (!short_rows.empty()) {
        const FeatureMatrix xr = model.regressor_features.transform(short_rows, sections, flows);
        const std::vector<double> durations = model.regressor.predict(xr);
        for (std::size_t j = 0; j < short_at.size(); ++j)
            out[short_at[j]].duration_estimate = durations[j];
    }
    return out;
}

inline BiLevelOutcome predict_bilevel(const BiLevelModel& model, const IncidentRecord& incident,
                                      const std::vector<RoadSection>& sections,
                                      const FlowStore& flows) {
    return predict_bilevel(model, std::vector<IncidentRecord>{incident}, sections, flows)[0];
}

// Regression metrics over one slice of the evaluation rows. MAPE needs one
// row, R² two rows with target variance; short slices report flags, not
// errors.
struct RegressionCell {
    std::size_t n = 0;
    double mape = 0.0;
    double r2 = 0.0;
    bool mape_defined = false;
    bool r2_defined = false;
};

namespace detail {

inline RegressionCell regression_cell(const std::vector<double>& y_true,
                                      const std::vector<double>& y_pred) {
    RegressionCell cell;
    cell.n = y_true.size();
    if (!y_true.empty()) {
        cell.mape = clearway::mape(y_true, y_pred);
        cell.mape_defined = true;
    }
    if (y_true.size() >= 2) {
        try {
            cell.r2 = clearway::r2(y_true, y_pred);
            cell.r2_defined = true;
        } catch (const ZeroVariance&) {
        }
    }
    return cell;
}

}  // namespace detail

struct BiLevelReport {
    std::size_t n = 0;  // evaluated rows (post outlier filter)
    ClassificationScores classification;
    std::size_t true_short_pred_short = 0;
    std::size_t true_short_pred_long = 0;
    std::size_t true_long_pred_short = 0;
    std::size_t true_long_pred_long = 0;
    // Conditioned: truly short AND classified short (the population the
    // regressor is answerable for). Unconditioned: every truly short row,
    // with the regressor forced to produce an estimate regardless of routing.
    RegressionCell conditioned;
    RegressionCell unconditioned;
};

inline BiLevelReport evaluate_bilevel(const BiLevelModel& model,
                                      const std::vector<IncidentRecord>& incidents,
                                      const std::vector<RoadSection>& sections,
                                      const std::vector<FlowObservation>& flows) {
    const std::vector<IncidentRecord> records = filter_outliers(incidents, model.min_duration);
    if (records.empty()) throw EmptyEvaluation();
    const FlowStore store = FlowStore::build(flows);
    const std::vector<BiLevelOutcome> outcomes = predict_bilevel(model, records, sections, store);

    // One regressor pass over every row so the unconditioned slice is defined
    // even where routing said long.
    const FeatureMatrix xr = model.regressor_features.transform(records, sections, store);
    const std::vector<double> regressed = model.regressor.predict(xr);

    BiLevelReport report;
    report.n = records.size();
    std::vector<int> y_true(records.size()), y_pred(records.size());
    std::vector<double> cond_true, cond_pred, all_short_true, all_short_pred;
    for (std::size_t i = 0; i < records.size(); ++i) {
        y_true[i] = label(records[i].duration_min, model.threshold);
        y_pred[i] = outcomes[i].predicted_class;
        if (y_true[i] == 1 && y_pred[i] == 1) ++report.true_short_pred_short;
        if (y_true[i] == 1 && y_pred[i] == 0) ++report.true_short_pred_long;
        if (y_true[i] == 0 && y_pred[i] == 1) ++report.true_long_pred_short;
        if (y_true[i] == 0 && y_pred[i] == 0) ++report.true_long_pred_long;
        if (y_true[i] == 1) {
            all_short_true.push_back(records[i].duration_min);
            all_short_pred.push_back(regressed[i]);
            if (y_pred[i] == 1) {
                cond_true.push_back(records[i].duration_min);
                cond_pred.push_back(outcomes[i].duration_estimate.value());
            }
        }
    }
    report.classification = classification_scores(confusion(y_true, y_pred));
    report.conditioned = detail::regression_cell(cond_true, cond_pred);
    report.unconditioned = detail::regression_cell(all_short_true, all_short_pred);
    return report;
}

// ---------------------------------------------------------------------------
// Model bundle (directory with classifier + regressor + manifest)
// ---------------------------------------------------------------------------

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write " + path.string());
    out << text;
    if (!out.flush()) throw IoFailure("cannot write " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline nlohmann::json parse_or_corrupt(const std::string& text, const std::string& what) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw CorruptModel("unparseable " + what);
    return j;
}

}  // namespace detail

inline void save_bundle(const BiLevelModel& model, const std::string& directory) {
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec) throw IoFailure("cannot create " + directory + ": " + ec.message());
    const std::filesystem::path dir(directory);

    nlohmann::json cls;
    cls["model"] = model_to_json(model.classifier);
    cls["features"] = model.classifier_features.to_json();
    detail::write_text_file(dir / "classifier.json", cls.dump(2));

    nlohmann::json reg;
    reg["model"] = model_to_json(model.regressor);
    reg["features"] = model.regressor_features.to_json();
    detail::write_text_file(dir / "regressor.json", reg.dump(2));

    nlohmann::json manifest;
    manifest["format"] = "clearway-bundle/1";
    manifest["threshold"] = model.threshold;
    manifest["min_duration"] = model.min_duration;
    manifest["degenerate_classifier"] = model.degenerate_classifier;
    manifest["degenerate_class"] = model.degenerate_class;
    detail::write_text_file(dir / "manifest.json", manifest.dump(2));
}

inline BiLevelModel load_bundle(const std::string& directory) {
    const std::filesystem::path dir(directory);
    const nlohmann::json manifest =
        detail::parse_or_corrupt(detail::read_text_file(dir / "manifest.json"), "manifest");
    try {
        if (manifest.at("format").get<std::string>() != "clearway-bundle/1")
            throw CorruptModel("unknown bundle format");
        BiLevelModel model;
        model.threshold = manifest.at("threshold").get<double>();
        model.min_duration = manifest.at("min_duration").get<double>();
        model.degenerate_classifier = manifest.at("degenerate_classifier").get<bool>();
        model.degenerate_class = manifest.at("degenerate_class").get<int>();

        const nlohmann::json cls =
            detail::parse_or_corrupt(detail::read_text_file(dir / "classifier.json"), "classifier");
        model.classifier = model_from_json(cls.at("model"));
        model.classifier_features = FeatureBuilder::from_json(cls.at("features"));

        const nlohmann::json reg =
            detail::parse_or_corrupt(detail::read_text_file(dir / "regressor.json"), "regressor");
        model.regressor = model_from_json(reg.at("model"));
        model.regressor_features = FeatureBuilder::from_json(reg.at("features"));
        return model;
    } catch (const nlohmann::json::exception& ex) {
        throw CorruptModel(ex.what());
    }
}

}  // namespace clearway
