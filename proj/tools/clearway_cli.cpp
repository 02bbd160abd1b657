// clearway: command-line interface for the bi-level incident-duration toolkit.
//
// Subcommands: generate | train | evaluate | predict | explain.
// Exit status: 0 success, 1 runtime error, 2 usage error.
// Precedence: command-line flags > config-file keys > built-in defaults.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "clearway/clearway.hpp"

namespace cw = clearway;

namespace {

// ---------------------------------------------------------------------------
// Config-file defaults
// ---------------------------------------------------------------------------

// The config file participates in option defaults, so flags naturally win.
struct Defaults {
    cw::ConfigFile cfg;
    double d(const std::string& k, double v) const { return cfg.get_double(k, v); }
    int i(const std::string& k, int v) const { return cfg.get_int(k, v); }
    std::uint64_t u(const std::string& k, std::uint64_t v) const { return cfg.get_uint64(k, v); }
    bool b(const std::string& k, bool v) const { return cfg.get_bool(k, v); }
    std::string s(const std::string& k, const std::string& v) const {
        return cfg.get_string(k, v);
    }
};

std::string prescan_config_path(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) return argv[i + 1];
        if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
    }
    return {};
}

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct DataOpts {
    std::string data_dir;
    std::string incidents, sections, flows;

    void add(CLI::App* cmd, const Defaults& dflt) {
        data_dir = dflt.s("data", "");
        incidents = dflt.s("incidents", "");
        sections = dflt.s("sections", "");
        flows = dflt.s("flows", "");
        cmd->add_option("--data", data_dir,
                        "Dataset directory holding incidents.csv, sections.csv, flows.csv");
        cmd->add_option("--incidents", incidents, "Incidents CSV (overrides --data)");
        cmd->add_option("--sections", sections, "Road sections CSV (overrides --data)");
        cmd->add_option("--flows", flows, "Traffic flows CSV (overrides --data)");
    }

    std::string resolve(const std::string& explicit_path, const char* filename) const {
        if (!explicit_path.empty()) return explicit_path;
        if (!data_dir.empty())
            return (std::filesystem::path(data_dir) / filename).string();
        throw cw::Error(std::string("missing input: pass --data or --") +
                        (std::string(filename) == "incidents.csv"
                             ? "incidents"
                             : (std::string(filename) == "sections.csv" ? "sections" : "flows")));
    }
};

struct Dataset {
    std::vector<cw::IncidentRecord> incidents;
    std::vector<cw::RoadSection> sections;
    std::vector<cw::FlowObservation> flows;
};

Dataset load_dataset(const DataOpts& opts) {
    Dataset d;
    d.incidents = cw::load_incidents(opts.resolve(opts.incidents, "incidents.csv"));
    d.sections = cw::load_sections(opts.resolve(opts.sections, "sections.csv"));
    d.flows = cw::load_flows(opts.resolve(opts.flows, "flows.csv"));
    return d;
}

// Learner flags shared by train/evaluate (they configure the Step-2 learner).
struct LearnerOpts {
    std::string family = "booster";
    std::string loss = "mape";
    bool log_target = false;
    int knn_k = 5;
    double ridge_alpha = 1.0;
    int n_trees = 100;
    int max_depth = 6;
    double learning_rate = 0.3;
    int n_rounds = 100;
    double min_child_weight = 1.0;
    double gamma = 0.0;
    double reg_lambda = 1.0;
    double subsample = 1.0;
    double colsample = 1.0;
    double scale_pos_weight = 1.0;

    void add(CLI::App* cmd, const Defaults& dflt) {
        family = dflt.s("family", family);
        loss = dflt.s("loss", loss);
        log_target = dflt.b("log_target", log_target);
        knn_k = dflt.i("knn_k", knn_k);
        ridge_alpha = dflt.d("ridge_alpha", ridge_alpha);
        n_trees = dflt.i("n_trees", n_trees);
        max_depth = dflt.i("max_depth", max_depth);
        learning_rate = dflt.d("learning_rate", learning_rate);
        n_rounds = dflt.i("n_rounds", n_rounds);
        min_child_weight = dflt.d("min_child_weight", min_child_weight);
        gamma = dflt.d("gamma", gamma);
        reg_lambda = dflt.d("reg_lambda", reg_lambda);
        subsample = dflt.d("subsample", subsample);
        colsample = dflt.d("colsample_bytree", colsample);
        scale_pos_weight = dflt.d("scale_pos_weight", scale_pos_weight);

        cmd->add_option("--family", family, "Learner family: booster|knn|linear|forest")
            ->check(CLI::IsMember({"booster", "knn", "linear", "forest"}));
        cmd->add_option("--loss", loss, "Booster regression loss: squared|absolute|mape")
            ->check(CLI::IsMember({"squared", "absolute", "mape"}));
        cmd->add_flag("--log-target", log_target, "Train the regressor on log(duration)");
        cmd->add_option("--knn-k", knn_k, "k for the kNN family");
        cmd->add_option("--ridge-alpha", ridge_alpha, "L2 strength for the linear family");
        cmd->add_option("--n-trees", n_trees, "Trees for the forest family");
        cmd->add_option("--max-depth", max_depth, "Tree depth (booster/forest)");
        cmd->add_option("--learning-rate", learning_rate, "Booster shrinkage");
        cmd->add_option("--n-rounds", n_rounds, "Boosting rounds");
        cmd->add_option("--min-child-weight", min_child_weight, "Minimum child hessian sum");
        cmd->add_option("--gamma", gamma, "Per-leaf split penalty");
        cmd->add_option("--reg-lambda", reg_lambda, "L2 leaf regularization");
        cmd->add_option("--subsample", subsample, "Row subsample fraction per round");
        cmd->add_option("--colsample", colsample, "Column subsample fraction per tree");
        cmd->add_option("--scale-pos-weight", scale_pos_weight,
                        "Positive-class gradient weight (classification)");
    }

    cw::LearnerSpec spec(cw::Task task) const {
        cw::LearnerSpec s;
        s.family = cw::family_from_string(family);
        s.task = task;
        s.params.max_depth = max_depth;
        s.params.learning_rate = learning_rate;
        s.params.n_rounds = n_rounds;
        s.params.min_child_weight = min_child_weight;
        s.params.gamma = gamma;
        s.params.reg_lambda = reg_lambda;
        s.params.subsample = subsample;
        s.params.colsample_bytree = colsample;
        s.params.scale_pos_weight = scale_pos_weight;
        if (loss == "squared") s.loss = cw::Loss::squared_error;
        else if (loss == "absolute") s.loss = cw::Loss::absolute;
        else s.loss = cw::Loss::mape;
        s.transform = log_target ? cw::TargetTransform::log : cw::TargetTransform::identity;
        s.k = knn_k;
        s.ridge_alpha = ridge_alpha;
        s.n_trees = n_trees;
        return s;
    }
};

// ---------------------------------------------------------------------------
// Small output helpers
// ---------------------------------------------------------------------------

std::string fmt(double v) { return cw::format_double(v); }

void write_fold_table(const std::string& path, const cw::FoldScores& fs) {
    cw::CsvWriter w(path);
    std::vector<std::string> header{"fold", "split"};
    for (const cw::Metric m : fs.metrics) header.push_back(cw::to_string(m));
    w.row(header);
    auto emit = [&](const std::string& tag, const std::string& split,
                    const std::vector<double>& values) {
        std::vector<std::string> row{tag, split};
        for (double v : values) row.push_back(fmt(v));
        w.row(row);
    };
    for (std::size_t f = 0; f < fs.test.size(); ++f) {
        emit(std::to_string(f), "train", fs.train[f]);
        emit(std::to_string(f), "test", fs.test[f]);
    }
    emit("mean", "train", fs.mean_train());
    emit("std", "train", fs.std_train());
    emit("mean", "test", fs.mean_test());
    emit("std", "test", fs.std_test());
}

void write_trials_table(const std::string& path, const cw::SearchResult* result) {
    cw::CsvWriter w(path);
    std::vector<std::string> dims;
    if (result && !result->trials.empty())
        for (const auto& [name, value] : result->trials.front().draws) {
            (void)value;
            dims.push_back(name);
        }
    std::vector<std::string> header{"trial"};
    header.insert(header.end(), dims.begin(), dims.end());
    header.push_back("mean_score");
    header.push_back("std_score");
    w.row(header);
    if (!result) return;
    for (std::size_t t = 0; t < result->trials.size(); ++t) {
        const cw::Trial& trial = result->trials[t];
        std::vector<std::string> row{std::to_string(t)};
        for (const auto& name : dims) row.push_back(fmt(trial.draws.at(name)));
        row.push_back(fmt(trial.mean_score));
        row.push_back(fmt(trial.std_score));
        w.row(row);
    }
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<cw::IncidentRecord> truly_short(const std::vector<cw::IncidentRecord>& records,
                                            double threshold) {
    std::vector<cw::IncidentRecord> out;
    for (const auto& r : records)
        if (cw::label(r.duration_min, threshold) == 1) out.push_back(r);
    if (out.empty()) throw cw::NoShortIncidents();
    return out;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateOpts {
    std::string out;
    std::string preset = "default";
    std::uint64_t seed = 1;
    int n_incidents = 574;
    int n_sections = 235;
    int outlier_count = 27;
    double tail_share = 0.08;
    double noise_sigma = 0.25;
    double mean_target = 44.59;
    int n_days = 7;
    CLI::Option *o_seed, *o_n_incidents, *o_n_sections, *o_outliers, *o_tail, *o_noise, *o_mean,
        *o_days;
};

void add_generate(CLI::App& app, GenerateOpts& g, const Defaults& dflt) {
    CLI::App* cmd = app.add_subcommand("generate", "Write a seeded synthetic dataset");
    g.preset = dflt.s("preset", g.preset);
    cmd->add_option("--out", g.out, "Output directory")->required();
    cmd->add_option("--preset", g.preset, "Generator preset: default|flow|flat")
        ->check(CLI::IsMember({"default", "flow", "flat"}));
    g.o_seed = cmd->add_option("--seed", g.seed, "Generator seed");
    g.o_n_incidents = cmd->add_option("--n-incidents", g.n_incidents, "Incident count");
    g.o_n_sections = cmd->add_option("--n-sections", g.n_sections, "Road section count");
    g.o_outliers = cmd->add_option("--outlier-count", g.outlier_count, "Sub-5-minute rows");
    g.o_tail = cmd->add_option("--tail-share", g.tail_share, "Long-tail share");
    g.o_noise = cmd->add_option("--noise-sigma", g.noise_sigma, "Lognormal noise sigma");
    g.o_mean = cmd->add_option("--mean-target", g.mean_target, "Target mean duration");
    g.o_days = cmd->add_option("--days", g.n_days, "Days of flow history");
}

int run_generate(const GenerateOpts& g, const Defaults& dflt) {
    cw::GeneratorConfig config;
    if (g.preset == "flow") config = cw::GeneratorConfig::flow_signal();
    else if (g.preset == "flat") config = cw::GeneratorConfig::flat();

    // flag > config key > preset value
    auto pick_d = [&](const CLI::Option* opt, double flag_value, const char* key, double& slot) {
        if (opt->count() > 0) slot = flag_value;
        else slot = dflt.d(key, slot);
    };
    auto pick_i = [&](const CLI::Option* opt, int flag_value, const char* key, int& slot) {
        if (opt->count() > 0) slot = flag_value;
        else slot = dflt.i(key, slot);
    };
    if (g.o_seed->count() > 0) config.seed = g.seed;
    else config.seed = dflt.u("seed", config.seed);
    pick_i(g.o_n_incidents, g.n_incidents, "n_incidents", config.n_incidents);
    pick_i(g.o_n_sections, g.n_sections, "n_sections", config.n_sections);
    pick_i(g.o_outliers, g.outlier_count, "outlier_count", config.outlier_count);
    pick_d(g.o_tail, g.tail_share, "long_tail_share", config.long_tail_share);
    pick_d(g.o_noise, g.noise_sigma, "noise_sigma", config.noise_sigma);
    pick_d(g.o_mean, g.mean_target, "mean_target", config.mean_target);
    pick_i(g.o_days, g.n_days, "n_days", config.n_days);
    // config-file-only knobs
    config.effect_lanes = dflt.d("effect_lanes", config.effect_lanes);
    config.effect_hour = dflt.d("effect_hour", config.effect_hour);
    config.effect_section_speed = dflt.d("effect_section_speed", config.effect_section_speed);
    config.effect_distance_cbd = dflt.d("effect_distance_cbd", config.effect_distance_cbd);
    config.effect_flow = dflt.d("effect_flow", config.effect_flow);
    config.effect_local = dflt.d("effect_local", config.effect_local);
    config.detector_sigma = dflt.d("detector_sigma", config.detector_sigma);
    config.congestion_sigma = dflt.d("congestion_sigma", config.congestion_sigma);
    config.background_congestion = dflt.d("background_congestion", config.background_congestion);
    config.n_sentinels = dflt.i("n_sentinels", config.n_sentinels);
    config.local_sigma = dflt.d("local_sigma", config.local_sigma);
    config.blob_radius_m = dflt.d("blob_radius_m", config.blob_radius_m);
    config.box_size_m = dflt.d("box_size_m", config.box_size_m);
    config.flat_flows = dflt.b("flat_flows", config.flat_flows);

    const cw::SynthBundle bundle = cw::generate(config);
    cw::write_dataset(bundle, g.out);

    double mean = 0.0;
    std::size_t sub5 = 0, shorts = 0;
    for (const auto& r : bundle.incidents) {
        mean += r.duration_min;
        if (r.duration_min < 5.0) ++sub5;
        if (r.duration_min <= 45.0) ++shorts;
    }
    mean /= static_cast<double>(bundle.incidents.size());
    std::cout << "incidents=" << bundle.incidents.size() << " sections=" << bundle.sections.size()
              << " flow_rows=" << bundle.flows.size() << " mean_duration=" << fmt(mean)
              << " sub_5min=" << sub5 << " short_share="
              << fmt(static_cast<double>(shorts) / static_cast<double>(bundle.incidents.size()))
              << "\n";
    std::cout << "dataset written: " << g.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
    DataOpts data;
    LearnerOpts learner;
    std::string out;
    double threshold = 45.0;
    double min_duration = 5.0;
    std::string feature_set = "FSC";
    double dv = 500.0;
    int k_nearest = 5;
    int n_iter = 0;
    int inner_k = 5;
    int outer_k = 0;
    int cls_n_iter = 0;
    std::uint64_t seed = 1;
    int threads = 0;
};

void add_train(CLI::App& app, TrainOpts& t, const Defaults& dflt) {
    CLI::App* cmd = app.add_subcommand("train", "Fit the bi-level model and write a bundle");
    t.data.add(cmd, dflt);
    t.learner.add(cmd, dflt);
    t.threshold = dflt.d("threshold", t.threshold);
    t.min_duration = dflt.d("min_duration", t.min_duration);
    t.feature_set = dflt.s("feature_set", t.feature_set);
    t.dv = dflt.d("dv", t.dv);
    t.k_nearest = dflt.i("k_nearest", t.k_nearest);
    t.n_iter = dflt.i("n_iter", t.n_iter);
    t.inner_k = dflt.i("inner_k", t.inner_k);
    t.outer_k = dflt.i("outer_k", t.outer_k);
    t.cls_n_iter = dflt.i("cls_n_iter", t.cls_n_iter);
    t.seed = dflt.u("seed", t.seed);
    t.threads = dflt.i("threads", t.threads);
    cmd->add_option("--out", t.out, "Bundle output directory")->required();
    cmd->add_option("--threshold", t.threshold, "Short/long threshold, minutes");
    cmd->add_option("--min-duration", t.min_duration, "Outlier filter cutoff, minutes");
    cmd->add_option("--feature-set", t.feature_set, "Step-2 features: BFS|FSA|FSB|FSC|FSD")
        ->check(CLI::IsMember({"BFS", "FSA", "FSB", "FSC", "FSD"}));
    cmd->add_option("--dv", t.dv, "FSD vicinity radius, meters");
    cmd->add_option("--k-nearest", t.k_nearest, "k for FSB/FSC");
    cmd->add_option("--n-iter", t.n_iter, "Random-search trials for the regressor (0 = fixed)");
    cmd->add_option("--inner-k", t.inner_k, "Inner CV folds");
    cmd->add_option("--outer-k", t.outer_k,
                    "When > 0, run a nested outer evaluation report before fitting");
    cmd->add_option("--cls-n-iter", t.cls_n_iter, "Random-search trials for the classifier");
    cmd->add_option("--seed", t.seed, "Run seed");
    cmd->add_option("--threads", t.threads, "Worker threads (0 = all cores)");
}

int run_train(const TrainOpts& t, const Defaults& dflt) {
    const Dataset ds = load_dataset(t.data);
    const int threads = t.threads > 0 ? t.threads : cw::hardware_threads();

    cw::BiLevelConfig config = cw::BiLevelConfig::defaults();
    config.threshold = t.threshold;
    config.min_duration = t.min_duration;
    config.seed = t.seed;
    config.threads = threads;
    config.regressor.spec = t.learner.spec(cw::Task::regress);
    config.regressor.features.variant = cw::feature_set_from_string(t.feature_set);
    config.regressor.features.k_nearest = t.k_nearest;
    config.regressor.features.dv = t.dv;
    config.regressor.n_iter = t.n_iter;
    config.regressor.inner_k = t.inner_k;
    config.regressor.space = dflt.cfg.search_space();
    config.classifier.n_iter = t.cls_n_iter;
    config.classifier.inner_k = t.inner_k;

    std::filesystem::create_directories(t.out);

    // Optional nested accounting pass over the Step-2 learner before fitting.
    if (t.outer_k > 0) {
        const auto records = cw::filter_outliers(ds.incidents, t.min_duration);
        const auto short_records = truly_short(records, t.threshold);
        cw::FeatureBuilder fb;
        fb.spec = config.regressor.features;
        const cw::FlowStore store = cw::FlowStore::build(ds.flows);
        const cw::FeatureMatrix m = fb.fit_transform(short_records, ds.sections, store);
        cw::FitCounter::reset();
        const cw::NestedResult nested = cw::nested_evaluate(
            config.regressor.spec, m, m.target, t.outer_k, t.inner_k, t.n_iter,
            config.regressor.space, {cw::Metric::mape, cw::Metric::r2}, t.seed, threads);
        std::cout << "inner_fits=" << cw::FitCounter::count() << "\n";
        write_fold_table((std::filesystem::path(t.out) / "nested_regression.csv").string(),
                         nested.as_fold_scores());
    }

    cw::BiLevelFitLog log;
    const cw::BiLevelModel model = cw::fit_bilevel(ds.incidents, ds.sections, ds.flows, config, &log);
    cw::save_bundle(model, t.out);
    write_trials_table((std::filesystem::path(t.out) / "trials.csv").string(),
                       log.regressor_search ? &*log.regressor_search : nullptr);
    if (log.classifier_search)
        write_trials_table((std::filesystem::path(t.out) / "cls_trials.csv").string(),
                           &*log.classifier_search);
    std::cout << "bundle written: " << t.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOpts {
    DataOpts data;
    LearnerOpts learner;
    std::string out;
    std::string cls_family = "booster";
    double threshold = 45.0;
    double min_duration = 5.0;
    std::string feature_set = "FSC";
    std::string sets = "BFS,FSA,FSB,FSC,FSD";
    std::string dv_sweep;
    double dv = 500.0;
    int k_nearest = 5;
    int outer_k = 5;
    int inner_k = 3;
    int n_iter = 0;
    std::uint64_t seed = 1;
    int threads = 0;
};

void add_evaluate(CLI::App& app, EvaluateOpts& e, const Defaults& dflt) {
    CLI::App* cmd = app.add_subcommand(
        "evaluate", "Nested cross-validated evaluation and feature-set comparison");
    e.data.add(cmd, dflt);
    e.learner.add(cmd, dflt);
    e.cls_family = dflt.s("cls_family", e.cls_family);
    e.threshold = dflt.d("threshold", e.threshold);
    e.min_duration = dflt.d("min_duration", e.min_duration);
    e.feature_set = dflt.s("feature_set", e.feature_set);
    e.sets = dflt.s("sets", e.sets);
    e.dv_sweep = dflt.s("dv_sweep", e.dv_sweep);
    e.dv = dflt.d("dv", e.dv);
    e.k_nearest = dflt.i("k_nearest", e.k_nearest);
    e.outer_k = dflt.i("outer_k", e.outer_k);
    e.inner_k = dflt.i("inner_k", e.inner_k);
    e.n_iter = dflt.i("n_iter", e.n_iter);
    e.seed = dflt.u("seed", e.seed);
    e.threads = dflt.i("threads", e.threads);
    cmd->add_option("--out", e.out, "Report output directory")->required();
    cmd->add_option("--cls-family", e.cls_family, "Classifier family")
        ->check(CLI::IsMember({"booster", "knn", "linear", "forest"}));
    cmd->add_option("--threshold", e.threshold, "Short/long threshold, minutes");
    cmd->add_option("--min-duration", e.min_duration, "Outlier filter cutoff, minutes");
    cmd->add_option("--feature-set", e.feature_set, "Regression feature set")
        ->check(CLI::IsMember({"BFS", "FSA", "FSB", "FSC", "FSD"}));
    cmd->add_option("--sets", e.sets, "Comma list for the comparison table");
    cmd->add_option("--dv-sweep", e.dv_sweep, "Comma list of FSD radii to sweep (optional)");
    cmd->add_option("--dv", e.dv, "FSD vicinity radius, meters");
    cmd->add_option("--k-nearest", e.k_nearest, "k for FSB/FSC");
    cmd->add_option("--outer-k", e.outer_k, "Outer CV folds");
    cmd->add_option("--inner-k", e.inner_k, "Inner CV folds");
    cmd->add_option("--n-iter", e.n_iter, "Random-search trials per outer fold (0 = fixed)");
    cmd->add_option("--seed", e.seed, "Run seed");
    cmd->add_option("--threads", e.threads, "Worker threads (0 = all cores)");
}

int run_evaluate(const EvaluateOpts& e, const Defaults& dflt) {
    const Dataset ds = load_dataset(e.data);
    const int threads = e.threads > 0 ? e.threads : cw::hardware_threads();
    const cw::SearchSpace space = dflt.cfg.search_space();
    std::filesystem::create_directories(e.out);
    const std::filesystem::path out(e.out);
    cw::FitCounter::reset();

    const auto records = cw::filter_outliers(ds.incidents, e.min_duration);
    if (records.empty()) throw cw::EmptyEvaluation();
    const cw::FlowStore store = cw::FlowStore::build(ds.flows);

    // Classification block: baseline features, short/long labels.
    {
        cw::FeatureBuilder fb;
        fb.spec.variant = cw::FeatureSet::BFS;
        const cw::FeatureMatrix m = fb.fit_transform(records, ds.sections, store);
        std::vector<double> labels(records.size());
        for (std::size_t i = 0; i < records.size(); ++i)
            labels[i] =
                static_cast<double>(cw::label(records[i].duration_min, e.threshold));
        cw::LearnerSpec cls;
        cls.family = cw::family_from_string(e.cls_family);
        cls.task = cw::Task::classify;
        cls.params = e.learner.spec(cw::Task::classify).params;
        cls.k = e.learner.knn_k;
        cls.ridge_alpha = e.learner.ridge_alpha;
        cls.n_trees = e.learner.n_trees;
        const cw::NestedResult nested = cw::nested_evaluate(
            cls, m, labels, e.outer_k, e.inner_k, e.n_iter, space,
            cw::default_metrics(cw::Task::classify), e.seed, threads);
        write_fold_table((out / "classification_folds.csv").string(), nested.as_fold_scores());
    }

    // Regression block: truly-short rows, configured feature set.
    const auto short_records = truly_short(records, e.threshold);
    const cw::LearnerSpec reg = e.learner.spec(cw::Task::regress);
    {
        cw::FeatureBuilder fb;
        fb.spec.variant = cw::feature_set_from_string(e.feature_set);
        fb.spec.k_nearest = e.k_nearest;
        fb.spec.dv = e.dv;
        const cw::FeatureMatrix m = fb.fit_transform(short_records, ds.sections, store);
        const cw::NestedResult nested =
            cw::nested_evaluate(reg, m, m.target, e.outer_k, e.inner_k, e.n_iter, space,
                                cw::default_metrics(cw::Task::regress), e.seed, threads);
        write_fold_table((out / "regression_folds.csv").string(), nested.as_fold_scores());
    }

    // Feature-set comparison table, one row per requested set (paired folds:
    // identical rows and seed, only the feature columns change).
    {
        cw::CsvWriter w((out / "feature_sets.csv").string());
        w.row({"feature_set", "mape_mean", "mape_std", "r2_mean", "r2_std"});
        for (const std::string& name : split_list(e.sets)) {
            cw::FeatureBuilder fb;
            fb.spec.variant = cw::feature_set_from_string(name);
            fb.spec.k_nearest = e.k_nearest;
            fb.spec.dv = e.dv;
            const cw::FeatureMatrix m = fb.fit_transform(short_records, ds.sections, store);
            const cw::NestedResult nested =
                cw::nested_evaluate(reg, m, m.target, e.outer_k, e.inner_k, e.n_iter, space,
                                    cw::default_metrics(cw::Task::regress), e.seed, threads);
            const cw::FoldScores fs = nested.as_fold_scores();
            w.row({name, fmt(fs.mean_test()[0]), fmt(fs.std_test()[0]), fmt(fs.mean_test()[1]),
                   fmt(fs.std_test()[1])});
        }
    }

    // Optional FSD radius sweep.
    if (!e.dv_sweep.empty()) {
        std::vector<double> radii;
        for (const std::string& item : split_list(e.dv_sweep)) radii.push_back(std::stod(item));
        cw::DvSweepConfig sweep;
        sweep.learner = reg;
        sweep.k_nearest = e.k_nearest;
        sweep.outer_k = e.outer_k;
        sweep.inner_k = e.inner_k;
        sweep.n_iter = e.n_iter;
        sweep.space = space;
        sweep.seed = e.seed;
        sweep.threads = threads;
        const auto table = cw::dv_sensitivity(short_records, ds.sections, ds.flows, radii, sweep);
        cw::CsvWriter w((out / "dv_sweep.csv").string());
        w.row({"dv", "mape"});
        for (const auto& [dv, mape] : table) w.row({fmt(dv), fmt(mape)});
    }

    std::cout << "inner_fits=" << cw::FitCounter::count() << "\n";
    std::cout << "reports written: " << e.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictOpts {
    DataOpts data;
    std::string bundle;
    std::string out;
};

void add_predict(CLI::App& app, PredictOpts& p, const Defaults& dflt) {
    CLI::App* cmd = app.add_subcommand("predict", "Predict with a trained bundle");
    p.data.add(cmd, dflt);
    cmd->add_option("--bundle", p.bundle, "Bundle directory from `train`")->required();
    cmd->add_option("--out", p.out, "Predictions CSV path")->required();
}

int run_predict(const PredictOpts& p) {
    const Dataset ds = load_dataset(p.data);
    const cw::BiLevelModel model = cw::load_bundle(p.bundle);
    const cw::FlowStore store = cw::FlowStore::build(ds.flows);
    const std::vector<cw::BiLevelOutcome> outcomes =
        cw::predict_bilevel(model, ds.incidents, ds.sections, store);

    cw::CsvWriter w(p.out);
    w.row({"id", "class", "duration", "step3"});
    for (std::size_t i = 0; i < ds.incidents.size(); ++i) {
        const cw::BiLevelOutcome& o = outcomes[i];
        w.row({ds.incidents[i].id, o.predicted_class == 1 ? "short" : "long",
               o.duration_estimate ? fmt(*o.duration_estimate) : "", o.note});
    }
    std::cout << "rows=" << ds.incidents.size() << " predictions written: " << p.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

struct ExplainOpts {
    DataOpts data;
    std::string bundle;
    std::string out;
    std::string stage = "regressor";
    std::string instance;
    int rows = 50;
    int background = 100;
    int permutations = 200;
    bool force_exact = false;
    std::uint64_t seed = 7;
    int threads = 0;
};

void add_explain(CLI::App& app, ExplainOpts& x, const Defaults& dflt) {
    CLI::App* cmd = app.add_subcommand("explain", "Shapley attributions for a trained stage");
    x.data.add(cmd, dflt);
    x.stage = dflt.s("stage", x.stage);
    x.rows = dflt.i("shap_rows", x.rows);
    x.background = dflt.i("background", x.background);
    x.permutations = dflt.i("permutations", x.permutations);
    x.seed = dflt.u("seed", x.seed);
    x.threads = dflt.i("threads", x.threads);
    cmd->add_option("--bundle", x.bundle, "Bundle directory from `train`")->required();
    cmd->add_option("--out", x.out, "Report output directory")->required();
    cmd->add_option("--stage", x.stage, "Which stage to explain: classifier|regressor")
        ->check(CLI::IsMember({"classifier", "regressor"}));
    cmd->add_option("--instance", x.instance, "Incident id for a per-row breakdown");
    cmd->add_option("--rows", x.rows, "Rows summarized (0 = all)");
    cmd->add_option("--background", x.background, "Background rows for the value function");
    cmd->add_option("--permutations", x.permutations, "Monte Carlo permutations");
    cmd->add_flag("--force-exact", x.force_exact, "Refuse MC fallback above the exact limit");
    cmd->add_option("--seed", x.seed, "Run seed");
    cmd->add_option("--threads", x.threads, "Worker threads (0 = all cores)");
}

int run_explain(const ExplainOpts& x) {
    const Dataset ds = load_dataset(x.data);
    const cw::BiLevelModel model = cw::load_bundle(x.bundle);
    const cw::FlowStore store = cw::FlowStore::build(ds.flows);
    const bool classifier_stage = x.stage == "classifier";
    const cw::FeatureBuilder& fb =
        classifier_stage ? model.classifier_features : model.regressor_features;
    const cw::FittedModel& fitted = classifier_stage ? model.classifier : model.regressor;

    // The regressor answers for truly short incidents; the classifier for all.
    std::vector<cw::IncidentRecord> records = cw::filter_outliers(ds.incidents, model.min_duration);
    if (!classifier_stage) records = truly_short(records, model.threshold);
    if (records.empty()) throw cw::EmptyInput();
    const cw::FeatureMatrix all = fb.transform(records, ds.sections, store);

    const int threads = x.threads > 0 ? x.threads : cw::hardware_threads();
    cw::Rng rng(cw::Rng::derive(x.seed, 5000));
    const int n_bg = std::min<int>(x.background, static_cast<int>(all.n_rows));
    const cw::FeatureMatrix background =
        all.subset(rng.sample_without_replacement(static_cast<int>(all.n_rows), n_bg));

    cw::ShapConfig cfg;
    cfg.n_permutations = x.permutations;
    cfg.force_exact = x.force_exact;
    cfg.seed = x.seed;
    cfg.threads = threads;
    const cw::RowPredictor predictor = [&fitted](const double* row) {
        return fitted.predict_row(row);
    };

    std::filesystem::create_directories(x.out);
    const std::filesystem::path out(x.out);

    cw::FeatureMatrix summarized = all;
    if (x.rows > 0 && static_cast<std::size_t>(x.rows) < all.n_rows) {
        std::vector<int> keep(static_cast<std::size_t>(x.rows));
        for (int i = 0; i < x.rows; ++i) keep[static_cast<std::size_t>(i)] = i;
        summarized = all.subset(keep);
    }
    const cw::ShapSummary summary = cw::shap_summary(predictor, summarized, background, cfg);
    {
        cw::CsvWriter w((out / "shap_summary.csv").string());
        w.row({"rank", "feature", "mean_abs_phi"});
        for (std::size_t r = 0; r < summary.ranking.size(); ++r) {
            const int f = summary.ranking[r];
            w.row({std::to_string(r + 1), summary.feature_names[static_cast<std::size_t>(f)],
                   fmt(summary.mean_abs_phi[static_cast<std::size_t>(f)])});
        }
    }

    if (!x.instance.empty()) {
        int at = -1;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].id == x.instance) at = static_cast<int>(i);
        if (at < 0) throw cw::Error("instance id not found in stage rows: " + x.instance);
        const std::vector<double> inst(all.row(static_cast<std::size_t>(at)),
                                       all.row(static_cast<std::size_t>(at)) + all.n_cols);
        const cw::ShapReport rep = cw::explain_row(predictor, background, inst, cfg);
        std::vector<std::pair<std::string, double>> named;
        for (std::size_t f = 0; f < rep.phi.size(); ++f)
            named.emplace_back(all.schema[f].name, rep.phi[f]);
        std::stable_sort(named.begin(), named.end(), [](const auto& a, const auto& b) {
            return std::abs(a.second) > std::abs(b.second);
        });
        double sum_phi = 0.0;
        for (double v : rep.phi) sum_phi += v;
        cw::CsvWriter w((out / ("breakdown_" + x.instance + ".csv")).string());
        w.row({"feature", "phi"});
        for (const auto& [name, phi] : named) w.row({name, fmt(phi)});
        w.row({"base_value", fmt(rep.base_value)});
        w.row({"sum_phi", fmt(sum_phi)});
        w.row({"base_plus_sum", fmt(rep.base_value + sum_phi)});
        w.row({"prediction", fmt(rep.prediction)});
    }

    std::cout << "rows_explained=" << summarized.n_rows
              << " features=" << all.n_cols << "\n";
    std::cout << "reports written: " << x.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Defaults dflt;
    try {
        const std::string config_path = prescan_config_path(argc, argv);
        if (!config_path.empty()) dflt.cfg = cw::ConfigFile::load(config_path);
    } catch (const cw::Error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }

    CLI::App app{"clearway: bi-level traffic incident duration toolkit"};
    app.require_subcommand(1);
    std::string config_path_opt;
    app.add_option("--config", config_path_opt, "Flat key = value config file")
        ->expected(1);
    app.set_help_all_flag("--help-all", "Print help for all subcommands");

    GenerateOpts gen;
    TrainOpts train;
    EvaluateOpts evaluate;
    PredictOpts predict;
    ExplainOpts explain;
    add_generate(app, gen, dflt);
    add_train(app, train, dflt);
    add_evaluate(app, evaluate, dflt);
    add_predict(app, predict, dflt);
    add_explain(app, explain, dflt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2; --help exits 0
    }

    try {
        if (app.got_subcommand("generate")) return run_generate(gen, dflt);
        if (app.got_subcommand("train")) return run_train(train, dflt);
        if (app.got_subcommand("evaluate")) return run_evaluate(evaluate, dflt);
        if (app.got_subcommand("predict")) return run_predict(predict);
        if (app.got_subcommand("explain")) return run_explain(explain);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const cw::Error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
