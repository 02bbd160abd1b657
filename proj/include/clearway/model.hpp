#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "clearway/baselines.hpp"
#include "clearway/booster.hpp"
#include "clearway/errors.hpp"
#include "clearway/matrix.hpp"

namespace clearway {

enum class ModelFamily { booster, knn, linear, forest };

inline const char* to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::booster: return "booster";
        case ModelFamily::knn: return "knn";
        case ModelFamily::linear: return "linear";
        case ModelFamily::forest: return "forest";
    }
    return "booster";
}
inline ModelFamily family_from_string(const std::string& s) {
    if (s == "booster") return ModelFamily::booster;
    if (s == "knn") return ModelFamily::knn;
    if (s == "linear") return ModelFamily::linear;
    if (s == "forest") return ModelFamily::forest;
    throw CorruptModel("unknown model family: " + s);
}

// Everything needed to fit any learner family; only the fields relevant to
// the chosen family are read.
struct LearnerSpec {
    ModelFamily family = ModelFamily::booster;
    Task task = Task::regress;
    HyperParams params;                                    // booster + forest
    Loss loss = Loss::squared_error;                       // booster regression loss
    TargetTransform transform = TargetTransform::identity; // booster regression
    int k = 5;                                             // knn
    double ridge_alpha = 1.0;                              // linear
    LinearFitOptions linear_opts;                          // linear
    int n_trees = 100;                                     // forest
};

// A fitted learner of any family. predict() returns durations for regression
// and scores in [0,1] for classification; classify() applies the uniform
// decision rule score >= 0.5 -> 1 (ties go to the short class).
struct FittedModel {
    ModelFamily family = ModelFamily::booster;
    Task task = Task::regress;
    std::variant<TreeEnsemble, KnnModel, LinearModel, ForestModel> impl;

    std::vector<double> predict(const FeatureMatrix& m) const {
        switch (family) {
            case ModelFamily::booster: {
                const TreeEnsemble& e = std::get<TreeEnsemble>(impl);
                if (task == Task::classify) {
                    if (!e.schema.empty()) require_same_schema(e.schema, m.schema);
                    std::vector<double> out(m.n_rows);
                    for (std::size_t r = 0; r < m.n_rows; ++r)
                        out[r] = detail::sigmoid(e.score_row(m.row(r)));
                    return out;
                }
                return clearway::predict(e, m);
            }
            case ModelFamily::knn: return knn_predict(std::get<KnnModel>(impl), m);
            case ModelFamily::linear: return linear_predict(std::get<LinearModel>(impl), m);
            case ModelFamily::forest: return forest_predict(std::get<ForestModel>(impl), m);
        }
        throw Error("unreachable");
    }

    std::vector<int> classify(const FeatureMatrix& m) const {
        const std::vector<double> scores = predict(m);
        std::vector<int> out(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= 0.5 ? 1 : 0;
        return out;
    }

    // Single-row fast path (no schema re-check); used by the Shapley value
    // function, which evaluates millions of composite rows.
    double predict_row(const double* row) const {
        switch (family) {
            case ModelFamily::booster: {
                const TreeEnsemble& e = std::get<TreeEnsemble>(impl);
                const double raw = e.score_row(row);
                if (task == Task::classify) return detail::sigmoid(raw);
                return e.transform == TargetTransform::log ? std::exp(raw) : raw;
            }
            case ModelFamily::knn: {
                const KnnModel& k = std::get<KnnModel>(impl);
                const std::size_t n_cols = k.train.n_cols;
                std::vector<double> z(n_cols);
                for (std::size_t c = 0; c < n_cols; ++c) {
                    const double v = is_missing(row[c]) ? k.stats.median[c] : row[c];
                    z[c] = (v - k.stats.mean[c]) / k.stats.scale[c];
                }
                std::vector<std::pair<double, std::size_t>> d(k.train.n_rows);
                for (std::size_t r = 0; r < k.train.n_rows; ++r) {
                    double acc = 0.0;
                    const double* tr = k.train.row(r);
                    for (std::size_t c = 0; c < n_cols; ++c) {
                        const double diff = z[c] - tr[c];
                        acc += diff * diff;
                    }
                    d[r] = {acc, r};
                }
                const std::size_t kk = static_cast<std::size_t>(k.k);
                std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
                double sum = 0.0;
                for (std::size_t i = 0; i < kk; ++i) sum += k.targets[d[i].second];
                return sum / static_cast<double>(kk);
            }
            case ModelFamily::linear: {
                const LinearModel& lm = std::get<LinearModel>(impl);
                double s = lm.intercept;
                for (std::size_t c = 0; c < lm.weights.size(); ++c) {
                    const double v = is_missing(row[c]) ? lm.medians[c] : row[c];
                    s += lm.weights[c] * v;
                }
                return lm.link == Link::logit ? detail::sigmoid(s) : s;
            }
            case ModelFamily::forest: {
                const ForestModel& f = std::get<ForestModel>(impl);
                if (f.trees.empty()) return 0.0;
                double acc = 0.0;
                for (const Tree& t : f.trees) {
                    const double leaf = tree_leaf_weight(t, row);
                    acc += task == Task::classify ? (leaf >= 0.5 ? 1.0 : 0.0) : leaf;
                }
                return acc / static_cast<double>(f.trees.size());
            }
        }
        throw Error("unreachable");
    }
};

inline FittedModel fit_model(const LearnerSpec& spec, const FeatureMatrix& m,
                             const std::vector<double>& targets, std::uint64_t seed) {
    FittedModel fm;
    fm.family = spec.family;
    fm.task = spec.task;
    switch (spec.family) {
        case ModelFamily::booster: {
            const Loss loss = spec.task == Task::classify ? Loss::logistic : spec.loss;
            const TargetTransform tr =
                spec.task == Task::classify ? TargetTransform::identity : spec.transform;
            fm.impl = train(m, targets, loss, spec.params, seed, tr);
            break;
        }
        case ModelFamily::knn:
            fm.impl = knn_fit(m, targets, spec.k, spec.task);
            break;
        case ModelFamily::linear: {
            const Link link = spec.task == Task::classify ? Link::logit : Link::identity;
            fm.impl = linear_fit(m, targets, link, spec.ridge_alpha, spec.linear_opts);
            break;
        }
        case ModelFamily::forest:
            fm.impl = forest_fit(m, targets, spec.n_trees, spec.params, seed, spec.task);
            break;
    }
    return fm;
}

// ---------------------------------------------------------------------------
// Family-tagged model documents
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json schema_to_json(const std::vector<ColumnSpec>& schema) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& col : schema)
        arr.push_back({{"name", col.name}, {"kind", to_string(col.kind)}});
    return arr;
}

inline std::vector<ColumnSpec> schema_from_json(const nlohmann::json& arr) {
    std::vector<ColumnSpec> schema;
    for (const auto& col : arr)
        schema.push_back({col.at("name").get<std::string>(),
                          column_kind_from_string(col.at("kind").get<std::string>())});
    return schema;
}

inline nlohmann::json matrix_to_json(const FeatureMatrix& m) {
    nlohmann::json j;
    j["n_rows"] = m.n_rows;
    j["schema"] = schema_to_json(m.schema);
    nlohmann::json vals = nlohmann::json::array();
    for (double v : m.values) {
        if (is_missing(v)) vals.push_back(nullptr);
        else vals.push_back(v);
    }
    j["values"] = vals;
    return j;
}

inline FeatureMatrix matrix_from_json(const nlohmann::json& j) {
    FeatureMatrix m;
    m.schema = schema_from_json(j.at("schema"));
    m.n_rows = j.at("n_rows").get<std::size_t>();
    m.n_cols = m.schema.size();
    for (const auto& v : j.at("values"))
        m.values.push_back(v.is_null() ? missing() : v.get<double>());
    if (m.values.size() != m.n_rows * m.n_cols) throw CorruptModel("matrix cell count");
    return m;
}

inline nlohmann::json trees_to_json(const std::vector<Tree>& trees) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Tree& t : trees) {
        nlohmann::json n = nlohmann::json::object();
        for (const TreeNode& node : t) {
            n["feature"].push_back(node.feature);
            n["threshold"].push_back(node.threshold);
            n["default_left"].push_back(node.default_left);
            n["left"].push_back(node.left);
            n["right"].push_back(node.right);
            n["weight"].push_back(node.weight);
        }
        arr.push_back(n);
    }
    return arr;
}

inline std::vector<Tree> trees_from_json(const nlohmann::json& arr) {
    std::vector<Tree> trees;
    for (const auto& tj : arr) {
        Tree t;
        if (tj.contains("feature")) {
            const std::size_t n = tj.at("feature").size();
            for (std::size_t i = 0; i < n; ++i) {
                TreeNode node;
                node.feature = tj.at("feature").at(i).get<int>();
                node.threshold = tj.at("threshold").at(i).get<double>();
                node.default_left = tj.at("default_left").at(i).get<bool>();
                node.left = tj.at("left").at(i).get<int>();
                node.right = tj.at("right").at(i).get<int>();
                node.weight = tj.at("weight").at(i).get<double>();
                if (!node.is_leaf() &&
                    (node.left < 0 || node.right < 0 || node.left >= static_cast<int>(n) ||
                     node.right >= static_cast<int>(n)))
                    throw CorruptModel("child index out of range");
                t.push_back(node);
            }
        }
        trees.push_back(std::move(t));
    }
    return trees;
}

}  // namespace detail

inline nlohmann::json model_to_json(const FittedModel& fm) {
    nlohmann::json j;
    j["format"] = "clearway-model/1";
    j["family"] = to_string(fm.family);
    j["task"] = to_string(fm.task);
    switch (fm.family) {
        case ModelFamily::booster:
            j["model"] = ensemble_to_json(std::get<TreeEnsemble>(fm.impl));
            break;
        case ModelFamily::knn: {
            const KnnModel& k = std::get<KnnModel>(fm.impl);
            nlohmann::json mj;
            mj["k"] = k.k;
            mj["median"] = k.stats.median;
            mj["mean"] = k.stats.mean;
            mj["scale"] = k.stats.scale;
            mj["train"] = detail::matrix_to_json(k.train);
            mj["targets"] = k.targets;
            mj["schema"] = detail::schema_to_json(k.schema);
            j["model"] = mj;
            break;
        }
        case ModelFamily::linear: {
            const LinearModel& lm = std::get<LinearModel>(fm.impl);
            nlohmann::json mj;
            mj["weights"] = lm.weights;
            mj["intercept"] = lm.intercept;
            mj["link"] = to_string(lm.link);
            mj["ridge_alpha"] = lm.ridge_alpha;
            mj["medians"] = lm.medians;
            mj["schema"] = detail::schema_to_json(lm.schema);
            j["model"] = mj;
            break;
        }
        case ModelFamily::forest: {
            const ForestModel& f = std::get<ForestModel>(fm.impl);
            nlohmann::json mj;
            mj["trees"] = detail::trees_to_json(f.trees);
            mj["tree_seeds"] = f.tree_seeds;
            mj["schema"] = detail::schema_to_json(f.schema);
            j["model"] = mj;
            break;
        }
    }
    return j;
}

inline FittedModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "clearway-model/1")
            throw CorruptModel("unknown format tag");
        FittedModel fm;
        fm.family = family_from_string(j.at("family").get<std::string>());
        fm.task = task_from_string(j.at("task").get<std::string>());
        const nlohmann::json& mj = j.at("model");
        switch (fm.family) {
            case ModelFamily::booster:
                fm.impl = ensemble_from_json(mj);
                break;
            case ModelFamily::knn: {
                KnnModel k;
                k.k = mj.at("k").get<int>();
                k.task = fm.task;
                k.stats.median = mj.at("median").get<std::vector<double>>();
                k.stats.mean = mj.at("mean").get<std::vector<double>>();
                k.stats.scale = mj.at("scale").get<std::vector<double>>();
                k.train = detail::matrix_from_json(mj.at("train"));
                k.targets = mj.at("targets").get<std::vector<double>>();
                k.schema = detail::schema_from_json(mj.at("schema"));
                if (k.targets.size() != k.train.n_rows) throw CorruptModel("knn target count");
                fm.impl = std::move(k);
                break;
            }
            case ModelFamily::linear: {
                LinearModel lm;
                lm.weights = mj.at("weights").get<std::vector<double>>();
                lm.intercept = mj.at("intercept").get<double>();
                lm.link = link_from_string(mj.at("link").get<std::string>());
                lm.ridge_alpha = mj.at("ridge_alpha").get<double>();
                lm.medians = mj.at("medians").get<std::vector<double>>();
                lm.schema = detail::schema_from_json(mj.at("schema"));
                if (lm.weights.size() != lm.schema.size()) throw CorruptModel("weight count");
                fm.impl = std::move(lm);
                break;
            }
            case ModelFamily::forest: {
                ForestModel f;
                f.task = fm.task;
                f.trees = detail::trees_from_json(mj.at("trees"));
                f.tree_seeds = mj.at("tree_seeds").get<std::vector<std::uint64_t>>();
                f.schema = detail::schema_from_json(mj.at("schema"));
                fm.impl = std::move(f);
                break;
            }
        }
        return fm;
    } catch (const nlohmann::json::exception& ex) {
        throw CorruptModel(ex.what());
    }
}

inline std::string serialize_model(const FittedModel& fm) { return model_to_json(fm).dump(2); }

inline FittedModel deserialize_model(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw CorruptModel("unparseable document");
    return model_from_json(j);
}

}  // namespace clearway
