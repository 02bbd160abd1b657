#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "clearway/errors.hpp"
#include "clearway/matrix.hpp"
#include "clearway/rng.hpp"

namespace clearway {

// Second-order losses need strictly positive curvature for the closed-form
// leaf weight; flat losses (absolute, mape) are floored here.
inline constexpr double kCurvatureFloor = 1e-6;

struct HyperParams {
    int max_depth = 6;
    double learning_rate = 0.3;
    double min_child_weight = 1.0;
    double gamma = 0.0;            // per-leaf complexity penalty
    double reg_lambda = 1.0;       // L2 on leaf weights
    double subsample = 1.0;
    double colsample_bytree = 1.0;
    double scale_pos_weight = 1.0;
    int n_rounds = 100;

    void validate() const {
        if (max_depth < 1) throw Error("max_depth must be >= 1");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw Error("learning_rate must be in (0,1]");
        if (min_child_weight < 0.0) throw Error("min_child_weight must be >= 0");
        if (gamma < 0.0) throw Error("gamma must be >= 0");
        if (reg_lambda < 0.0) throw Error("reg_lambda must be >= 0");
        if (!(subsample > 0.0 && subsample <= 1.0)) throw Error("subsample must be in (0,1]");
        if (!(colsample_bytree > 0.0 && colsample_bytree <= 1.0)) throw Error("colsample_bytree must be in (0,1]");
        if (!(scale_pos_weight > 0.0)) throw Error("scale_pos_weight must be > 0");
        if (n_rounds < 0) throw Error("n_rounds must be >= 0");
    }
};

enum class Loss { squared_error, logistic, absolute, mape };
enum class TargetTransform { identity, log };

inline const char* to_string(Loss l) {
    switch (l) {
        case Loss::squared_error: return "squared_error";
        case Loss::logistic: return "logistic";
        case Loss::absolute: return "absolute";
        case Loss::mape: return "mape";
    }
    return "squared_error";
}
inline Loss loss_from_string(const std::string& s) {
    if (s == "squared_error") return Loss::squared_error;
    if (s == "logistic") return Loss::logistic;
    if (s == "absolute") return Loss::absolute;
    if (s == "mape") return Loss::mape;
    throw CorruptModel("unknown loss: " + s);
}
inline const char* to_string(TargetTransform t) {
    return t == TargetTransform::log ? "log" : "identity";
}
inline TargetTransform transform_from_string(const std::string& s) {
    if (s == "log") return TargetTransform::log;
    if (s == "identity") return TargetTransform::identity;
    throw CorruptModel("unknown transform: " + s);
}

// ---------------------------------------------------------------------------
// Loss derivatives
// ---------------------------------------------------------------------------

namespace detail {
inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

// Per-row loss. For logistic, yhat is a logit.
inline double loss_value(Loss loss, double y, double yhat) {
    switch (loss) {
        case Loss::squared_error: return 0.5 * (yhat - y) * (yhat - y);
        case Loss::logistic: {
            // log(1 + e^z) - y z, computed without overflow
            const double z = yhat;
            const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
            return softplus - y * z;
        }
        case Loss::absolute: return std::abs(yhat - y);
        case Loss::mape: return std::abs(yhat - y) / y;
    }
    return 0.0;
}

struct GradHess {
    std::vector<double> grad;
    std::vector<double> hess;
};

inline GradHess loss_derivatives(Loss loss, const std::vector<double>& y,
                                 const std::vector<double>& yhat) {
    if (y.size() != yhat.size()) throw DimensionMismatch("y/yhat length");
    GradHess gh;
    gh.grad.resize(y.size());
    gh.hess.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        switch (loss) {
            case Loss::squared_error:
                gh.grad[i] = yhat[i] - y[i];
                gh.hess[i] = 1.0;
                break;
            case Loss::logistic: {
                const double p = detail::sigmoid(yhat[i]);
                gh.grad[i] = p - y[i];
                gh.hess[i] = std::max(p * (1.0 - p), kCurvatureFloor);
                break;
            }
            case Loss::absolute:
                gh.grad[i] = detail::sign(yhat[i] - y[i]);
                gh.hess[i] = kCurvatureFloor;
                break;
            case Loss::mape:
                if (!(y[i] > 0.0)) throw NonPositiveTarget();
                gh.grad[i] = detail::sign(yhat[i] - y[i]) / y[i];
                gh.hess[i] = std::max(1.0 / y[i], kCurvatureFloor);
                break;
        }
    }
    return gh;
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    bool default_left = true;  // side MISSING values take
    int left = -1;
    int right = -1;
    double weight = 0.0;  // leaf weight

    bool is_leaf() const { return feature < 0; }
};

using Tree = std::vector<TreeNode>;

inline double tree_leaf_weight(const Tree& tree, const double* row) {
    int i = 0;
    while (!tree[static_cast<std::size_t>(i)].is_leaf()) {
        const TreeNode& n = tree[static_cast<std::size_t>(i)];
        const double v = row[n.feature];
        const bool go_left = is_missing(v) ? n.default_left : (v < n.threshold);
        i = go_left ? n.left : n.right;
    }
    return tree[static_cast<std::size_t>(i)].weight;
}

struct TreeEnsemble {
    std::vector<Tree> trees;
    double base_score = 0.0;
    double learning_rate = 0.3;
    Loss objective = Loss::squared_error;
    TargetTransform transform = TargetTransform::identity;
    std::vector<ColumnSpec> schema;  // training schema; empty = unchecked

    // Internal score before the inverse target transform.
    double score_row(const double* row) const {
        double s = base_score;
        for (const Tree& t : trees) s += learning_rate * tree_leaf_weight(t, row);
        return s;
    }
};

// Per-column row order used by the exact-greedy scan: rows with a present
// value, sorted by (value, row index). Built once per training matrix.
struct ColumnOrder {
    std::vector<std::vector<int>> sorted_rows;

    static ColumnOrder build(const FeatureMatrix& m) {
        ColumnOrder o;
        o.sorted_rows.resize(m.n_cols);
        for (std::size_t c = 0; c < m.n_cols; ++c) {
            auto& rows = o.sorted_rows[c];
            rows.reserve(m.n_rows);
            for (std::size_t r = 0; r < m.n_rows; ++r)
                if (!is_missing(m.at(r, c))) rows.push_back(static_cast<int>(r));
            std::sort(rows.begin(), rows.end(), [&](int a, int b) {
                const double va = m.at(static_cast<std::size_t>(a), c);
                const double vb = m.at(static_cast<std::size_t>(b), c);
                if (va != vb) return va < vb;
                return a < b;
            });
        }
        return o;
    }
};

// ---------------------------------------------------------------------------
// Exact-greedy tree growth
// ---------------------------------------------------------------------------

// Grows one tree on the given gradient/curvature vectors. At every node each
// unmasked feature is scanned in value order and every distinct threshold
// (midpoint between consecutive distinct present values) is evaluated with
//   gain = 1/2 [ GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda) ] - gamma.
// Rows with MISSING in the split feature are tried on both sides and the
// higher-gain side becomes the default direction. Ties in gain are broken by
// lowest feature index, then lowest threshold, then default-left.
inline Tree grow_tree(const FeatureMatrix& m, const std::vector<double>& grad,
                      const std::vector<double>& hess, const std::vector<char>& row_mask,
                      const std::vector<int>& col_mask, const HyperParams& p,
                      const ColumnOrder* shared_order = nullptr) {
    if (grad.size() != m.n_rows || hess.size() != m.n_rows)
        throw DimensionMismatch("grad/hess length != n_rows");
    if (!row_mask.empty() && row_mask.size() != m.n_rows)
        throw DimensionMismatch("row_mask length != n_rows");

    ColumnOrder local_order;
    if (!shared_order) {
        local_order = ColumnOrder::build(m);
        shared_order = &local_order;
    }

    const double lam = p.reg_lambda;

    Tree tree(1);
    std::vector<int> node_of_row(m.n_rows, -1);
    double g_root = 0.0, h_root = 0.0;
    for (std::size_t r = 0; r < m.n_rows; ++r) {
        if (!row_mask.empty() && !row_mask[r]) continue;
        node_of_row[r] = 0;
        g_root += grad[r];
        h_root += hess[r];
    }
    std::vector<double> node_g{g_root};
    std::vector<double> node_h{h_root};

    struct Candidate {
        double gain = 0.0;
        int feature = -1;
        double threshold = 0.0;
        bool default_left = true;
        double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
    };

    std::size_t level_begin = 0, level_end = 1;
    for (int depth = 0; level_begin < level_end; ++depth) {
        const bool allow_split = depth < p.max_depth;
        std::vector<Candidate> best(level_end - level_begin);

        if (allow_split) {
            const std::size_t n_active = level_end - level_begin;
            std::vector<double> g_present(n_active), h_present(n_active);
            std::vector<double> g_left(n_active), h_left(n_active);
            std::vector<double> prev_value(n_active);
            std::vector<char> started(n_active);

            for (int f : col_mask) {
                const auto& rows = shared_order->sorted_rows[static_cast<std::size_t>(f)];

                std::fill(g_present.begin(), g_present.end(), 0.0);
                std::fill(h_present.begin(), h_present.end(), 0.0);
                for (int r : rows) {
                    const int v = node_of_row[static_cast<std::size_t>(r)];
                    if (v < static_cast<int>(level_begin)) continue;
                    const std::size_t s = static_cast<std::size_t>(v) - level_begin;
                    g_present[s] += grad[static_cast<std::size_t>(r)];
                    h_present[s] += hess[static_cast<std::size_t>(r)];
                }

                std::fill(g_left.begin(), g_left.end(), 0.0);
                std::fill(h_left.begin(), h_left.end(), 0.0);
                std::fill(started.begin(), started.end(), 0);
                for (int r : rows) {
                    const int v = node_of_row[static_cast<std::size_t>(r)];
                    if (v < static_cast<int>(level_begin)) continue;
                    const std::size_t s = static_cast<std::size_t>(v) - level_begin;
                    const double value = m.at(static_cast<std::size_t>(r), static_cast<std::size_t>(f));

                    if (started[s] && value != prev_value[s]) {
                        const double g_total = node_g[static_cast<std::size_t>(v)];
                        const double h_total = node_h[static_cast<std::size_t>(v)];
                        const double g_miss = g_total - g_present[s];
                        const double h_miss = h_total - h_present[s];
                        const double parent = g_total * g_total / (h_total + lam);

                        // missing routed left
                        const double gl_l = g_left[s] + g_miss, hl_l = h_left[s] + h_miss;
                        const double gr_l = g_present[s] - g_left[s], hr_l = h_present[s] - h_left[s];
                        // missing routed right
                        const double gl_r = g_left[s], hl_r = h_left[s];
                        const double gr_r = g_total - g_left[s], hr_r = h_total - h_left[s];

                        const bool ok_l = hl_l >= p.min_child_weight && hr_l >= p.min_child_weight;
                        const bool ok_r = hl_r >= p.min_child_weight && hr_r >= p.min_child_weight;
                        const double gain_l = ok_l
                            ? 0.5 * (gl_l * gl_l / (hl_l + lam) + gr_l * gr_l / (hr_l + lam) - parent) - p.gamma
                            : -std::numeric_limits<double>::infinity();
                        const double gain_r = ok_r
                            ? 0.5 * (gl_r * gl_r / (hl_r + lam) + gr_r * gr_r / (hr_r + lam) - parent) - p.gamma
                            : -std::numeric_limits<double>::infinity();

                        if (ok_l || ok_r) {
                            Candidate c;
                            c.feature = f;
                            c.threshold = 0.5 * (prev_value[s] + value);
                            if (gain_l >= gain_r) {
                                c.gain = gain_l;
                                c.default_left = true;
                                c.gl = gl_l; c.hl = hl_l; c.gr = gr_l; c.hr = hr_l;
                            } else {
                                c.gain = gain_r;
                                c.default_left = false;
                                c.gl = gl_r; c.hl = hl_r; c.gr = gr_r; c.hr = hr_r;
                            }
                            if (c.gain > best[s].gain) best[s] = c;
                        }
                    }
                    g_left[s] += grad[static_cast<std::size_t>(r)];
                    h_left[s] += hess[static_cast<std::size_t>(r)];
                    prev_value[s] = value;
                    started[s] = 1;
                }
            }
        }

        // Materialize: split where a positive gain was found, close leaves otherwise.
        const std::size_t next_begin = tree.size();
        for (std::size_t v = level_begin; v < level_end; ++v) {
            const Candidate& c = best[v - level_begin];
            if (allow_split && c.feature >= 0 && c.gain > 0.0) {
                TreeNode& n = tree[v];
                n.feature = c.feature;
                n.threshold = c.threshold;
                n.default_left = c.default_left;
                n.left = static_cast<int>(tree.size());
                n.right = static_cast<int>(tree.size() + 1);
                tree.emplace_back();
                tree.emplace_back();
                node_g.push_back(c.gl);
                node_h.push_back(c.hl);
                node_g.push_back(c.gr);
                node_h.push_back(c.hr);
            } else {
                tree[v].feature = -1;
                const double denom = node_h[v] + lam;
                tree[v].weight = denom > 0.0 ? -node_g[v] / denom : 0.0;
            }
        }

        for (std::size_t r = 0; r < m.n_rows; ++r) {
            const int v = node_of_row[r];
            if (v < static_cast<int>(level_begin) || v >= static_cast<int>(level_end)) continue;
            const TreeNode& n = tree[static_cast<std::size_t>(v)];
            if (n.is_leaf()) continue;
            const double value = m.at(r, static_cast<std::size_t>(n.feature));
            const bool go_left = is_missing(value) ? n.default_left : (value < n.threshold);
            node_of_row[r] = go_left ? n.left : n.right;
        }

        level_begin = next_begin;
        level_end = tree.size();
    }
    return tree;
}

// ---------------------------------------------------------------------------
// Boosting
// ---------------------------------------------------------------------------

inline TreeEnsemble train(const FeatureMatrix& m, const std::vector<double>& targets, Loss loss,
                          const HyperParams& p, std::uint64_t seed,
                          TargetTransform transform = TargetTransform::identity) {
    p.validate();
    if (targets.size() != m.n_rows) throw DimensionMismatch("targets length != n_rows");
    if (m.n_rows == 0) throw EmptyInput();

    std::vector<double> work(targets);
    if (transform == TargetTransform::log) {
        for (auto& t : work) {
            if (!(t > 0.0)) throw NonPositiveTarget();
            t = std::log(t);
        }
    } else if (loss == Loss::mape) {
        for (double t : work)
            if (!(t > 0.0)) throw NonPositiveTarget();
    }

    TreeEnsemble e;
    e.learning_rate = p.learning_rate;
    e.objective = loss;
    e.transform = transform;
    e.schema = m.schema;

    double base = 0.0;
    for (double t : work) base += t;
    e.base_score = base / static_cast<double>(work.size());

    std::vector<double> score(m.n_rows, e.base_score);
    const ColumnOrder order = ColumnOrder::build(m);
    Rng rng(seed);

    std::vector<int> all_cols(m.n_cols);
    for (std::size_t c = 0; c < m.n_cols; ++c) all_cols[c] = static_cast<int>(c);

    for (int round = 0; round < p.n_rounds; ++round) {
        GradHess gh = loss_derivatives(loss, work, score);
        if (loss == Loss::logistic && p.scale_pos_weight != 1.0) {
            for (std::size_t r = 0; r < m.n_rows; ++r) {
                if (work[r] == 1.0) {
                    gh.grad[r] *= p.scale_pos_weight;
                    gh.hess[r] *= p.scale_pos_weight;
                }
            }
        }

        std::vector<char> row_mask;
        if (p.subsample < 1.0) {
            row_mask.resize(m.n_rows);
            for (std::size_t r = 0; r < m.n_rows; ++r)
                row_mask[r] = rng.bernoulli(p.subsample) ? 1 : 0;
        }

        std::vector<int> cols = all_cols;
        if (p.colsample_bytree < 1.0) {
            const int take = std::max(
                1, static_cast<int>(p.colsample_bytree * static_cast<double>(m.n_cols) + 0.5));
            cols = rng.sample_without_replacement(static_cast<int>(m.n_cols), take);
        }

        Tree tree = grow_tree(m, gh.grad, gh.hess, row_mask, cols, p, &order);
        for (std::size_t r = 0; r < m.n_rows; ++r)
            score[r] += p.learning_rate * tree_leaf_weight(tree, m.row(r));
        e.trees.push_back(std::move(tree));
    }
    return e;
}

inline std::vector<double> predict(const TreeEnsemble& e, const FeatureMatrix& m) {
    if (!e.schema.empty()) require_same_schema(e.schema, m.schema);
    std::vector<double> out(m.n_rows);
    for (std::size_t r = 0; r < m.n_rows; ++r) {
        const double s = e.score_row(m.row(r));
        out[r] = e.transform == TargetTransform::log ? std::exp(s) : s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization (self-describing text document)
// ---------------------------------------------------------------------------

inline nlohmann::json ensemble_to_json(const TreeEnsemble& e) {
    nlohmann::json j;
    j["format"] = "clearway-ensemble/1";
    j["objective"] = to_string(e.objective);
    j["transform"] = to_string(e.transform);
    j["base_score"] = e.base_score;
    j["learning_rate"] = e.learning_rate;
    nlohmann::json schema = nlohmann::json::array();
    for (const auto& col : e.schema)
        schema.push_back({{"name", col.name}, {"kind", to_string(col.kind)}});
    j["schema"] = schema;
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : e.trees) {
        nlohmann::json n;
        for (const TreeNode& node : t) {
            n["feature"].push_back(node.feature);
            n["threshold"].push_back(node.threshold);
            n["default_left"].push_back(node.default_left);
            n["left"].push_back(node.left);
            n["right"].push_back(node.right);
            n["weight"].push_back(node.weight);
        }
        if (t.empty()) n = nlohmann::json::object();
        trees.push_back(n);
    }
    j["trees"] = trees;
    return j;
}

inline TreeEnsemble ensemble_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "clearway-ensemble/1")
            throw CorruptModel("unknown format tag");
        TreeEnsemble e;
        e.objective = loss_from_string(j.at("objective").get<std::string>());
        e.transform = transform_from_string(j.at("transform").get<std::string>());
        e.base_score = j.at("base_score").get<double>();
        e.learning_rate = j.at("learning_rate").get<double>();
        if (!std::isfinite(e.base_score)) throw CorruptModel("base_score not finite");
        for (const auto& col : j.at("schema"))
            e.schema.push_back({col.at("name").get<std::string>(),
                                column_kind_from_string(col.at("kind").get<std::string>())});
        for (const auto& tj : j.at("trees")) {
            Tree t;
            if (tj.contains("feature")) {
                const auto& feat = tj.at("feature");
                const std::size_t n = feat.size();
                for (std::size_t i = 0; i < n; ++i) {
                    TreeNode node;
                    node.feature = tj.at("feature").at(i).get<int>();
                    node.threshold = tj.at("threshold").at(i).get<double>();
                    node.default_left = tj.at("default_left").at(i).get<bool>();
                    node.left = tj.at("left").at(i).get<int>();
                    node.right = tj.at("right").at(i).get<int>();
                    node.weight = tj.at("weight").at(i).get<double>();
                    if (!node.is_leaf()) {
                        if (node.feature >= static_cast<int>(e.schema.size()) && !e.schema.empty())
                            throw CorruptModel("feature index out of range");
                        if (node.left < 0 || node.right < 0 ||
                            node.left >= static_cast<int>(n) || node.right >= static_cast<int>(n))
                            throw CorruptModel("child index out of range");
                        if (!std::isfinite(node.threshold)) throw CorruptModel("threshold not finite");
                    } else if (!std::isfinite(node.weight)) {
                        throw CorruptModel("leaf weight not finite");
                    }
                    t.push_back(node);
                }
            }
            e.trees.push_back(std::move(t));
        }
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw CorruptModel(ex.what());
    }
}

inline std::string serialize(const TreeEnsemble& e) { return ensemble_to_json(e).dump(2); }

inline TreeEnsemble deserialize(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw CorruptModel("unparseable document");
    return ensemble_from_json(j);
}

}  // namespace clearway
