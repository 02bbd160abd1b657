#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "clearway/data_model.hpp"
#include "clearway/errors.hpp"
#include "clearway/matrix.hpp"
#include "clearway/tuning.hpp"

namespace clearway {

// ---------------------------------------------------------------------------
// Flow lookup
// ---------------------------------------------------------------------------

struct FlowStore {
    // Ordered maps keep iteration deterministic.
    std::map<std::string, std::map<MinuteTime, double>> by_section;

    static FlowStore build(const std::vector<FlowObservation>& flows) {
        FlowStore s;
        for (const auto& f : flows) s.by_section[f.section_id][f.bin_start] = f.flow;
        return s;
    }

    std::optional<double> at(const std::string& section_id, MinuteTime bin_start) const {
        const auto sec = by_section.find(section_id);
        if (sec == by_section.end()) return std::nullopt;
        const auto bin = sec->second.find(bin_start);
        if (bin == sec->second.end()) return std::nullopt;
        return bin->second;
    }
};

struct FlowTriple {
    double trf = missing();  // flow in the report bin
    double tfh = missing();  // flow one hour earlier
    double tfr = missing();  // trf / tfh; MISSING unless both present and tfh > 0
};

inline FlowTriple flow_triple(const std::string& section_id, MinuteTime report_time,
                              const FlowStore& flows) {
    FlowTriple t;
    const MinuteTime bin = bin_of(report_time);
    const auto trf = flows.at(section_id, bin);
    const auto tfh = flows.at(section_id, bin - 60);
    if (trf) t.trf = *trf;
    if (tfh) t.tfh = *tfh;
    if (trf && tfh && *tfh > 0.0) t.tfr = *trf / *tfh;
    return t;
}

// ---------------------------------------------------------------------------
// Nearest detector sections
// ---------------------------------------------------------------------------

// The k detector-equipped sections closest to the incident in Euclidean
// distance, ascending; fewer than k available returns all of them. Distance
// ties break by section_id.
inline std::vector<std::pair<RoadSection, double>> nearest_sections(
    const IncidentRecord& incident, const std::vector<RoadSection>& sections, int k) {
    if (k < 1) throw Error("k must be >= 1");
    std::vector<std::pair<RoadSection, double>> out;
    for (const auto& s : sections) {
        if (!s.has_detectors) continue;
        const double dx = s.x - incident.x, dy = s.y - incident.y;
        out.emplace_back(s, std::sqrt(dx * dx + dy * dy));
    }
    if (out.empty()) throw NoDetectorSections();
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first.section_id < b.first.section_id;
    });
    if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
    return out;
}

// ---------------------------------------------------------------------------
// Feature-set assembly
// ---------------------------------------------------------------------------

enum class FeatureSet { BFS, FSA, FSB, FSC, FSD };

inline const char* to_string(FeatureSet v) {
    switch (v) {
        case FeatureSet::BFS: return "BFS";
        case FeatureSet::FSA: return "FSA";
        case FeatureSet::FSB: return "FSB";
        case FeatureSet::FSC: return "FSC";
        case FeatureSet::FSD: return "FSD";
    }
    return "BFS";
}
inline FeatureSet feature_set_from_string(const std::string& s) {
    if (s == "BFS") return FeatureSet::BFS;
    if (s == "FSA") return FeatureSet::FSA;
    if (s == "FSB") return FeatureSet::FSB;
    if (s == "FSC") return FeatureSet::FSC;
    if (s == "FSD") return FeatureSet::FSD;
    throw Error("unknown feature set: " + s + " (expected BFS/FSA/FSB/FSC/FSD)");
}

struct FeatureSetSpec {
    FeatureSet variant = FeatureSet::BFS;
    int k_nearest = 5;       // FSB / FSC
    double dv = 500.0;       // FSD radius, meters

    void validate() const {
        if (k_nearest < 1) throw Error("k_nearest must be >= 1");
        if (!(dv > 0.0)) throw Error("dv must be > 0");
    }
};

namespace detail {

// Skip-MISSING partial sums; all-MISSING -> MISSING.
inline void add_triple(const FlowTriple& t, FlowTriple& acc) {
    auto add = [](double v, double& slot) {
        if (is_missing(v)) return;
        slot = is_missing(slot) ? v : slot + v;
    };
    add(t.trf, acc.trf);
    add(t.tfh, acc.tfh);
    add(t.tfr, acc.tfr);
}

}  // namespace detail

// Fitted feature constructor: owns the encoder dictionaries and, for FSA, the
// fixed section ordering, so unseen incidents map onto the training columns.
class FeatureBuilder {
public:
    FeatureSetSpec spec;

    void fit(const std::vector<IncidentRecord>& incidents,
             const std::vector<RoadSection>& sections) {
        spec.validate();
        encoder_.fit(incidents);
        section_order_.clear();
        if (spec.variant != FeatureSet::BFS) {
            for (const auto& s : sections)
                if (s.has_detectors) section_order_.push_back(s.section_id);
            std::sort(section_order_.begin(), section_order_.end());
            if (section_order_.empty()) throw NoDetectorSections();
        }
        fitted_ = true;
    }

    FeatureMatrix transform(const std::vector<IncidentRecord>& incidents,
                            const std::vector<RoadSection>& sections,
                            const FlowStore& flows) const {
        if (!fitted_) throw Error("feature builder not fitted");
        FeatureMatrix base = encoder_.transform(incidents);
        if (spec.variant == FeatureSet::BFS) return base;

        std::vector<ColumnSpec> extra;
        std::size_t width = 0;
        switch (spec.variant) {
            case FeatureSet::FSA:
                width = 3 * section_order_.size();
                for (const auto& id : section_order_) {
                    extra.push_back({"trf__" + id, ColumnKind::numeric});
                    extra.push_back({"tfh__" + id, ColumnKind::numeric});
                    extra.push_back({"tfr__" + id, ColumnKind::numeric});
                }
                break;
            case FeatureSet::FSB:
                width = 3 * static_cast<std::size_t>(spec.k_nearest);
                for (int j = 1; j <= spec.k_nearest; ++j) {
                    const std::string tag = "_near" + std::to_string(j);
                    extra.push_back({"trf" + tag, ColumnKind::numeric});
                    extra.push_back({"tfh" + tag, ColumnKind::numeric});
                    extra.push_back({"tfr" + tag, ColumnKind::numeric});
                }
                break;
            case FeatureSet::FSC:
                width = 3;
                extra.push_back({"sum_trf_top" + std::to_string(spec.k_nearest), ColumnKind::numeric});
                extra.push_back({"sum_tfh_top" + std::to_string(spec.k_nearest), ColumnKind::numeric});
                extra.push_back({"sum_tfr_top" + std::to_string(spec.k_nearest), ColumnKind::numeric});
                break;
            case FeatureSet::FSD:
                width = 3;
                extra.push_back({"vicinity_trf", ColumnKind::numeric});
                extra.push_back({"vicinity_tfh", ColumnKind::numeric});
                extra.push_back({"vicinity_tfr", ColumnKind::numeric});
                break;
            case FeatureSet::BFS: break;
        }

        FeatureMatrix m = FeatureMatrix::zeros(base.n_rows, base.n_cols + width);
        m.schema = base.schema;
        m.schema.insert(m.schema.end(), extra.begin(), extra.end());
        m.target = base.target;
        for (std::size_t r = 0; r < base.n_rows; ++r) {
            std::copy(base.row(r), base.row(r) + base.n_cols, m.row(r));
            double* cells = m.row(r) + base.n_cols;
            fill_flow_cells(incidents[r], sections, flows, cells);
        }
        return m;
    }

    FeatureMatrix fit_transform(const std::vector<IncidentRecord>& incidents,
                                const std::vector<RoadSection>& sections,
                                const FlowStore& flows) {
        fit(incidents, sections);
        return transform(incidents, sections, flows);
    }

    const IncidentEncoder& encoder() const { return encoder_; }
    const std::vector<std::string>& section_order() const { return section_order_; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["variant"] = to_string(spec.variant);
        j["k_nearest"] = spec.k_nearest;
        j["dv"] = spec.dv;
        j["sections"] = section_order_;
        j["encoder"] = encoder_.to_json();
        return j;
    }
    static FeatureBuilder from_json(const nlohmann::json& j) {
        try {
            FeatureBuilder b;
            b.spec.variant = feature_set_from_string(j.at("variant").get<std::string>());
            b.spec.k_nearest = j.at("k_nearest").get<int>();
            b.spec.dv = j.at("dv").get<double>();
            b.section_order_ = j.at("sections").get<std::vector<std::string>>();
            b.encoder_ = IncidentEncoder::from_json(j.at("encoder"));
            b.fitted_ = true;
            return b;
        } catch (const nlohmann::json::exception& ex) {
            throw CorruptModel(ex.what());
        }
    }

private:
    void fill_flow_cells(const IncidentRecord& inc, const std::vector<RoadSection>& sections,
                         const FlowStore& flows, double* cells) const {
        switch (spec.variant) {
            case FeatureSet::FSA: {
                std::size_t c = 0;
                for (const auto& id : section_order_) {
                    const FlowTriple t = flow_triple(id, inc.report_time, flows);
                    cells[c++] = t.trf;
                    cells[c++] = t.tfh;
                    cells[c++] = t.tfr;
                }
                break;
            }
            case FeatureSet::FSB: {
                const auto near = nearest_sections(inc, sections, spec.k_nearest);
                for (int j = 0; j < spec.k_nearest; ++j) {
                    FlowTriple t;  // fewer than k sections leaves MISSING cells
                    if (static_cast<std::size_t>(j) < near.size())
                        t = flow_triple(near[static_cast<std::size_t>(j)].first.section_id,
                                        inc.report_time, flows);
                    cells[3 * j] = t.trf;
                    cells[3 * j + 1] = t.tfh;
                    cells[3 * j + 2] = t.tfr;
                }
                break;
            }
            case FeatureSet::FSC: {
                const auto near = nearest_sections(inc, sections, spec.k_nearest);
                FlowTriple acc;
                for (const auto& [sec, dist] : near) {
                    (void)dist;
                    detail::add_triple(flow_triple(sec.section_id, inc.report_time, flows), acc);
                }
                cells[0] = acc.trf;
                cells[1] = acc.tfh;
                cells[2] = acc.tfr;
                break;
            }
            case FeatureSet::FSD: {
                FlowTriple acc;  // empty vicinity stays MISSING
                for (const auto& s : sections) {
                    if (!s.has_detectors) continue;
                    const double dx = s.x - inc.x, dy = s.y - inc.y;
                    if (std::sqrt(dx * dx + dy * dy) > spec.dv) continue;
                    detail::add_triple(flow_triple(s.section_id, inc.report_time, flows), acc);
                }
                cells[0] = acc.trf;
                cells[1] = acc.tfh;
                cells[2] = acc.tfr;
                break;
            }
            case FeatureSet::BFS: break;
        }
    }

    IncidentEncoder encoder_;
    std::vector<std::string> section_order_;  // FSA column ordering (sorted ids)
    bool fitted_ = false;
};

// One-shot construction over a whole dataset.
inline FeatureMatrix build_features(const std::vector<IncidentRecord>& incidents,
                                    const std::vector<RoadSection>& sections,
                                    const std::vector<FlowObservation>& flows,
                                    const FeatureSetSpec& spec) {
    FeatureBuilder b;
    b.spec = spec;
    const FlowStore store = FlowStore::build(flows);
    return b.fit_transform(incidents, sections, store);
}

// ---------------------------------------------------------------------------
// dv radius sensitivity
// ---------------------------------------------------------------------------

struct DvSweepConfig {
    LearnerSpec learner;  // regression learner evaluated per radius
    int k_nearest = 5;
    int outer_k = 3;
    int inner_k = 3;
    int n_iter = 0;  // 0 = fixed params, no search
    SearchSpace space;
    std::uint64_t seed = 1;
    int threads = 1;
};

// For each candidate radius, builds FSD features, runs the nested evaluation,
// and reports test MAPE.
inline std::vector<std::pair<double, double>> dv_sensitivity(
    const std::vector<IncidentRecord>& incidents, const std::vector<RoadSection>& sections,
    const std::vector<FlowObservation>& flows, const std::vector<double>& dv_set,
    const DvSweepConfig& config) {
    if (dv_set.empty()) throw Error("dv_set must be nonempty");
    std::vector<std::pair<double, double>> table;
    for (double dv : dv_set) {
        FeatureSetSpec spec{FeatureSet::FSD, config.k_nearest, dv};
        const FeatureMatrix m = build_features(incidents, sections, flows, spec);
        const NestedResult nested =
            nested_evaluate(config.learner, m, m.target, config.outer_k, config.inner_k,
                            config.n_iter, config.space, {Metric::mape}, config.seed,
                            config.threads);
        table.emplace_back(dv, nested.as_fold_scores().mean_test()[0]);
    }
    return table;
}

}  // namespace clearway
