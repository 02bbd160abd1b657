#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "clearway/csv.hpp"
#include "clearway/errors.hpp"
#include "clearway/matrix.hpp"

namespace clearway {

// One reported incident. Mandatory fields are id, x, y, report_time and
// duration_min; everything else may be missing (NaN for numerics, empty
// string for categoricals).
struct IncidentRecord {
    std::string id;
    double x = 0.0;
    double y = 0.0;
    MinuteTime report_time = 0;
    double duration_min = 0.0;

    double hour_of_day = missing();   // 0..23
    double peak_hour = missing();     // 0/1
    double day_of_week = missing();   // 1..5 weekdays; loader also accepts 1..7
    double weekend = missing();       // 0/1
    double month = missing();         // 1..12
    std::string subtype;
    std::string affected_lanes;
    std::string direction;
    double severity = missing();        // 1..10
    double incident_source = missing(); // 1..3
    double unplanned = missing();       // 0/1
    double avg_temperature = missing(); // deg C
    double rainfall = missing();        // mm
    double public_holiday = missing();  // 0/1
    std::string sector_id;
    std::string tz_name;
    std::string section_id;
    std::string section_class;
    std::string street_id;
    std::string intersection_id;
    double section_speed = missing();    // km/h
    double section_lanes = missing();    // 0..6
    double section_capacity = missing(); // veh/h
    double distance_from_cbd = missing(); // km
};

struct RoadSection {
    std::string section_id;
    double x = 0.0;
    double y = 0.0;
    double speed_limit = 0.0;
    int lanes = 0;
    double capacity = 0.0;
    bool has_detectors = false;
};

struct FlowObservation {
    std::string section_id;
    MinuteTime bin_start = 0;  // aligned to a 15-minute boundary
    double flow = 0.0;         // vehicles per 15 min
};

// ---------------------------------------------------------------------------
// CSV loaders
// ---------------------------------------------------------------------------

namespace detail {

inline double optional_number(const std::vector<std::string>& row, int col) {
    if (col < 0 || static_cast<std::size_t>(col) >= row.size()) return missing();
    const auto v = parse_double(row[static_cast<std::size_t>(col)]);
    return v ? *v : missing();
}

inline std::string optional_string(const std::vector<std::string>& row, int col) {
    if (col < 0 || static_cast<std::size_t>(col) >= row.size()) return {};
    return row[static_cast<std::size_t>(col)];
}

}  // namespace detail

inline std::vector<IncidentRecord> load_incidents(const std::string& path) {
    const CsvTable t = read_csv(path);
    const int c_id = t.require_column("id");
    const int c_x = t.require_column("x");
    const int c_y = t.require_column("y");
    const int c_time = t.require_column("report_time");
    const int c_dur = t.require_column("duration_min");

    const int c_hour = t.column("hour_of_day");
    const int c_peak = t.column("peak_hour");
    const int c_dow = t.column("day_of_week");
    const int c_wknd = t.column("weekend");
    const int c_month = t.column("month");
    const int c_subtype = t.column("subtype");
    const int c_lanes = t.column("affected_lanes");
    const int c_dir = t.column("direction");
    const int c_sev = t.column("severity");
    const int c_src = t.column("incident_source");
    const int c_unpl = t.column("unplanned");
    const int c_temp = t.column("avg_temperature");
    const int c_rain = t.column("rainfall");
    const int c_hol = t.column("public_holiday");
    const int c_sector = t.column("sector_id");
    const int c_tz = t.column("tz_name");
    const int c_sec = t.column("section_id");
    const int c_secclass = t.column("section_class");
    const int c_street = t.column("street_id");
    const int c_inter = t.column("intersection_id");
    const int c_speed = t.column("section_speed");
    const int c_seclanes = t.column("section_lanes");
    const int c_cap = t.column("section_capacity");
    const int c_cbd = t.column("distance_from_cbd");

    std::vector<IncidentRecord> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        IncidentRecord rec;
        rec.id = detail::optional_string(row, c_id);
        if (rec.id.empty()) throw BadValue(r + 1, "id", "");

        const auto x = parse_double(detail::optional_string(row, c_x));
        if (!x) throw BadValue(r + 1, "x", detail::optional_string(row, c_x));
        rec.x = *x;
        const auto y = parse_double(detail::optional_string(row, c_y));
        if (!y) throw BadValue(r + 1, "y", detail::optional_string(row, c_y));
        rec.y = *y;

        const std::string time_str = detail::optional_string(row, c_time);
        const auto tm = parse_minute_time(time_str);
        if (!tm) throw BadValue(r + 1, "report_time", time_str);
        rec.report_time = *tm;

        // Zero-duration rows are loadable; they are erroneous records that the
        // outlier filter removes, not parse failures.
        const auto dur = parse_double(detail::optional_string(row, c_dur));
        if (!dur || !std::isfinite(*dur) || *dur < 0.0)
            throw BadValue(r + 1, "duration_min", detail::optional_string(row, c_dur));
        rec.duration_min = *dur;

        rec.hour_of_day = detail::optional_number(row, c_hour);
        rec.peak_hour = detail::optional_number(row, c_peak);
        rec.day_of_week = detail::optional_number(row, c_dow);
        rec.weekend = detail::optional_number(row, c_wknd);
        rec.month = detail::optional_number(row, c_month);
        rec.subtype = detail::optional_string(row, c_subtype);
        rec.affected_lanes = detail::optional_string(row, c_lanes);
        rec.direction = detail::optional_string(row, c_dir);
        rec.severity = detail::optional_number(row, c_sev);
        rec.incident_source = detail::optional_number(row, c_src);
        rec.unplanned = detail::optional_number(row, c_unpl);
        rec.avg_temperature = detail::optional_number(row, c_temp);
        rec.rainfall = detail::optional_number(row, c_rain);
        rec.public_holiday = detail::optional_number(row, c_hol);
        rec.sector_id = detail::optional_string(row, c_sector);
        rec.tz_name = detail::optional_string(row, c_tz);
        rec.section_id = detail::optional_string(row, c_sec);
        rec.section_class = detail::optional_string(row, c_secclass);
        rec.street_id = detail::optional_string(row, c_street);
        rec.intersection_id = detail::optional_string(row, c_inter);
        rec.section_speed = detail::optional_number(row, c_speed);
        rec.section_lanes = detail::optional_number(row, c_seclanes);
        rec.section_capacity = detail::optional_number(row, c_cap);
        rec.distance_from_cbd = detail::optional_number(row, c_cbd);
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<RoadSection> load_sections(const std::string& path) {
    const CsvTable t = read_csv(path);
    const int c_id = t.require_column("section_id");
    const int c_x = t.require_column("x");
    const int c_y = t.require_column("y");
    const int c_speed = t.require_column("speed_limit");
    const int c_lanes = t.require_column("lanes");
    const int c_cap = t.require_column("capacity");
    const int c_det = t.require_column("has_detectors");

    std::vector<RoadSection> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        RoadSection s;
        s.section_id = detail::optional_string(row, c_id);
        if (s.section_id.empty()) throw BadValue(r + 1, "section_id", "");
        const auto x = parse_double(detail::optional_string(row, c_x));
        const auto y = parse_double(detail::optional_string(row, c_y));
        if (!x || !std::isfinite(*x)) throw BadValue(r + 1, "x", detail::optional_string(row, c_x));
        if (!y || !std::isfinite(*y)) throw BadValue(r + 1, "y", detail::optional_string(row, c_y));
        s.x = *x;
        s.y = *y;
        s.speed_limit = detail::optional_number(row, c_speed);
        const auto lanes = parse_int(detail::optional_string(row, c_lanes));
        s.lanes = lanes ? static_cast<int>(*lanes) : 0;
        s.capacity = detail::optional_number(row, c_cap);
        const std::string det = detail::optional_string(row, c_det);
        s.has_detectors = (det == "1" || det == "true");
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<FlowObservation> load_flows(const std::string& path) {
    const CsvTable t = read_csv(path);
    const int c_id = t.require_column("section_id");
    const int c_bin = t.require_column("bin_start");
    const int c_flow = t.require_column("flow");

    std::vector<FlowObservation> out;
    out.reserve(t.rows.size());
    std::unordered_map<std::string, char> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        FlowObservation f;
        f.section_id = detail::optional_string(row, c_id);
        if (f.section_id.empty()) throw BadValue(r + 1, "section_id", "");
        const std::string bin_str = detail::optional_string(row, c_bin);
        const auto bin = parse_minute_time(bin_str);
        if (!bin || *bin % 15 != 0) throw BadValue(r + 1, "bin_start", bin_str);
        f.bin_start = *bin;
        const auto flow = parse_double(detail::optional_string(row, c_flow));
        if (!flow || *flow < 0.0) throw BadValue(r + 1, "flow", detail::optional_string(row, c_flow));
        f.flow = *flow;
        const std::string key = f.section_id + "@" + std::to_string(f.bin_start);
        if (!seen.emplace(key, 1).second) throw BadValue(r + 1, "bin_start", "duplicate " + bin_str);
        out.push_back(std::move(f));
    }
    return out;
}

// Keeps records with duration_min >= min_duration ("lower than" the cutoff is
// removed, so the boundary survives). Order preserved.
inline std::vector<IncidentRecord> filter_outliers(const std::vector<IncidentRecord>& records,
                                                   double min_duration = 5.0) {
    std::vector<IncidentRecord> out;
    out.reserve(records.size());
    for (const auto& r : records)
        if (r.duration_min >= min_duration) out.push_back(r);
    return out;
}

// ---------------------------------------------------------------------------
// Encoding into a FeatureMatrix
// ---------------------------------------------------------------------------

// Integer label codes in first-seen order. Stable: the same dictionary applied
// to unseen data maps unknown categories to MISSING.
class CategoryDict {
public:
    double encode_or_add(const std::string& s) {
        if (s.empty()) return missing();
        auto it = index_.find(s);
        if (it != index_.end()) return static_cast<double>(it->second);
        const int code = static_cast<int>(categories_.size());
        categories_.push_back(s);
        index_.emplace(s, code);
        return static_cast<double>(code);
    }

    double encode(const std::string& s) const {
        if (s.empty()) return missing();
        auto it = index_.find(s);
        return it == index_.end() ? missing() : static_cast<double>(it->second);
    }

    const std::string& decode(int code) const { return categories_.at(static_cast<std::size_t>(code)); }
    std::size_t size() const { return categories_.size(); }
    const std::vector<std::string>& categories() const { return categories_; }

    void assign(std::vector<std::string> cats) {
        categories_ = std::move(cats);
        index_.clear();
        for (std::size_t i = 0; i < categories_.size(); ++i)
            index_.emplace(categories_[i], static_cast<int>(i));
    }

private:
    std::vector<std::string> categories_;
    std::unordered_map<std::string, int> index_;
};

// The 26 baseline feature columns, in schema order.
inline const std::vector<ColumnSpec>& baseline_schema() {
    static const std::vector<ColumnSpec> schema = {
        {"x", ColumnKind::numeric},
        {"y", ColumnKind::numeric},
        {"hour_of_day", ColumnKind::numeric},
        {"peak_hour", ColumnKind::boolean},
        {"day_of_week", ColumnKind::numeric},
        {"weekend", ColumnKind::boolean},
        {"month", ColumnKind::numeric},
        {"subtype", ColumnKind::categorical},
        {"affected_lanes", ColumnKind::categorical},
        {"direction", ColumnKind::categorical},
        {"severity", ColumnKind::numeric},
        {"incident_source", ColumnKind::numeric},
        {"unplanned", ColumnKind::boolean},
        {"avg_temperature", ColumnKind::numeric},
        {"rainfall", ColumnKind::numeric},
        {"public_holiday", ColumnKind::boolean},
        {"sector_id", ColumnKind::categorical},
        {"tz_name", ColumnKind::categorical},
        {"section_id", ColumnKind::categorical},
        {"section_class", ColumnKind::categorical},
        {"street_id", ColumnKind::categorical},
        {"intersection_id", ColumnKind::categorical},
        {"section_speed", ColumnKind::numeric},
        {"section_lanes", ColumnKind::numeric},
        {"section_capacity", ColumnKind::numeric},
        {"distance_from_cbd", ColumnKind::numeric},
    };
    return schema;
}

// Maps IncidentRecords onto the baseline columns. Categorical dictionaries are
// learned on fit (first-seen order) and persist with the model.
class IncidentEncoder {
public:
    void fit(const std::vector<IncidentRecord>& records) {
        if (records.empty()) throw EmptyInput();
        dicts_.clear();
        for (const auto& col : baseline_schema())
            if (col.kind == ColumnKind::categorical) dicts_[col.name] = CategoryDict();
        for (const auto& r : records)
            for (auto& [name, dict] : dicts_) dict.encode_or_add(categorical_field(r, name));
        fitted_ = true;
    }

    FeatureMatrix transform(const std::vector<IncidentRecord>& records) const {
        if (records.empty()) throw EmptyInput();
        const auto& schema = baseline_schema();
        FeatureMatrix m = FeatureMatrix::zeros(records.size(), schema.size());
        m.schema = schema;
        m.target.resize(records.size());
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            for (std::size_t c = 0; c < schema.size(); ++c) m.at(i, c) = cell(r, schema[c]);
            m.target[i] = r.duration_min;
        }
        return m;
    }

    FeatureMatrix fit_transform(const std::vector<IncidentRecord>& records) {
        fit(records);
        return transform(records);
    }

    const CategoryDict& dict(const std::string& column) const { return dicts_.at(column); }
    bool fitted() const { return fitted_; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        for (const auto& [name, dict] : dicts_) j[name] = dict.categories();
        return j;
    }

    static IncidentEncoder from_json(const nlohmann::json& j) {
        IncidentEncoder e;
        for (auto it = j.begin(); it != j.end(); ++it) {
            CategoryDict d;
            d.assign(it.value().get<std::vector<std::string>>());
            e.dicts_[it.key()] = std::move(d);
        }
        e.fitted_ = true;
        return e;
    }

private:
    static std::string categorical_field(const IncidentRecord& r, const std::string& name) {
        if (name == "subtype") return r.subtype;
        if (name == "affected_lanes") return r.affected_lanes;
        if (name == "direction") return r.direction;
        if (name == "sector_id") return r.sector_id;
        if (name == "tz_name") return r.tz_name;
        if (name == "section_id") return r.section_id;
        if (name == "section_class") return r.section_class;
        if (name == "street_id") return r.street_id;
        if (name == "intersection_id") return r.intersection_id;
        throw Error("unknown categorical column: " + name);
    }

    double cell(const IncidentRecord& r, const ColumnSpec& col) const {
        if (col.kind == ColumnKind::categorical)
            return dicts_.at(col.name).encode(categorical_field(r, col.name));
        if (col.name == "x") return r.x;
        if (col.name == "y") return r.y;
        if (col.name == "hour_of_day") return r.hour_of_day;
        if (col.name == "peak_hour") return r.peak_hour;
        if (col.name == "day_of_week") return r.day_of_week;
        if (col.name == "weekend") return r.weekend;
        if (col.name == "month") return r.month;
        if (col.name == "severity") return r.severity;
        if (col.name == "incident_source") return r.incident_source;
        if (col.name == "unplanned") return r.unplanned;
        if (col.name == "avg_temperature") return r.avg_temperature;
        if (col.name == "rainfall") return r.rainfall;
        if (col.name == "public_holiday") return r.public_holiday;
        if (col.name == "section_speed") return r.section_speed;
        if (col.name == "section_lanes") return r.section_lanes;
        if (col.name == "section_capacity") return r.section_capacity;
        if (col.name == "distance_from_cbd") return r.distance_from_cbd;
        throw Error("unknown column: " + col.name);
    }

    std::map<std::string, CategoryDict> dicts_;
    bool fitted_ = false;
};

}  // namespace clearway
