#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "clearway/csv.hpp"
#include "clearway/data_model.hpp"
#include "clearway/errors.hpp"
#include "clearway/rng.hpp"

namespace clearway {

// Seeded synthetic benchmark with a known duration mechanism. Durations are
// exp(planted effects + congestion terms + lognormal noise), rescaled toward
// the paper-shaped population (mean near 44.59 minutes, max capped at 719,
// a fixed count of sub-5-minute outliers, long right tail).
struct GeneratorConfig {
    int n_incidents = 574;
    int n_sections = 235;  // all detector-equipped; FSA width = 26 + 3*235
    std::uint64_t seed = 1;

    // Planted effect sizes in log-minutes per unit of the normalized feature.
    double effect_lanes = 1.1;
    double effect_hour = 0.8;
    double effect_section_speed = 0.5;
    double effect_distance_cbd = 0.12;
    double effect_flow = 0.0;   // global congestion ratio; plant negative
    double effect_local = 0.0;  // 500 m congestion blob; plant negative

    double noise_sigma = 0.25;       // lognormal duration noise
    double detector_sigma = 0.30;    // per-(section,bin) flow noise
    double congestion_sigma = 0.35;  // per-bin congestion spread
    double background_congestion = 1.0;  // city-field amplitude on non-sentinel sections
    double local_sigma = 0.5;        // blob strength spread
    double blob_radius_m = 500.0;
    int n_sentinels = 10;  // high-capacity sections whose congestion drives durations

    int outlier_count = 27;        // rows forced below 5 minutes
    double long_tail_share = 0.08; // rows given an extra multiplicative boost
    double mean_target = 44.59;
    double max_duration = 719.0;

    double box_size_m = 6000.0;
    int n_days = 7;
    bool flat_flows = false;  // constant flow per section (control runs)

    void validate() const {
        if (n_incidents < 1) throw InfeasibleConfig("n_incidents must be >= 1");
        if (n_sections < 1) throw InfeasibleConfig("n_sections must be >= 1");
        if (outlier_count < 0 || outlier_count > n_incidents)
            throw InfeasibleConfig("outlier_count must be in [0, n_incidents]");
        if (long_tail_share < 0.0 || long_tail_share > 1.0)
            throw InfeasibleConfig("long_tail_share must be in [0,1]");
        if (!(noise_sigma >= 0.0) || !(detector_sigma >= 0.0) || !(congestion_sigma >= 0.0) ||
            !(local_sigma >= 0.0))
            throw InfeasibleConfig("sigmas must be >= 0");
        if (!(blob_radius_m > 0.0)) throw InfeasibleConfig("blob_radius_m must be > 0");
        if (background_congestion < 0.0 || background_congestion > 1.0)
            throw InfeasibleConfig("background_congestion must be in [0,1]");
        if (n_sentinels < 1 || n_sentinels > n_sections)
            throw InfeasibleConfig("n_sentinels must be in [1, n_sections]");
        if (!(mean_target > 0.0) || !(max_duration > mean_target))
            throw InfeasibleConfig("need 0 < mean_target < max_duration");
        if (!(box_size_m > 0.0)) throw InfeasibleConfig("box_size_m must be > 0");
        if (n_days < 1) throw InfeasibleConfig("n_days must be >= 1");
    }

    static GeneratorConfig defaults() { return {}; }

    // Adds recoverable traffic-flow signal: durations respond to congestion at
    // the high-capacity sentinel sections (visible only through their own flow
    // columns) plus a 500 m blob around the incident location. The background
    // city field is silenced so vicinity averages cannot proxy either signal.
    static GeneratorConfig flow_signal() {
        GeneratorConfig c;
        c.effect_flow = -0.95;
        c.effect_local = -1.0;
        c.background_congestion = 0.0;
        c.detector_sigma = 0.2;
        c.local_sigma = 1.0;
        c.noise_sigma = 0.25;
        return c;
    }

    // Constant flow per section: no spatial or temporal signal at all.
    static GeneratorConfig flat() {
        GeneratorConfig c;
        c.flat_flows = true;
        return c;
    }
};

inline constexpr std::array<const char*, 6> kContributionNames = {
    "affected_lanes", "hour_of_day",  "section_speed",
    "distance_from_cbd", "flow_ratio", "local_flow"};

struct GroundTruth {
    std::vector<double> noiseless_duration;
    std::map<std::string, double> effects;             // name -> coefficient
    std::vector<std::string> ranking;                  // names by |coefficient| desc
    std::vector<std::array<double, 6>> contributions;  // log-space terms per incident
};

struct SynthBundle {
    std::vector<IncidentRecord> incidents;
    std::vector<RoadSection> sections;
    std::vector<FlowObservation> flows;
    GroundTruth truth;
};

namespace detail {

inline std::string padded_id(char prefix, int value, int width = 4) {
    std::string digits = std::to_string(value);
    while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
    return std::string(1, prefix) + digits;
}

// Diurnal shape in [0,1], peaking at the 08:00 and 17:00 rush hours.
inline double rush_shape(int hour) {
    auto bump = [&](double center) {
        const double d = static_cast<double>(hour) - center;
        return std::exp(-d * d / 8.0);
    };
    return std::min(1.0, bump(8.0) + bump(17.0));
}

// Hour response of clearance durations: morning incidents clear slower than
// evening ones, so the response is deliberately asymmetric between the two
// rush peaks (a binary peak flag cannot represent it).
inline double hour_response(int hour) {
    auto bump = [&](double center) {
        const double d = static_cast<double>(hour) - center;
        return std::exp(-d * d / 8.0);
    };
    return std::min(1.0, bump(8.0) + 0.45 * bump(17.0));
}

}  // namespace detail

inline SynthBundle generate(const GeneratorConfig& config) {
    config.validate();
    SynthBundle bundle;
    const MinuteTime base_time =
        static_cast<MinuteTime>(detail::days_from_civil(2023, 3, 6)) * 1440;  // a Monday
    const double center = config.box_size_m / 2.0;
    const double half_diagonal = center * std::sqrt(2.0);

    // --- road sections -----------------------------------------------------
    Rng rng_sections(Rng::derive(config.seed, 1));
    bundle.sections.reserve(static_cast<std::size_t>(config.n_sections));
    for (int s = 0; s < config.n_sections; ++s) {
        RoadSection sec;
        sec.section_id = detail::padded_id('S', s + 1);
        sec.x = rng_sections.uniform(0.0, config.box_size_m);
        sec.y = rng_sections.uniform(0.0, config.box_size_m);
        sec.speed_limit = static_cast<double>(40 + 10 * rng_sections.uniform_int(0, 6));
        sec.lanes = rng_sections.uniform_int(1, 6);
        sec.capacity = static_cast<double>(sec.lanes) * 450.0 * rng_sections.uniform(0.85, 1.15);
        sec.has_detectors = true;
        bundle.sections.push_back(std::move(sec));
    }

    // --- incident basics ---------------------------------------------------
    Rng rng_inc(Rng::derive(config.seed, 2));
    const std::array<const char*, 6> lane_cats = {"Null",    "1 lane",    "2 lanes",
                                                  "3 lanes", "All lanes", "breakdown"};
    const std::array<double, 6> lane_weights = {0.25, 0.30, 0.20, 0.10, 0.05, 0.10};
    const std::array<double, 6> lane_levels = {0.0, 1.0, 2.0, 3.0, 4.0, 0.5};
    const std::array<const char*, 5> subtypes = {"Crash", "Breakdown", "Hazard", "Debris",
                                                 "Vehicle Fire"};
    const std::array<double, 5> subtype_weights = {0.35, 0.30, 0.15, 0.10, 0.10};
    const std::array<const char*, 5> directions = {"N", "S", "E", "W", "Both"};

    std::array<double, 24> hour_weight{};
    double hour_total = 0.0;
    for (int h = 0; h < 24; ++h) {
        hour_weight[static_cast<std::size_t>(h)] = 1.0 + 2.5 * detail::rush_shape(h);
        hour_total += hour_weight[static_cast<std::size_t>(h)];
    }
    auto draw_weighted = [](Rng& rng, const double* weights, std::size_t n, double total) {
        double u = rng.uniform() * total;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            u -= weights[i];
            if (u < 0.0) return i;
        }
        return n - 1;
    };

    const int n = config.n_incidents;
    std::vector<int> lane_choice(static_cast<std::size_t>(n));
    std::vector<int> nearest_idx(static_cast<std::size_t>(n));
    bundle.incidents.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        IncidentRecord rec;
        rec.id = detail::padded_id('I', i + 1);
        rec.x = rng_inc.uniform(0.0, config.box_size_m);
        rec.y = rng_inc.uniform(0.0, config.box_size_m);
        const int day = rng_inc.uniform_int(0, config.n_days - 1);
        const int hour = static_cast<int>(
            draw_weighted(rng_inc, hour_weight.data(), hour_weight.size(), hour_total));
        const int minute = rng_inc.uniform_int(0, 59);
        rec.report_time = base_time + static_cast<MinuteTime>(day) * 1440 + hour * 60 + minute;

        rec.hour_of_day = hour;
        rec.peak_hour = detail::rush_shape(hour) >= 0.5 ? 1.0 : 0.0;
        const int dow = day_of_week(rec.report_time);
        rec.day_of_week = dow;
        rec.weekend = dow >= 6 ? 1.0 : 0.0;
        rec.month = month_of_year(rec.report_time);

        const std::size_t lane =
            draw_weighted(rng_inc, lane_weights.data(), lane_weights.size(), 1.0);
        lane_choice[static_cast<std::size_t>(i)] = static_cast<int>(lane);
        rec.affected_lanes = lane_cats[lane];
        rec.subtype = subtypes[draw_weighted(rng_inc, subtype_weights.data(),
                                             subtype_weights.size(), 1.0)];
        rec.direction = directions[static_cast<std::size_t>(rng_inc.uniform_int(0, 4))];
        rec.severity = rng_inc.uniform_int(1, 10);
        rec.incident_source = rng_inc.uniform_int(1, 3);
        rec.unplanned = rng_inc.bernoulli(0.85) ? 1.0 : 0.0;
        rec.avg_temperature = std::round(rng_inc.uniform(8.0, 35.0) * 10.0) / 10.0;
        rec.rainfall =
            rng_inc.bernoulli(0.7) ? 0.0 : std::round(rng_inc.uniform(0.2, 25.0) * 10.0) / 10.0;
        rec.public_holiday = rng_inc.bernoulli(0.03) ? 1.0 : 0.0;
        rec.sector_id = std::string("Z") + (rec.x > center ? (rec.y > center ? "1" : "2")
                                                           : (rec.y > center ? "3" : "4"));
        rec.tz_name = "AEST";

        int best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (int s = 0; s < config.n_sections; ++s) {
            const auto& sec = bundle.sections[static_cast<std::size_t>(s)];
            const double dx = sec.x - rec.x, dy = sec.y - rec.y;
            const double d2 = dx * dx + dy * dy;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = s;
            }
        }
        nearest_idx[static_cast<std::size_t>(i)] = best;
        const auto& near = bundle.sections[static_cast<std::size_t>(best)];
        rec.section_id = near.section_id;
        // Administrative road class mostly tracks the speed limit but not
        // perfectly, so the two columns stay distinguishable to a model.
        const std::array<const char*, 3> classes = {"M", "A", "B"};
        const int cls_draw = rng_inc.uniform_int(0, 14);
        rec.section_class =
            cls_draw < 3 ? classes[static_cast<std::size_t>(cls_draw)]
                         : (near.speed_limit >= 80.0 ? "M" : (near.speed_limit >= 60.0 ? "A" : "B"));
        rec.street_id = detail::padded_id('T', best % 40 + 1, 3);
        rec.intersection_id = detail::padded_id('X', best % 60 + 1, 3);
        rec.section_speed = near.speed_limit;
        rec.section_lanes = near.lanes;
        rec.section_capacity = near.capacity;
        const double dx = rec.x - center, dy = rec.y - center;
        rec.distance_from_cbd = std::sqrt(dx * dx + dy * dy) / 1000.0;
        bundle.incidents.push_back(std::move(rec));
    }

    // --- congestion fields -------------------------------------------------
    // Each section's per-bin congestion mixes a shared city-wide component
    // with per-section behaviour (sentinels follow their own field); each
    // incident additionally depresses flow within blob_radius_m of its
    // location during its report bin.
    const MinuteTime first_bin = base_time - 60;
    const MinuteTime last_bin = base_time + static_cast<MinuteTime>(config.n_days) * 1440;
    const std::size_t n_bins = static_cast<std::size_t>((last_bin - first_bin) / 15);

    // Sentinel sections: the highest-capacity detectors. Their congestion
    // moves together (one arterial-core state) and feeds the duration
    // mechanism below; the rest of the network mixes a shared city-wide
    // component with per-section idiosyncratic congestion, so averaging many
    // non-sentinel detectors never reconstructs the sentinel state.
    std::vector<int> sentinels(static_cast<std::size_t>(config.n_sections));
    for (int s = 0; s < config.n_sections; ++s) sentinels[static_cast<std::size_t>(s)] = s;
    std::sort(sentinels.begin(), sentinels.end(), [&](int a, int b) {
        const double ca = bundle.sections[static_cast<std::size_t>(a)].capacity;
        const double cb = bundle.sections[static_cast<std::size_t>(b)].capacity;
        if (ca != cb) return ca > cb;
        return a < b;
    });
    sentinels.resize(static_cast<std::size_t>(config.n_sentinels));
    std::vector<char> is_sentinel(static_cast<std::size_t>(config.n_sections), 0);
    for (int s : sentinels) is_sentinel[static_cast<std::size_t>(s)] = 1;

    Rng rng_field(Rng::derive(config.seed, 3));
    std::vector<double> shared_c(n_bins, 0.0);
    std::vector<double> sentinel_c(n_bins, 0.0);
    if (!config.flat_flows) {
        for (auto& v : shared_c)
            v = config.background_congestion * config.congestion_sigma * rng_field.normal();
        for (auto& v : sentinel_c) v = config.congestion_sigma * rng_field.normal();
    }
    auto section_log_c = [&](int s, std::size_t b) {
        return is_sentinel[static_cast<std::size_t>(s)] ? sentinel_c[b] : shared_c[b];
    };
    auto bin_index = [&](MinuteTime bin) {
        return static_cast<std::size_t>((bin - first_bin) / 15);
    };

    Rng rng_blob(Rng::derive(config.seed, 4));
    std::vector<double> log_local(static_cast<std::size_t>(n), 0.0);
    if (!config.flat_flows)
        for (auto& v : log_local) v = -std::abs(rng_blob.normal()) * config.local_sigma;

    // Per-(section,bin) blob multiplier, accumulated in log space.
    std::map<std::pair<int, std::size_t>, double> blob_log;
    if (!config.flat_flows) {
        for (int i = 0; i < n; ++i) {
            const auto& rec = bundle.incidents[static_cast<std::size_t>(i)];
            const std::size_t bin = bin_index(bin_of(rec.report_time));
            for (int s = 0; s < config.n_sections; ++s) {
                const auto& sec = bundle.sections[static_cast<std::size_t>(s)];
                const double dx = sec.x - rec.x, dy = sec.y - rec.y;
                if (std::sqrt(dx * dx + dy * dy) <= config.blob_radius_m)
                    blob_log[{s, bin}] += log_local[static_cast<std::size_t>(i)];
            }
        }
    }

    // --- flows --------------------------------------------------------------
    Rng rng_flow(Rng::derive(config.seed, 5));
    bundle.flows.reserve(static_cast<std::size_t>(config.n_sections) * n_bins);
    for (int s = 0; s < config.n_sections; ++s) {
        const auto& sec = bundle.sections[static_cast<std::size_t>(s)];
        const double base_flow = sec.capacity / 4.0 * 0.6 * rng_flow.uniform(0.9, 1.1);
        for (std::size_t b = 0; b < n_bins; ++b) {
            const MinuteTime bin_start = first_bin + static_cast<MinuteTime>(b) * 15;
            double flow = base_flow;
            if (!config.flat_flows) {
                flow *= 1.0 + 2.0 * detail::rush_shape(hour_of_day(bin_start));
                flow *= std::exp(section_log_c(s, b));
                const auto blob = blob_log.find({s, b});
                if (blob != blob_log.end()) flow *= std::exp(blob->second);
                flow *= std::exp(config.detector_sigma * rng_flow.normal());
            }
            bundle.flows.push_back({sec.section_id, bin_start, flow});
        }
    }

    // --- durations ----------------------------------------------------------
    GroundTruth& truth = bundle.truth;
    truth.effects = {{"affected_lanes", config.effect_lanes},
                     {"hour_of_day", config.effect_hour},
                     {"section_speed", config.effect_section_speed},
                     {"distance_from_cbd", config.effect_distance_cbd},
                     {"flow_ratio", config.effect_flow},
                     {"local_flow", config.effect_local}};
    for (const char* name : kContributionNames) truth.ranking.push_back(name);
    std::sort(truth.ranking.begin(), truth.ranking.end(),
              [&](const std::string& a, const std::string& b) {
                  const double ea = std::abs(truth.effects.at(a));
                  const double eb = std::abs(truth.effects.at(b));
                  if (ea != eb) return ea > eb;
                  return a < b;
              });

    Rng rng_noise(Rng::derive(config.seed, 6));
    std::vector<double> structural(static_cast<std::size_t>(n));
    std::vector<double> noisy(static_cast<std::size_t>(n));
    std::vector<double> tail_boost(static_cast<std::size_t>(n), 0.0);
    truth.contributions.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& rec = bundle.incidents[static_cast<std::size_t>(i)];
        const std::size_t bin = bin_index(bin_of(rec.report_time));
        // Congestion state at the report time: the sentinel sections' log flow
        // ratio, report bin vs one hour earlier.
        const double flow_ratio_term = sentinel_c[bin] - sentinel_c[bin - 4];

        std::array<double, 6>& contrib = truth.contributions[static_cast<std::size_t>(i)];
        contrib[0] = config.effect_lanes *
                     lane_levels[static_cast<std::size_t>(lane_choice[static_cast<std::size_t>(i)])] / 4.0;
        contrib[1] = config.effect_hour * detail::hour_response(static_cast<int>(rec.hour_of_day));
        contrib[2] = config.effect_section_speed * (rec.section_speed - 40.0) / 60.0;
        contrib[3] = config.effect_distance_cbd * rec.distance_from_cbd * 1000.0 / half_diagonal;
        contrib[4] = config.effect_flow * flow_ratio_term;
        contrib[5] = config.effect_local * log_local[static_cast<std::size_t>(i)];

        double log_duration = 0.0;
        for (double c : contrib) log_duration += c;
        structural[static_cast<std::size_t>(i)] = log_duration;

        noisy[static_cast<std::size_t>(i)] =
            log_duration + config.noise_sigma * rng_noise.normal();
        // Long-tail rows keep their structural ordering but are boosted into
        // the [100, max_duration] right tail.
        tail_boost[static_cast<std::size_t>(i)] =
            rng_noise.bernoulli(config.long_tail_share) ? rng_noise.log_uniform(3.0, 8.0) : 0.0;
    }

    // Scale so the clamped empirical mean hits mean_target; the clamp makes
    // this a fixed point rather than a single division.
    auto clamped_duration = [&](std::size_t i, double scale) {
        const double boost = tail_boost[i];
        const double d = scale * std::exp(noisy[i]) * (boost > 0.0 ? boost : 1.0);
        const double lo = boost > 0.0 ? 100.0 : 5.0;
        return std::min(std::max(d, lo), config.max_duration);
    };
    double scale = 1.0;
    {
        double mean_raw = 0.0;
        for (int i = 0; i < n; ++i)
            mean_raw += std::exp(noisy[static_cast<std::size_t>(i)]) *
                        (tail_boost[static_cast<std::size_t>(i)] > 0.0
                             ? tail_boost[static_cast<std::size_t>(i)]
                             : 1.0);
        scale = config.mean_target * static_cast<double>(n) / mean_raw;
        for (int iter = 0; iter < 8; ++iter) {
            double mean_now = 0.0;
            for (int i = 0; i < n; ++i) mean_now += clamped_duration(static_cast<std::size_t>(i), scale);
            mean_now /= static_cast<double>(n);
            scale *= config.mean_target / mean_now;
        }
    }

    truth.noiseless_duration.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        bundle.incidents[static_cast<std::size_t>(i)].duration_min =
            clamped_duration(static_cast<std::size_t>(i), scale);
        const double gt = scale * std::exp(structural[static_cast<std::size_t>(i)]);
        truth.noiseless_duration[static_cast<std::size_t>(i)] =
            std::min(std::max(gt, 5.0), config.max_duration);
    }

    // Exactly outlier_count rows forced below the 5-minute cutoff.
    Rng rng_outlier(Rng::derive(config.seed, 7));
    const std::vector<int> outlier_rows =
        rng_outlier.sample_without_replacement(n, config.outlier_count);
    for (int row : outlier_rows)
        bundle.incidents[static_cast<std::size_t>(row)].duration_min =
            rng_outlier.uniform(0.5, 4.9);

    return bundle;
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

inline void write_dataset(const SynthBundle& bundle, const std::string& directory) {
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec) throw IoFailure("cannot create " + directory + ": " + ec.message());
    const std::filesystem::path dir(directory);

    {
        CsvWriter w((dir / "incidents.csv").string());
        w.row({"id", "x", "y", "report_time", "duration_min", "hour_of_day", "peak_hour",
               "day_of_week", "weekend", "month", "subtype", "affected_lanes", "direction",
               "severity", "incident_source", "unplanned", "avg_temperature", "rainfall",
               "public_holiday", "sector_id", "tz_name", "section_id", "section_class",
               "street_id", "intersection_id", "section_speed", "section_lanes",
               "section_capacity", "distance_from_cbd"});
        for (const auto& r : bundle.incidents) {
            w.row({r.id, format_double(r.x), format_double(r.y), format_minute_time(r.report_time),
                   format_double(r.duration_min), format_double(r.hour_of_day),
                   format_double(r.peak_hour), format_double(r.day_of_week),
                   format_double(r.weekend), format_double(r.month), r.subtype, r.affected_lanes,
                   r.direction, format_double(r.severity), format_double(r.incident_source),
                   format_double(r.unplanned), format_double(r.avg_temperature),
                   format_double(r.rainfall), format_double(r.public_holiday), r.sector_id,
                   r.tz_name, r.section_id, r.section_class, r.street_id, r.intersection_id,
                   format_double(r.section_speed), format_double(r.section_lanes),
                   format_double(r.section_capacity), format_double(r.distance_from_cbd)});
        }
    }
    {
        CsvWriter w((dir / "sections.csv").string());
        w.row({"section_id", "x", "y", "speed_limit", "lanes", "capacity", "has_detectors"});
        for (const auto& s : bundle.sections)
            w.row({s.section_id, format_double(s.x), format_double(s.y),
                   format_double(s.speed_limit), std::to_string(s.lanes),
                   format_double(s.capacity), s.has_detectors ? "1" : "0"});
    }
    {
        CsvWriter w((dir / "flows.csv").string());
        w.row({"section_id", "bin_start", "flow"});
        for (const auto& f : bundle.flows)
            w.row({f.section_id, format_minute_time(f.bin_start), format_double(f.flow)});
    }
    {
        CsvWriter w((dir / "ground_truth.csv").string());
        std::vector<std::string> header{"id", "noiseless_duration"};
        for (const char* name : kContributionNames)
            header.push_back(std::string("contrib_") + name);
        w.row(header);
        for (std::size_t i = 0; i < bundle.incidents.size(); ++i) {
            std::vector<std::string> row{bundle.incidents[i].id,
                                         format_double(bundle.truth.noiseless_duration[i])};
            for (double c : bundle.truth.contributions[i]) row.push_back(format_double(c));
            w.row(row);
        }
    }
}

}  // namespace clearway
