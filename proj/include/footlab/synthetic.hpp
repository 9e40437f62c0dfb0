#pragma once

// Seeded synthetic match: roster, period clocks, per-device sensor files,
// ground-truth activity intervals and manual episodes.
//
// Each activity has its own stride frequency and amplitude, so windows are
// separable by their spectra. Episodes follow fixed co-occurrence habits
// (a shot happens while sprinting, a pass while running) and a small share
// of them is placed against those habits to give the detector work.

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "footlab/annotations.hpp"
#include "footlab/common.hpp"
#include "footlab/sensor.hpp"

namespace footlab {

struct ActivityProfile {
    std::string name;
    double stride_hz;
    double amplitude;  ///< m/s^2 around gravity
};

inline const std::vector<ActivityProfile>& synthetic_activities() {
    static const std::vector<ActivityProfile> v{
        {"Standing", 0.0, 0.08}, {"Walking", 1.8, 1.2}, {"Running", 2.8, 4.0}, {"Sprinting", 3.7, 8.0}};
    return v;
}

struct SyntheticMatchParams {
    std::string match_id{"DEMO"};
    int players{4};
    int devices_per_player{1};
    int periods{2};
    double period_s{300.0};
    double halftime_s{120.0};
    double preroll_s{60.0};
    double sample_rate_hz{25.0};
    double noise{0.15};
    double mislabel_rate{0.08};  ///< share of episodes placed against their habit
    std::uint64_t seed{1};
};

struct SyntheticDevice {
    DeviceConfig config;
    std::string file_name;
    std::string text;  ///< delimited table: time then the nine channel columns
};

struct SyntheticMatch {
    MatchMeta match;
    std::vector<SyntheticDevice> devices;
    std::vector<ActivityLabelRow> truth;  ///< period-relative intervals, source manual
    std::vector<Episode> episodes;
};

/// Ground-truth table: player,period_id,start_s,end_s,activity_class.
inline std::string write_truth_csv(const std::vector<ActivityLabelRow>& rows) {
    std::string out = "player,period_id,start_s,end_s,activity_class\n";
    for (const auto& r : rows)
        out += r.player + "," + std::to_string(r.period_id) + "," + text::format_double(r.start_s) + "," +
               text::format_double(r.end_s) + "," + r.activity_class + "\n";
    return out;
}

inline std::vector<ActivityLabelRow> read_truth_csv(std::string_view doc) {
    const auto ls = text::lines(doc);
    if (ls.empty() || text::trim(ls[0]) != "player,period_id,start_s,end_s,activity_class")
        throw FormatError("activity labels: bad header");
    std::vector<ActivityLabelRow> out;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        if (text::trim(ls[i]).empty()) continue;
        const auto c = text::split(ls[i], ',');
        if (c.size() != 5) throw RowError(i, "expected 5 fields");
        const auto period = text::parse_int(c[1]);
        const auto s = text::parse_double(c[2]), e = text::parse_double(c[3]);
        if (!period || !s || !e || !(*s < *e)) throw RowError(i, "bad interval");
        ActivityLabelRow r;
        r.player = std::string(text::trim(c[0]));
        r.period_id = static_cast<int>(*period);
        r.start_s = *s;
        r.end_s = *e;
        r.activity_class = std::string(text::trim(c[4]));
        r.source = LabelSource::manual;
        out.push_back(std::move(r));
    }
    return out;
}

namespace detail {

inline std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

/// FNV-1a; stable across standard libraries, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
    return h;
}

/// Box-Muller from two uniform draws; portable unlike std::normal_distribution.
inline double gaussian(std::mt19937_64& rng) {
    const double u = 1.0 - uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2 * std::numbers::pi * uniform_unit(rng));
}

struct Segment {
    int period;
    double start, end;
    std::size_t activity;
};

}  // namespace detail

inline SyntheticMatch generate_match(const SyntheticMatchParams& p) {
    if (p.players < 1 || p.devices_per_player < 1 || p.periods < 1 || !(p.period_s > 0) || !(p.sample_rate_hz > 0))
        throw ArgumentError("generate_match: bad parameters");
    const auto& acts = synthetic_activities();
    SyntheticMatch out;

    auto& m = out.match;
    m.match_id = p.match_id;
    m.name = "Home v Away";
    m.teams = {"Home", "Away"};
    const WallTime kickoff1 = parse_wall_time("2024-05-04T15:00:00Z");
    for (int k = 0; k < p.periods; ++k)
        m.periods.push_back({k + 1, kickoff1.plus_seconds(k * (p.period_s + p.halftime_s)), p.period_s});
    for (int i = 0; i < p.players; ++i)
        m.players.push_back({(i % 2 ? "A" : "H") + std::to_string(i + 1), i % 2 ? "Away" : "Home", i + 1});

    std::int64_t next_episode = 1;
    for (const auto& player : m.players) {
        std::mt19937_64 prng(mix_seed(p.seed, detail::fnv1a(player.player_id)));
        std::vector<detail::Segment> segs;
        for (int k = 1; k <= p.periods; ++k) {
            double t = 0;
            while (t < p.period_s) {
                const double len = std::min(p.period_s - t, 12.0 + 28.0 * uniform_unit(prng));
                segs.push_back({k, t, t + len, uniform_below(prng, acts.size())});
                t += len;
            }
        }
        for (const auto& s : segs)
            out.truth.push_back({0, m.match_id, player.player_id, s.period, s.start, s.end, acts[s.activity].name,
                                 LabelSource::manual, std::nullopt});

        // Episodes: Pass while Running, Shot while Sprinting, Reception just
        // before a Pass, Throw-in while Standing.
        for (const auto& s : segs) {
            const auto& a = acts[s.activity].name;
            if (s.end - s.start < 8.0 || uniform_unit(prng) < 0.3) continue;
            std::string desc;
            if (a == "Running") desc = "Pass";
            if (a == "Sprinting") desc = "Shot";
            if (a == "Standing") desc = "Throw-in";
            if (desc.empty()) continue;
            double at = s.start + 2.0 + (s.end - s.start - 6.0) * uniform_unit(prng);
            if (uniform_unit(prng) < p.mislabel_rate) {
                // Moved into the first long segment of another activity.
                for (const auto& o : segs)
                    if (o.period == s.period && o.activity != s.activity && o.end - o.start > 6.0) {
                        at = o.start + 2.0;
                        break;
                    }
            }
            if (desc == "Pass") {
                Episode r{next_episode++, m.match_id, player.team, std::max(0.0, at - 2.0), at, s.period,
                          "Reception", {}, player.player_id, ""};
                out.episodes.push_back(r);
            }
            out.episodes.push_back(
                {next_episode++, m.match_id, player.team, at, at + 1.5, s.period, desc, {}, player.player_id, ""});
        }

        // Sensor files: the device powers on before the first kickoff and
        // records through every break.
        const double fs = p.sample_rate_hz;
        const WallTime power_on = kickoff1.plus_seconds(-p.preroll_s);
        const double span = p.preroll_s + p.periods * p.period_s + (p.periods - 1) * p.halftime_s;
        const auto rows = static_cast<std::size_t>(std::floor(span * fs));
        for (int dev = 0; dev < p.devices_per_player; ++dev) {
            SyntheticDevice d;
            d.config.player_id = player.player_id;
            d.config.device_slot = dev == 0 ? "torso" : "limb" + std::to_string(dev);
            d.config.device_index = static_cast<std::uint16_t>(dev);
            for (int c = 0; c < kChannelsPerDevice; ++c) d.config.column_map[Channel::from_index(c).name()] = Channel::from_index(c);
            d.config.sample_rate_hz = fs;
            d.config.power_on_wall_time = power_on;
            d.file_name = player.player_id + "_dev" + std::to_string(dev) + ".csv";
            std::mt19937_64 srng(mix_seed(p.seed, detail::fnv1a(d.file_name)));
            const auto noise = [&](std::mt19937_64& g) { return p.noise * detail::gaussian(g); };
            const double phase = 2 * std::numbers::pi * uniform_unit(srng);
            std::string& txt = d.text;
            txt = "time";
            for (int c = 0; c < kChannelsPerDevice; ++c) txt += "," + Channel::from_index(c).name();
            txt += "\n";
            std::size_t seg_i = 0;
            for (std::size_t i = 0; i < rows; ++i) {
                const double t = static_cast<double>(i) / fs;
                const double wall = t - p.preroll_s;  // seconds since first kickoff
                std::size_t act = 0;
                const double period_span = p.period_s + p.halftime_s;
                const int k = wall < 0 ? 0 : static_cast<int>(wall / period_span) + 1;
                const double rel = wall - (k - 1) * period_span;
                if (k >= 1 && k <= p.periods && rel < p.period_s) {
                    while (seg_i < segs.size() && (segs[seg_i].period < k || (segs[seg_i].period == k && segs[seg_i].end <= rel)))
                        ++seg_i;
                    if (seg_i < segs.size()) act = segs[seg_i].activity;
                }
                const auto& pr = acts[act];
                const double w = 2 * std::numbers::pi * pr.stride_hz * t + phase;
                const double gain = pr.amplitude * (1.0 + 0.15 * dev);
                const double v[kChannelsPerDevice] = {
                    gain * std::sin(w) + noise(srng),
                    0.5 * gain * std::sin(2 * w) + noise(srng),
                    9.81 + gain * std::cos(w) + noise(srng),
                    0.4 * gain * std::cos(w) + noise(srng),
                    0.2 * gain * std::sin(w + 1.0) + noise(srng),
                    0.3 * gain * std::sin(0.5 * w) + noise(srng),
                    22.0 + 0.3 * gain * std::sin(w) + noise(srng),
                    -5.0 + noise(srng),
                    40.0 + 0.2 * gain * std::cos(w) + noise(srng)};
                txt += detail::fixed4(t);
                for (double x : v) txt += "," + detail::fixed4(x);
                txt += "\n";
            }
            out.devices.push_back(std::move(d));
        }
    }
    std::sort(out.episodes.begin(), out.episodes.end(),
              [](const Episode& a, const Episode& b) { return a.episode_id < b.episode_id; });
    return out;
}

}  // namespace footlab
