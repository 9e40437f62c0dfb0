#pragma once

// Annotation records: match metadata, manually annotated episodes, and
// activity label rows derived from predictions.
//
// TIME CONVENTION. Every stored time (episode start/end, activity label
// start/end) is in seconds relative to the kickoff of its own period, and
// every row carries that period explicitly (Episode::half,
// ActivityLabelRow::period_id). Episode files whose clock runs across the
// whole match are converted with to_period_relative() before storage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "footlab/common.hpp"
#include "footlab/forest.hpp"
#include "footlab/sensor.hpp"

namespace footlab {

struct RosterEntry {
    std::string player_id;
    std::string team;
    int shirt_number{0};
    friend bool operator==(const RosterEntry&, const RosterEntry&) = default;
};

struct MatchMeta {
    std::string match_id;
    std::string name;
    std::vector<std::string> teams;
    std::vector<PeriodClock> periods;
    std::vector<RosterEntry> players;

    /// Empty when valid; otherwise one entry per failing field.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (match_id.empty()) out.push_back("match_id");
        for (std::size_t i = 0; i < periods.size(); ++i) {
            const auto& p = periods[i];
            if (p.period_id < 1 || !(p.duration_s > 0) ||
                (i > 0 && (p.period_id <= periods[i - 1].period_id ||
                           p.kickoff_wall_time < periods[i - 1].kickoff_wall_time.plus_seconds(periods[i - 1].duration_s)))) {
                out.push_back("periods");
                break;
            }
        }
        for (const auto& r : players)
            if (r.player_id.empty()) {
                out.push_back("players");
                break;
            }
        return out;
    }

    std::optional<std::string> team_of(std::string_view player) const {
        for (const auto& r : players)
            if (r.player_id == player) return r.team;
        return std::nullopt;
    }
    friend bool operator==(const MatchMeta&, const MatchMeta&) = default;
};

struct Episode {
    std::int64_t episode_id{0};
    std::string match_id;
    std::string team;
    double start_s{0};
    double end_s{0};
    int half{1};
    std::string description;
    std::vector<std::string> tags;
    std::string player;
    std::string notes;
    friend bool operator==(const Episode&, const Episode&) = default;
};

enum class LabelSource { sensor, manual };

inline std::string_view to_string(LabelSource s) { return s == LabelSource::sensor ? "sensor" : "manual"; }

inline LabelSource parse_label_source(std::string_view s) {
    if (s == "sensor") return LabelSource::sensor;
    if (s == "manual") return LabelSource::manual;
    throw FormatError("unknown label source '" + std::string(s) + "'");
}

struct ActivityLabelRow {
    std::int64_t label_id{0};
    std::string match_id;
    std::string player;
    int period_id{1};
    double start_s{0};
    double end_s{0};
    std::string activity_class;
    LabelSource source{LabelSource::sensor};
    std::optional<double> vote_fraction;
    friend bool operator==(const ActivityLabelRow&, const ActivityLabelRow&) = default;
};

// ------------------------------------------------------------ episode file

inline constexpr std::array<std::string_view, 10> kEpisodeColumns{
    "Episode", "Match", "Team", "Start", "End", "Half", "Description", "Tags", "Player", "Notes"};

/// "minutes:seconds" -> seconds. Minutes may exceed 59; seconds take one or
/// two digits below 60 with an optional fraction ("1:7" is 67 s).
inline std::optional<double> parse_clock(std::string_view tok) {
    tok = text::trim(tok);
    const auto colon = tok.find(':');
    if (colon == std::string_view::npos || colon == 0) return std::nullopt;
    const auto mm = tok.substr(0, colon), ss = tok.substr(colon + 1);
    if (!std::all_of(mm.begin(), mm.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    const auto dot = ss.find('.');
    const auto whole = ss.substr(0, dot);
    if (whole.empty() || whole.size() > 2 ||
        !std::all_of(whole.begin(), whole.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return std::nullopt;
    if (dot != std::string_view::npos) {
        const auto frac = ss.substr(dot + 1);
        if (frac.empty() || !std::all_of(frac.begin(), frac.end(), [](char c) { return c >= '0' && c <= '9'; }))
            return std::nullopt;
    }
    const auto m = text::parse_int(mm);
    const auto s = text::parse_double(ss);
    if (!m || !s || *s >= 60) return std::nullopt;
    return static_cast<double>(*m) * 60.0 + *s;
}

inline std::string format_clock(double seconds) {
    const auto m = static_cast<long long>(std::floor(seconds / 60.0));
    const double s = seconds - static_cast<double>(m) * 60.0;
    std::string sec = text::format_double(s);
    const auto dot = sec.find('.');
    if ((dot == std::string::npos ? sec.size() : dot) < 2) sec = "0" + sec;
    return std::to_string(m) + ":" + sec;
}

/// Parses an episode table (comma separated, optional double quotes).
/// Columns are matched by name and may appear in any order.
inline std::vector<Episode> parse_episode_file(std::string_view raw) {
    const auto all = text::lines(raw);
    std::size_t first = 0;
    while (first < all.size() && text::trim(all[first]).empty()) ++first;
    if (first == all.size()) throw FormatError("empty episode file");
    const auto header = text::split_quoted(all[first], ',');
    std::array<std::size_t, kEpisodeColumns.size()> col{};
    for (std::size_t k = 0; k < kEpisodeColumns.size(); ++k) {
        const auto it = std::find_if(header.begin(), header.end(),
                                     [&](const std::string& h) { return text::trim(h) == kEpisodeColumns[k]; });
        if (it == header.end()) throw FormatError("missing field " + std::string(kEpisodeColumns[k]));
        col[k] = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<Episode> out;
    std::size_t row = 0;
    for (std::size_t li = first + 1; li < all.size(); ++li) {
        if (text::trim(all[li]).empty()) continue;
        ++row;
        const auto cells = text::split_quoted(all[li], ',');
        const auto cell = [&](std::size_t k) -> std::string {
            return col[k] < cells.size() ? std::string(text::trim(cells[col[k]])) : std::string{};
        };
        const auto required = [&](std::size_t k) {
            auto v = cell(k);
            if (v.empty()) throw FormatError("row " + std::to_string(row) + ": missing field " + std::string(kEpisodeColumns[k]));
            return v;
        };
        const auto clock = [&](std::size_t k) {
            const auto tok = required(k);
            const auto v = parse_clock(tok);
            if (!v) throw RowError(row, "bad time '" + tok + "' in " + std::string(kEpisodeColumns[k]));
            return *v;
        };
        Episode e;
        const auto id = text::parse_int(required(0));
        if (!id) throw RowError(row, "bad episode id '" + cell(0) + "'");
        e.episode_id = *id;
        e.match_id = required(1);
        e.team = cell(2);
        e.start_s = clock(3);
        e.end_s = clock(4);
        const auto half = text::parse_int(required(5));
        if (!half || *half < 1) throw RowError(row, "bad half '" + cell(5) + "'");
        e.half = static_cast<int>(*half);
        e.description = required(6);
        for (const auto& t : text::split(cell(7), ';'))
            if (!text::trim(t).empty()) e.tags.emplace_back(text::trim(t));
        e.player = cell(8);
        e.notes = cell(9);
        if (e.start_s > e.end_s) throw RowError(row, "Start after End");
        out.push_back(std::move(e));
    }
    return out;
}

inline std::string write_episode_file(const std::vector<Episode>& episodes) {
    std::string out;
    for (std::size_t k = 0; k < kEpisodeColumns.size(); ++k) out += (k ? "," : "") + std::string(kEpisodeColumns[k]);
    out += "\n";
    for (const auto& e : episodes) {
        const std::vector<std::string> cells{std::to_string(e.episode_id), e.match_id, e.team,
                                             format_clock(e.start_s), format_clock(e.end_s), std::to_string(e.half),
                                             e.description, text::join(e.tags, ";"), e.player, e.notes};
        for (std::size_t k = 0; k < cells.size(); ++k) out += (k ? "," : "") + text::quote_field(cells[k], ',');
        out += "\n";
    }
    return out;
}

enum class EpisodeClock { period, match };

inline EpisodeClock parse_episode_clock(std::string_view s) {
    if (s == "period") return EpisodeClock::period;
    if (s == "match") return EpisodeClock::match;
    throw ArgumentError("unknown episode clock '" + std::string(s) + "'");
}

/// Converts match-clock episode times (second half starting at the first
/// half's duration, and so on) to period-relative times.
inline std::vector<Episode> to_period_relative(std::vector<Episode> episodes, const MatchMeta& match,
                                               EpisodeClock clock) {
    if (clock == EpisodeClock::period) return episodes;
    std::map<int, double> offset;
    double acc = 0;
    for (const auto& p : match.periods) {
        offset[p.period_id] = acc;
        acc += p.duration_s;
    }
    for (auto& e : episodes) {
        const auto it = offset.find(e.half);
        if (it == offset.end())
            throw ArgumentError("episode " + std::to_string(e.episode_id) + " refers to unknown half " +
                                std::to_string(e.half));
        e.start_s -= it->second;
        e.end_s -= it->second;
    }
    return episodes;
}

// --------------------------------------------------------- label merging

/// Merges consecutive same-class windows of each (player, period) into one
/// row. Windows merge when the next starts no later than the current row
/// ends. vote_fraction is the mean winning-class vote of the merged windows.
inline std::vector<ActivityLabelRow> merge_predictions(const std::string& match_id,
                                                       std::vector<ActivityPrediction> predictions) {
    std::stable_sort(predictions.begin(), predictions.end(), [](const auto& a, const auto& b) {
        return std::tie(a.player_id, a.period_id, a.window.start_t) < std::tie(b.player_id, b.period_id, b.window.start_t);
    });
    std::vector<ActivityLabelRow> out;
    double vote_sum = 0;
    std::size_t merged = 0;
    const auto close = [&] {
        if (merged) out.back().vote_fraction = vote_sum / static_cast<double>(merged);
    };
    for (const auto& p : predictions) {
        if (!(p.window.duration_s > 0)) throw ArgumentError("prediction window has no duration");
        const double start = p.window.start_t, end = p.window.start_t + p.window.duration_s;
        const double vote = p.class_index < p.vote_fractions.size() ? p.vote_fractions[p.class_index] : 1.0;
        if (!out.empty()) {
            auto& cur = out.back();
            if (cur.player == p.player_id && cur.period_id == p.period_id && cur.activity_class == p.predicted_class &&
                start <= cur.end_s + 1e-9) {
                cur.end_s = std::max(cur.end_s, end);
                vote_sum += vote;
                ++merged;
                continue;
            }
        }
        close();
        out.push_back({0, match_id, p.player_id, p.period_id, start, end, p.predicted_class, LabelSource::sensor, {}});
        vote_sum = vote;
        merged = 1;
    }
    close();
    return out;
}

}  // namespace footlab
