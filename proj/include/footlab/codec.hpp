#pragma once

// JSON forms of matches, episodes, activity rows, device configs and
// thresholds. Field names match the store's export columns so an API
// response and an exported table describe a row with the same names.
//
// Readers collect every problem into a ValidationError instead of stopping
// at the first bad field.

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "footlab/annotations.hpp"
#include "footlab/common.hpp"
#include "footlab/detector.hpp"
#include "footlab/sensor.hpp"
#include "json.hpp"

namespace footlab {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

/// Typed access to one JSON object that records failures under a dotted path.
class FieldReader {
public:
    FieldReader(const Json& obj, std::string prefix, std::vector<ValidationError::Field>& errors)
        : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {
        if (!obj_.is_object() && !obj_.is_null()) fail_here("expected an object");
    }

    std::string path(std::string_view key) const { return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key); }
    bool has(std::string_view key) const { return obj_.is_object() && obj_.contains(key) && !obj_.at(key).is_null(); }
    void fail(std::string_view key, std::string message) { errors_.push_back({path(key), std::move(message)}); }

    template <class T>
    std::optional<T> get(std::string_view key) {
        if (!has(key)) return std::nullopt;
        const auto& v = obj_.at(key);
        if constexpr (std::is_same_v<T, std::string>) {
            if (v.is_string()) return v.get<std::string>();
            fail(key, "expected a string");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (v.is_boolean()) return v.get<bool>();
            fail(key, "expected a boolean");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (v.is_number()) return v.get<T>();
            fail(key, "expected a number");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) return v.get<T>();
            fail(key, "expected a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (v.is_number_integer()) return v.get<T>();
            fail(key, "expected an integer");
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            if (v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_string(); }))
                return v.get<std::vector<std::string>>();
            fail(key, "expected an array of strings");
        } else {
            static_assert(sizeof(T) == 0, "unsupported field type");
        }
        return std::nullopt;
    }

    template <class T>
    T get_or(std::string_view key, T fallback) {
        auto v = get<T>(key);
        return v ? std::move(*v) : std::move(fallback);
    }

    template <class T>
    std::optional<T> required(std::string_view key) {
        if (!has(key)) {
            fail(key, "required");
            return std::nullopt;
        }
        return get<T>(key);
    }

    /// Reader over an element nested under this object, e.g. "periods[2]".
    FieldReader nested(const Json& value, std::string_view sub) { return FieldReader(value, path(sub), errors_); }

    const Json& raw(std::string_view key) const { return obj_.at(key); }

    FieldReader child(std::string_view key) {
        static const Json empty = Json::object();
        return FieldReader(has(key) ? obj_.at(key) : empty, path(key), errors_);
    }

    /// Elements of an array field; records an error if present but not an array.
    const Json& array(std::string_view key) {
        static const Json empty = Json::array();
        if (!has(key)) return empty;
        if (!obj_.at(key).is_array()) {
            fail(key, "expected an array");
            return empty;
        }
        return obj_.at(key);
    }

    /// Records every key not in `known`.
    void reject_unknown(std::initializer_list<std::string_view> known) {
        if (!obj_.is_object()) return;
        for (const auto& [k, v] : obj_.items())
            if (std::find(known.begin(), known.end(), k) == known.end()) fail(k, "unknown key");
    }

private:
    void fail_here(std::string message) { errors_.push_back({prefix_.empty() ? "(root)" : prefix_, std::move(message)}); }

    const Json& obj_;
    std::string prefix_;
    std::vector<ValidationError::Field>& errors_;
};

inline void throw_if_any(std::vector<ValidationError::Field>& errors) {
    if (!errors.empty()) throw ValidationError(std::move(errors));
}

inline Json parse_json(std::string_view doc, std::string_view what) {
    try {
        return Json::parse(doc);
    } catch (const Json::parse_error& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

// ------------------------------------------------------------- thresholds

inline OrderedJson thresholds_to_json(const Thresholds& t) {
    OrderedJson j;
    const auto put = [&](const char* k, const std::optional<double>& v) { j[k] = v ? OrderedJson(*v) : OrderedJson(nullptr); };
    put("min_support", t.min_support);
    put("min_confidence", t.min_confidence);
    put("min_conviction", t.min_conviction);
    return j;
}

inline Thresholds read_thresholds(FieldReader r) {
    r.reject_unknown({"min_support", "min_confidence", "min_conviction"});
    Thresholds t{r.get<double>("min_support"), r.get<double>("min_confidence"), r.get<double>("min_conviction")};
    for (const auto& name : t.problems()) {
        r.fail(name, name == "min_conviction" ? "must be >= 0" : "must be in [0, 1]");
        if (name == "min_support") t.min_support.reset();
        if (name == "min_confidence") t.min_confidence.reset();
        if (name == "min_conviction") t.min_conviction.reset();
    }
    return t;
}

// ---------------------------------------------------------------- matches

inline OrderedJson match_to_json(const MatchMeta& m) {
    OrderedJson j;
    j["match_id"] = m.match_id;
    j["name"] = m.name;
    j["teams"] = m.teams;
    j["periods"] = OrderedJson::array();
    for (const auto& p : m.periods)
        j["periods"].push_back({{"period_id", p.period_id}, {"kickoff_ns", p.kickoff_wall_time.ns}, {"duration_s", p.duration_s}});
    j["players"] = OrderedJson::array();
    for (const auto& r : m.players)
        j["players"].push_back({{"player_id", r.player_id}, {"team", r.team}, {"shirt_number", r.shirt_number}});
    return j;
}

/// Periods take either "kickoff_ns" or a "kickoff" timestamp string.
inline MatchMeta read_match(FieldReader r) {
    MatchMeta m;
    r.reject_unknown({"match_id", "name", "teams", "periods", "players"});
    m.match_id = r.required<std::string>("match_id").value_or("");
    m.name = r.get_or<std::string>("name", "");
    m.teams = r.get_or<std::vector<std::string>>("teams", {});
    const auto& periods = r.array("periods");
    for (std::size_t i = 0; i < periods.size(); ++i) {
        auto p = r.nested(periods[i], "periods[" + std::to_string(i) + "]");
        p.reject_unknown({"period_id", "kickoff_ns", "kickoff", "duration_s"});
        PeriodClock c;
        c.period_id = p.get_or<int>("period_id", static_cast<int>(i) + 1);
        c.duration_s = p.get_or<double>("duration_s", c.duration_s);
        if (auto ns = p.get<std::int64_t>("kickoff_ns")) {
            c.kickoff_wall_time = WallTime{*ns};
        } else if (auto s = p.get<std::string>("kickoff")) {
            try {
                c.kickoff_wall_time = parse_wall_time(*s);
            } catch (const FormatError& e) {
                p.fail("kickoff", e.what());
            }
        } else {
            p.fail("kickoff_ns", "required");
        }
        m.periods.push_back(c);
    }
    const auto& players = r.array("players");
    for (std::size_t i = 0; i < players.size(); ++i) {
        auto p = r.nested(players[i], "players[" + std::to_string(i) + "]");
        p.reject_unknown({"player_id", "team", "shirt_number"});
        RosterEntry e;
        e.player_id = p.required<std::string>("player_id").value_or("");
        e.team = p.get_or<std::string>("team", "");
        e.shirt_number = p.get_or<int>("shirt_number", 0);
        m.players.push_back(std::move(e));
    }
    for (const auto& name : m.problems())
        if (name != "match_id" && name != "players") r.fail(name, "invalid");
    return m;
}

inline MatchMeta match_from_json(const Json& j) {
    std::vector<ValidationError::Field> errors;
    auto m = read_match(FieldReader(j, "", errors));
    throw_if_any(errors);
    return m;
}

// ------------------------------------------------------- episodes & rows

inline OrderedJson episode_to_json(const Episode& e) {
    OrderedJson j;
    j["match_id"] = e.match_id;
    j["episode_id"] = e.episode_id;
    j["team"] = e.team;
    j["start_s"] = e.start_s;
    j["end_s"] = e.end_s;
    j["half"] = e.half;
    j["description"] = e.description;
    j["tags"] = e.tags;
    j["player"] = e.player;
    j["notes"] = e.notes;
    return j;
}

inline Episode episode_from_json(const Json& j) {
    Episode e;
    e.match_id = j.at("match_id").get<std::string>();
    e.episode_id = j.at("episode_id").get<std::int64_t>();
    e.team = j.at("team").get<std::string>();
    e.start_s = j.at("start_s").get<double>();
    e.end_s = j.at("end_s").get<double>();
    e.half = j.at("half").get<int>();
    e.description = j.at("description").get<std::string>();
    e.tags = j.at("tags").get<std::vector<std::string>>();
    e.player = j.at("player").get<std::string>();
    e.notes = j.at("notes").get<std::string>();
    return e;
}

inline OrderedJson label_to_json(const ActivityLabelRow& l) {
    OrderedJson j;
    j["label_id"] = l.label_id;
    j["match_id"] = l.match_id;
    j["player"] = l.player;
    j["period_id"] = l.period_id;
    j["start_s"] = l.start_s;
    j["end_s"] = l.end_s;
    j["activity_class"] = l.activity_class;
    j["source"] = to_string(l.source);
    j["vote_fraction"] = l.vote_fraction ? OrderedJson(*l.vote_fraction) : OrderedJson(nullptr);
    return j;
}

inline ActivityLabelRow label_from_json(const Json& j) {
    ActivityLabelRow l;
    l.label_id = j.at("label_id").get<std::int64_t>();
    l.match_id = j.at("match_id").get<std::string>();
    l.player = j.at("player").get<std::string>();
    l.period_id = j.at("period_id").get<int>();
    l.start_s = j.at("start_s").get<double>();
    l.end_s = j.at("end_s").get<double>();
    l.activity_class = j.at("activity_class").get<std::string>();
    l.source = parse_label_source(j.at("source").get<std::string>());
    if (!j.at("vote_fraction").is_null()) l.vote_fraction = j.at("vote_fraction").get<double>();
    return l;
}

/// Events carry a "kind" of "episode" or "activity" ahead of the row fields.
template <class EventT>
OrderedJson event_to_json(const EventT& ev) {
    return std::visit(
        [](const auto& r) {
            OrderedJson j;
            if constexpr (std::is_same_v<std::decay_t<decltype(r)>, Episode>) {
                j["kind"] = "episode";
                j.update(episode_to_json(r));
            } else {
                j["kind"] = "activity";
                j.update(label_to_json(r));
            }
            return j;
        },
        ev);
}

inline std::string write_labels_csv(const std::vector<ActivityLabelRow>& rows) {
    std::string out = "label_id,match_id,player,period_id,start_s,end_s,activity_class,source,vote_fraction\n";
    for (const auto& l : rows)
        out += std::to_string(l.label_id) + "," + text::quote_field(l.match_id, ',') + "," +
               text::quote_field(l.player, ',') + "," + std::to_string(l.period_id) + "," +
               text::format_double(l.start_s) + "," + text::format_double(l.end_s) + "," +
               text::quote_field(l.activity_class, ',') + "," + std::string(to_string(l.source)) + "," +
               (l.vote_fraction ? text::format_double(*l.vote_fraction) : std::string{}) + "\n";
    return out;
}

// ----------------------------------------------------------------- devices

/// Defaults: columns named after the channels ("acc.x" ...), a "time"
/// column in seconds.
/// Epoch seconds with nanosecond digits; parse_wall_time reads it back.
inline std::string epoch_seconds(WallTime t) {
    const auto ns = t.ns;
    return std::to_string(ns / 1'000'000'000) + "." + std::to_string(1'000'000'000 + ns % 1'000'000'000).substr(1);
}

inline OrderedJson device_config_to_json(const DeviceConfig& d) {
    OrderedJson j;
    j["player_id"] = d.player_id;
    j["device_slot"] = d.device_slot;
    j["device_index"] = d.device_index;
    j["timestamp_column"] = d.timestamp_column;
    j["timestamp_kind"] = d.timestamp_kind == TimestampKind::seconds ? "seconds" : "sample_counter";
    j["sample_rate_hz"] = d.sample_rate_hz;
    j["power_on"] = epoch_seconds(d.power_on_wall_time);
    j["columns"] = OrderedJson::object();
    for (const auto& [col, ch] : d.column_map) j["columns"][col] = ch.name();
    return j;
}

inline DeviceConfig read_device_config(FieldReader r) {
    DeviceConfig d;
    d.player_id = r.required<std::string>("player_id").value_or("");
    d.device_slot = r.get_or<std::string>("device_slot", "");
    d.device_index = static_cast<std::uint16_t>(r.get_or<unsigned>("device_index", 0));
    d.timestamp_column = r.get_or<std::string>("timestamp_column", d.timestamp_column);
    const auto kind = r.get_or<std::string>("timestamp_kind", "seconds");
    if (kind == "seconds")
        d.timestamp_kind = TimestampKind::seconds;
    else if (kind == "sample_counter")
        d.timestamp_kind = TimestampKind::sample_counter;
    else
        r.fail("timestamp_kind", "must be seconds or sample_counter");
    d.sample_rate_hz = r.get_or<double>("sample_rate_hz", d.sample_rate_hz);
    if (!(d.sample_rate_hz > 0)) r.fail("sample_rate_hz", "must be > 0");
    if (auto s = r.required<std::string>("power_on")) {
        try {
            d.power_on_wall_time = parse_wall_time(*s);
        } catch (const FormatError& e) {
            r.fail("power_on", e.what());
        }
    }
    if (r.has("columns")) {
        auto cols = r.child("columns");
        if (r.raw("columns").is_object()) {
            for (const auto& [col, ch] : r.raw("columns").items()) {
                try {
                    d.column_map[col] = parse_channel(ch.is_string() ? ch.get<std::string>() : std::string{});
                } catch (const FormatError& e) {
                    cols.fail(col, e.what());
                }
            }
        }
    } else {
        for (int i = 0; i < kChannelsPerDevice; ++i) d.column_map[Channel::from_index(i).name()] = Channel::from_index(i);
    }
    try {
        d.validate();
    } catch (const std::exception& e) {
        r.fail("columns", e.what());
    }
    return d;
}

}  // namespace footlab
