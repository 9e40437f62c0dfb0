#pragma once

// Sensor ingestion: per-device delimited files -> nine-channel readings on
// the match clock.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "footlab/common.hpp"

namespace footlab {

enum class Sensor : std::uint8_t { acc = 0, gyro = 1, mag = 2 };
enum class Axis : std::uint8_t { x = 0, y = 1, z = 2 };

inline constexpr int kChannelsPerDevice = 9;
inline constexpr std::array<std::string_view, 3> kSensorNames{"acc", "gyro", "mag"};
inline constexpr std::array<std::string_view, 3> kAxisNames{"x", "y", "z"};

/// One of the nine channels of a single device, canonical index sensor*3+axis.
struct Channel {
    Sensor sensor{Sensor::acc};
    Axis axis{Axis::x};

    constexpr int index() const { return static_cast<int>(sensor) * 3 + static_cast<int>(axis); }
    static constexpr Channel from_index(int i) {
        return {static_cast<Sensor>(i / 3), static_cast<Axis>(i % 3)};
    }
    std::string name() const {
        return std::string(kSensorNames[static_cast<int>(sensor)]) + "." +
               std::string(kAxisNames[static_cast<int>(axis)]);
    }
    friend constexpr bool operator==(Channel, Channel) = default;
};

inline Channel parse_channel(std::string_view name) {
    const auto dot = name.find('.');
    if (dot != std::string_view::npos) {
        const auto s = name.substr(0, dot), a = name.substr(dot + 1);
        for (int si = 0; si < 3; ++si)
            for (int ai = 0; ai < 3; ++ai)
                if (s == kSensorNames[si] && a == kAxisNames[ai]) return Channel::from_index(si * 3 + ai);
    }
    throw FormatError("unknown channel '" + std::string(name) + "'");
}

/// Channel of a specific device slot of a player: device*9 + channel.
struct SignalId {
    std::uint16_t device{0};
    Channel channel{};

    constexpr int index() const { return device * kChannelsPerDevice + channel.index(); }
    static constexpr SignalId from_index(int i) {
        return {static_cast<std::uint16_t>(i / kChannelsPerDevice), Channel::from_index(i % kChannelsPerDevice)};
    }
    std::string name() const { return "dev" + std::to_string(device) + "." + channel.name(); }
    friend constexpr bool operator==(SignalId, SignalId) = default;
};

/// Absolute wall-clock time, integer nanoseconds since the Unix epoch.
/// Integer storage keeps device-to-match offsets exact.
struct WallTime {
    std::int64_t ns{0};

    double seconds_since(WallTime other) const { return static_cast<double>(ns - other.ns) / 1e9; }
    WallTime plus_seconds(double s) const { return {ns + static_cast<std::int64_t>(std::llround(s * 1e9))}; }
    friend constexpr auto operator<=>(WallTime, WallTime) = default;
};

namespace detail {
// Howard Hinnant's days_from_civil.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}
}  // namespace detail

/// Accepts "HH:MM:SS[.fff]" (time of day on day 0), "YYYY-MM-DD[T ]HH:MM:SS[.fff][Z]",
/// or plain seconds since the epoch.
inline WallTime parse_wall_time(std::string_view s) {
    s = text::trim(s);
    const auto bad = [&] { return FormatError("bad timestamp '" + std::string(s) + "'"); };
    if (s.find(':') == std::string_view::npos) {
        const auto v = text::parse_double(s);
        if (!v) throw bad();
        return WallTime{}.plus_seconds(*v);
    }
    if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
    std::int64_t days = 0;
    std::string_view clock = s;
    const auto tpos = s.find_first_of("T ");
    if (tpos != std::string_view::npos) {
        const auto date = text::split(s.substr(0, tpos), '-');
        if (date.size() != 3) throw bad();
        const auto y = text::parse_int(date[0]), m = text::parse_int(date[1]), d = text::parse_int(date[2]);
        if (!y || !m || !d || *m < 1 || *m > 12 || *d < 1 || *d > 31) throw bad();
        days = detail::days_from_civil(*y, static_cast<unsigned>(*m), static_cast<unsigned>(*d));
        clock = s.substr(tpos + 1);
    }
    const auto parts = text::split(clock, ':');
    if (parts.size() != 3) throw bad();
    const auto h = text::parse_int(parts[0]), mi = text::parse_int(parts[1]);
    if (!h || !mi || *h < 0 || *mi < 0 || *mi > 59) throw bad();
    // Split seconds so fractional digits are exact to the nanosecond.
    const auto& sec = parts[2];
    const auto dot = sec.find('.');
    const auto whole = text::parse_int(std::string_view(sec).substr(0, dot));
    if (!whole || *whole < 0 || *whole > 60) throw bad();
    std::int64_t frac_ns = 0;
    if (dot != std::string::npos) {
        const std::string digits = sec.substr(dot + 1);
        if (digits.empty() || digits.size() > 9 || !std::all_of(digits.begin(), digits.end(), ::isdigit)) throw bad();
        frac_ns = std::stoll(digits + std::string(9 - digits.size(), '0'));
    }
    const std::int64_t secs = days * 86400 + *h * 3600 + *mi * 60 + *whole;
    return WallTime{secs * 1'000'000'000LL + frac_ns};
}

enum class TimestampKind { seconds, sample_counter };

struct DeviceConfig {
    std::string player_id;
    std::string device_slot;   ///< body position label, e.g. "left_knee"
    std::uint16_t device_index{0};
    std::map<std::string, Channel> column_map;  ///< source column -> channel
    std::string timestamp_column{"time"};
    TimestampKind timestamp_kind{TimestampKind::seconds};
    double sample_rate_hz{120.0};
    WallTime power_on_wall_time{};

    /// Throws FormatError naming the first uncovered or doubled channel.
    void validate() const {
        if (!(sample_rate_hz > 0)) throw ArgumentError("sample_rate_hz must be > 0");
        std::array<int, kChannelsPerDevice> hits{};
        for (const auto& [col, ch] : column_map) ++hits[ch.index()];
        for (int i = 0; i < kChannelsPerDevice; ++i) {
            if (hits[i] == 0) throw FormatError("missing channel " + Channel::from_index(i).name());
            if (hits[i] > 1) throw FormatError("duplicate channel " + Channel::from_index(i).name());
        }
    }
};

struct PeriodClock {
    int period_id{1};
    WallTime kickoff_wall_time{};
    double duration_s{45 * 60.0};
    friend bool operator==(const PeriodClock&, const PeriodClock&) = default;
};

struct RawReading {
    double device_relative_t{0};
    Channel channel{};
    double value{0};
};

struct SensorReading {
    std::string player_id;
    int period_id{1};
    double t{0};  ///< seconds relative to the period kickoff
    SignalId signal{};
    double value{0};
};

/// Parses one device's delimited table. Unmapped columns are ignored.
inline std::vector<RawReading> parse_sensor_file(std::string_view raw, const DeviceConfig& config) {
    config.validate();
    const auto all = text::lines(raw);
    std::size_t first = 0;
    while (first < all.size() && text::trim(all[first]).empty()) ++first;
    if (first == all.size()) throw FormatError("empty sensor file");

    const char delim = text::detect_delimiter(all[first]);
    const auto header = text::split(all[first], delim);
    const auto column_of = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (text::trim(header[i]) == name) return i;
        throw FormatError("missing column " + name);
    };
    const std::size_t ts_col = column_of(config.timestamp_column);
    std::array<std::size_t, kChannelsPerDevice> col_for{};
    for (const auto& [name, ch] : config.column_map) col_for[ch.index()] = column_of(name);

    std::vector<RawReading> out;
    out.reserve((all.size() - first) * kChannelsPerDevice);
    double prev_t = -std::numeric_limits<double>::infinity();
    std::size_t row = 0;
    for (std::size_t li = first + 1; li < all.size(); ++li) {
        if (text::trim(all[li]).empty()) continue;
        ++row;
        const auto cells = text::split(all[li], delim);
        const auto cell = [&](std::size_t c) -> double {
            if (c >= cells.size()) throw RowError(row, "too few columns");
            const auto v = text::parse_double(cells[c]);
            if (!v || !std::isfinite(*v)) throw RowError(row, "non-numeric cell '" + cells[c] + "' in column " + header[c]);
            return *v;
        };
        double t = cell(ts_col);
        if (config.timestamp_kind == TimestampKind::sample_counter) t /= config.sample_rate_hz;
        if (!(t > prev_t)) throw RowError(row, "timestamps not strictly increasing");
        prev_t = t;
        for (int ch = 0; ch < kChannelsPerDevice; ++ch)
            out.push_back({t, Channel::from_index(ch), cell(col_for[ch])});
    }
    if (row == 0) throw FormatError("sensor file has no data rows");
    return out;
}

struct SyncResult {
    std::vector<SensorReading> readings;
    std::size_t dropped_preroll{0};  ///< before first kickoff minus pre-roll
    std::size_t dropped_gap{0};      ///< between a period end and the next kickoff
    std::size_t dropped_after{0};    ///< after the last period end

    std::size_t dropped() const { return dropped_preroll + dropped_gap + dropped_after; }
};

/// Maps device-relative times onto the match clock. Each reading lands in
/// the period [kickoff, kickoff + duration) containing it; readings up to
/// `preroll_s` before the first kickoff belong to period 1 with negative t.
inline SyncResult synchronize(const std::vector<RawReading>& raw, const DeviceConfig& config,
                              const std::vector<PeriodClock>& clocks, double preroll_s = 600.0) {
    if (clocks.empty()) throw ArgumentError("synchronize: no period clocks");
    for (std::size_t i = 0; i < clocks.size(); ++i) {
        if (!(clocks[i].duration_s > 0)) throw ArgumentError("period duration must be > 0");
        if (i > 0 && clocks[i].kickoff_wall_time <
                         clocks[i - 1].kickoff_wall_time.plus_seconds(clocks[i - 1].duration_s))
            throw ArgumentError("periods overlap or are out of order");
    }
    // offset_i = power_on - kickoff_i, exact in integer nanoseconds.
    std::vector<double> offset(clocks.size());
    for (std::size_t i = 0; i < clocks.size(); ++i)
        offset[i] = config.power_on_wall_time.seconds_since(clocks[i].kickoff_wall_time);

    SyncResult res;
    res.readings.reserve(raw.size());
    for (const auto& r : raw) {
        const double t0 = offset[0] + r.device_relative_t;
        if (t0 < 0) {
            if (t0 >= -preroll_s) {
                res.readings.push_back({config.player_id, clocks[0].period_id, t0,
                                        SignalId{config.device_index, r.channel}, r.value});
            } else {
                ++res.dropped_preroll;
            }
            continue;
        }
        bool placed = false, before_next = false;
        for (std::size_t i = 0; i < clocks.size(); ++i) {
            const double t = offset[i] + r.device_relative_t;
            if (t < 0) {
                before_next = true;
                break;
            }
            if (t < clocks[i].duration_s) {
                res.readings.push_back({config.player_id, clocks[i].period_id, t,
                                        SignalId{config.device_index, r.channel}, r.value});
                placed = true;
                break;
            }
        }
        if (!placed) ++(before_next ? res.dropped_gap : res.dropped_after);
    }
    return res;
}

}  // namespace footlab
