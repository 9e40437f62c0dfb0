#pragma once

// Entry building over annotation time lines, Apriori frequent itemsets, and
// association rules (mined or written by hand).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "footlab/annotations.hpp"
#include "footlab/common.hpp"

namespace footlab {

using Items = std::vector<std::string>;  ///< sorted, unique

inline Items make_items(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

// ----------------------------------------------------------------- entries

enum class Scope { per_player, per_team, per_match };

inline std::string_view to_string(Scope s) {
    switch (s) {
        case Scope::per_player: return "per-player";
        case Scope::per_team: return "per-team";
        case Scope::per_match: return "per-match";
    }
    return "";
}

inline Scope parse_scope(std::string_view s) {
    if (s == "per-player") return Scope::per_player;
    if (s == "per-team") return Scope::per_team;
    if (s == "per-match") return Scope::per_match;
    throw ArgumentError("unknown scope '" + std::string(s) + "'");
}

enum class RowKind { episode = 0, activity = 1 };

/// One time-stamped item source: an episode (item = description) or an
/// activity label row (item = activity class).
struct AnnotationRow {
    std::string match_id;
    int half{1};
    std::string player;
    std::string team;
    double start_s{0};
    double end_s{0};
    std::string item;
    RowKind kind{RowKind::episode};
    std::int64_t id{0};
};

struct RowRef {
    RowKind kind{RowKind::episode};
    std::int64_t id{0};
    friend auto operator<=>(const RowRef&, const RowRef&) = default;
};

struct Entry {
    Items items;
    std::string match_id;
    int half{1};
    std::string scope_key;  ///< player, team, or empty for per-match
    double start_s{0};
    double end_s{0};
    std::vector<RowRef> sources;
};

/// Activity rows take their team from the roster when one is given.
inline std::vector<AnnotationRow> annotation_rows(const std::vector<Episode>& episodes,
                                                  const std::vector<ActivityLabelRow>& labels,
                                                  const MatchMeta* match = nullptr) {
    std::vector<AnnotationRow> out;
    out.reserve(episodes.size() + labels.size());
    for (const auto& e : episodes)
        out.push_back({e.match_id, e.half, e.player, e.team, e.start_s, e.end_s, e.description, RowKind::episode,
                       e.episode_id});
    for (const auto& l : labels) {
        std::string team;
        if (match)
            if (auto t = match->team_of(l.player)) team = *t;
        out.push_back({l.match_id, l.period_id, l.player, team, l.start_s, l.end_s, l.activity_class, RowKind::activity,
                       l.label_id});
    }
    return out;
}

/// Slides [t, t + window_s) in steps of step_s from the earliest start of
/// each (match, half, scope key) group. A row belongs to a window when
/// start < t + window_s and end >= t. Empty windows are skipped.
inline std::vector<Entry> build_entries(std::vector<AnnotationRow> rows, double window_s, double step_s, Scope scope) {
    if (!(window_s > 0)) throw ArgumentError("build_entries: window_s must be > 0");
    if (!(step_s > 0 && step_s <= window_s)) throw ArgumentError("build_entries: step_s must be in (0, window_s]");

    const auto key_of = [&](const AnnotationRow& r) -> const std::string& {
        static const std::string none;
        return scope == Scope::per_player ? r.player : scope == Scope::per_team ? r.team : none;
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const AnnotationRow& a, const AnnotationRow& b) {
        return std::tie(a.match_id, a.half, key_of(a), a.start_s) < std::tie(b.match_id, b.half, key_of(b), b.start_s);
    });

    std::vector<Entry> out;
    std::size_t g = 0;
    while (g < rows.size()) {
        std::size_t ge = g;
        double last_end = -std::numeric_limits<double>::infinity();
        while (ge < rows.size() && rows[ge].match_id == rows[g].match_id && rows[ge].half == rows[g].half &&
               key_of(rows[ge]) == key_of(rows[g])) {
            last_end = std::max(last_end, rows[ge].end_s);
            ++ge;
        }
        const double t0 = rows[g].start_s;
        std::vector<std::size_t> active;
        std::size_t next = g;
        for (long long k = 0;; ++k) {
            const double t = t0 + static_cast<double>(k) * step_s;
            if (t > last_end) break;
            while (next < ge && rows[next].start_s < t + window_s) active.push_back(next++);
            std::erase_if(active, [&](std::size_t i) { return rows[i].end_s < t; });
            if (active.empty()) continue;
            Entry e{{}, rows[g].match_id, rows[g].half, key_of(rows[g]), t, t + window_s, {}};
            std::vector<std::string> items;
            for (auto i : active) {
                items.push_back(rows[i].item);
                e.sources.push_back({rows[i].kind, rows[i].id});
            }
            e.items = make_items(std::move(items));
            std::sort(e.sources.begin(), e.sources.end());
            out.push_back(std::move(e));
        }
        g = ge;
    }
    return out;
}

// ----------------------------------------------------------------- apriori

struct Itemset {
    Items items;
    double support{0};
    std::size_t count{0};
};

namespace detail {
inline bool subset_of(const std::vector<std::uint32_t>& small, const std::vector<std::uint32_t>& big) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

inline bool items_order(const Items& a, const Items& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}
}  // namespace detail

/// Every itemset whose support (covering entries / all entries) is at least
/// min_support, sorted by size then lexicographically.
inline std::vector<Itemset> apriori(const std::vector<Entry>& entries, double min_support) {
    if (entries.empty()) throw ArgumentError("apriori: no entries");
    if (!(min_support > 0 && min_support <= 1)) throw ArgumentError("apriori: min_support must be in (0, 1]");

    std::map<std::string, std::uint32_t> code;
    for (const auto& e : entries)
        for (const auto& it : e.items) code.emplace(it, 0);
    std::vector<std::string> name;
    for (auto& [k, v] : code) {
        v = static_cast<std::uint32_t>(name.size());
        name.push_back(k);
    }
    std::vector<std::vector<std::uint32_t>> coded;
    coded.reserve(entries.size());
    for (const auto& e : entries) {
        std::vector<std::uint32_t> c;
        for (const auto& it : e.items) c.push_back(code.at(it));
        std::sort(c.begin(), c.end());
        c.erase(std::unique(c.begin(), c.end()), c.end());
        coded.push_back(std::move(c));
    }

    const double n = static_cast<double>(entries.size());
    const auto frequent = [&](std::size_t count) { return static_cast<double>(count) / n >= min_support; };
    std::vector<Itemset> out;
    const auto emit = [&](const std::vector<std::uint32_t>& c, std::size_t count) {
        Items items;
        for (auto i : c) items.push_back(name[i]);
        out.push_back({std::move(items), static_cast<double>(count) / n, count});
    };

    std::vector<std::size_t> single(name.size(), 0);
    for (const auto& c : coded)
        for (auto i : c) ++single[i];
    std::vector<std::vector<std::uint32_t>> level;
    for (std::uint32_t i = 0; i < name.size(); ++i)
        if (frequent(single[i])) {
            level.push_back({i});
            emit(level.back(), single[i]);
        }

    while (level.size() > 1) {
        std::set<std::vector<std::uint32_t>> known(level.begin(), level.end());
        std::vector<std::vector<std::uint32_t>> candidates;
        for (std::size_t a = 0; a < level.size(); ++a)
            for (std::size_t b = a + 1; b < level.size(); ++b) {
                const auto& x = level[a];
                const auto& y = level[b];
                if (!std::equal(x.begin(), x.end() - 1, y.begin())) break;  // level is sorted
                auto c = x;
                c.push_back(y.back());
                bool closed = true;
                for (std::size_t drop = 0; drop + 2 < c.size() && closed; ++drop) {
                    auto sub = c;
                    sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(drop));
                    closed = known.contains(sub);
                }
                if (closed) candidates.push_back(std::move(c));
            }
        std::vector<std::vector<std::uint32_t>> next;
        for (const auto& c : candidates) {
            std::size_t count = 0;
            for (const auto& e : coded) count += detail::subset_of(c, e);
            if (frequent(count)) {
                next.push_back(c);
                emit(c, count);
            }
        }
        level = std::move(next);
    }
    std::stable_sort(out.begin(), out.end(), [](const Itemset& a, const Itemset& b) {
        return detail::items_order(a.items, b.items);
    });
    return out;
}

// ------------------------------------------------------------------- rules

enum class RuleOrigin { mined, manual };
enum class RuleLevel { high, medium, low };

inline std::string_view to_string(RuleOrigin o) { return o == RuleOrigin::mined ? "mined" : "manual"; }
inline std::string_view to_string(RuleLevel l) {
    return l == RuleLevel::high ? "High" : l == RuleLevel::medium ? "Medium" : "Low";
}

inline RuleOrigin parse_rule_origin(std::string_view s) {
    if (s == "mined") return RuleOrigin::mined;
    if (s == "manual") return RuleOrigin::manual;
    throw FormatError("unknown rule origin '" + std::string(s) + "'");
}

inline std::optional<RuleLevel> parse_rule_level(std::string_view s) {
    std::string l(text::trim(s));
    for (auto& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (l == "high") return RuleLevel::high;
    if (l == "medium") return RuleLevel::medium;
    if (l == "low") return RuleLevel::low;
    return std::nullopt;
}

/// Numeric confidence used for thresholding manual rules.
struct LevelScale {
    double high{0.9}, medium{0.6}, low{0.3};
    double operator()(RuleLevel l) const { return l == RuleLevel::high ? high : l == RuleLevel::medium ? medium : low; }
};

struct AssociationRule {
    Items antecedent;
    Items consequent;
    std::optional<double> support;
    double confidence{0};
    std::optional<double> conviction;  ///< +inf when confidence is 1
    RuleOrigin origin{RuleOrigin::mined};
    std::optional<RuleLevel> level;

    std::string key() const { return text::join(antecedent, ";") + "->" + text::join(consequent, ";"); }
    friend bool operator==(const AssociationRule&, const AssociationRule&) = default;
};

inline double conviction_of(double support_consequent, double confidence) {
    if (confidence >= 1.0) return std::numeric_limits<double>::infinity();
    return (1.0 - support_consequent) / (1.0 - confidence);
}

/// Rules X -> Z\X for every frequent Z of size >= 2 and non-empty proper
/// subset X with confidence >= min_confidence. Sorted by confidence
/// descending, then antecedent, then consequent.
inline std::vector<AssociationRule> generate_rules(const std::vector<Itemset>& itemsets, const std::vector<Entry>& entries,
                                                   double min_confidence) {
    if (entries.empty()) throw ArgumentError("generate_rules: no entries");
    const double n = static_cast<double>(entries.size());
    std::map<Items, std::size_t> count;
    for (const auto& s : itemsets) {
        if (s.items.empty() || s.count > entries.size() || static_cast<double>(s.count) / n != s.support)
            throw ArgumentError("generate_rules: itemset {" + text::join(s.items, ", ") +
                                "} does not match the entry count");
        count[s.items] = s.count;
    }
    const auto lookup = [&](const Items& x) {
        const auto it = count.find(x);
        if (it == count.end())
            throw ArgumentError("generate_rules: subset {" + text::join(x, ", ") + "} missing from itemsets");
        return it->second;
    };

    std::vector<AssociationRule> out;
    for (const auto& z : itemsets) {
        const std::size_t m = z.items.size();
        if (m < 2) continue;
        if (m > 20) throw ArgumentError("generate_rules: itemset too large");
        for (std::uint32_t mask = 1; mask + 1 < (1u << m); ++mask) {
            AssociationRule r;
            for (std::size_t i = 0; i < m; ++i) ((mask >> i) & 1 ? r.antecedent : r.consequent).push_back(z.items[i]);
            const double conf = static_cast<double>(z.count) / static_cast<double>(lookup(r.antecedent));
            if (conf < min_confidence) continue;
            r.support = z.support;
            r.confidence = conf;
            r.conviction = conviction_of(static_cast<double>(lookup(r.consequent)) / n, conf);
            r.origin = RuleOrigin::mined;
            out.push_back(std::move(r));
        }
    }
    std::sort(out.begin(), out.end(), [](const AssociationRule& a, const AssociationRule& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return std::tie(a.antecedent, a.consequent) < std::tie(b.antecedent, b.consequent);
    });
    return out;
}

// ------------------------------------------------------------ manual rules

namespace detail {
inline Items parse_braced(std::string_view s, std::size_t line) {
    s = text::trim(s);
    if (s.size() < 2 || s.front() != '{' || s.back() != '}')
        throw FormatError("line " + std::to_string(line) + ": expected {items}");
    std::vector<std::string> v;
    for (const auto& it : text::split(s.substr(1, s.size() - 2), ','))
        if (!text::trim(it).empty()) v.emplace_back(text::trim(it));
    if (v.empty()) throw FormatError("line " + std::to_string(line) + ": empty item set");
    return make_items(std::move(v));
}

inline bool disjoint(const Items& a, const Items& b) {
    std::vector<std::string> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    return both.empty();
}
}  // namespace detail

/// One rule per line: `{A, B} -> {C} : High`. Blank lines and text after
/// `#` are ignored.
inline std::vector<AssociationRule> load_manual_rules(std::string_view doc, const LevelScale& scale = {}) {
    std::vector<AssociationRule> out;
    std::size_t line_no = 0;
    for (auto line : text::lines(doc)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = text::trim(line);
        if (line.empty()) continue;
        const auto arrow = line.find("->");
        const auto colon = line.rfind(':');
        if (arrow == std::string_view::npos || colon == std::string_view::npos || colon < arrow)
            throw FormatError("line " + std::to_string(line_no) + ": expected '{X} -> {Y} : Level'");
        AssociationRule r;
        r.origin = RuleOrigin::manual;
        r.antecedent = detail::parse_braced(line.substr(0, arrow), line_no);
        r.consequent = detail::parse_braced(line.substr(arrow + 2, colon - arrow - 2), line_no);
        const auto level = parse_rule_level(line.substr(colon + 1));
        if (!level)
            throw FormatError("line " + std::to_string(line_no) + ": unknown level '" +
                              std::string(text::trim(line.substr(colon + 1))) + "'");
        if (!detail::disjoint(r.antecedent, r.consequent))
            throw FormatError("line " + std::to_string(line_no) + ": antecedent and consequent overlap");
        r.level = level;
        r.confidence = scale(*level);
        out.push_back(std::move(r));
    }
    return out;
}

// -------------------------------------------------------------- rules file
//
// antecedent|consequent|support|confidence|conviction|origin|level
// Items are ';'-joined; absent metrics are empty; infinite conviction is
// "inf". Lines starting with '#' carry the mining parameters.

inline constexpr std::string_view kRulesHeader = "antecedent|consequent|support|confidence|conviction|origin|level";

inline std::string write_rules_file(const std::vector<AssociationRule>& rules,
                                    const std::vector<std::string>& comments = {}) {
    std::string out;
    for (const auto& c : comments) out += "# " + c + "\n";
    out += std::string(kRulesHeader) + "\n";
    const auto opt = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string{}; };
    for (const auto& r : rules) {
        out += text::join(r.antecedent, ";") + "|" + text::join(r.consequent, ";") + "|" + opt(r.support) + "|" +
               text::format_double(r.confidence) + "|" + opt(r.conviction) + "|" + std::string(to_string(r.origin)) +
               "|" + (r.level ? std::string(to_string(*r.level)) : std::string{}) + "\n";
    }
    return out;
}

inline std::vector<AssociationRule> read_rules_file(std::string_view doc) {
    std::vector<AssociationRule> out;
    bool header = false;
    std::size_t row = 0;
    for (const auto line : text::lines(doc)) {
        if (text::trim(line).empty() || line.front() == '#') continue;
        if (!header) {
            if (text::trim(line) != kRulesHeader) throw FormatError("rules file: unexpected header");
            header = true;
            continue;
        }
        ++row;
        const auto f = text::split(line, '|');
        if (f.size() != 7) throw RowError(row, "expected 7 fields");
        const auto items = [&](const std::string& s) {
            std::vector<std::string> v;
            for (const auto& it : text::split(s, ';'))
                if (!text::trim(it).empty()) v.emplace_back(text::trim(it));
            if (v.empty()) throw RowError(row, "empty item set");
            return make_items(std::move(v));
        };
        const auto num = [&](const std::string& s) -> std::optional<double> {
            if (text::trim(s).empty()) return std::nullopt;
            const auto v = text::parse_double(s);
            if (!v) throw RowError(row, "bad number '" + s + "'");
            return v;
        };
        AssociationRule r;
        r.antecedent = items(f[0]);
        r.consequent = items(f[1]);
        if (!detail::disjoint(r.antecedent, r.consequent)) throw RowError(row, "antecedent and consequent overlap");
        r.support = num(f[2]);
        const auto conf = num(f[3]);
        if (!conf) throw RowError(row, "missing confidence");
        r.confidence = *conf;
        r.conviction = num(f[4]);
        r.origin = parse_rule_origin(text::trim(f[5]));
        if (!text::trim(f[6]).empty()) {
            r.level = parse_rule_level(f[6]);
            if (!r.level) throw RowError(row, "unknown level '" + f[6] + "'");
        }
        out.push_back(std::move(r));
    }
    if (!header) throw FormatError("rules file: missing header");
    return out;
}

}  // namespace footlab
