#pragma once

// Rule-violation detection over entries, sensitivity thresholds, the warning
// record shared with the store and the service, and a seeded-error benchmark.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "footlab/common.hpp"
#include "footlab/rules.hpp"

namespace footlab {

struct Thresholds {
    std::optional<double> min_support;
    std::optional<double> min_confidence;
    std::optional<double> min_conviction;

    /// Names of out-of-range fields; empty when valid.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        const auto unit = [](const std::optional<double>& v) { return !v || (*v >= 0 && *v <= 1); };
        if (!unit(min_support)) out.push_back("min_support");
        if (!unit(min_confidence)) out.push_back("min_confidence");
        if (min_conviction && !(*min_conviction >= 0)) out.push_back("min_conviction");
        return out;
    }
    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

/// A rule passes when each present threshold is met; metrics the rule lacks
/// (support and conviction of manual rules) pass.
inline bool rule_passes(const AssociationRule& r, const Thresholds& t) {
    if (t.min_support && r.support && *r.support < *t.min_support) return false;
    if (t.min_confidence && r.confidence < *t.min_confidence) return false;
    if (t.min_conviction && r.conviction && *r.conviction < *t.min_conviction) return false;
    return true;
}

inline std::vector<AssociationRule> active_rules(const std::vector<AssociationRule>& rules, const Thresholds& t) {
    std::vector<AssociationRule> out;
    std::copy_if(rules.begin(), rules.end(), std::back_inserter(out), [&](const auto& r) { return rule_passes(r, t); });
    return out;
}

enum class WarningState { open, fixed, dismissed };

inline std::string_view to_string(WarningState s) {
    return s == WarningState::open ? "open" : s == WarningState::fixed ? "fixed" : "dismissed";
}

inline WarningState parse_warning_state(std::string_view s) {
    if (s == "open") return WarningState::open;
    if (s == "fixed") return WarningState::fixed;
    if (s == "dismissed") return WarningState::dismissed;
    throw ArgumentError("unknown warning state '" + std::string(s) + "'");
}

struct Warning {
    std::int64_t warning_id{0};
    std::string match_id;
    std::string scope_key;  ///< player (per-player scope), team, or empty
    int half{1};
    double start_s{0};
    double end_s{0};
    AssociationRule rule;
    Items present_items;
    Items missing_items;
    double severity{0};
    WarningState state{WarningState::open};
    std::vector<std::int64_t> episode_ids;  ///< episodes in the violating entries

    friend bool operator==(const Warning&, const Warning&) = default;
};

struct Violation {
    std::size_t entry;
    std::size_t rule;
};

/// (entry, rule) pairs with rule.X inside the entry and rule.Y not inside,
/// in entry order then rule order. `rules` are used as given.
inline std::vector<Violation> find_violations(const std::vector<Entry>& entries,
                                              const std::vector<AssociationRule>& rules) {
    std::vector<Violation> out;
    for (std::size_t e = 0; e < entries.size(); ++e) {
        const auto& items = entries[e].items;
        for (std::size_t r = 0; r < rules.size(); ++r) {
            const auto& rule = rules[r];
            if (std::includes(items.begin(), items.end(), rule.antecedent.begin(), rule.antecedent.end()) &&
                !std::includes(items.begin(), items.end(), rule.consequent.begin(), rule.consequent.end()))
                out.push_back({e, r});
        }
    }
    return out;
}

/// Violations of the same rule in the same (match, half, scope key) whose
/// intervals overlap or touch merge into one warning covering their union;
/// present_items is the intersection of the merged entries' items.
/// Output is sorted by start, then severity descending.
inline std::vector<Warning> detect(const std::vector<Entry>& entries, const std::vector<AssociationRule>& rules,
                                   const Thresholds& thresholds) {
    const auto active = active_rules(rules, thresholds);
    auto violations = find_violations(entries, active);
    std::stable_sort(violations.begin(), violations.end(), [&](const Violation& a, const Violation& b) {
        const auto& ea = entries[a.entry];
        const auto& eb = entries[b.entry];
        return std::tie(a.rule, ea.match_id, ea.half, ea.scope_key, ea.start_s) <
               std::tie(b.rule, eb.match_id, eb.half, eb.scope_key, eb.start_s);
    });

    std::vector<Warning> out;
    std::optional<std::size_t> cur_rule;
    for (const auto& v : violations) {
        const auto& e = entries[v.entry];
        if (!out.empty() && cur_rule == v.rule) {
            auto& w = out.back();
            if (w.match_id == e.match_id && w.half == e.half && w.scope_key == e.scope_key && e.start_s <= w.end_s) {
                w.end_s = std::max(w.end_s, e.end_s);
                Items both;
                std::set_intersection(w.present_items.begin(), w.present_items.end(), e.items.begin(), e.items.end(),
                                      std::back_inserter(both));
                w.present_items = std::move(both);
                for (const auto& s : e.sources)
                    if (s.kind == RowKind::episode) w.episode_ids.push_back(s.id);
                continue;
            }
        }
        Warning w;
        w.match_id = e.match_id;
        w.scope_key = e.scope_key;
        w.half = e.half;
        w.start_s = e.start_s;
        w.end_s = e.end_s;
        w.rule = active[v.rule];
        w.present_items = e.items;
        w.severity = w.rule.confidence;
        for (const auto& s : e.sources)
            if (s.kind == RowKind::episode) w.episode_ids.push_back(s.id);
        out.push_back(std::move(w));
        cur_rule = v.rule;
    }
    for (auto& w : out) {
        std::set_difference(w.rule.consequent.begin(), w.rule.consequent.end(), w.present_items.begin(),
                            w.present_items.end(), std::back_inserter(w.missing_items));
        std::sort(w.episode_ids.begin(), w.episode_ids.end());
        w.episode_ids.erase(std::unique(w.episode_ids.begin(), w.episode_ids.end()), w.episode_ids.end());
    }
    std::stable_sort(out.begin(), out.end(), [](const Warning& a, const Warning& b) {
        if (a.start_s != b.start_s) return a.start_s < b.start_s;
        if (a.severity != b.severity) return a.severity > b.severity;
        return std::tie(a.match_id, a.half, a.scope_key, a.end_s) < std::tie(b.match_id, b.half, b.scope_key, b.end_s);
    });
    return out;
}

// ------------------------------------------------------------ JSON form
//
// Field names are shared by the warnings export and the HTTP API.

inline nlohmann::ordered_json rule_to_json(const AssociationRule& r) {
    nlohmann::ordered_json j;
    j["antecedent"] = r.antecedent;
    j["consequent"] = r.consequent;
    j["support"] = r.support ? nlohmann::ordered_json(*r.support) : nlohmann::ordered_json(nullptr);
    j["confidence"] = r.confidence;
    if (!r.conviction)
        j["conviction"] = nullptr;
    else if (std::isinf(*r.conviction))
        j["conviction"] = "inf";
    else
        j["conviction"] = *r.conviction;
    j["origin"] = to_string(r.origin);
    j["level"] = r.level ? nlohmann::ordered_json(to_string(*r.level)) : nlohmann::ordered_json(nullptr);
    return j;
}

inline AssociationRule rule_from_json(const nlohmann::json& j) {
    AssociationRule r;
    r.antecedent = make_items(j.at("antecedent").get<std::vector<std::string>>());
    r.consequent = make_items(j.at("consequent").get<std::vector<std::string>>());
    if (!j.at("support").is_null()) r.support = j.at("support").get<double>();
    r.confidence = j.at("confidence").get<double>();
    const auto& c = j.at("conviction");
    if (c.is_string()) {
        if (c.get<std::string>() != "inf") throw FormatError("conviction must be a number or \"inf\"");
        r.conviction = std::numeric_limits<double>::infinity();
    } else if (!c.is_null()) {
        r.conviction = c.get<double>();
    }
    r.origin = parse_rule_origin(j.at("origin").get<std::string>());
    if (!j.at("level").is_null()) {
        r.level = parse_rule_level(j.at("level").get<std::string>());
        if (!r.level) throw FormatError("unknown rule level");
    }
    return r;
}

inline nlohmann::ordered_json warning_to_json(const Warning& w) {
    nlohmann::ordered_json j;
    j["warning_id"] = w.warning_id;
    j["match_id"] = w.match_id;
    j["player"] = w.scope_key;
    j["half"] = w.half;
    j["start_s"] = w.start_s;
    j["end_s"] = w.end_s;
    j["rule"] = rule_to_json(w.rule);
    j["present_items"] = w.present_items;
    j["missing_items"] = w.missing_items;
    j["severity"] = w.severity;
    j["state"] = to_string(w.state);
    j["episode_ids"] = w.episode_ids;
    return j;
}

inline Warning warning_from_json(const nlohmann::json& j) {
    Warning w;
    w.warning_id = j.at("warning_id").get<std::int64_t>();
    w.match_id = j.at("match_id").get<std::string>();
    w.scope_key = j.at("player").get<std::string>();
    w.half = j.at("half").get<int>();
    w.start_s = j.at("start_s").get<double>();
    w.end_s = j.at("end_s").get<double>();
    w.rule = rule_from_json(j.at("rule"));
    w.present_items = j.at("present_items").get<std::vector<std::string>>();
    w.missing_items = j.at("missing_items").get<std::vector<std::string>>();
    w.severity = j.at("severity").get<double>();
    w.state = parse_warning_state(j.at("state").get<std::string>());
    w.episode_ids = j.at("episode_ids").get<std::vector<std::int64_t>>();
    return w;
}

inline std::string write_warnings(const std::vector<Warning>& warnings) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& w : warnings) arr.push_back(warning_to_json(w));
    return arr.dump(2) + "\n";
}

inline std::vector<Warning> read_warnings(std::string_view doc) {
    std::vector<Warning> out;
    try {
        for (const auto& j : nlohmann::json::parse(doc)) out.push_back(warning_from_json(j));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("warnings: ") + e.what());
    }
    return out;
}

// ------------------------------------------------- seeded-error benchmark

struct CorpusParams {
    std::size_t entries{4000};
    std::size_t planted_rules{10};
    double min_rule_confidence{0.85};  ///< each planted rule's confidence is drawn from [this, 1]
    double antecedent_rate{0.12};      ///< chance an entry carries a given rule's antecedent
    std::size_t noise_items{40};
    double noise_rate{0.05};  ///< chance an entry carries a given noise item
    std::uint64_t seed{1};
};

struct PlantedRule {
    Items antecedent;
    Items consequent;
    double confidence{1};
};

struct SyntheticCorpus {
    std::vector<Entry> entries;
    std::vector<PlantedRule> rules;
};

/// Entries whose items come from planted X -> Y rules plus independent noise.
/// Every entry sits in its own non-overlapping interval.
inline SyntheticCorpus generate_corpus(const CorpusParams& p) {
    std::mt19937_64 rng(mix_seed(p.seed, 0));
    SyntheticCorpus c;
    for (std::size_t r = 0; r < p.planted_rules; ++r) {
        const std::string base = "R" + std::to_string(r + 1);
        PlantedRule pr;
        pr.antecedent = {base + "a"};
        if (r % 2 == 1) pr.antecedent.push_back(base + "b");
        pr.consequent = {base + "c"};
        pr.confidence = p.min_rule_confidence + (1.0 - p.min_rule_confidence) * uniform_unit(rng);
        c.rules.push_back(std::move(pr));
    }
    for (std::size_t i = 0; i < p.entries; ++i) {
        std::vector<std::string> items;
        for (const auto& r : c.rules) {
            if (uniform_unit(rng) >= p.antecedent_rate) continue;
            items.insert(items.end(), r.antecedent.begin(), r.antecedent.end());
            if (uniform_unit(rng) < r.confidence) items.insert(items.end(), r.consequent.begin(), r.consequent.end());
        }
        for (std::size_t k = 0; k < p.noise_items; ++k)
            if (uniform_unit(rng) < p.noise_rate) items.push_back("N" + std::to_string(k + 1));
        if (items.empty()) items.push_back("Idle");
        Entry e;
        e.items = make_items(std::move(items));
        e.match_id = "synthetic";
        e.scope_key = "E" + std::to_string(i);
        e.start_s = 0;
        e.end_s = 10;
        c.entries.push_back(std::move(e));
    }
    return c;
}

struct MiningParams {
    double min_support{0.02};
    double min_confidence{0.8};
};

struct BenchmarkResult {
    double recall{0};
    double false_positive_rate{0};
    bool recall_defined{true};  ///< false when nothing was corrupted (recall reported as 1)
    bool degenerate{false};     ///< no rules survived mining and thresholds
    std::string diagnostic;
    std::size_t corrupted{0}, corrupted_flagged{0};
    std::size_t clean{0}, clean_flagged{0};
    std::size_t rules_active{0};
};

/// Mines rules on the clean corpus, deletes the consequent of one complete
/// planted rule in a `corruption_rate` fraction of entries, and runs the
/// detector on the corrupted corpus. Recall counts corrupted entries that
/// raise any warning; the false-positive rate counts untouched entries that do.
inline BenchmarkResult seeded_error_benchmark(const CorpusParams& corpus_params, double corruption_rate,
                                              const Thresholds& thresholds, const MiningParams& mining = {}) {
    if (!(corruption_rate >= 0 && corruption_rate < 1))
        throw ArgumentError("seeded_error_benchmark: corruption_rate must be in [0, 1)");
    const auto corpus = generate_corpus(corpus_params);
    BenchmarkResult res;

    const auto itemsets = apriori(corpus.entries, mining.min_support);
    const auto rules = active_rules(generate_rules(itemsets, corpus.entries, mining.min_confidence), thresholds);
    res.rules_active = rules.size();

    // Eligible entries hold a planted rule's antecedent and consequent.
    std::vector<std::pair<std::size_t, std::size_t>> eligible;  // (entry, planted rule)
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
        const auto& items = corpus.entries[i].items;
        for (std::size_t r = 0; r < corpus.rules.size(); ++r) {
            const auto& pr = corpus.rules[r];
            if (std::includes(items.begin(), items.end(), pr.antecedent.begin(), pr.antecedent.end()) &&
                std::includes(items.begin(), items.end(), pr.consequent.begin(), pr.consequent.end())) {
                eligible.emplace_back(i, r);
                break;
            }
        }
    }
    std::mt19937_64 rng(mix_seed(corpus_params.seed, 1));
    for (std::size_t i = eligible.size(); i > 1; --i) std::swap(eligible[i - 1], eligible[uniform_below(rng, i)]);
    const auto wanted = static_cast<std::size_t>(
        std::llround(corruption_rate * static_cast<double>(corpus.entries.size())));
    eligible.resize(std::min(wanted, eligible.size()));

    auto corrupted = corpus.entries;
    std::vector<char> is_corrupt(corrupted.size(), 0);
    for (const auto& [i, r] : eligible) {
        auto& items = corrupted[i].items;
        for (const auto& y : corpus.rules[r].consequent) std::erase(items, y);
        if (items.empty()) items.push_back("Idle");
        is_corrupt[i] = 1;
    }

    std::vector<char> flagged(corrupted.size(), 0);
    for (const auto& v : find_violations(corrupted, rules)) flagged[v.entry] = 1;
    for (std::size_t i = 0; i < corrupted.size(); ++i) {
        if (is_corrupt[i]) {
            ++res.corrupted;
            res.corrupted_flagged += flagged[i];
        } else {
            ++res.clean;
            res.clean_flagged += flagged[i];
        }
    }
    res.false_positive_rate = res.clean ? static_cast<double>(res.clean_flagged) / static_cast<double>(res.clean) : 0.0;
    if (res.corrupted == 0) {
        res.recall = 1.0;
        res.recall_defined = false;
        res.diagnostic = "no entries corrupted; recall is vacuous";
    } else {
        res.recall = static_cast<double>(res.corrupted_flagged) / static_cast<double>(res.corrupted);
    }
    if (rules.empty()) {
        res.degenerate = true;
        res.diagnostic = "no rules recoverable at the given thresholds";
    }
    return res;
}

}  // namespace footlab
