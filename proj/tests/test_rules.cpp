#include <gtest/gtest.h>

#include <map>
#include <random>

#include "footlab/rules.hpp"

using namespace footlab;

namespace {

AnnotationRow row(std::string item, double start, double end, std::string player = "P1", std::string team = "T1",
                  RowKind kind = RowKind::episode, std::int64_t id = 0) {
    return {"M1", 1, std::move(player), std::move(team), start, end, std::move(item), kind, id};
}

std::vector<Entry> entries_of(const std::vector<std::vector<std::string>>& sets) {
    std::vector<Entry> out;
    for (const auto& s : sets) {
        Entry e;
        e.items = make_items(s);
        e.end_s = 1;
        out.push_back(std::move(e));
    }
    return out;
}

// Brute-force oracle: support of every non-empty subset of the item universe.
std::map<Items, std::size_t> powerset_counts(const std::vector<Entry>& entries) {
    std::set<std::string> universe;
    for (const auto& e : entries) universe.insert(e.items.begin(), e.items.end());
    const std::vector<std::string> u(universe.begin(), universe.end());
    std::map<Items, std::size_t> out;
    for (std::uint32_t mask = 1; mask < (1u << u.size()); ++mask) {
        Items s;
        for (std::size_t i = 0; i < u.size(); ++i)
            if ((mask >> i) & 1) s.push_back(u[i]);
        std::size_t c = 0;
        for (const auto& e : entries) c += std::includes(e.items.begin(), e.items.end(), s.begin(), s.end());
        out[s] = c;
    }
    return out;
}

std::vector<Entry> random_corpus(std::mt19937_64& rng, std::size_t max_items, std::size_t max_entries) {
    const std::size_t items = 1 + uniform_below(rng, max_items);
    const std::size_t n = 1 + uniform_below(rng, max_entries);
    const double density = 0.2 + 0.6 * uniform_unit(rng);
    std::vector<std::vector<std::string>> sets;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> s;
        for (std::size_t k = 0; k < items; ++k)
            if (uniform_unit(rng) < density) s.push_back(std::string(1, char('A' + k)));
        if (s.empty()) s.push_back("A");
        sets.push_back(std::move(s));
    }
    return entries_of(sets);
}

}  // namespace

TEST(BuildEntries, OverlapWindowCollectsBothEpisodes) {
    const auto entries = build_entries({row("Pass", 0, 2), row("Reception", 3, 4)}, 10, 5, Scope::per_player);
    ASSERT_FALSE(entries.empty());
    EXPECT_EQ(entries[0].items, (Items{"Pass", "Reception"}));
    EXPECT_EQ(entries[0].start_s, 0);
    EXPECT_EQ(entries[0].end_s, 10);
    EXPECT_EQ(entries.size(), 1u);  // the window at t = 5 holds nothing
}

TEST(BuildEntries, ItemsAreSets) {
    const auto entries = build_entries({row("Pass", 0, 1, "P1", "T1", RowKind::episode, 1),
                                        row("Pass", 2, 3, "P1", "T1", RowKind::episode, 2)},
                                       10, 5, Scope::per_player);
    ASSERT_EQ(entries.size(), 1u);
    EXPECT_EQ(entries[0].items, Items{"Pass"});
    EXPECT_EQ(entries[0].sources.size(), 2u);
}

TEST(BuildEntries, ScopePartitions) {
    const std::vector<AnnotationRow> rows{row("Pass", 0, 2, "A", "T1"),
                                          row("Kicking", 0, 2, "B", "T1", RowKind::activity, 7)};
    const auto per_player = build_entries(rows, 10, 5, Scope::per_player);
    ASSERT_EQ(per_player.size(), 2u);
    EXPECT_EQ(per_player[0].items, Items{"Pass"});
    EXPECT_EQ(per_player[0].scope_key, "A");
    EXPECT_EQ(per_player[1].items, Items{"Kicking"});
    const auto per_team = build_entries(rows, 10, 5, Scope::per_team);
    ASSERT_EQ(per_team.size(), 1u);
    EXPECT_EQ(per_team[0].items, (Items{"Kicking", "Pass"}));
    EXPECT_EQ(build_entries(rows, 10, 5, Scope::per_match).size(), 1u);
}

TEST(BuildEntries, BoundaryRules) {
    // end >= t keeps a row that ends exactly at the window start; start < t + w
    // excludes a row starting exactly at the window end.
    const auto entries = build_entries({row("A", 0, 5), row("B", 10, 11)}, 10, 5, Scope::per_match);
    ASSERT_EQ(entries.size(), 3u);
    EXPECT_EQ(entries[0].items, Items{"A"});
    EXPECT_EQ(entries[1].items, (Items{"A", "B"}));
    EXPECT_EQ(entries[1].start_s, 5);
    EXPECT_EQ(entries[2].items, Items{"B"});
    EXPECT_THROW(build_entries({}, 0, 1, Scope::per_player), ArgumentError);
    EXPECT_THROW(build_entries({}, 5, 6, Scope::per_player), ArgumentError);
    EXPECT_TRUE(build_entries({}, 10, 5, Scope::per_player).empty());
}

TEST(BuildEntries, ShiftInvariance) {
    std::mt19937_64 rng(5);
    const std::vector<std::string> names{"Pass", "Shot", "Running", "Walking", "Header"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<AnnotationRow> rows;
        for (int i = 0; i < 40; ++i) {
            const double s = static_cast<double>(uniform_below(rng, 300));
            rows.push_back(row(names[uniform_below(rng, names.size())], s, s + static_cast<double>(uniform_below(rng, 8)),
                               "P" + std::to_string(uniform_below(rng, 3))));
        }
        const double delta = static_cast<double>(uniform_below(rng, 5000)) - 2500.0;
        auto shifted = rows;
        for (auto& r : shifted) {
            r.start_s += delta;
            r.end_s += delta;
        }
        const auto a = build_entries(rows, 10, 5, Scope::per_player);
        const auto b = build_entries(shifted, 10, 5, Scope::per_player);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i].items, b[i].items);
            EXPECT_EQ(a[i].start_s + delta, b[i].start_s);
        }
    }
}

TEST(Apriori, HandCorpus) {
    const auto sets = apriori(entries_of({{"A", "B"}, {"A", "B"}, {"A", "C"}}), 0.6);
    ASSERT_EQ(sets.size(), 3u);
    EXPECT_EQ(sets[0].items, Items{"A"});
    EXPECT_DOUBLE_EQ(sets[0].support, 1.0);
    EXPECT_EQ(sets[1].items, Items{"B"});
    EXPECT_DOUBLE_EQ(sets[1].support, 2.0 / 3.0);
    EXPECT_EQ(sets[2].items, (Items{"A", "B"}));
    EXPECT_DOUBLE_EQ(sets[2].support, 2.0 / 3.0);
}

TEST(Apriori, NoCommonItemAtFullSupport) {
    EXPECT_TRUE(apriori(entries_of({{"A"}, {"B"}, {"C", "D"}}), 1.0).empty());
    EXPECT_THROW(apriori({}, 0.5), ArgumentError);
    EXPECT_THROW(apriori(entries_of({{"A"}}), 0.0), ArgumentError);
}

TEST(Apriori, MatchesPowersetOracle) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const auto entries = random_corpus(rng, 10, 50);
        const double min_support = 0.05 + 0.9 * uniform_unit(rng);
        const auto got = apriori(entries, min_support);
        std::map<Items, std::size_t> expected;
        for (const auto& [s, c] : powerset_counts(entries))
            if (static_cast<double>(c) / static_cast<double>(entries.size()) >= min_support) expected[s] = c;
        ASSERT_EQ(got.size(), expected.size()) << trial;
        std::set<Items> seen;
        for (const auto& s : got) {
            ASSERT_TRUE(expected.contains(s.items));
            EXPECT_EQ(s.count, expected.at(s.items));
            EXPECT_EQ(s.support, static_cast<double>(expected.at(s.items)) / static_cast<double>(entries.size()));
            seen.insert(s.items);
        }
        for (const auto& s : got)  // downward closure
            for (std::uint32_t mask = 1; mask + 1 < (1u << s.items.size()); ++mask) {
                Items sub;
                for (std::size_t i = 0; i < s.items.size(); ++i)
                    if ((mask >> i) & 1) sub.push_back(s.items[i]);
                EXPECT_TRUE(seen.contains(sub));
            }
        for (std::size_t i = 1; i < got.size(); ++i) {
            const auto& a = got[i - 1].items;
            const auto& b = got[i].items;
            EXPECT_TRUE(a.size() < b.size() || (a.size() == b.size() && a < b));
        }
    }
}

TEST(GenerateRules, HandArithmetic) {
    const auto entries = entries_of({{"A", "B"}, {"A", "B"}, {"A", "C"}, {"B", "C"}});
    const auto rules = generate_rules(apriori(entries, 0.25), entries, 0.0);
    const auto it = std::find_if(rules.begin(), rules.end(), [](const auto& r) {
        return r.antecedent == Items{"A"} && r.consequent == Items{"B"};
    });
    ASSERT_NE(it, rules.end());
    EXPECT_DOUBLE_EQ(*it->support, 0.5);
    EXPECT_DOUBLE_EQ(it->confidence, 2.0 / 3.0);
    EXPECT_NEAR(*it->conviction, 0.75, 1e-12);
    EXPECT_EQ(it->origin, RuleOrigin::mined);
}

TEST(GenerateRules, ExactRuleHasInfiniteConviction) {
    const auto entries = entries_of({{"A", "B"}, {"A", "B"}, {"B"}});
    const auto rules = generate_rules(apriori(entries, 0.1), entries, 0.9);
    ASSERT_EQ(rules.size(), 1u);
    EXPECT_EQ(rules[0].antecedent, Items{"A"});
    EXPECT_TRUE(std::isinf(*rules[0].conviction));
}

TEST(GenerateRules, MetricIdentitiesOnRandomCorpora) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const auto entries = random_corpus(rng, 8, 40);
        const auto sets = apriori(entries, 0.1);
        const auto rules = generate_rules(sets, entries, 0.0);
        const auto counts = powerset_counts(entries);
        const double n = static_cast<double>(entries.size());
        for (std::size_t i = 0; i < rules.size(); ++i) {
            const auto& r = rules[i];
            ASSERT_FALSE(r.antecedent.empty());
            ASSERT_FALSE(r.consequent.empty());
            Items z = r.antecedent;
            z.insert(z.end(), r.consequent.begin(), r.consequent.end());
            z = make_items(z);
            EXPECT_EQ(z.size(), r.antecedent.size() + r.consequent.size());
            EXPECT_GE(r.confidence + 1e-15, *r.support);
            EXPECT_GE(*r.conviction, 0.0);
            EXPECT_NEAR(r.confidence, (counts.at(z) / n) / (counts.at(r.antecedent) / n), 1e-12);
            if (i) {
                EXPECT_GE(rules[i - 1].confidence, r.confidence);
            }
        }
    }
}

TEST(GenerateRules, InconsistentInputsRejected) {
    const auto entries = entries_of({{"A", "B"}, {"A"}});
    auto sets = apriori(entries, 0.5);
    EXPECT_THROW(generate_rules(sets, entries_of({{"A"}}), 0.5), ArgumentError);
    std::erase_if(sets, [](const Itemset& s) { return s.items == Items{"B"}; });
    EXPECT_THROW(generate_rules(sets, entries, 0.0), ArgumentError);
}

TEST(Conviction, IndependentItemsNearOne) {
    std::mt19937_64 rng(7);
    std::vector<std::vector<std::string>> sets;
    for (int i = 0; i < 10000; ++i) {
        std::vector<std::string> s{"Filler"};
        if (uniform_unit(rng) < 0.4) s.push_back("X");
        if (uniform_unit(rng) < 0.5) s.push_back("Y");
        sets.push_back(std::move(s));
    }
    const auto entries = entries_of(sets);
    const auto rules = generate_rules(apriori(entries, 0.01), entries, 0.0);
    const auto it = std::find_if(rules.begin(), rules.end(), [](const auto& r) {
        return r.antecedent == Items{"X"} && r.consequent == Items{"Y"};
    });
    ASSERT_NE(it, rules.end());
    EXPECT_GE(*it->conviction, 0.95);
    EXPECT_LE(*it->conviction, 1.05);
}

TEST(Conviction, TableRowIdentity) {
    const double confidence = 0.90036, conviction = 1.95564;
    const double implied_support = 1.0 - conviction * (1.0 - confidence);
    EXPECT_NEAR(implied_support, 0.80514, 1e-4);
    EXPECT_NEAR(conviction_of(0.80514, confidence), conviction, 1e-3);
    EXPECT_TRUE(std::isinf(conviction_of(0.3, 1.0)));
}

TEST(ManualRules, LevelsAndErrors) {
    const auto rules = load_manual_rules(
        "# expert rules\n"
        "{Pass} -> {Kicking} : High\n"
        "\n"
        "{Header} -> {Jumping} : Medium   # aerial duels\n"
        "{Reception, Construction} -> {Pass} : low\n");
    ASSERT_EQ(rules.size(), 3u);
    EXPECT_EQ(rules[0].origin, RuleOrigin::manual);
    EXPECT_EQ(rules[0].antecedent, Items{"Pass"});
    EXPECT_EQ(rules[0].consequent, Items{"Kicking"});
    EXPECT_DOUBLE_EQ(rules[0].confidence, 0.9);
    EXPECT_FALSE(rules[0].support);
    EXPECT_FALSE(rules[0].conviction);
    EXPECT_DOUBLE_EQ(rules[1].confidence, 0.6);
    EXPECT_EQ(rules[2].antecedent, (Items{"Construction", "Reception"}));
    EXPECT_DOUBLE_EQ(rules[2].confidence, 0.3);
    EXPECT_THROW(load_manual_rules("{A} -> {A} : High"), FormatError);
    EXPECT_THROW(load_manual_rules("{A} -> {B} : Certain"), FormatError);
    EXPECT_THROW(load_manual_rules("A -> B : High"), FormatError);
    LevelScale scale;
    scale.high = 0.95;
    EXPECT_DOUBLE_EQ(load_manual_rules("{A} -> {B} : High", scale)[0].confidence, 0.95);
}

TEST(RulesFile, RoundTrip) {
    const auto entries = entries_of({{"A", "B"}, {"A", "B"}, {"B"}, {"A", "C"}});
    auto rules = generate_rules(apriori(entries, 0.25), entries, 0.0);
    const auto manual = load_manual_rules("{Pass} -> {Kicking} : High");
    rules.insert(rules.end(), manual.begin(), manual.end());
    const auto doc = write_rules_file(rules, {"window_s=10 step_s=5"});
    EXPECT_NE(doc.find("|inf|"), std::string::npos);
    EXPECT_EQ(read_rules_file(doc), rules);
    EXPECT_EQ(write_rules_file(read_rules_file(doc), {"window_s=10 step_s=5"}), doc);
    EXPECT_THROW(read_rules_file("a|b\n"), FormatError);
    EXPECT_THROW(read_rules_file(std::string(kRulesHeader) + "\nA|A|0.1|0.5||mined|\n"), FormatError);
}
