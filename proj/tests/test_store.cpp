#include <gtest/gtest.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "footlab/store.hpp"

using namespace footlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "footlab-store-XXXXXX").string();
        path = mkdtemp(tmpl.data());
    }
    ~TempDir() { fs::remove_all(path); }
};

MatchMeta sample_match(const std::string& id = "M1") {
    MatchMeta m;
    m.match_id = id;
    m.name = "Home v Away";
    m.teams = {"Home", "Away"};
    m.periods = {{1, WallTime{1'000'000'000'000}, 2700.0}, {2, WallTime{1'000'000'000'000 + 3600'000'000'000}, 2880.0}};
    m.players = {{"P7", "Home", 7}, {"P9", "Home", 9}, {"Q4", "Away", 4}};
    return m;
}

Episode episode(std::int64_t id, double start, double end, std::string description, std::string player = "P7",
                int half = 1) {
    Episode e;
    e.episode_id = id;
    e.match_id = "M1";
    e.team = "Home";
    e.start_s = start;
    e.end_s = end;
    e.half = half;
    e.description = std::move(description);
    e.player = std::move(player);
    return e;
}

ActivityPrediction prediction(std::string player, int period, double start, std::string cls, double vote) {
    ActivityPrediction p;
    p.player_id = std::move(player);
    p.period_id = period;
    p.window = {start, 5.0};
    p.predicted_class = std::move(cls);
    p.class_index = 0;
    p.vote_fractions = {vote, 1.0 - vote};
    return p;
}

Warning warning_for(const AssociationRule& rule, std::string player, double start, double end,
                    std::vector<std::int64_t> episode_ids) {
    Warning w;
    w.match_id = "M1";
    w.scope_key = std::move(player);
    w.half = 1;
    w.start_s = start;
    w.end_s = end;
    w.rule = rule;
    w.present_items = rule.antecedent;
    w.missing_items = rule.consequent;
    w.severity = rule.confidence;
    w.episode_ids = std::move(episode_ids);
    return w;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// ---------------------------------------------------------------- clock

TEST(Clock, HandTable) {
    EXPECT_EQ(parse_clock("12:34"), 754.0);
    EXPECT_EQ(parse_clock("0:00"), 0.0);
    EXPECT_EQ(parse_clock("1:7"), 67.0);
    EXPECT_EQ(parse_clock("95:02.5"), 5702.5);
    for (const char* bad : {"", "12", "1:60", "a:10", "1:-2", ":30", "1:30:00", "-1:00", "1:5x"})
        EXPECT_FALSE(parse_clock(bad).has_value()) << bad;
}

TEST(Clock, FormatRoundTrip) {
    for (double s : {0.0, 7.0, 59.5, 60.0, 754.0, 5702.25})
        EXPECT_EQ(parse_clock(format_clock(s)), s) << s;
    EXPECT_EQ(format_clock(754), "12:34");
}

// --------------------------------------------------------- episode file

TEST(EpisodeFile, ParsesColumnsInAnyOrder) {
    const std::string doc =
        "Match,Episode,Half,Start,End,Description,Team,Player,Tags,Notes\n"
        "M1,1,1,0:05,0:09,Pass,Home,P7,\"short;forward\",\"said \"\"go\"\"\"\n"
        "\n"
        "M1,2,2,1:00,1:02.5,Kicking,Home,P9,,\n";
    const auto eps = parse_episode_file(doc);
    ASSERT_EQ(eps.size(), 2u);
    EXPECT_EQ(eps[0].episode_id, 1);
    EXPECT_EQ(eps[0].start_s, 5.0);
    EXPECT_EQ(eps[0].end_s, 9.0);
    EXPECT_EQ(eps[0].tags, (std::vector<std::string>{"short", "forward"}));
    EXPECT_EQ(eps[0].notes, "said \"go\"");
    EXPECT_EQ(eps[1].half, 2);
    EXPECT_EQ(eps[1].end_s, 62.5);
    EXPECT_TRUE(eps[1].tags.empty());
}

TEST(EpisodeFile, ErrorsNameTheField) {
    const std::string header = "Episode,Match,Team,Start,End,Half,Description,Tags,Player,Notes\n";
    try {
        parse_episode_file("Episode,Match,Team,Start,End,Half,Tags,Player,Notes\n1,M1,H,0:01,0:02,1,,P,\n");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_STREQ(e.what(), "missing field Description");
    }
    try {
        parse_episode_file(header + "1,M1,H,0:01,0:02,1,,,P,\n");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_STREQ(e.what(), "row 1: missing field Description");
    }
    try {
        parse_episode_file(header + "1,M1,H,0:01,0:02,1,Pass,,P,\n2,M1,H,0:1x,0:02,1,Pass,,P,\n");
        FAIL();
    } catch (const RowError& e) {
        EXPECT_EQ(e.row(), 2u);
        EXPECT_NE(std::string(e.what()).find("bad time '0:1x' in Start"), std::string::npos);
    }
    EXPECT_THROW(parse_episode_file(header + "1,M1,H,0:09,0:02,1,Pass,,P,\n"), RowError);
    EXPECT_THROW(parse_episode_file(header + "1,M1,H,0:01,0:02,0,Pass,,P,\n"), RowError);
    EXPECT_THROW(parse_episode_file(header + "1,M1,H,0:01,0:02,1,\"Pass,,P,\n"), FormatError);
    EXPECT_THROW(parse_episode_file(""), FormatError);
}

TEST(EpisodeFile, WriteParseRoundTrip) {
    std::vector<Episode> eps{episode(1, 5, 9, "Pass"), episode(2, 61.5, 70, "Shot, low", "Q4", 2)};
    eps[0].tags = {"a", "b"};
    eps[1].notes = "quote \" inside";
    eps[1].team = "Away";
    EXPECT_EQ(parse_episode_file(write_episode_file(eps)), eps);
}

TEST(EpisodeFile, MatchClockConversion) {
    const auto m = sample_match();
    std::vector<Episode> eps{episode(1, 100, 110, "Pass"), episode(2, 2700 + 30, 2700 + 40, "Pass", "P7", 2)};
    const auto rel = to_period_relative(eps, m, EpisodeClock::match);
    EXPECT_EQ(rel[0].start_s, 100);
    EXPECT_EQ(rel[1].start_s, 30);
    EXPECT_EQ(rel[1].end_s, 40);
    EXPECT_EQ(to_period_relative(eps, m, EpisodeClock::period), eps);
    eps[0].half = 3;
    EXPECT_THROW(to_period_relative(eps, m, EpisodeClock::match), ArgumentError);
    EXPECT_THROW(parse_episode_clock("wall"), ArgumentError);
}

// ------------------------------------------------------ label merging

TEST(MergePredictions, RunsOfOneClassMerge) {
    const auto rows = merge_predictions(
        "M1", {prediction("P7", 1, 5, "Running", 0.6), prediction("P7", 1, 0, "Running", 0.8),
               prediction("P7", 1, 10, "Walking", 0.5), prediction("P7", 1, 20, "Walking", 0.7),
               prediction("P9", 1, 15, "Walking", 0.9), prediction("P7", 2, 0, "Running", 1.0)});
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0].start_s, 0);
    EXPECT_EQ(rows[0].end_s, 10);
    EXPECT_NEAR(*rows[0].vote_fraction, 0.7, 1e-12);
    EXPECT_EQ(rows[1].activity_class, "Walking");
    EXPECT_EQ(rows[1].end_s, 15);  // gap before the window at 20
    EXPECT_EQ(rows[2].start_s, 20);
    EXPECT_EQ(rows[3].period_id, 2);
    EXPECT_EQ(rows[4].player, "P9");
    for (const auto& r : rows) EXPECT_EQ(r.source, LabelSource::sensor);
    EXPECT_TRUE(merge_predictions("M1", {}).empty());
}

// ---------------------------------------------------------------- store

TEST(Store, MatchRoundTrip) {
    TempDir dir;
    AnnotationStore s(dir.path);
    const auto m = sample_match();
    s.upsert_match(m);
    EXPECT_TRUE(s.has_match("M1"));
    EXPECT_EQ(s.get_match("M1"), m);
    auto changed = m;
    changed.players.pop_back();
    changed.name = "renamed";
    s.upsert_match(changed);
    EXPECT_EQ(s.get_match("M1"), changed);
    s.upsert_match(sample_match("M0"));
    ASSERT_EQ(s.list_matches().size(), 2u);
    EXPECT_EQ(s.list_matches()[0].match_id, "M0");
    EXPECT_THROW(s.get_match("nope"), NotFoundError);
    auto bad = m;
    bad.periods[1].kickoff_wall_time = m.periods[0].kickoff_wall_time;
    EXPECT_THROW(s.upsert_match(bad), ArgumentError);
}

TEST(Store, EpisodesNeedKnownMatch) {
    TempDir dir;
    AnnotationStore s(dir.path);
    EXPECT_THROW(s.put_episodes({episode(1, 0, 1, "Pass")}), NotFoundError);
    s.upsert_match(sample_match());
    auto e = episode(1, 0, 1, "Pass");
    e.tags = {"x", "y"};
    s.put_episodes({e});
    EXPECT_EQ(s.episodes("M1"), std::vector<Episode>{e});
    e.tags = {"z"};
    s.put_episodes({e});
    EXPECT_EQ(s.episodes("M1"), std::vector<Episode>{e});
    // A failing batch leaves no partial writes.
    EXPECT_THROW(s.put_episodes({episode(2, 0, 1, "Pass"), episode(3, 0, 1, "")}), ArgumentError);
    EXPECT_EQ(s.episodes("M1").size(), 1u);
}

TEST(Store, QueryOrderingAndFilters) {
    TempDir dir;
    AnnotationStore s(dir.path);
    s.upsert_match(sample_match());
    s.put_episodes({episode(2, 10, 12, "Pass"), episode(1, 0, 3, "Reception"), episode(3, 10, 11, "Shot", "P9"),
                    episode(4, 5, 6, "Pass", "P7", 2)});
    s.aggregate_labels("M1", {prediction("P7", 1, 10, "Running", 0.9), prediction("P9", 1, 0, "Walking", 0.7)});
    const auto all = s.query_events("M1");
    ASSERT_EQ(all.size(), 6u);
    std::vector<std::pair<int, double>> keys;
    for (const auto& e : all) keys.emplace_back(event_period(e), event_start(e));
    EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
    EXPECT_EQ(std::get<Episode>(all.back()).episode_id, 4);
    // At t=10 the episodes come before the activity row, each by id.
    std::vector<std::size_t> kinds;
    for (const auto& e : all)
        if (event_start(e) == 10) kinds.push_back(e.index());
    EXPECT_EQ(kinds, (std::vector<std::size_t>{0, 0, 1}));
    EXPECT_EQ(std::get<Episode>(all[2]).episode_id, 2);

    const auto p7h1 = s.query_events("M1", 1, std::string("P7"));
    ASSERT_EQ(p7h1.size(), 3u);
    for (const auto& e : p7h1) EXPECT_NE(std::visit([](const auto& r) { return r.start_s; }, e), 5.0);
    EXPECT_TRUE(s.query_events("M1", std::nullopt, std::string("nobody")).empty());
    EXPECT_THROW(s.query_events("nope"), NotFoundError);
}

TEST(Store, AggregationIsIdempotent) {
    TempDir dir;
    AnnotationStore s(dir.path);
    s.upsert_match(sample_match());
    const std::vector<ActivityPrediction> preds{prediction("P7", 1, 0, "Running", 0.9),
                                                prediction("P7", 1, 5, "Running", 0.7),
                                                prediction("P7", 1, 10, "Walking", 0.6)};
    s.add_activity_labels({{0, "M1", "P7", 1, 0, 4, "Sprinting", LabelSource::manual, std::nullopt}});
    s.aggregate_labels("M1", preds);
    const auto once = s.activity_labels("M1");
    s.aggregate_labels("M1", preds);
    const auto twice = s.activity_labels("M1");
    ASSERT_EQ(once.size(), 3u);
    ASSERT_EQ(twice.size(), 3u);
    for (std::size_t i = 0; i < once.size(); ++i) {
        auto a = once[i], b = twice[i];
        a.label_id = b.label_id = 0;
        EXPECT_EQ(a, b);
    }
    EXPECT_EQ(twice[0].source, LabelSource::manual);
    EXPECT_TRUE(s.aggregate_labels("M1", {}).empty());
    EXPECT_EQ(s.activity_labels("M1").size(), 3u);
    EXPECT_THROW(s.aggregate_labels("nope", preds), ArgumentError);
}

TEST(Store, RulesKeepInfiniteConviction) {
    TempDir dir;
    AnnotationStore s(dir.path);
    AssociationRule r;
    r.antecedent = {"A", "B"};
    r.consequent = {"C"};
    r.support = 0.25;
    r.confidence = 1.0;
    r.conviction = std::numeric_limits<double>::infinity();
    auto rules = load_manual_rules("{Pass} -> {Kicking} : Medium");
    rules.insert(rules.begin(), r);
    s.replace_rules(rules);
    EXPECT_EQ(s.rules(), rules);
    s.replace_rules({});
    EXPECT_TRUE(s.rules().empty());
}

TEST(Store, WarningLifecycle) {
    TempDir dir;
    AnnotationStore s(dir.path);
    s.upsert_match(sample_match());
    s.put_episodes({episode(1, 0, 4, "Reception"), episode(2, 2, 6, "Pass")});
    const auto rule = load_manual_rules("{Pass} -> {Kicking} : High")[0];
    auto stored = s.replace_open_warnings("M1", {warning_for(rule, "P7", 0, 10, {1, 2}),
                                                 warning_for(rule, "P9", 20, 30, {})});
    ASSERT_EQ(stored.size(), 2u);
    EXPECT_EQ(s.get_warning(stored[0].warning_id), stored[0]);

    const auto fixed = s.resolve_warning(stored[0].warning_id, {WarningState::fixed, "Kicking", std::nullopt});
    EXPECT_EQ(fixed.state, WarningState::fixed);
    // Anchor is the episode whose description is in the antecedent.
    EXPECT_EQ(s.episodes("M1")[1].description, "Kicking");
    EXPECT_EQ(s.episodes("M1")[0].description, "Reception");
    const auto audit = s.audit("M1");
    ASSERT_EQ(audit.size(), 1u);
    EXPECT_EQ(audit[0].action, "fix");
    EXPECT_EQ(audit[0].episode_id, 2);
    EXPECT_EQ(audit[0].old_description, "Pass");
    EXPECT_EQ(audit[0].new_description, "Kicking");
    EXPECT_EQ(audit[0].recorded_at.size(), 20u);

    EXPECT_THROW(s.resolve_warning(stored[0].warning_id, {WarningState::dismissed, {}, {}}), ConflictError);
    EXPECT_THROW(s.resolve_warning(stored[1].warning_id, {WarningState::fixed, "  ", {}}), ArgumentError);
    EXPECT_THROW(s.resolve_warning(stored[1].warning_id, {WarningState::fixed, "Kicking", {}}), ArgumentError);
    EXPECT_THROW(s.resolve_warning(stored[1].warning_id, {WarningState::open, {}, {}}), ArgumentError);
    EXPECT_THROW(s.resolve_warning(999, {WarningState::dismissed, {}, {}}), NotFoundError);
    EXPECT_EQ(s.get_warning(stored[1].warning_id).state, WarningState::open);

    // Re-detection replaces open warnings and never resurrects resolved ones.
    const auto again = s.replace_open_warnings(
        "M1", {warning_for(rule, "P7", 0, 10, {1, 2}), warning_for(rule, "P9", 40, 50, {})});
    ASSERT_EQ(again.size(), 1u);
    EXPECT_EQ(again[0].start_s, 40);
    EXPECT_EQ(s.warnings("M1").size(), 2u);
    EXPECT_EQ(s.warnings("M1", WarningState::open).size(), 1u);
    EXPECT_EQ(s.warnings("M1", WarningState::fixed).size(), 1u);
    EXPECT_THROW(s.warnings("nope"), NotFoundError);

    s.resolve_warning(again[0].warning_id, {WarningState::dismissed, {}, {}});
    ASSERT_EQ(s.audit("M1").size(), 2u);
    EXPECT_EQ(s.audit("M1")[1].action, "dismiss");
    EXPECT_FALSE(s.audit("M1")[1].episode_id.has_value());
}

TEST(Store, SurvivesReopen) {
    TempDir dir;
    std::vector<Episode> eps;
    {
        AnnotationStore s(dir.path);
        s.upsert_match(sample_match());
        for (int i = 1; i <= 50; ++i) eps.push_back(episode(i, i, i + 1.5, i % 2 ? "Pass" : "Kicking"));
        s.put_episodes(eps);
        s.replace_rules(load_manual_rules("{Pass} -> {Kicking} : Low"));
    }
    AnnotationStore s(dir.path);
    EXPECT_EQ(s.get_match("M1"), sample_match());
    EXPECT_EQ(s.episodes("M1"), eps);
    EXPECT_EQ(s.rules().size(), 1u);
}

TEST(Store, InsertOrderDoesNotChangeQueries) {
    std::mt19937_64 rng(5);
    std::vector<Episode> eps;
    for (int i = 1; i <= 40; ++i) {
        const double t = static_cast<double>(uniform_below(rng, 20));
        eps.push_back(episode(i, t, t + 2, i % 3 ? "Pass" : "Shot", i % 2 ? "P7" : "P9",
                              1 + static_cast<int>(uniform_below(rng, 2))));
    }
    std::vector<std::vector<Event>> results;
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(eps.begin(), eps.end(), rng);
        TempDir dir;
        AnnotationStore s(dir.path);
        s.upsert_match(sample_match());
        for (std::size_t i = 0; i < eps.size(); i += 7)
            s.put_episodes({eps.begin() + static_cast<std::ptrdiff_t>(i),
                            eps.begin() + static_cast<std::ptrdiff_t>(std::min(i + 7, eps.size()))});
        results.push_back(s.query_events("M1", 1));
    }
    for (const auto& r : results) EXPECT_EQ(r, results[0]);
}

TEST(Store, ExportWritesEveryTable) {
    TempDir dir;
    AnnotationStore s(dir.path / "db");
    s.upsert_match(sample_match());
    auto e = episode(1, 0, 4, "Pass, long");
    e.notes = "he said \"now\"";
    s.put_episodes({e});
    const auto files = s.export_tables(dir.path / "out");
    ASSERT_EQ(files.size(), 9u);
    for (const auto& f : files) EXPECT_TRUE(fs::exists(f)) << f;
    const auto text = slurp(dir.path / "out" / "episodes.csv");
    EXPECT_EQ(text,
              "match_id,episode_id,team,start_s,end_s,half,description,player,notes\n"
              "M1,1,Home,0,4,1,\"Pass, long\",P7,\"he said \"\"now\"\"\"\n");
    const auto players = slurp(dir.path / "out" / "players.csv");
    EXPECT_EQ(std::count(players.begin(), players.end(), '\n'), 4);
}
