#pragma once

// Embedded annotation store on a single SQLite file, <root>/footlab.db.
//
// Tables: matches, periods, players, episodes, tag_combinations,
// activity_labels, rules, warnings, audit.
//
// All episode and activity-label times are period-relative seconds; the
// period is the episode's `half` or the label's `period_id` (see
// annotations.hpp). One connection is shared behind a mutex, so writes are
// serialized and each write call commits as a single transaction.

#include <sqlite3.h>

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "footlab/annotations.hpp"
#include "footlab/common.hpp"
#include "footlab/detector.hpp"
#include "footlab/rules.hpp"

namespace footlab {

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Event = std::variant<Episode, ActivityLabelRow>;

inline double event_start(const Event& e) {
    return std::visit([](const auto& r) { return r.start_s; }, e);
}

inline int event_period(const Event& e) {
    return e.index() == 0 ? std::get<0>(e).half : std::get<1>(e).period_id;
}

struct Resolution {
    WarningState action{WarningState::dismissed};
    std::optional<std::string> corrected_description;
    std::optional<std::int64_t> episode_id;  ///< defaults to the warning's anchor episode
};

struct AuditRow {
    std::int64_t audit_id{0};
    std::int64_t warning_id{0};
    std::string match_id;
    std::optional<std::int64_t> episode_id;
    std::string action;
    std::string old_description;
    std::string new_description;
    std::string recorded_at;
};

namespace detail {

class Stmt {
public:
    Stmt(sqlite3* db, std::string_view sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &s_, nullptr) != SQLITE_OK)
            throw StoreError(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
    ~Stmt() { sqlite3_finalize(s_); }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int i, std::int64_t v) { return check(sqlite3_bind_int64(s_, i, v)); }
    Stmt& bind(int i, int v) { return check(sqlite3_bind_int64(s_, i, v)); }
    Stmt& bind(int i, double v) { return check(sqlite3_bind_double(s_, i, v)); }
    Stmt& bind(int i, std::string_view v) {
        return check(sqlite3_bind_text(s_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    }
    Stmt& bind(int i, const std::string& v) { return bind(i, std::string_view(v)); }
    Stmt& bind(int i, const char* v) { return bind(i, std::string_view(v)); }
    Stmt& bind_null(int i) { return check(sqlite3_bind_null(s_, i)); }
    template <class T>
    Stmt& bind(int i, const std::optional<T>& v) {
        return v ? bind(i, *v) : bind_null(i);
    }

    bool step() {
        const int rc = sqlite3_step(s_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw StoreError(std::string("sqlite step: ") + sqlite3_errmsg(db_));
    }
    void run() {
        while (step()) {
        }
    }
    void reset() {
        sqlite3_reset(s_);
        sqlite3_clear_bindings(s_);
    }

    int columns() const { return sqlite3_column_count(s_); }
    bool is_null(int c) const { return sqlite3_column_type(s_, c) == SQLITE_NULL; }
    std::int64_t i64(int c) const { return sqlite3_column_int64(s_, c); }
    double f64(int c) const { return sqlite3_column_double(s_, c); }
    std::string str(int c) const {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(s_, c));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(s_, c))) : std::string{};
    }
    std::optional<double> opt_f64(int c) const { return is_null(c) ? std::nullopt : std::optional<double>(f64(c)); }
    sqlite3_stmt* raw() const { return s_; }

private:
    Stmt& check(int rc) {
        if (rc != SQLITE_OK) throw StoreError(std::string("sqlite bind: ") + sqlite3_errmsg(db_));
        return *this;
    }
    sqlite3* db_;
    sqlite3_stmt* s_{nullptr};
};

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    return text::split(s, ';');
}

inline constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS matches(
  match_id TEXT PRIMARY KEY, name TEXT NOT NULL, teams TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS periods(
  match_id TEXT NOT NULL, period_id INTEGER NOT NULL, kickoff_ns INTEGER NOT NULL, duration_s REAL NOT NULL,
  PRIMARY KEY(match_id, period_id));
CREATE TABLE IF NOT EXISTS players(
  match_id TEXT NOT NULL, position INTEGER NOT NULL, player_id TEXT NOT NULL, team TEXT NOT NULL,
  shirt_number INTEGER NOT NULL, PRIMARY KEY(match_id, player_id));
CREATE TABLE IF NOT EXISTS episodes(
  match_id TEXT NOT NULL, episode_id INTEGER NOT NULL, team TEXT NOT NULL, start_s REAL NOT NULL,
  end_s REAL NOT NULL, half INTEGER NOT NULL, description TEXT NOT NULL, player TEXT NOT NULL,
  notes TEXT NOT NULL, PRIMARY KEY(match_id, episode_id));
CREATE TABLE IF NOT EXISTS tag_combinations(
  match_id TEXT NOT NULL, episode_id INTEGER NOT NULL, position INTEGER NOT NULL, tag TEXT NOT NULL,
  PRIMARY KEY(match_id, episode_id, position));
CREATE TABLE IF NOT EXISTS activity_labels(
  label_id INTEGER PRIMARY KEY AUTOINCREMENT, match_id TEXT NOT NULL, player TEXT NOT NULL,
  period_id INTEGER NOT NULL, start_s REAL NOT NULL, end_s REAL NOT NULL, activity_class TEXT NOT NULL,
  source TEXT NOT NULL, vote_fraction REAL);
CREATE TABLE IF NOT EXISTS rules(
  rule_id INTEGER PRIMARY KEY AUTOINCREMENT, antecedent TEXT NOT NULL, consequent TEXT NOT NULL, support REAL,
  confidence REAL NOT NULL, conviction REAL, origin TEXT NOT NULL, level TEXT);
CREATE TABLE IF NOT EXISTS warnings(
  warning_id INTEGER PRIMARY KEY AUTOINCREMENT, match_id TEXT NOT NULL, player TEXT NOT NULL,
  half INTEGER NOT NULL, start_s REAL NOT NULL, end_s REAL NOT NULL, antecedent TEXT NOT NULL,
  consequent TEXT NOT NULL, support REAL, confidence REAL NOT NULL, conviction REAL, origin TEXT NOT NULL,
  level TEXT, present_items TEXT NOT NULL, missing_items TEXT NOT NULL, severity REAL NOT NULL,
  state TEXT NOT NULL, episode_ids TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS audit(
  audit_id INTEGER PRIMARY KEY AUTOINCREMENT, warning_id INTEGER NOT NULL, match_id TEXT NOT NULL,
  episode_id INTEGER, action TEXT NOT NULL, old_description TEXT NOT NULL, new_description TEXT NOT NULL,
  recorded_at TEXT NOT NULL);
CREATE INDEX IF NOT EXISTS labels_by_match ON activity_labels(match_id, player, period_id);
CREATE INDEX IF NOT EXISTS warnings_by_match ON warnings(match_id, state);
)sql";

inline constexpr std::array<const char*, 9> kTables{"matches",          "periods",         "players",
                                                    "episodes",         "tag_combinations", "activity_labels",
                                                    "rules",            "warnings",         "audit"};

inline std::string utc_now() {
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    const auto days = std::chrono::floor<std::chrono::days>(now);
    const std::chrono::year_month_day ymd{days};
    const std::chrono::hh_mm_ss hms{now - days};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()), static_cast<long long>(hms.hours().count()),
                  static_cast<long long>(hms.minutes().count()), static_cast<long long>(hms.seconds().count()));
    return buf;
}

}  // namespace detail

class AnnotationStore {
public:
    static constexpr const char* kFileName = "footlab.db";

    explicit AnnotationStore(const std::filesystem::path& root) : root_(root) {
        std::filesystem::create_directories(root);
        const auto file = (root / kFileName).string();
        if (sqlite3_open_v2(file.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                            nullptr) != SQLITE_OK) {
            const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
            sqlite3_close(db_);
            throw StoreError("cannot open store " + file + ": " + msg);
        }
        sqlite3_busy_timeout(db_, 5000);
        exec("PRAGMA journal_mode=WAL; PRAGMA synchronous=NORMAL; PRAGMA foreign_keys=ON;");
        exec(detail::kSchema);
    }
    ~AnnotationStore() { sqlite3_close(db_); }
    AnnotationStore(const AnnotationStore&) = delete;
    AnnotationStore& operator=(const AnnotationStore&) = delete;

    const std::filesystem::path& root() const { return root_; }

    // ------------------------------------------------------------ matches

    void upsert_match(const MatchMeta& m) {
        if (const auto bad = m.problems(); !bad.empty()) throw ArgumentError("match: invalid " + text::join(bad, ", "));
        write([&] {
            detail::Stmt(db_, "INSERT OR REPLACE INTO matches VALUES(?,?,?)")
                .bind(1, m.match_id)
                .bind(2, m.name)
                .bind(3, text::join(m.teams, ";"))
                .run();
            detail::Stmt(db_, "DELETE FROM periods WHERE match_id=?").bind(1, m.match_id).run();
            detail::Stmt(db_, "DELETE FROM players WHERE match_id=?").bind(1, m.match_id).run();
            detail::Stmt per(db_, "INSERT INTO periods VALUES(?,?,?,?)");
            for (const auto& p : m.periods) {
                per.bind(1, m.match_id).bind(2, p.period_id).bind(3, p.kickoff_wall_time.ns).bind(4, p.duration_s).run();
                per.reset();
            }
            detail::Stmt pl(db_, "INSERT INTO players VALUES(?,?,?,?,?)");
            for (std::size_t i = 0; i < m.players.size(); ++i) {
                const auto& r = m.players[i];
                pl.bind(1, m.match_id)
                    .bind(2, static_cast<std::int64_t>(i))
                    .bind(3, r.player_id)
                    .bind(4, r.team)
                    .bind(5, r.shirt_number)
                    .run();
                pl.reset();
            }
        });
    }

    bool has_match(const std::string& id) const {
        std::lock_guard lk(mu_);
        detail::Stmt s(db_, "SELECT 1 FROM matches WHERE match_id=?");
        s.bind(1, id);
        return s.step();
    }

    MatchMeta get_match(const std::string& id) const {
        std::lock_guard lk(mu_);
        return load_match(id);
    }

    std::vector<MatchMeta> list_matches() const {
        std::lock_guard lk(mu_);
        std::vector<std::string> ids;
        detail::Stmt s(db_, "SELECT match_id FROM matches ORDER BY match_id");
        while (s.step()) ids.push_back(s.str(0));
        std::vector<MatchMeta> out;
        for (const auto& id : ids) out.push_back(load_match(id));
        return out;
    }

    // ----------------------------------------------------------- episodes

    /// Inserts or replaces episodes keyed by (match, episode id). Every
    /// referenced match must exist.
    void put_episodes(const std::vector<Episode>& episodes) {
        write([&] {
            detail::Stmt ep(db_, "INSERT OR REPLACE INTO episodes VALUES(?,?,?,?,?,?,?,?,?)");
            detail::Stmt del(db_, "DELETE FROM tag_combinations WHERE match_id=? AND episode_id=?");
            detail::Stmt tag(db_, "INSERT INTO tag_combinations VALUES(?,?,?,?)");
            for (const auto& e : episodes) {
                require_match(e.match_id);
                if (e.description.empty())
                    throw ArgumentError("episode " + std::to_string(e.episode_id) + ": empty description");
                if (e.start_s > e.end_s || e.half < 1)
                    throw ArgumentError("episode " + std::to_string(e.episode_id) + ": bad interval or half");
                ep.bind(1, e.match_id)
                    .bind(2, e.episode_id)
                    .bind(3, e.team)
                    .bind(4, e.start_s)
                    .bind(5, e.end_s)
                    .bind(6, e.half)
                    .bind(7, e.description)
                    .bind(8, e.player)
                    .bind(9, e.notes)
                    .run();
                ep.reset();
                del.bind(1, e.match_id).bind(2, e.episode_id).run();
                del.reset();
                for (std::size_t i = 0; i < e.tags.size(); ++i) {
                    tag.bind(1, e.match_id).bind(2, e.episode_id).bind(3, static_cast<std::int64_t>(i)).bind(4, e.tags[i]).run();
                    tag.reset();
                }
            }
        });
    }

    std::vector<Episode> episodes(const std::string& match_id) const {
        std::lock_guard lk(mu_);
        return load_episodes(match_id, std::nullopt, std::nullopt);
    }

    // ----------------------------------------------------- activity labels

    /// Merges predictions into label rows and replaces the sensor-sourced
    /// rows of every (player, period) the predictions cover. Episodes are
    /// not touched. Returns the stored rows.
    std::vector<ActivityLabelRow> aggregate_labels(const std::string& match_id,
                                                   const std::vector<ActivityPrediction>& predictions) {
        auto rows = merge_predictions(match_id, predictions);
        write([&] {
            if (!match_exists(match_id)) throw ArgumentError("aggregate_labels: unknown match " + match_id);
            detail::Stmt del(db_,
                             "DELETE FROM activity_labels WHERE match_id=? AND player=? AND period_id=? AND source='sensor'");
            std::set<std::pair<std::string, int>> cleared;
            for (const auto& r : rows)
                if (cleared.emplace(r.player, r.period_id).second) {
                    del.bind(1, match_id).bind(2, r.player).bind(3, r.period_id).run();
                    del.reset();
                }
            insert_labels(rows);
        });
        return rows;
    }

    void add_activity_labels(std::vector<ActivityLabelRow> rows) {
        write([&] {
            for (const auto& r : rows) require_match(r.match_id);
            insert_labels(rows);
        });
    }

    std::vector<ActivityLabelRow> activity_labels(const std::string& match_id) const {
        std::lock_guard lk(mu_);
        return load_labels(match_id, std::nullopt, std::nullopt);
    }

    // ------------------------------------------------------------- events

    /// Episodes and activity rows of a match, optionally restricted to one
    /// period and one player, ordered by (period, start, episodes first, id).
    std::vector<Event> query_events(const std::string& match_id, std::optional<int> period = std::nullopt,
                                    std::optional<std::string> player = std::nullopt) const {
        std::lock_guard lk(mu_);
        if (!match_exists(match_id)) throw NotFoundError("match " + match_id + " not found");
        std::vector<Event> out;
        for (auto& e : load_episodes(match_id, period, player)) out.emplace_back(std::move(e));
        for (auto& l : load_labels(match_id, period, player)) out.emplace_back(std::move(l));
        std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) {
            const auto key = [](const Event& e) {
                const std::int64_t id = e.index() == 0 ? std::get<0>(e).episode_id : std::get<1>(e).label_id;
                return std::tuple(event_period(e), event_start(e), e.index(), id);
            };
            return key(a) < key(b);
        });
        return out;
    }

    // -------------------------------------------------------------- rules

    void replace_rules(const std::vector<AssociationRule>& rules) {
        write([&] {
            exec("DELETE FROM rules");
            detail::Stmt ins(db_, "INSERT INTO rules(antecedent,consequent,support,confidence,conviction,origin,level) "
                                  "VALUES(?,?,?,?,?,?,?)");
            for (const auto& r : rules) {
                bind_rule(ins, 1, r).run();
                ins.reset();
            }
        });
    }

    std::vector<AssociationRule> rules() const {
        std::lock_guard lk(mu_);
        detail::Stmt s(db_, "SELECT antecedent,consequent,support,confidence,conviction,origin,level FROM rules "
                            "ORDER BY rule_id");
        std::vector<AssociationRule> out;
        while (s.step()) out.push_back(read_rule(s, 0));
        return out;
    }

    // ----------------------------------------------------------- warnings

    /// Drops the match's open warnings and stores `fresh` as open, skipping
    /// any that repeat an already resolved warning (same rule and origin,
    /// player, half and interval). Returns the stored warnings with their ids.
    std::vector<Warning> replace_open_warnings(const std::string& match_id, const std::vector<Warning>& fresh) {
        std::vector<Warning> stored;
        write([&] {
            if (!match_exists(match_id)) throw NotFoundError("match " + match_id + " not found");
            detail::Stmt(db_, "DELETE FROM warnings WHERE match_id=? AND state='open'").bind(1, match_id).run();
            std::set<std::tuple<std::string, RuleOrigin, std::string, int, double, double>> resolved;
            for (const auto& w : load_warnings(match_id, std::nullopt))
                resolved.emplace(w.rule.key(), w.rule.origin, w.scope_key, w.half, w.start_s, w.end_s);
            detail::Stmt ins(db_,
                             "INSERT INTO warnings(match_id,player,half,start_s,end_s,antecedent,consequent,support,"
                             "confidence,conviction,origin,level,present_items,missing_items,severity,state,episode_ids) "
                             "VALUES(?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,'open',?)");
            for (auto w : fresh) {
                if (resolved.contains({w.rule.key(), w.rule.origin, w.scope_key, w.half, w.start_s, w.end_s})) continue;
                std::vector<std::string> ids;
                for (auto id : w.episode_ids) ids.push_back(std::to_string(id));
                ins.bind(1, match_id).bind(2, w.scope_key).bind(3, w.half).bind(4, w.start_s).bind(5, w.end_s);
                bind_rule(ins, 6, w.rule)
                    .bind(13, text::join(w.present_items, ";"))
                    .bind(14, text::join(w.missing_items, ";"))
                    .bind(15, w.severity)
                    .bind(16, text::join(ids, ";"))
                    .run();
                ins.reset();
                w.warning_id = sqlite3_last_insert_rowid(db_);
                w.match_id = match_id;
                w.state = WarningState::open;
                stored.push_back(std::move(w));
            }
        });
        return stored;
    }

    /// Ordered by (start, severity descending, id).
    std::vector<Warning> warnings(const std::string& match_id, std::optional<WarningState> state = std::nullopt) const {
        std::lock_guard lk(mu_);
        if (!match_exists(match_id)) throw NotFoundError("match " + match_id + " not found");
        return load_warnings(match_id, state);
    }

    Warning get_warning(std::int64_t id) const {
        std::lock_guard lk(mu_);
        return load_warning(id);
    }

    /// open -> fixed | dismissed, exactly once. A fix rewrites the target
    /// episode's description. Both actions append an audit row.
    Warning resolve_warning(std::int64_t id, const Resolution& res) {
        if (res.action == WarningState::open) throw ArgumentError("action must be fix or dismiss");
        Warning w;
        write([&] {
            w = load_warning(id);
            if (w.state != WarningState::open)
                throw ConflictError("warning " + std::to_string(id) + " already " + std::string(to_string(w.state)));
            std::optional<std::int64_t> episode_id;
            std::string old_desc, new_desc;
            if (res.action == WarningState::fixed) {
                if (!res.corrected_description || text::trim(*res.corrected_description).empty())
                    throw ArgumentError("corrected_description is required for a fix");
                episode_id = res.episode_id ? res.episode_id : anchor_episode(w);
                if (!episode_id) throw ArgumentError("episode_id is required: warning has no episode");
                detail::Stmt q(db_, "SELECT description FROM episodes WHERE match_id=? AND episode_id=?");
                q.bind(1, w.match_id).bind(2, *episode_id);
                if (!q.step()) throw NotFoundError("episode " + std::to_string(*episode_id) + " not found");
                old_desc = q.str(0);
                new_desc = std::string(text::trim(*res.corrected_description));
                detail::Stmt(db_, "UPDATE episodes SET description=? WHERE match_id=? AND episode_id=?")
                    .bind(1, new_desc)
                    .bind(2, w.match_id)
                    .bind(3, *episode_id)
                    .run();
            }
            w.state = res.action;
            detail::Stmt(db_, "UPDATE warnings SET state=? WHERE warning_id=?").bind(1, to_string(w.state)).bind(2, id).run();
            detail::Stmt(db_, "INSERT INTO audit(warning_id,match_id,episode_id,action,old_description,new_description,"
                              "recorded_at) VALUES(?,?,?,?,?,?,?)")
                .bind(1, id)
                .bind(2, w.match_id)
                .bind(3, episode_id)
                .bind(4, res.action == WarningState::fixed ? "fix" : "dismiss")
                .bind(5, old_desc)
                .bind(6, new_desc)
                .bind(7, detail::utc_now())
                .run();
        });
        return w;
    }

    std::vector<AuditRow> audit(const std::string& match_id) const {
        std::lock_guard lk(mu_);
        detail::Stmt s(db_, "SELECT audit_id,warning_id,match_id,episode_id,action,old_description,new_description,"
                            "recorded_at FROM audit WHERE match_id=? ORDER BY audit_id");
        s.bind(1, match_id);
        std::vector<AuditRow> out;
        while (s.step()) {
            AuditRow a{s.i64(0), s.i64(1), s.str(2), {}, s.str(4), s.str(5), s.str(6), s.str(7)};
            if (!s.is_null(3)) a.episode_id = s.i64(3);
            out.push_back(std::move(a));
        }
        return out;
    }

    // ------------------------------------------------------------- export

    /// Writes every table to <dir>/<table>.csv (comma separated, header row,
    /// rows in insertion order). Returns the written paths.
    std::vector<std::filesystem::path> export_tables(const std::filesystem::path& dir) const {
        std::lock_guard lk(mu_);
        std::filesystem::create_directories(dir);
        std::vector<std::filesystem::path> written;
        for (const char* table : detail::kTables) {
            detail::Stmt s(db_, std::string("SELECT * FROM ") + table + " ORDER BY rowid");
            std::string out;
            for (int c = 0; c < s.columns(); ++c)
                out += (c ? "," : "") + std::string(sqlite3_column_name(s.raw(), c));
            out += "\n";
            while (s.step()) {
                for (int c = 0; c < s.columns(); ++c) {
                    if (c) out += ",";
                    switch (sqlite3_column_type(s.raw(), c)) {
                        case SQLITE_NULL: break;
                        case SQLITE_INTEGER: out += std::to_string(s.i64(c)); break;
                        case SQLITE_FLOAT: out += text::format_double(s.f64(c)); break;
                        default: out += text::quote_field(s.str(c), ','); break;
                    }
                }
                out += "\n";
            }
            const auto path = dir / (std::string(table) + ".csv");
            std::ofstream(path, std::ios::binary) << out;
            written.push_back(path);
        }
        return written;
    }

private:
    void exec(const char* sql) const {
        char* err = nullptr;
        if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
            const std::string msg = err ? err : "unknown error";
            sqlite3_free(err);
            throw StoreError("sqlite: " + msg);
        }
    }

    template <class F>
    void write(F&& body) {
        std::lock_guard lk(mu_);
        exec("BEGIN IMMEDIATE");
        try {
            body();
            exec("COMMIT");
        } catch (...) {
            exec("ROLLBACK");
            throw;
        }
    }

    bool match_exists(const std::string& id) const {
        detail::Stmt s(db_, "SELECT 1 FROM matches WHERE match_id=?");
        s.bind(1, id);
        return s.step();
    }

    void require_match(const std::string& id) const {
        if (!match_exists(id)) throw NotFoundError("match " + id + " not found");
    }

    MatchMeta load_match(const std::string& id) const {
        detail::Stmt s(db_, "SELECT name, teams FROM matches WHERE match_id=?");
        s.bind(1, id);
        if (!s.step()) throw NotFoundError("match " + id + " not found");
        MatchMeta m;
        m.match_id = id;
        m.name = s.str(0);
        m.teams = detail::split_list(s.str(1));
        detail::Stmt p(db_, "SELECT period_id, kickoff_ns, duration_s FROM periods WHERE match_id=? ORDER BY period_id");
        p.bind(1, id);
        while (p.step()) m.periods.push_back({static_cast<int>(p.i64(0)), WallTime{p.i64(1)}, p.f64(2)});
        detail::Stmt r(db_, "SELECT player_id, team, shirt_number FROM players WHERE match_id=? ORDER BY position");
        r.bind(1, id);
        while (r.step()) m.players.push_back({r.str(0), r.str(1), static_cast<int>(r.i64(2))});
        return m;
    }

    std::vector<Episode> load_episodes(const std::string& match_id, std::optional<int> half,
                                       const std::optional<std::string>& player) const {
        detail::Stmt s(db_, "SELECT episode_id,team,start_s,end_s,half,description,player,notes FROM episodes "
                            "WHERE match_id=?1 AND (?2 IS NULL OR half=?2) AND (?3 IS NULL OR player=?3) "
                            "ORDER BY episode_id");
        s.bind(1, match_id).bind(2, half).bind(3, player);
        std::vector<Episode> out;
        while (s.step())
            out.push_back({s.i64(0), match_id, s.str(1), s.f64(2), s.f64(3), static_cast<int>(s.i64(4)), s.str(5), {},
                           s.str(6), s.str(7)});
        detail::Stmt t(db_, "SELECT tag FROM tag_combinations WHERE match_id=? AND episode_id=? ORDER BY position");
        for (auto& e : out) {
            t.bind(1, match_id).bind(2, e.episode_id);
            while (t.step()) e.tags.push_back(t.str(0));
            t.reset();
        }
        return out;
    }

    std::vector<ActivityLabelRow> load_labels(const std::string& match_id, std::optional<int> period,
                                              const std::optional<std::string>& player) const {
        detail::Stmt s(db_, "SELECT label_id,player,period_id,start_s,end_s,activity_class,source,vote_fraction "
                            "FROM activity_labels WHERE match_id=?1 AND (?2 IS NULL OR period_id=?2) "
                            "AND (?3 IS NULL OR player=?3) ORDER BY label_id");
        s.bind(1, match_id).bind(2, period).bind(3, player);
        std::vector<ActivityLabelRow> out;
        while (s.step())
            out.push_back({s.i64(0), match_id, s.str(1), static_cast<int>(s.i64(2)), s.f64(3), s.f64(4), s.str(5),
                           parse_label_source(s.str(6)), s.opt_f64(7)});
        return out;
    }

    void insert_labels(std::vector<ActivityLabelRow>& rows) {
        detail::Stmt ins(db_, "INSERT INTO activity_labels(match_id,player,period_id,start_s,end_s,activity_class,"
                              "source,vote_fraction) VALUES(?,?,?,?,?,?,?,?)");
        for (auto& r : rows) {
            if (!(r.start_s < r.end_s)) throw ArgumentError("activity label needs start < end");
            if (r.source == LabelSource::sensor && !r.vote_fraction)
                throw ArgumentError("sensor activity label needs a vote fraction");
            ins.bind(1, r.match_id)
                .bind(2, r.player)
                .bind(3, r.period_id)
                .bind(4, r.start_s)
                .bind(5, r.end_s)
                .bind(6, r.activity_class)
                .bind(7, to_string(r.source))
                .bind(8, r.vote_fraction)
                .run();
            ins.reset();
            r.label_id = sqlite3_last_insert_rowid(db_);
        }
    }

    static detail::Stmt& bind_rule(detail::Stmt& s, int first, const AssociationRule& r) {
        s.bind(first, text::join(r.antecedent, ";"))
            .bind(first + 1, text::join(r.consequent, ";"))
            .bind(first + 2, r.support)
            .bind(first + 3, r.confidence)
            .bind(first + 4, r.conviction)
            .bind(first + 5, to_string(r.origin));
        if (r.level)
            s.bind(first + 6, to_string(*r.level));
        else
            s.bind_null(first + 6);
        return s;
    }

    static AssociationRule read_rule(const detail::Stmt& s, int first) {
        AssociationRule r;
        r.antecedent = detail::split_list(s.str(first));
        r.consequent = detail::split_list(s.str(first + 1));
        r.support = s.opt_f64(first + 2);
        r.confidence = s.f64(first + 3);
        r.conviction = s.opt_f64(first + 4);
        r.origin = parse_rule_origin(s.str(first + 5));
        if (!s.is_null(first + 6)) r.level = parse_rule_level(s.str(first + 6));
        return r;
    }

    static constexpr const char* kWarningColumns =
        "warning_id,match_id,player,half,start_s,end_s,antecedent,consequent,support,confidence,conviction,origin,"
        "level,present_items,missing_items,severity,state,episode_ids";

    static Warning read_warning(const detail::Stmt& s) {
        Warning w;
        w.warning_id = s.i64(0);
        w.match_id = s.str(1);
        w.scope_key = s.str(2);
        w.half = static_cast<int>(s.i64(3));
        w.start_s = s.f64(4);
        w.end_s = s.f64(5);
        w.rule = read_rule(s, 6);
        w.present_items = detail::split_list(s.str(13));
        w.missing_items = detail::split_list(s.str(14));
        w.severity = s.f64(15);
        w.state = parse_warning_state(s.str(16));
        for (const auto& id : detail::split_list(s.str(17))) w.episode_ids.push_back(*text::parse_int(id));
        return w;
    }

    std::vector<Warning> load_warnings(const std::string& match_id, std::optional<WarningState> state) const {
        detail::Stmt s(db_, std::string("SELECT ") + kWarningColumns +
                                " FROM warnings WHERE match_id=?1 AND (?2 IS NULL OR state=?2) "
                                "ORDER BY start_s, severity DESC, warning_id");
        s.bind(1, match_id);
        if (state)
            s.bind(2, to_string(*state));
        else
            s.bind_null(2);
        std::vector<Warning> out;
        while (s.step()) out.push_back(read_warning(s));
        return out;
    }

    Warning load_warning(std::int64_t id) const {
        detail::Stmt s(db_, std::string("SELECT ") + kWarningColumns + " FROM warnings WHERE warning_id=?");
        s.bind(1, id);
        if (!s.step()) throw NotFoundError("warning " + std::to_string(id) + " not found");
        return read_warning(s);
    }

    /// First listed episode whose description is in the rule's antecedent,
    /// else the first listed episode.
    std::optional<std::int64_t> anchor_episode(const Warning& w) const {
        std::optional<std::int64_t> first;
        detail::Stmt q(db_, "SELECT description FROM episodes WHERE match_id=? AND episode_id=?");
        for (auto id : w.episode_ids) {
            q.bind(1, w.match_id).bind(2, id);
            if (q.step()) {
                if (!first) first = id;
                const auto d = q.str(0);
                if (std::binary_search(w.rule.antecedent.begin(), w.rule.antecedent.end(), d)) return id;
            }
            q.reset();
        }
        return first;
    }

    std::filesystem::path root_;
    sqlite3* db_{nullptr};
    mutable std::mutex mu_;
};

}  // namespace footlab
