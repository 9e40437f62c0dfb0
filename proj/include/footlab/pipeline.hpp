#pragma once

// Command pipelines shared by the CLI and the HTTP service.
//
// A PipelineConfig is read from one JSON document; relative paths resolve
// against the document's directory. Every stage writes its artifacts under
// an output directory with fixed names:
//
//   ingest       features.csv
//   har-train    model.bin
//   har-predict  labels.csv   (and activity rows in the store)
//   evaluate     report.csv, report.json
//   mine         rules.txt    (and the store's rule table)
//   detect       warnings.json (and open warnings in the store)
//   export       <table>.csv for every store table

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "footlab/annotations.hpp"
#include "footlab/codec.hpp"
#include "footlab/common.hpp"
#include "footlab/detector.hpp"
#include "footlab/evaluation.hpp"
#include "footlab/features.hpp"
#include "footlab/forest.hpp"
#include "footlab/rules.hpp"
#include "footlab/sensor.hpp"
#include "footlab/store.hpp"
#include "footlab/synthetic.hpp"

namespace footlab {

namespace fs = std::filesystem;

namespace io {

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw NotFoundError(p.string() + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    const auto s = read_text(p);
    return {s.begin(), s.end()};
}

inline void write_text(const fs::path& p, std::string_view data) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error(p.string() + ": write failed");
}

inline void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& data) {
    write_text(p, std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

}  // namespace io

// ------------------------------------------------------------------ config

struct WindowConfig {
    double duration_s{5.0};
    double overlap{0.5};
    double sample_rate_hz{25.0};
};

struct HarConfig {
    std::size_t k{30};
    int n_trees{100};
    std::optional<int> max_depth;
    int min_samples_split{2};
    std::optional<int> features_per_split;
    int threads{0};
};

struct MiningConfig {
    double window_s{10.0};
    double step_s{5.0};
    Scope scope{Scope::per_player};
    double min_support{0.02};
    double min_confidence{0.8};
};

struct DeviceSource {
    fs::path file;
    DeviceConfig config;
};

struct PipelineConfig {
    std::optional<fs::path> store;
    std::optional<fs::path> match;
    std::optional<std::string> match_id;
    std::vector<DeviceSource> devices;
    std::optional<fs::path> activity_labels;
    std::vector<fs::path> episodes;
    EpisodeClock episode_clock{EpisodeClock::period};
    std::optional<fs::path> features;
    std::optional<fs::path> dataset;
    std::optional<fs::path> model;
    std::optional<fs::path> rules;
    std::optional<fs::path> manual_rules;
    std::optional<fs::path> ui_dir;
    WindowConfig window;
    HarConfig har;
    MiningConfig mining;
    Thresholds thresholds;
    std::uint64_t seed{1};
    std::string listen{"127.0.0.1:8080"};

    ForestParams forest_params() const {
        ForestParams p;
        p.n_trees = har.n_trees;
        p.max_depth = har.max_depth;
        p.min_samples_split = har.min_samples_split;
        p.features_per_split = har.features_per_split;
        p.seed = seed;
        p.threads = har.threads;
        return p;
    }
};

/// Validates the whole document and throws one ValidationError naming every
/// failing key. Paths are not checked for existence here; see require_paths.
inline PipelineConfig parse_config(const Json& doc, const fs::path& base_dir) {
    std::vector<ValidationError::Field> errors;
    FieldReader r(doc, "", errors);
    r.reject_unknown({"store", "match", "match_id", "devices", "activity_labels", "episodes", "episode_clock", "features",
                      "dataset", "model", "rules", "manual_rules", "ui_dir", "window", "har", "mining", "thresholds",
                      "seed", "listen"});
    PipelineConfig c;
    const auto path = [&](std::string_view key) -> std::optional<fs::path> {
        auto s = r.get<std::string>(key);
        if (!s) return std::nullopt;
        if (s->empty()) {
            r.fail(key, "empty path");
            return std::nullopt;
        }
        const fs::path p(*s);
        return p.is_absolute() ? p : base_dir / p;
    };
    c.store = path("store");
    c.match = path("match");
    c.match_id = r.get<std::string>("match_id");
    c.activity_labels = path("activity_labels");
    c.features = path("features");
    c.dataset = path("dataset");
    c.model = path("model");
    c.rules = path("rules");
    c.manual_rules = path("manual_rules");
    c.ui_dir = path("ui_dir");
    for (const auto& e : r.get_or<std::vector<std::string>>("episodes", {})) {
        const fs::path p(e);
        c.episodes.push_back(p.is_absolute() ? p : base_dir / p);
    }
    if (auto s = r.get<std::string>("episode_clock")) {
        if (*s == "period" || *s == "match")
            c.episode_clock = parse_episode_clock(*s);
        else
            r.fail("episode_clock", "must be period or match");
    }
    const auto& devices = r.array("devices");
    for (std::size_t i = 0; i < devices.size(); ++i) {
        auto d = r.nested(devices[i], "devices[" + std::to_string(i) + "]");
        DeviceSource src;
        if (auto f = d.required<std::string>("file")) {
            const fs::path p(*f);
            src.file = p.is_absolute() ? p : base_dir / p;
        }
        src.config = read_device_config(d);
        c.devices.push_back(std::move(src));
    }

    auto w = r.child("window");
    w.reject_unknown({"duration_s", "overlap", "sample_rate_hz"});
    c.window.duration_s = w.get_or("duration_s", c.window.duration_s);
    c.window.overlap = w.get_or("overlap", c.window.overlap);
    c.window.sample_rate_hz = w.get_or("sample_rate_hz", c.window.sample_rate_hz);
    if (!(c.window.duration_s > 0)) w.fail("duration_s", "must be > 0");
    if (!(c.window.overlap >= 0 && c.window.overlap < 1)) w.fail("overlap", "must be in [0, 1)");
    if (!(c.window.sample_rate_hz > 0)) w.fail("sample_rate_hz", "must be > 0");
    else if (c.window.duration_s > 0 && c.window.duration_s * c.window.sample_rate_hz < kMinWindowSamples)
        w.fail("duration_s", "window holds fewer than 16 samples");

    auto h = r.child("har");
    h.reject_unknown({"k", "n_trees", "max_depth", "min_samples_split", "features_per_split", "threads"});
    c.har.k = h.get_or<std::size_t>("k", c.har.k);
    c.har.n_trees = h.get_or("n_trees", c.har.n_trees);
    c.har.max_depth = h.get<int>("max_depth");
    c.har.min_samples_split = h.get_or("min_samples_split", c.har.min_samples_split);
    c.har.features_per_split = h.get<int>("features_per_split");
    c.har.threads = h.get_or("threads", c.har.threads);
    if (c.har.k < 1) h.fail("k", "must be >= 1");
    if (c.har.n_trees < 1) h.fail("n_trees", "must be >= 1");
    if (c.har.max_depth && *c.har.max_depth < 1) h.fail("max_depth", "must be >= 1");
    if (c.har.min_samples_split < 2) h.fail("min_samples_split", "must be >= 2");
    if (c.har.features_per_split && *c.har.features_per_split < 1) h.fail("features_per_split", "must be >= 1");
    if (c.har.threads < 0) h.fail("threads", "must be >= 0");

    auto m = r.child("mining");
    m.reject_unknown({"window_s", "step_s", "scope", "min_support", "min_confidence"});
    c.mining.window_s = m.get_or("window_s", c.mining.window_s);
    c.mining.step_s = m.get_or("step_s", c.mining.step_s);
    c.mining.min_support = m.get_or("min_support", c.mining.min_support);
    c.mining.min_confidence = m.get_or("min_confidence", c.mining.min_confidence);
    if (auto s = m.get<std::string>("scope")) {
        try {
            c.mining.scope = parse_scope(*s);
        } catch (const std::exception&) {
            m.fail("scope", "must be per-player, per-team or per-match");
        }
    }
    if (!(c.mining.window_s > 0)) m.fail("window_s", "must be > 0");
    if (!(c.mining.step_s > 0 && c.mining.step_s <= c.mining.window_s)) m.fail("step_s", "must be in (0, window_s]");
    if (!(c.mining.min_support > 0 && c.mining.min_support <= 1)) m.fail("min_support", "must be in (0, 1]");
    if (!(c.mining.min_confidence >= 0 && c.mining.min_confidence <= 1)) m.fail("min_confidence", "must be in [0, 1]");

    c.thresholds = read_thresholds(r.child("thresholds"));
    c.seed = r.get_or<std::uint64_t>("seed", c.seed);
    c.listen = r.get_or<std::string>("listen", c.listen);
    if (const auto colon = c.listen.rfind(':');
        colon == std::string::npos || !text::parse_int(c.listen.substr(colon + 1)) ||
        *text::parse_int(c.listen.substr(colon + 1)) < 0 || *text::parse_int(c.listen.substr(colon + 1)) > 65535)
        r.fail("listen", "expected host:port");
    throw_if_any(errors);
    return c;
}

inline PipelineConfig load_config(const fs::path& file) {
    if (!fs::exists(file)) throw ValidationError("config", "path not found");
    return parse_config(parse_json(io::read_text(file), "config"), fs::absolute(file).parent_path());
}

/// Every listed path key must be configured and exist. All misses are
/// reported together.
inline void require_paths(const PipelineConfig& c, std::initializer_list<std::string_view> keys) {
    std::vector<ValidationError::Field> errors;
    const auto check = [&](std::string name, const std::optional<fs::path>& p) {
        if (!p || !fs::exists(*p)) errors.push_back({std::move(name), "path not found"});
    };
    for (const auto key : keys) {
        if (key == "match") check("match", c.match);
        else if (key == "activity_labels") check("activity_labels", c.activity_labels);
        else if (key == "features") check("features", c.features);
        else if (key == "dataset") check("dataset", c.dataset);
        else if (key == "model") check("model", c.model);
        else if (key == "rules") check("rules", c.rules);
        else if (key == "manual_rules") check("manual_rules", c.manual_rules);
        else if (key == "ui_dir") check("ui_dir", c.ui_dir);
        else if (key == "episodes")
            for (std::size_t i = 0; i < c.episodes.size(); ++i) check("episodes[" + std::to_string(i) + "]", c.episodes[i]);
        else if (key == "devices")
            for (std::size_t i = 0; i < c.devices.size(); ++i)
                check("devices[" + std::to_string(i) + "].file", c.devices[i].file);
        else
            throw ContractViolation("require_paths: unknown key " + std::string(key));
    }
    throw_if_any(errors);
}

/// Config "store", else $FOOTLAB_DATA_DIR, else ./footlab-data.
inline fs::path store_root(const PipelineConfig& c) {
    if (c.store) return *c.store;
    if (const char* env = std::getenv("FOOTLAB_DATA_DIR"); env && *env) return env;
    return "footlab-data";
}

// ---------------------------------------------------------- sensor stages

inline std::vector<FeatureVector> sensor_features(const std::vector<SensorReading>& readings, const WindowConfig& w) {
    const auto windows = make_windows(readings, w.duration_s, w.overlap, w.sample_rate_hz);
    std::vector<FeatureVector> out;
    out.reserve(windows.size());
    for (const auto& win : windows) out.push_back(extract_features(win));
    return out;
}

/// A window takes the class of the single interval of its player and
/// period that contains it; windows spanning a change stay unlabeled.
inline void label_windows(std::vector<FeatureVector>& vectors, const std::vector<ActivityLabelRow>& truth) {
    for (auto& v : vectors) {
        const double a = v.window.start_t, b = a + v.window.duration_s;
        for (const auto& t : truth)
            if (t.player == v.subject && t.period_id == v.period_id && t.start_s <= a + 1e-9 && b <= t.end_s + 1e-9) {
                v.label = t.activity_class;
                break;
            }
    }
}

struct DeviceUpload {
    DeviceConfig config;
    std::string data;
};

struct SensorBatch {
    std::vector<SensorReading> readings;
    std::size_t dropped{0};
};

inline SensorBatch synchronize_devices(const std::vector<DeviceUpload>& uploads, const MatchMeta& match) {
    SensorBatch b;
    for (const auto& u : uploads) {
        auto sync = synchronize(parse_sensor_file(u.data, u.config), u.config, match.periods);
        b.dropped += sync.dropped();
        b.readings.insert(b.readings.end(), std::make_move_iterator(sync.readings.begin()),
                          std::make_move_iterator(sync.readings.end()));
    }
    return b;
}

inline std::vector<ActivityPrediction> predict_all(const ForestModel& model, const std::vector<FeatureVector>& vectors) {
    std::vector<ActivityPrediction> out;
    out.reserve(vectors.size());
    for (const auto& v : vectors) out.push_back(model.predict(v));
    return out;
}

// -------------------------------------------------------------- subcommands

struct IngestResult {
    std::string match_id;
    std::size_t episodes{0};
    std::size_t windows{0};
    std::size_t labeled{0};
    std::size_t dropped_readings{0};
    std::optional<fs::path> features;
};

/// Stores the match and its episodes; turns device files into a feature
/// table, labeled from the activity intervals when those are configured.
inline IngestResult run_ingest(const PipelineConfig& c, AnnotationStore& store, const fs::path& out) {
    require_paths(c, {"match", "episodes", "devices"});
    if (c.activity_labels) require_paths(c, {"activity_labels"});
    const auto match = match_from_json(parse_json(io::read_text(*c.match), "match"));
    store.upsert_match(match);
    IngestResult res;
    res.match_id = match.match_id;

    std::vector<Episode> episodes;
    for (const auto& f : c.episodes) {
        auto batch = parse_episode_file(io::read_text(f));
        for (const auto& e : batch)
            if (e.match_id != match.match_id)
                throw ArgumentError(f.filename().string() + ": episode " + std::to_string(e.episode_id) +
                                    " belongs to match " + e.match_id + ", not " + match.match_id);
        batch = to_period_relative(std::move(batch), match, c.episode_clock);
        episodes.insert(episodes.end(), batch.begin(), batch.end());
    }
    store.put_episodes(episodes);
    res.episodes = episodes.size();

    if (!c.devices.empty()) {
        std::vector<DeviceUpload> uploads;
        for (const auto& d : c.devices) uploads.push_back({d.config, io::read_text(d.file)});
        const auto batch = synchronize_devices(uploads, match);
        res.dropped_readings = batch.dropped;
        auto vectors = sensor_features(batch.readings, c.window);
        if (c.activity_labels) label_windows(vectors, read_truth_csv(io::read_text(*c.activity_labels)));
        res.windows = vectors.size();
        res.labeled = static_cast<std::size_t>(
            std::count_if(vectors.begin(), vectors.end(), [](const FeatureVector& v) { return v.label.has_value(); }));
        const int devices = vectors.empty() ? 1 : static_cast<int>(vectors.front().values.size()) / kFeaturesPerDevice;
        res.features = out / "features.csv";
        io::write_text(*res.features, write_feature_table(vectors, feature_names(devices)));
    }
    return res;
}

struct TrainResult {
    ForestModel model;
    std::size_t training_rows{0};
    fs::path model_file;
};

inline TrainResult run_har_train(const PipelineConfig& c, const fs::path& out) {
    require_paths(c, {"features"});
    const auto table = read_feature_table(io::read_text(*c.features));
    std::vector<FeatureVector> labeled;
    for (const auto& v : table.rows)
        if (v.label) labeled.push_back(v);
    if (labeled.size() < 2) throw ArgumentError("har-train: feature table has fewer than 2 labeled rows");
    const auto k = std::min(c.har.k, table.names.size());
    const auto selection = select_top_k(chi2_scores(labeled), k);
    TrainResult res{train_forest(labeled, selection, c.forest_params()), labeled.size(), out / "model.bin"};
    io::write_bytes(res.model_file, serialize(res.model));
    return res;
}

inline std::string resolve_match_id(const PipelineConfig& c) {
    if (c.match_id) return *c.match_id;
    if (c.match && fs::exists(*c.match)) return match_from_json(parse_json(io::read_text(*c.match), "match")).match_id;
    throw ValidationError("match_id", "required");
}

struct PredictResult {
    std::string match_id;
    std::size_t windows{0};
    std::vector<ActivityLabelRow> labels;
    fs::path labels_file;
};

inline PredictResult run_har_predict(const PipelineConfig& c, AnnotationStore& store, const fs::path& out) {
    require_paths(c, {"model", "features"});
    PredictResult res;
    res.match_id = resolve_match_id(c);
    const auto model = deserialize_forest(io::read_bytes(*c.model));
    const auto table = read_feature_table(io::read_text(*c.features));
    res.windows = table.rows.size();
    res.labels = store.aggregate_labels(res.match_id, predict_all(model, table.rows));
    res.labels_file = out / "labels.csv";
    io::write_text(res.labels_file, write_labels_csv(res.labels));
    return res;
}

struct EvaluateResult {
    EvalReport report;
    std::size_t vectors{0};
    fs::path csv, json;
};

/// LOSO over the public dataset directory, or over a labeled feature table.
inline EvaluateResult run_evaluate(const PipelineConfig& c, const fs::path& out) {
    std::vector<FeatureVector> data;
    if (c.dataset) {
        require_paths(c, {"dataset"});
        data = load_daily_sports(*c.dataset);
    } else {
        if (!c.features) throw ValidationError("dataset", "path not found");
        require_paths(c, {"features"});
        for (auto& v : read_feature_table(io::read_text(*c.features)).rows)
            if (v.label) data.push_back(std::move(v));
    }
    if (data.empty()) throw ArgumentError("evaluate: no labeled vectors");
    const auto k = std::min(c.har.k, data.front().values.size());
    EvaluateResult res{loso_evaluate(data, k, c.forest_params()), data.size(), out / "report.csv", out / "report.json"};
    io::write_text(res.csv, render_report(res.report, ReportFormat::csv));
    io::write_text(res.json, render_report(res.report, ReportFormat::json));
    return res;
}

inline std::vector<Entry> match_entries(const AnnotationStore& store, const std::string& match_id,
                                        const MiningConfig& m) {
    const auto meta = store.get_match(match_id);
    return build_entries(annotation_rows(store.episodes(match_id), store.activity_labels(match_id), &meta), m.window_s,
                         m.step_s, m.scope);
}

struct MineResult {
    std::size_t entries{0};
    std::size_t itemsets{0};
    std::vector<AssociationRule> rules;
    fs::path rules_file;
};

inline MineResult run_mine(const PipelineConfig& c, AnnotationStore& store, const fs::path& out) {
    if (c.manual_rules) require_paths(c, {"manual_rules"});
    std::vector<Entry> entries;
    for (const auto& m : store.list_matches()) {
        auto e = match_entries(store, m.match_id, c.mining);
        entries.insert(entries.end(), std::make_move_iterator(e.begin()), std::make_move_iterator(e.end()));
    }
    if (entries.empty()) throw ArgumentError("mine: the store holds no annotations");
    MineResult res;
    res.entries = entries.size();
    const auto itemsets = apriori(entries, c.mining.min_support);
    res.itemsets = itemsets.size();
    res.rules = generate_rules(itemsets, entries, c.mining.min_confidence);
    if (c.manual_rules) {
        const auto manual = load_manual_rules(io::read_text(*c.manual_rules));
        res.rules.insert(res.rules.end(), manual.begin(), manual.end());
    }
    store.replace_rules(res.rules);
    res.rules_file = out / "rules.txt";
    io::write_text(res.rules_file,
                   write_rules_file(res.rules, {"min_support=" + text::format_double(c.mining.min_support) +
                                                    " min_confidence=" + text::format_double(c.mining.min_confidence),
                                                "window_s=" + text::format_double(c.mining.window_s) +
                                                    " step_s=" + text::format_double(c.mining.step_s) +
                                                    " scope=" + std::string(to_string(c.mining.scope)),
                                                "entries=" + std::to_string(res.entries)}));
    return res;
}

/// Detects on one match, replaces its open warnings and returns the open
/// warnings after the run.
inline std::vector<Warning> detect_match(AnnotationStore& store, const std::string& match_id,
                                         const std::vector<AssociationRule>& rules, const MiningConfig& m,
                                         const Thresholds& t) {
    if (const auto bad = t.problems(); !bad.empty()) {
        std::vector<ValidationError::Field> f;
        for (const auto& b : bad) f.push_back({"thresholds." + b, "out of range"});
        throw ValidationError(std::move(f));
    }
    const auto entries = match_entries(store, match_id, m);
    store.replace_open_warnings(match_id, detect(entries, rules, t));
    return store.warnings(match_id, WarningState::open);
}

struct DetectResult {
    std::size_t rules{0};
    std::size_t active_rules{0};
    std::vector<Warning> warnings;
    fs::path warnings_file;
};

inline DetectResult run_detect(const PipelineConfig& c, AnnotationStore& store, const fs::path& out) {
    require_paths(c, {"rules"});
    const auto rules = read_rules_file(io::read_text(*c.rules));
    store.replace_rules(rules);
    DetectResult res;
    res.rules = rules.size();
    res.active_rules = active_rules(rules, c.thresholds).size();
    std::vector<std::string> ids;
    if (c.match_id)
        ids.push_back(*c.match_id);
    else
        for (const auto& m : store.list_matches()) ids.push_back(m.match_id);
    for (const auto& id : ids) {
        auto w = detect_match(store, id, rules, c.mining, c.thresholds);
        res.warnings.insert(res.warnings.end(), w.begin(), w.end());
    }
    res.warnings_file = out / "warnings.json";
    io::write_text(res.warnings_file, write_warnings(res.warnings));
    return res;
}

inline std::vector<fs::path> run_export(AnnotationStore& store, const fs::path& out) {
    return store.export_tables(out);
}

// ------------------------------------------------------- synthetic dataset

/// Writes a synthetic match as pipeline inputs plus a config.json wiring
/// them together; artifacts of later stages are expected under
/// <dir>/out and the store under <dir>/store. Returns the config path.
inline fs::path write_synthetic_dataset(const fs::path& dir, const SyntheticMatchParams& params) {
    const auto sm = generate_match(params);
    fs::create_directories(dir / "sensors");
    io::write_text(dir / "match.json", match_to_json(sm.match).dump(2) + "\n");
    io::write_text(dir / "episodes.csv", write_episode_file(sm.episodes));
    io::write_text(dir / "activity_labels.csv", write_truth_csv(sm.truth));
    io::write_text(dir / "manual_rules.txt",
                   "# expert knowledge\n{Shot} -> {Sprinting} : High\n{Throw-in} -> {Standing} : Medium\n");

    OrderedJson cfg;
    cfg["store"] = "store";
    cfg["match"] = "match.json";
    cfg["episodes"] = {"episodes.csv"};
    cfg["activity_labels"] = "activity_labels.csv";
    cfg["devices"] = OrderedJson::array();
    for (const auto& d : sm.devices) {
        io::write_text(dir / "sensors" / d.file_name, d.text);
        OrderedJson dev{{"file", "sensors/" + d.file_name}};
        dev.update(device_config_to_json(d.config));
        cfg["devices"].push_back(dev);
    }
    cfg["features"] = "out/features.csv";
    cfg["model"] = "out/model.bin";
    cfg["rules"] = "out/rules.txt";
    cfg["manual_rules"] = "manual_rules.txt";
    cfg["window"] = {{"duration_s", 5.0}, {"overlap", 0.5}, {"sample_rate_hz", params.sample_rate_hz}};
    cfg["har"] = {{"k", 30}, {"n_trees", 50}};
    cfg["mining"] = {{"window_s", 10.0}, {"step_s", 5.0}, {"scope", "per-player"}, {"min_support", 0.02},
                     {"min_confidence", 0.6}};
    cfg["thresholds"] = {{"min_confidence", 0.6}};
    cfg["seed"] = params.seed;
    io::write_text(dir / "config.json", cfg.dump(2) + "\n");
    return dir / "config.json";
}

}  // namespace footlab
