// footlab: command-line driver for the annotation-quality pipeline.
//
//   footlab [--config FILE] [--out DIR] [--seed N] <subcommand> [overrides]
//
// Exit status 0 on success, 1 on a runtime failure, 2 on a usage or
// configuration error. Failures print one line: "error: <message>".

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "footlab/pipeline.hpp"
#include "footlab/service.hpp"

namespace fs = std::filesystem;
using namespace footlab;

namespace {

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Football annotation-quality pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file, out_dir = ".", store_dir;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_file, "Pipeline config (JSON)");
    app.add_option("--out", out_dir, "Output directory for artifacts");
    app.add_option("--seed", seed, "Seed for every randomized step");
    app.add_option("--store", store_dir, "Store root (default: $FOOTLAB_DATA_DIR)");

    // Per-subcommand overrides are folded into the config document before
    // validation, so their errors are reported with the rest.
    Json overrides = Json::object();
    const auto path_override = [&](CLI::App* sub, const char* flag, const char* key, const char* help) {
        sub->add_option_function<std::string>(
            flag, [&overrides, key](const std::string& v) { overrides[key] = fs::absolute(v).string(); }, help);
    };
    const auto nested_override = [&](CLI::App* sub, const char* flag, const char* section, const char* key,
                                     const char* help) {
        sub->add_option_function<double>(
            flag, [&overrides, section, key](double v) { overrides[section][key] = v; }, help);
    };

    auto* ingest = app.add_subcommand("ingest", "Store a match and its episodes; write a feature table from device files");
    path_override(ingest, "--match", "match", "Match document (JSON)");
    path_override(ingest, "--activity-labels", "activity_labels", "Ground-truth activity intervals (CSV)");

    auto* train = app.add_subcommand("har-train", "Train the activity forest on a labeled feature table");
    path_override(train, "--features", "features", "Feature table (CSV)");

    auto* predict = app.add_subcommand("har-predict", "Classify a feature table and store the activity rows");
    path_override(predict, "--features", "features", "Feature table (CSV)");
    path_override(predict, "--model", "model", "Model file");
    predict->add_option_function<std::string>(
        "--match-id", [&](const std::string& v) { overrides["match_id"] = v; }, "Match receiving the labels");

    auto* evaluate = app.add_subcommand("evaluate", "Leave-one-subject-out evaluation");
    path_override(evaluate, "--dataset", "dataset", "Public 19-activity dataset root");
    path_override(evaluate, "--features", "features", "Labeled feature table (CSV)");

    auto* mine = app.add_subcommand("mine", "Mine association rules from the stored annotations");
    path_override(mine, "--manual-rules", "manual_rules", "Expert rules to append");
    nested_override(mine, "--min-support", "mining", "min_support", "Apriori support threshold");
    nested_override(mine, "--min-confidence", "mining", "min_confidence", "Rule confidence threshold");

    auto* detect_cmd = app.add_subcommand("detect", "Detect rule violations and store them as warnings");
    path_override(detect_cmd, "--rules", "rules", "Rules file");
    detect_cmd->add_option_function<std::string>(
        "--match-id", [&](const std::string& v) { overrides["match_id"] = v; }, "Restrict to one match");
    nested_override(detect_cmd, "--min-support", "thresholds", "min_support", "Active-rule support threshold");
    nested_override(detect_cmd, "--min-confidence", "thresholds", "min_confidence", "Active-rule confidence threshold");
    nested_override(detect_cmd, "--min-conviction", "thresholds", "min_conviction", "Active-rule conviction threshold");

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    serve->add_option_function<std::string>(
        "--listen", [&](const std::string& v) { overrides["listen"] = v; }, "host:port");
    path_override(serve, "--model", "model", "Model used for sensor uploads");
    path_override(serve, "--ui-dir", "ui_dir", "Static review bundle served under /ui/");

    auto* export_cmd = app.add_subcommand("export", "Write every store table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        Json doc = Json::object();
        fs::path base = fs::current_path();
        if (!config_file.empty()) {
            if (!fs::exists(config_file)) throw ValidationError("config", "path not found");
            doc = parse_json(io::read_text(config_file), "config");
            if (!doc.is_object()) throw ValidationError("config", "expected a JSON object");
            base = fs::absolute(config_file).parent_path();
        }
        for (const auto& [k, v] : overrides.items()) {
            if (v.is_object() && doc.contains(k) && doc[k].is_object())
                doc[k].update(v);
            else
                doc[k] = v;
        }
        if (seed) doc["seed"] = *seed;
        if (!store_dir.empty()) doc["store"] = fs::absolute(store_dir).string();
        const auto cfg = parse_config(doc, base);
        const fs::path out(out_dir);

        if (*evaluate) {
            const auto r = run_evaluate(cfg, out);
            std::cout << "evaluate: " << r.vectors << " vectors, " << r.report.fold_count << " folds\n"
                      << "macro precision=" << fmt3(r.report.average.precision)
                      << " recall=" << fmt3(r.report.average.recall) << " f=" << fmt3(r.report.average.f_score) << "\n"
                      << "wrote " << r.csv.string() << " " << r.json.string() << "\n";
            return 0;
        }
        if (*train) {
            const auto r = run_har_train(cfg, out);
            std::cout << "har-train: " << r.training_rows << " labeled windows, " << r.model.class_list().size()
                      << " classes, " << r.model.trees().size() << " trees\nwrote " << r.model_file.string() << "\n";
            return 0;
        }

        AnnotationStore store(store_root(cfg));
        if (*ingest) {
            const auto r = run_ingest(cfg, store, out);
            std::cout << "ingest: match " << r.match_id << ", " << r.episodes << " episodes, " << r.windows
                      << " windows (" << r.labeled << " labeled), " << r.dropped_readings << " readings outside periods\n";
            if (r.features) std::cout << "wrote " << r.features->string() << "\n";
        } else if (*predict) {
            const auto r = run_har_predict(cfg, store, out);
            std::cout << "har-predict: match " << r.match_id << ", " << r.windows << " windows -> " << r.labels.size()
                      << " activity rows\nwrote " << r.labels_file.string() << "\n";
        } else if (*mine) {
            const auto r = run_mine(cfg, store, out);
            std::cout << "mine: " << r.entries << " entries, " << r.itemsets << " frequent itemsets, " << r.rules.size()
                      << " rules\nwrote " << r.rules_file.string() << "\n";
        } else if (*detect_cmd) {
            const auto r = run_detect(cfg, store, out);
            std::cout << "detect: " << r.active_rules << " of " << r.rules << " rules active, " << r.warnings.size()
                      << " open warnings\nwrote " << r.warnings_file.string() << "\n";
        } else if (*export_cmd) {
            for (const auto& p : run_export(store, out)) std::cout << "wrote " << p.string() << "\n";
        } else if (*serve) {
            if (cfg.ui_dir) require_paths(cfg, {"ui_dir"});
            ServiceOptions opt;
            if (cfg.model) {
                require_paths(cfg, {"model"});
                opt.model = deserialize_forest(io::read_bytes(*cfg.model));
            }
            opt.window = cfg.window;
            opt.mining = cfg.mining;
            opt.ui_dir = cfg.ui_dir;
            Service service(store, std::move(opt));
            const auto colon = cfg.listen.rfind(':');
            const auto host = cfg.listen.substr(0, colon);
            const int port = static_cast<int>(*text::parse_int(cfg.listen.substr(colon + 1)));
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "serving on http://" << cfg.listen << std::endl;
            if (!service.listen(host, port)) throw std::runtime_error("listen: cannot bind " + cfg.listen);
            g_service = nullptr;
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error: " << msg << "\n";
        return 1;
    }
}
