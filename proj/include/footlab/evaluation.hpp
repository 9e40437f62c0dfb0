#pragma once

// Leave-one-subject-out evaluation and report rendering.

#include <algorithm>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "footlab/common.hpp"
#include "footlab/features.hpp"
#include "footlab/forest.hpp"

namespace footlab {

struct ClassMetrics {
    double precision{0}, recall{0}, f_score{0};
    std::size_t support{0};
};

struct FoldInfo {
    std::string test_subject;
    std::size_t test_count{0};
    std::vector<std::size_t> selected;
};

struct EvalReport {
    std::vector<std::string> classes;
    std::vector<ClassMetrics> per_class;
    ClassMetrics average;  ///< unweighted mean over classes; support = total
    std::vector<std::vector<std::size_t>> confusion;  ///< rows true, columns predicted
    std::size_t fold_count{0};
    std::vector<FoldInfo> folds;
};

inline double f_score(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

/// Per-class and macro metrics of a square confusion matrix. A class never
/// predicted gets precision 0; a class with no support gets recall 0.
inline EvalReport metrics_from_confusion(std::vector<std::string> classes,
                                         std::vector<std::vector<std::size_t>> confusion) {
    const std::size_t n = classes.size();
    if (confusion.size() != n) throw ArgumentError("confusion matrix size does not match class list");
    for (const auto& row : confusion)
        if (row.size() != n) throw ArgumentError("confusion matrix must be square");
    EvalReport rep;
    rep.classes = std::move(classes);
    rep.confusion = std::move(confusion);
    rep.per_class.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < n; ++j) {
            row += rep.confusion[c][j];
            col += rep.confusion[j][c];
        }
        const double tp = static_cast<double>(rep.confusion[c][c]);
        auto& m = rep.per_class[c];
        m.support = row;
        m.precision = col ? tp / static_cast<double>(col) : 0.0;
        m.recall = row ? tp / static_cast<double>(row) : 0.0;
        m.f_score = f_score(m.precision, m.recall);
        rep.average.precision += m.precision / static_cast<double>(n);
        rep.average.recall += m.recall / static_cast<double>(n);
        rep.average.f_score += m.f_score / static_cast<double>(n);
        rep.average.support += row;
    }
    return rep;
}

namespace detail {
inline std::vector<std::string> natural_sorted(std::set<std::string> s) {
    std::vector<std::string> v(s.begin(), s.end());
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return text::natural_less(a, b); });
    return v;
}
}  // namespace detail

/// One fold per subject: chi-squared selection and training see only the
/// other subjects. `train` is called as train(training_vectors, selection)
/// and must return an ActivityClassifier. Metrics come from the pooled
/// confusion matrix.
template <class Trainer>
    requires std::invocable<Trainer&, std::span<const FeatureVector>, const FeatureSelection&>
EvalReport loso_evaluate(std::span<const FeatureVector> dataset, std::size_t k, Trainer&& train) {
    std::set<std::string> subject_set, label_set;
    for (const auto& v : dataset) {
        if (!v.label) throw ArgumentError("loso_evaluate: unlabeled vector for subject " + v.subject);
        subject_set.insert(v.subject);
        label_set.insert(*v.label);
    }
    if (subject_set.size() < 2) throw ArgumentError("loso_evaluate: need at least 2 subjects");
    const auto subjects = detail::natural_sorted(subject_set);
    const auto classes = detail::natural_sorted(label_set);
    std::map<std::string, std::size_t> cls_idx;
    for (std::size_t i = 0; i < classes.size(); ++i) cls_idx[classes[i]] = i;

    std::vector<std::vector<std::size_t>> confusion(classes.size(), std::vector<std::size_t>(classes.size(), 0));
    std::vector<FoldInfo> folds;
    for (const auto& held_out : subjects) {
        std::vector<FeatureVector> training;
        std::vector<const FeatureVector*> testing;
        for (const auto& v : dataset) {
            if (v.subject == held_out)
                testing.push_back(&v);
            else
                training.push_back(v);
        }
        auto selection = select_top_k(chi2_scores(training), k);
        const auto model = train(std::span<const FeatureVector>(training), selection);
        for (const auto* v : testing) {
            const auto pred = model.predict(*v);
            confusion[cls_idx.at(*v->label)][cls_idx.at(pred.predicted_class)] += 1;
        }
        folds.push_back({held_out, testing.size(), std::move(selection.selected)});
    }
    auto rep = metrics_from_confusion(classes, std::move(confusion));
    rep.fold_count = subjects.size();
    rep.folds = std::move(folds);
    return rep;
}

inline EvalReport loso_evaluate(std::span<const FeatureVector> dataset, std::size_t k, const ForestParams& params) {
    return loso_evaluate(dataset, k, [&](std::span<const FeatureVector> tr, const FeatureSelection& sel) {
        return train_forest(tr, sel, params);
    });
}

// --------------------------------------------------------------- rendering

enum class ReportFormat { csv, json };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "csv" || s == "text") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    throw ArgumentError("unknown report format '" + std::string(s) + "'");
}

inline nlohmann::ordered_json report_to_json(const EvalReport& rep) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["classes"] = rep.classes;
    ordered_json per = ordered_json::array();
    for (std::size_t c = 0; c < rep.classes.size(); ++c) {
        const auto& m = rep.per_class[c];
        per.push_back({{"class", rep.classes[c]},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f_score", m.f_score},
                       {"support", m.support}});
    }
    j["per_class"] = per;
    j["average"] = {{"precision", rep.average.precision},
                    {"recall", rep.average.recall},
                    {"f_score", rep.average.f_score},
                    {"support", rep.average.support}};
    j["confusion"] = rep.confusion;
    j["fold_count"] = rep.fold_count;
    ordered_json folds = ordered_json::array();
    for (const auto& f : rep.folds)
        folds.push_back({{"test_subject", f.test_subject}, {"test_count", f.test_count}, {"selected", f.selected}});
    j["folds"] = folds;
    return j;
}

inline std::string render_report(const EvalReport& rep, ReportFormat format) {
    if (format == ReportFormat::json) return report_to_json(rep).dump(2) + "\n";
    std::string out = "class,precision,recall,f_score,support\n";
    const auto row = [&](const std::string& name, const ClassMetrics& m) {
        out += name + "," + text::format_double(m.precision) + "," + text::format_double(m.recall) + "," +
               text::format_double(m.f_score) + "," + std::to_string(m.support) + "\n";
    };
    for (std::size_t c = 0; c < rep.classes.size(); ++c) row(rep.classes[c], rep.per_class[c]);
    row("average", rep.average);
    out += "\nconfusion";
    for (const auto& c : rep.classes) out += "," + c;
    out += "\n";
    for (std::size_t r = 0; r < rep.classes.size(); ++r) {
        out += rep.classes[r];
        for (auto v : rep.confusion[r]) out += "," + std::to_string(v);
        out += "\n";
    }
    return out;
}

inline std::string render_report(const EvalReport& rep, std::string_view format) {
    return render_report(rep, parse_report_format(format));
}

// ----------------------------------------------------- public HAR corpus
//
// Layout: <root>/aNN/pM/sKK.txt: activity NN (01..19), subject M (1..8),
// segment KK (01..60). Each segment is 5 s at 25 Hz: 125 rows of 45
// comma-separated values, five devices (torso, right arm, left arm, right
// leg, left leg) of nine channels each in acc/gyro/mag x/y/z order.

struct DailySportsLayout {
    double sample_rate_hz{25.0};
    int devices{5};
};

namespace detail {
inline bool numbered_dir(const std::filesystem::path& p, char prefix, long long& number) {
    const auto name = p.filename().string();
    if (name.size() < 2 || name[0] != prefix) return false;
    const auto n = text::parse_int(std::string_view(name).substr(1));
    if (!n) return false;
    number = *n;
    return true;
}

inline std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> v;
    for (const auto& e : std::filesystem::directory_iterator(dir)) v.push_back(e.path());
    std::sort(v.begin(), v.end(),
              [](const auto& a, const auto& b) { return text::natural_less(a.filename().string(), b.filename().string()); });
    return v;
}
}  // namespace detail

inline SignalWindow read_segment_file(const std::filesystem::path& file, const DailySportsLayout& layout) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw FormatError("cannot open " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto content = ss.str();
    const std::size_t channels = static_cast<std::size_t>(layout.devices) * kChannelsPerDevice;
    SignalWindow w;
    w.sample_rate_hz = layout.sample_rate_hz;
    w.samples.assign(channels, {});
    std::size_t row = 0;
    for (const auto line : text::lines(content)) {
        if (text::trim(line).empty()) continue;
        ++row;
        const auto cells = text::split(line, ',');
        if (cells.size() != channels)
            throw FormatError(file.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " columns, expected " + std::to_string(channels));
        for (std::size_t c = 0; c < channels; ++c) {
            const auto v = text::parse_double(cells[c]);
            if (!v) throw FormatError(file.string() + ": row " + std::to_string(row) + " non-numeric cell");
            w.samples[c].push_back(*v);
        }
    }
    w.duration_s = static_cast<double>(row) / layout.sample_rate_hz;
    w.validate();
    return w;
}

/// Loads every segment as one labeled feature vector (label "A<n>", subject "p<m>").
inline std::vector<FeatureVector> load_daily_sports(const std::filesystem::path& root,
                                                    const DailySportsLayout& layout = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw FormatError("dataset root not found: " + root.string());
    std::vector<FeatureVector> out;
    for (const auto& act : detail::sorted_entries(root)) {
        long long a = 0;
        if (!fs::is_directory(act) || !detail::numbered_dir(act, 'a', a)) continue;
        for (const auto& subj : detail::sorted_entries(act)) {
            long long p = 0;
            if (!fs::is_directory(subj) || !detail::numbered_dir(subj, 'p', p)) continue;
            for (const auto& seg : detail::sorted_entries(subj)) {
                long long s = 0;
                if (seg.extension() != ".txt" || !detail::numbered_dir(seg.stem(), 's', s)) continue;
                auto w = read_segment_file(seg, layout);
                w.player_id = "p" + std::to_string(p);
                w.start_t = static_cast<double>(s - 1) * w.duration_s;
                auto fv = extract_features(w);
                fv.label = "A" + std::to_string(a);
                out.push_back(std::move(fv));
            }
        }
    }
    if (out.empty()) throw FormatError("no segment files under " + root.string());
    return out;
}

}  // namespace footlab
