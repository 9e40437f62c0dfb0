#pragma once

// Windowing and per-signal feature extraction for activity recognition.
//
// Every channel contributes 26 values, in this order:
//   min, max, mean, var, skew, kurt, ac1..ac10, peakmag1..peakmag5, peakfreq1..peakfreq5
// Channels are ordered device-major, then acc/gyro/mag, then x/y/z, giving
// 234 features per worn device.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "footlab/binary_io.hpp"
#include "footlab/common.hpp"
#include "footlab/sensor.hpp"

namespace footlab {

inline constexpr int kFeaturesPerSignal = 26;
inline constexpr int kFeaturesPerDevice = kFeaturesPerSignal * kChannelsPerDevice;  // 234
inline constexpr int kMinWindowSamples = 16;
inline constexpr double kDegenerateVariance = 1e-24;

struct SignalWindow {
    std::string player_id;
    int period_id{1};
    double start_t{0};
    double duration_s{0};
    double sample_rate_hz{0};
    /// samples[signal index]: all channels of all devices, equal length W.
    std::vector<std::vector<double>> samples;

    int device_count() const { return static_cast<int>(samples.size()) / kChannelsPerDevice; }
    std::size_t length() const { return samples.empty() ? 0 : samples.front().size(); }

    void validate() const {
        if (samples.empty() || samples.size() % kChannelsPerDevice != 0)
            throw ContractViolation("window must hold 9 channels per device");
        const auto w = samples.front().size();
        if (w < kMinWindowSamples) throw ContractViolation("window shorter than 16 samples");
        for (const auto& s : samples)
            if (s.size() != w) throw ContractViolation("window channels differ in length");
    }
};

struct WindowRef {
    double start_t{0};
    double duration_s{0};
    friend bool operator==(const WindowRef&, const WindowRef&) = default;
};

struct FeatureVector {
    std::vector<double> values;
    std::string subject;  ///< player id or dataset subject
    std::optional<std::string> label;
    int period_id{1};
    WindowRef window{};
};

// ---------------------------------------------------------------- windowing

/// Tiles each (player, period) stream into windows of `duration_s` seconds
/// starting at its first sample. Readings are placed on the integer sample
/// grid round((t - t_first) * fs); window k covers W grid slots from
/// ceil(k * step * fs). Empty slots take the previous value, and a window with
/// more than 5% empty slots in any channel is dropped.
inline std::vector<SignalWindow> make_windows(const std::vector<SensorReading>& readings, double duration_s,
                                              double overlap_fraction, double sample_rate_hz) {
    if (!(duration_s > 0)) throw ArgumentError("make_windows: duration_s must be > 0");
    if (!(overlap_fraction >= 0 && overlap_fraction < 1)) throw ArgumentError("make_windows: overlap must be in [0,1)");
    if (!(sample_rate_hz > 0)) throw ArgumentError("make_windows: sample rate must be > 0");

    const auto W = static_cast<long long>(std::llround(duration_s * sample_rate_hz));
    std::vector<SignalWindow> out;
    if (W < kMinWindowSamples) return out;

    using Series = std::vector<std::pair<double, double>>;
    std::map<std::pair<std::string, int>, std::map<int, Series>> groups;
    for (const auto& r : readings) groups[{r.player_id, r.period_id}][r.signal.index()].emplace_back(r.t, r.value);

    const double step = duration_s * (1.0 - overlap_fraction);
    const auto max_missing = static_cast<long long>(std::floor(0.05 * static_cast<double>(W)));

    for (auto& [key, signals] : groups) {
        int max_signal = 0;
        double t_first = std::numeric_limits<double>::infinity();
        for (auto& [sig, series] : signals) {
            std::stable_sort(series.begin(), series.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            max_signal = std::max(max_signal, sig);
            t_first = std::min(t_first, series.front().first);
        }
        const int devices = max_signal / kChannelsPerDevice + 1;
        const std::size_t n_signals = static_cast<std::size_t>(devices) * kChannelsPerDevice;

        // Grid index of every reading, per signal.
        std::map<int, std::vector<long long>> grid;
        long long g_last = 0;
        for (const auto& [sig, series] : signals) {
            auto& g = grid[sig];
            g.reserve(series.size());
            for (const auto& [t, v] : series) g.push_back(std::llround((t - t_first) * sample_rate_hz));
            g_last = std::max(g_last, g.back());
        }

        for (long long k = 0;; ++k) {
            const auto g0 = static_cast<long long>(std::ceil(static_cast<double>(k) * step * sample_rate_hz - 1e-6));
            if (g0 + W - 1 > g_last) break;

            SignalWindow win{key.first, key.second, t_first + static_cast<double>(k) * step, duration_s,
                             sample_rate_hz, {}};
            win.samples.assign(n_signals, std::vector<double>(static_cast<std::size_t>(W), 0.0));
            bool keep = true;
            for (std::size_t s = 0; s < n_signals && keep; ++s) {
                const auto it = signals.find(static_cast<int>(s));
                if (it == signals.end()) {
                    keep = false;
                    break;
                }
                const Series& series = it->second;
                const auto& g = grid.at(static_cast<int>(s));
                auto& dst = win.samples[s];
                std::vector<char> filled(static_cast<std::size_t>(W), 0);
                const auto lo = std::lower_bound(g.begin(), g.end(), g0);
                for (auto p = lo; p != g.end() && *p < g0 + W; ++p) {
                    const auto slot = static_cast<std::size_t>(*p - g0);
                    dst[slot] = series[static_cast<std::size_t>(p - g.begin())].second;
                    filled[slot] = 1;
                }
                const auto missing = std::count(filled.begin(), filled.end(), 0);
                if (missing > max_missing) {
                    keep = false;
                    break;
                }
                if (missing == 0) continue;
                // Previous-value hold; a leading gap holds the last value before the
                // window, or else the first value inside it.
                std::optional<double> held;
                if (lo != g.begin()) held = series[static_cast<std::size_t>(lo - g.begin()) - 1].second;
                if (!held) held = dst[static_cast<std::size_t>(std::find(filled.begin(), filled.end(), 1) - filled.begin())];
                for (std::size_t i = 0; i < dst.size(); ++i) {
                    if (filled[i])
                        held = dst[i];
                    else
                        dst[i] = *held;
                }
            }
            if (keep) out.push_back(std::move(win));
        }
    }
    return out;
}

// ----------------------------------------------------------------- moments

struct Moments {
    double min{0}, max{0}, mean{0}, variance{0}, skewness{0}, kurtosis{0};
};

/// Population moments; skewness m3/m2^1.5 and Pearson kurtosis m4/m2^2.
/// Both are defined 0 when m2 < 1e-24.
inline Moments moment_features(std::span<const double> x) {
    if (x.size() < 2) throw ContractViolation("moment_features: need at least 2 samples");
    const double n = static_cast<double>(x.size());
    Moments m;
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    m.min = *mn;
    m.max = *mx;
    m.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double v : x) {
        const double d = v - m.mean, d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    m.variance = m2;
    if (m2 >= kDegenerateVariance) {
        m.skewness = m3 / std::pow(m2, 1.5);
        m.kurtosis = m4 / (m2 * m2);
    }
    return m;
}

// ---------------------------------------------------------- autocorrelation

inline constexpr int kAutocorrSamples = 10;

/// Lags sampled by autocorrelation_samples for a window of W samples.
inline std::array<std::size_t, kAutocorrSamples> autocorrelation_lags(std::size_t W) {
    std::array<std::size_t, kAutocorrSamples> lags{};
    for (int j = 1; j <= kAutocorrSamples; ++j)
        lags[j - 1] = static_cast<std::size_t>(std::llround(j * static_cast<double>(W - 1) / 10.0));
    return lags;
}

/// Normalized (biased) autocorrelation r(tau) = sum_i d_i d_{i+tau} / sum_i d_i^2,
/// d = x - mean, sampled at ten lags spread over 1..W-1.
inline std::array<double, kAutocorrSamples> autocorrelation_samples(std::span<const double> x) {
    const std::size_t W = x.size();
    if (W < kMinWindowSamples) throw ContractViolation("autocorrelation_samples: need at least 16 samples");
    std::array<double, kAutocorrSamples> out{};
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(W);
    std::vector<double> d(W);
    double denom = 0;
    for (std::size_t i = 0; i < W; ++i) {
        d[i] = x[i] - mean;
        denom += d[i] * d[i];
    }
    if (denom / static_cast<double>(W) < kDegenerateVariance) return out;
    const auto lags = autocorrelation_lags(W);
    for (int j = 0; j < kAutocorrSamples; ++j) {
        double num = 0;
        for (std::size_t i = 0; i + lags[j] < W; ++i) num += d[i] * d[i + lags[j]];
        out[j] = num / denom;
    }
    return out;
}

// --------------------------------------------------------------- DFT peaks

namespace detail {

/// FFTW r2c plans cached per length. Planning is not thread-safe in FFTW,
/// execution with new-array entry points is.
class R2CPlans {
public:
    static R2CPlans& instance() {
        static R2CPlans plans;
        return plans;
    }
    fftw_plan get(std::size_t n) {
        std::lock_guard lock(mu_);
        auto it = plans_.find(n);
        if (it != plans_.end()) return it->second;
        std::vector<double> in(n);
        std::vector<fftw_complex> out(n / 2 + 1);
        auto plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(),
                                         FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_PRESERVE_INPUT);
        plans_.emplace(n, plan);
        return plan;
    }
    R2CPlans(const R2CPlans&) = delete;
    R2CPlans& operator=(const R2CPlans&) = delete;
    ~R2CPlans() {
        for (auto& [n, p] : plans_) fftw_destroy_plan(p);
    }

private:
    R2CPlans() = default;
    std::mutex mu_;
    std::map<std::size_t, fftw_plan> plans_;
};

}  // namespace detail

/// |X[b]| for b = 0..floor(W/2), unnormalized DFT.
inline std::vector<double> magnitude_spectrum(std::span<const double> x) {
    const std::size_t W = x.size();
    std::vector<double> in(x.begin(), x.end());
    std::vector<fftw_complex> out(W / 2 + 1);
    fftw_execute_dft_r2c(detail::R2CPlans::instance().get(W), in.data(), out.data());
    std::vector<double> mag(W / 2 + 1);
    for (std::size_t b = 0; b < mag.size(); ++b) mag[b] = std::hypot(out[b][0], out[b][1]);
    return mag;
}

struct SpectralPeak {
    double magnitude{0};
    double frequency_hz{0};
    friend bool operator==(const SpectralPeak&, const SpectralPeak&) = default;
};

inline constexpr int kSpectralPeaks = 5;

/// Selects the five largest local maxima of a magnitude spectrum over bins
/// 1..floor(W/2); bins at or below `floor` never count as peaks.
inline std::array<SpectralPeak, kSpectralPeaks> pick_spectral_peaks(std::span<const double> mag, std::size_t W,
                                                                    double fs, double floor = 0.0) {
    const std::size_t last = W / 2;
    std::vector<std::size_t> peaks;
    for (std::size_t b = 1; b <= last; ++b) {
        const double m = mag[b];
        if (!(m > floor)) continue;
        const bool left_ok = b == 1 || m >= mag[b - 1];
        const bool right_ok = b == last || m > mag[b + 1];
        if (left_ok && right_ok) peaks.push_back(b);
    }
    std::stable_sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });
    std::array<SpectralPeak, kSpectralPeaks> out{};
    for (std::size_t i = 0; i < peaks.size() && i < kSpectralPeaks; ++i)
        out[i] = {mag[peaks[i]], static_cast<double>(peaks[i]) * fs / static_cast<double>(W)};
    return out;
}

inline std::array<SpectralPeak, kSpectralPeaks> dft_peaks(std::span<const double> x, double fs) {
    const std::size_t W = x.size();
    if (W < kMinWindowSamples) throw ContractViolation("dft_peaks: need at least 16 samples");
    if (!(fs > 0)) throw ContractViolation("dft_peaks: sampling rate must be > 0");
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(W);
    double m2 = 0, scale = 0;
    for (double v : x) {
        m2 += (v - mean) * (v - mean);
        scale += std::abs(v);
    }
    if (m2 / static_cast<double>(W) < kDegenerateVariance) return {};
    const auto mag = magnitude_spectrum(x);
    // Rounding noise of the transform sits near 1e-16 * sum|x|.
    return pick_spectral_peaks(mag, W, fs, 1e-12 * scale);
}

// ------------------------------------------------------- feature assembly

inline std::vector<std::string> feature_names(int device_count) {
    static const std::array<std::string, 6> moment_names{"min", "max", "mean", "var", "skew", "kurt"};
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(device_count) * kFeaturesPerDevice);
    for (int s = 0; s < device_count * kChannelsPerDevice; ++s) {
        const auto prefix = SignalId::from_index(s).name() + ".";
        for (const auto& m : moment_names) names.push_back(prefix + m);
        for (int j = 1; j <= kAutocorrSamples; ++j) names.push_back(prefix + "ac" + std::to_string(j));
        for (int j = 1; j <= kSpectralPeaks; ++j) names.push_back(prefix + "peakmag" + std::to_string(j));
        for (int j = 1; j <= kSpectralPeaks; ++j) names.push_back(prefix + "peakfreq" + std::to_string(j));
    }
    return names;
}

inline void append_signal_features(std::span<const double> x, double fs, std::vector<double>& out) {
    const auto m = moment_features(x);
    out.insert(out.end(), {m.min, m.max, m.mean, m.variance, m.skewness, m.kurtosis});
    const auto ac = autocorrelation_samples(x);
    out.insert(out.end(), ac.begin(), ac.end());
    const auto peaks = dft_peaks(x, fs);
    for (const auto& p : peaks) out.push_back(p.magnitude);
    for (const auto& p : peaks) out.push_back(p.frequency_hz);
}

inline FeatureVector extract_features(const SignalWindow& window, double fs) {
    window.validate();
    FeatureVector fv;
    fv.subject = window.player_id;
    fv.period_id = window.period_id;
    fv.window = {window.start_t, window.duration_s};
    fv.values.reserve(window.samples.size() * kFeaturesPerSignal);
    for (const auto& ch : window.samples) append_signal_features(ch, fs, fv.values);
    return fv;
}

inline FeatureVector extract_features(const SignalWindow& window) {
    return extract_features(window, window.sample_rate_hz);
}

// -------------------------------------------------------- chi2 selection

/// Chi-squared score of each feature against the class labels. Features are
/// min-max scaled to [0,1] first so the statistic sees nonnegative mass.
inline std::vector<double> chi2_scores(std::span<const FeatureVector> train) {
    if (train.size() < 2) throw ContractViolation("chi2_scores: need at least 2 vectors");
    std::map<std::string, std::size_t> class_index;
    for (const auto& v : train) {
        if (!v.label) throw ContractViolation("chi2_scores: unlabeled vector");
        class_index.emplace(*v.label, 0);
    }
    if (class_index.size() < 2) throw ContractViolation("chi2_scores: need at least 2 classes");
    std::size_t c = 0;
    for (auto& [name, idx] : class_index) idx = c++;

    const std::size_t d = train.front().values.size();
    const std::size_t N = train.size();
    std::vector<std::size_t> cls(N);
    std::vector<double> class_n(class_index.size(), 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        if (train[i].values.size() != d) throw ContractViolation("chi2_scores: arity mismatch");
        cls[i] = class_index.at(*train[i].label);
        class_n[cls[i]] += 1;
    }

    std::vector<double> scores(d, 0.0);
    std::vector<double> observed(class_index.size());
    for (std::size_t j = 0; j < d; ++j) {
        double lo = train[0].values[j], hi = lo;
        for (const auto& v : train) {
            lo = std::min(lo, v.values[j]);
            hi = std::max(hi, v.values[j]);
        }
        if (!(hi > lo)) continue;
        std::fill(observed.begin(), observed.end(), 0.0);
        const double range = hi - lo;
        for (std::size_t i = 0; i < N; ++i) observed[cls[i]] += (train[i].values[j] - lo) / range;
        const double total = std::accumulate(observed.begin(), observed.end(), 0.0);
        double score = 0;
        for (std::size_t k = 0; k < observed.size(); ++k) {
            const double expected = total * class_n[k] / static_cast<double>(N);
            if (expected > 0) score += (observed[k] - expected) * (observed[k] - expected) / expected;
        }
        scores[j] = score;
    }
    return scores;
}

struct FeatureSelection {
    std::vector<double> scores;
    std::vector<std::size_t> selected;  ///< descending score, ties by lower index
};

inline FeatureSelection select_top_k(std::vector<double> scores, std::size_t k) {
    if (k > scores.size())
        throw ArgumentError("select_top_k: k=" + std::to_string(k) + " exceeds feature count " +
                            std::to_string(scores.size()));
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(k);
    return {std::move(scores), std::move(idx)};
}

// ---------------------------------------------------------- table export

/// Delimited text: subject,label,period,start_t,duration_s then one column per feature.
inline std::string write_feature_table(std::span<const FeatureVector> rows, const std::vector<std::string>& names) {
    std::string out = "subject,label,period,start_t,duration_s";
    for (const auto& n : names) out += "," + n;
    out += "\n";
    for (const auto& r : rows) {
        if (r.values.size() != names.size()) throw ArgumentError("feature table: arity mismatch");
        out += r.subject + "," + r.label.value_or("") + "," + std::to_string(r.period_id) + "," +
               text::format_double(r.window.start_t) + "," + text::format_double(r.window.duration_s);
        for (double v : r.values) out += "," + text::format_double(v);
        out += "\n";
    }
    return out;
}

struct FeatureTable {
    std::vector<std::string> names;
    std::vector<FeatureVector> rows;
};

inline FeatureTable read_feature_table(std::string_view textdata) {
    const auto ls = text::lines(textdata);
    if (ls.empty()) throw FormatError("feature table: empty");
    const auto header = text::split(ls[0], ',');
    static const std::array<std::string, 5> meta{"subject", "label", "period", "start_t", "duration_s"};
    if (header.size() < meta.size() || !std::equal(meta.begin(), meta.end(), header.begin()))
        throw FormatError("feature table: bad header");
    FeatureTable t;
    t.names.assign(header.begin() + meta.size(), header.end());
    for (std::size_t li = 1; li < ls.size(); ++li) {
        if (text::trim(ls[li]).empty()) continue;
        const auto cells = text::split(ls[li], ',');
        if (cells.size() != header.size()) throw RowError(li, "wrong column count");
        FeatureVector fv;
        fv.subject = cells[0];
        if (!cells[1].empty()) fv.label = cells[1];
        const auto period = text::parse_int(cells[2]);
        const auto start = text::parse_double(cells[3]), dur = text::parse_double(cells[4]);
        if (!period || !start || !dur) throw RowError(li, "bad window metadata");
        fv.period_id = static_cast<int>(*period);
        fv.window = {*start, *dur};
        fv.values.reserve(t.names.size());
        for (std::size_t c = meta.size(); c < cells.size(); ++c) {
            const auto v = text::parse_double(cells[c]);
            if (!v) throw RowError(li, "non-numeric value in column " + header[c]);
            fv.values.push_back(*v);
        }
        t.rows.push_back(std::move(fv));
    }
    return t;
}

/// Compact binary matrix: u32 rows, u32 cols, then f64 row-major, little-endian.
inline std::vector<std::uint8_t> write_feature_matrix(std::span<const FeatureVector> rows) {
    ByteWriter w;
    const std::size_t cols = rows.empty() ? 0 : rows.front().values.size();
    w.u32(static_cast<std::uint32_t>(rows.size()));
    w.u32(static_cast<std::uint32_t>(cols));
    for (const auto& r : rows) {
        if (r.values.size() != cols) throw ArgumentError("feature matrix: ragged rows");
        for (double v : r.values) w.f64(v);
    }
    return std::move(w).take();
}

inline std::vector<std::vector<double>> read_feature_matrix(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    const auto rows = r.u32(), cols = r.u32();
    if ((bytes.size() - 8) / 8 != static_cast<std::size_t>(rows) * cols || (bytes.size() - 8) % 8 != 0)
        r.fail("matrix size does not match header");
    std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
    for (auto& row : m)
        for (auto& v : row) v = r.f64();
    return m;
}

}  // namespace footlab
