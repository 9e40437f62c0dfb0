#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "footlab/features.hpp"

using namespace footlab;

namespace oracle {

// Independent reference computations, kept deliberately naive.

struct Central {
    long double mean, m2, m3, m4;
};

Central central_moments(const std::vector<double>& x) {
    long double s = 0;
    for (double v : x) s += v;
    const long double mean = s / x.size();
    long double m2 = 0, m3 = 0, m4 = 0;
    for (double v : x) {
        m2 += std::pow(v - mean, 2);
        m3 += std::pow(v - mean, 3);
        m4 += std::pow(v - mean, 4);
    }
    return {mean, m2 / x.size(), m3 / x.size(), m4 / x.size()};
}

double autocorr(const std::vector<double>& x, std::size_t lag) {
    const auto c = central_moments(x);
    long double num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        den += (x[i] - c.mean) * (x[i] - c.mean);
        if (i + lag < x.size()) num += (x[i] - c.mean) * (x[i + lag] - c.mean);
    }
    return static_cast<double>(num / den);
}

std::vector<double> dft_magnitudes(const std::vector<double>& x) {
    const std::size_t W = x.size();
    std::vector<double> mag(W / 2 + 1);
    for (std::size_t b = 0; b <= W / 2; ++b) {
        std::complex<long double> acc = 0;
        for (std::size_t i = 0; i < W; ++i) {
            const long double ang = -2.0L * std::numbers::pi_v<long double> * b * i / W;
            acc += std::complex<long double>(std::cos(ang), std::sin(ang)) * static_cast<long double>(x[i]);
        }
        mag[b] = static_cast<double>(std::abs(acc));
    }
    return mag;
}

}  // namespace oracle

namespace {

std::vector<double> tone(double hz, double fs, std::size_t n, double amp = 1.0, bool cosine = false) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2 * std::numbers::pi * hz * static_cast<double>(i) / fs;
        x[i] = amp * (cosine ? std::cos(a) : std::sin(a));
    }
    return x;
}

std::vector<SensorReading> stream(double seconds, double fs, int devices = 1, const std::string& player = "p") {
    std::vector<SensorReading> out;
    const auto n = static_cast<std::size_t>(std::llround(seconds * fs));
    for (int s = 0; s < devices * kChannelsPerDevice; ++s)
        for (std::size_t i = 0; i < n; ++i)
            out.push_back({player, 1, static_cast<double>(i) / fs, SignalId::from_index(s), std::sin(0.1 * i + s)});
    return out;
}

SignalWindow random_window(std::mt19937_64& rng, int devices, std::size_t W) {
    std::normal_distribution<double> g(0, 3);
    SignalWindow w{"p", 1, 0.0, static_cast<double>(W) / 25.0, 25.0, {}};
    w.samples.assign(static_cast<std::size_t>(devices) * kChannelsPerDevice, std::vector<double>(W));
    for (auto& ch : w.samples)
        for (auto& v : ch) v = g(rng);
    return w;
}

}  // namespace

// ------------------------------------------------------------- windowing

TEST(MakeWindows, FiveMinutesAt25HzGivesSixtyWindows) {
    const auto wins = make_windows(stream(300, 25), 5.0, 0.0, 25.0);
    ASSERT_EQ(wins.size(), 60u);
    for (const auto& w : wins) {
        EXPECT_EQ(w.length(), 125u);
        EXPECT_EQ(w.device_count(), 1);
    }
    EXPECT_DOUBLE_EQ(wins.back().start_t, 295.0);
}

TEST(MakeWindows, IncompleteWindowDropped) {
    EXPECT_TRUE(make_windows(stream(4.9, 25), 5.0, 0.0, 25.0).empty());
}

TEST(MakeWindows, HalfOverlapSteps) {
    const auto wins = make_windows(stream(10, 25), 5.0, 0.5, 25.0);
    ASSERT_EQ(wins.size(), 3u);
    EXPECT_DOUBLE_EQ(wins[0].start_t, 0.0);
    EXPECT_DOUBLE_EQ(wins[1].start_t, 2.5);
    EXPECT_DOUBLE_EQ(wins[2].start_t, 5.0);
}

TEST(MakeWindows, SmallGapsHeldLargeGapsDropped) {
    auto readings = stream(10, 25);
    // Remove samples 10..14 (5 of 125 = 4%) of channel 0 in the first window,
    // and samples 130..149 (20 of 125) of channel 3 in the second.
    std::erase_if(readings, [](const SensorReading& r) {
        const auto i = std::llround(r.t * 25);
        return (r.signal.index() == 0 && i >= 10 && i < 15) || (r.signal.index() == 3 && i >= 130 && i < 150);
    });
    const auto wins = make_windows(readings, 5.0, 0.0, 25.0);
    ASSERT_EQ(wins.size(), 1u);
    const auto& ch0 = wins[0].samples[0];
    for (int i = 10; i < 15; ++i) EXPECT_EQ(ch0[i], ch0[9]);
    EXPECT_EQ(ch0[15], std::sin(0.1 * 15));
}

TEST(MakeWindows, GroupsByPlayerAndPeriod) {
    auto a = stream(5, 25, 1, "A"), b = stream(5, 25, 2, "B");
    a.insert(a.end(), b.begin(), b.end());
    const auto wins = make_windows(a, 5.0, 0.0, 25.0);
    ASSERT_EQ(wins.size(), 2u);
    EXPECT_EQ(wins[0].player_id, "A");
    EXPECT_EQ(wins[1].device_count(), 2);
}

// --------------------------------------------------------------- moments

TEST(MomentFeatures, ConstantArray) {
    const std::vector<double> x(20, 3.5);
    const auto m = moment_features(x);
    EXPECT_EQ(m.min, 3.5);
    EXPECT_EQ(m.max, 3.5);
    EXPECT_EQ(m.mean, 3.5);
    EXPECT_EQ(m.variance, 0.0);
    EXPECT_EQ(m.skewness, 0.0);
    EXPECT_EQ(m.kurtosis, 0.0);
}

TEST(MomentFeatures, SymmetricData) {
    const auto m = moment_features(std::vector<double>{1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_DOUBLE_EQ(m.variance, 1.25);
    EXPECT_NEAR(m.skewness, 0.0, 1e-15);
}

TEST(MomentFeatures, MatchesBruteForceOracle) {
    const std::vector<double> x{0, 0, 0, 1};
    const auto c = oracle::central_moments(x);
    const double skew = static_cast<double>(c.m3 / std::pow(c.m2, 1.5L));
    const double kurt = static_cast<double>(c.m4 / (c.m2 * c.m2));
    // Frozen from the oracle: m2 = 3/16, skew = 2/sqrt(3), kurt = 7/3.
    EXPECT_NEAR(skew, 1.1547005383792515, 1e-15);
    EXPECT_NEAR(kurt, 7.0 / 3.0, 1e-15);
    const auto m = moment_features(x);
    EXPECT_NEAR(m.variance, 0.1875, 1e-12);
    EXPECT_NEAR(m.skewness, skew, 1e-12);
    EXPECT_NEAR(m.kurtosis, kurt, 1e-12);
}

TEST(MomentFeatures, TooShortIsContractViolation) {
    EXPECT_THROW(moment_features(std::vector<double>{1.0}), ContractViolation);
}

// ------------------------------------------------------- autocorrelation

TEST(Autocorrelation, ConstantIsZero) {
    const auto ac = autocorrelation_samples(std::vector<double>(32, -2.0));
    for (double v : ac) EXPECT_EQ(v, 0.0);
}

TEST(Autocorrelation, MaxLagFormula) {
    std::vector<double> x{3, -1, 4, -1, 5, -9, 2, -6, 5, -3, 5, -8, 9, -7, 9, -3, -4};
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    for (auto& v : x) v -= mean;
    double ss = 0;
    for (double v : x) ss += v * v;
    const auto ac = autocorrelation_samples(x);
    EXPECT_NEAR(ac[9], x.front() * x.back() / ss, 1e-12);
}

TEST(Autocorrelation, CosineAtOnePeriodMatchesOracle) {
    const auto x = tone(5, 25, 125, 1.0, true);
    const auto lags = autocorrelation_lags(125);
    ASSERT_EQ(lags[1], 25u);
    const double expected = oracle::autocorr(x, 25);
    // The biased estimator keeps (W - tau)/W of the energy: 100/125.
    EXPECT_NEAR(expected, 0.8, 1e-12);
    EXPECT_NEAR(autocorrelation_samples(x)[1], expected, 1e-12);
}

TEST(Autocorrelation, AllLagsMatchOracleAndStayBounded) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(16 + trial);
        for (auto& v : x) v = g(rng) + (trial % 3) * std::sin(0.3 * (&v - x.data()));
        const auto ac = autocorrelation_samples(x);
        const auto lags = autocorrelation_lags(x.size());
        for (int j = 0; j < 10; ++j) {
            EXPECT_NEAR(ac[j], oracle::autocorr(x, lags[j]), 1e-12);
            EXPECT_LE(std::abs(ac[j]), 1.0 + 1e-9);
        }
    }
}

// ------------------------------------------------------------- DFT peaks

TEST(DftPeaks, ConstantHasNoPeaks) {
    for (const auto& p : dft_peaks(std::vector<double>(125, 0.1), 25)) EXPECT_EQ(p, (SpectralPeak{0, 0}));
}

TEST(DftPeaks, SpectrumMatchesDirectDft) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    for (std::size_t W : {16u, 17u, 64u, 125u, 126u}) {
        std::vector<double> x(W);
        for (auto& v : x) v = g(rng);
        const auto fast = magnitude_spectrum(x);
        const auto slow = oracle::dft_magnitudes(x);
        ASSERT_EQ(fast.size(), slow.size());
        for (std::size_t b = 0; b < fast.size(); ++b) EXPECT_NEAR(fast[b], slow[b], 1e-9);
    }
}

TEST(DftPeaks, SineTopPeakAtFiveHz) {
    const auto x = tone(5, 25, 125);
    const auto slow = oracle::dft_magnitudes(x);
    EXPECT_EQ(std::max_element(slow.begin() + 1, slow.end()) - slow.begin(), 25);
    const auto peaks = dft_peaks(x, 25);
    EXPECT_EQ(peaks[0].frequency_hz, 5.0);
    EXPECT_NEAR(peaks[0].magnitude, slow[25], 1e-9);
}

TEST(DftPeaks, TwoTonesBothFound) {
    auto x = tone(3, 25, 125);
    const auto y = tone(8, 25, 125);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
    const auto peaks = dft_peaks(x, 25);
    std::array<double, 2> top{peaks[0].frequency_hz, peaks[1].frequency_hz};
    std::sort(top.begin(), top.end());
    EXPECT_NEAR(top[0], 3.0, 0.03);
    EXPECT_NEAR(top[1], 8.0, 0.08);
    EXPECT_NEAR(peaks[0].magnitude, peaks[1].magnitude, 0.01 * peaks[0].magnitude);
}

TEST(DftPeaks, PeakRuleOnHandSpectrum) {
    // bins 0..5 of a W=10 spectrum; bin 1 ties its right neighbour (not a peak),
    // bin 2 is >= left and > right, bin 5 is the boundary and beats bin 4.
    const std::vector<double> mag{9, 2, 2, 1, 3, 4};
    const auto p = pick_spectral_peaks(mag, 10, 10.0);
    EXPECT_EQ(p[0], (SpectralPeak{4, 5.0}));
    EXPECT_EQ(p[1], (SpectralPeak{2, 2.0}));
    EXPECT_EQ(p[2], (SpectralPeak{0, 0}));
}

// ------------------------------------------------------ feature assembly

TEST(ExtractFeatures, ArityPerDeviceCount) {
    std::mt19937_64 rng(1);
    EXPECT_EQ(extract_features(random_window(rng, 1, 125)).values.size(), 234u);
    EXPECT_EQ(extract_features(random_window(rng, 5, 125)).values.size(), 1170u);
    EXPECT_EQ(feature_names(5).size(), 1170u);
    EXPECT_EQ(feature_names(1)[3], "dev0.acc.x.var");
    EXPECT_EQ(feature_names(2)[234 + 26 * 4 + 25], "dev1.gyro.y.peakfreq5");
}

TEST(ExtractFeatures, ConstantWindowPattern) {
    SignalWindow w{"p", 1, 0, 5, 25, {}};
    for (int s = 0; s < 9; ++s) w.samples.emplace_back(125, 1.0 + s);
    const auto fv = extract_features(w);
    for (int s = 0; s < 9; ++s) {
        const double c = 1.0 + s;
        std::vector<double> expected{c, c, c, 0, 0, 0};
        expected.resize(26, 0.0);
        const std::vector<double> got(fv.values.begin() + 26 * s, fv.values.begin() + 26 * (s + 1));
        EXPECT_EQ(got, expected) << "channel " << s;
    }
}

TEST(ExtractFeatures, InvalidWindowRejected) {
    SignalWindow w{"p", 1, 0, 1, 10, {}};
    w.samples.assign(9, std::vector<double>(10, 0.0));
    EXPECT_THROW(extract_features(w), ContractViolation);
    w.samples.assign(8, std::vector<double>(20, 0.0));
    EXPECT_THROW(extract_features(w), ContractViolation);
}

TEST(ExtractFeatures, ScaleCovarianceProperty) {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> alpha_dist(0.1, 50);
    for (int trial = 0; trial < 30; ++trial) {
        auto w = random_window(rng, 1, 64 + trial);
        const double alpha = alpha_dist(rng);
        auto scaled = w;
        const int ch = trial % 9;
        for (auto& v : scaled.samples[ch]) v *= alpha;
        const auto a = extract_features(w).values, b = extract_features(scaled).values;
        const auto at = [&](const std::vector<double>& v, int k) { return v[26 * ch + k]; };
        for (int k : {0, 1, 2}) EXPECT_NEAR(at(b, k), alpha * at(a, k), 1e-9 * std::max(1.0, std::abs(alpha * at(a, k))));
        EXPECT_NEAR(at(b, 3), alpha * alpha * at(a, 3), 1e-9 * alpha * alpha * at(a, 3));
        for (int k = 4; k < 16; ++k) EXPECT_NEAR(at(b, k), at(a, k), 1e-9);
        for (int k = 16; k < 21; ++k) EXPECT_NEAR(at(b, k), alpha * at(a, k), 1e-9 * alpha * at(a, k));
        for (int k = 21; k < 26; ++k) EXPECT_EQ(at(b, k), at(a, k));
    }
}

// ---------------------------------------------------------------- chi2

namespace {
FeatureVector labeled(std::vector<double> v, std::string label) {
    FeatureVector f;
    f.values = std::move(v);
    f.label = std::move(label);
    return f;
}
}  // namespace

TEST(Chi2, ConstantFeatureScoresZero) {
    const std::vector<FeatureVector> d{labeled({4, 1}, "A"), labeled({4, 2}, "B"), labeled({4, 3}, "A")};
    EXPECT_EQ(chi2_scores(d)[0], 0.0);
}

TEST(Chi2, IndicatorFeatureScoresClassSize) {
    // Hand evaluation: observed A = m, observed B = 0, expected m/2 each -> score m.
    for (int m : {1, 3, 10}) {
        std::vector<FeatureVector> d;
        for (int i = 0; i < m; ++i) d.push_back(labeled({1.0}, "A"));
        for (int i = 0; i < m; ++i) d.push_back(labeled({0.0}, "B"));
        EXPECT_NEAR(chi2_scores(d)[0], m, 1e-12);
    }
}

TEST(Chi2, OrderAndAffineInvariance) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> slope(0.01, 100), offset(-100, 100);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<FeatureVector> d;
        for (int i = 0; i < 60; ++i) {
            const int c = i % 3;
            d.push_back(labeled({g(rng) + c, g(rng), g(rng) * (c + 1), 2.0}, "C" + std::to_string(c)));
        }
        const auto base = chi2_scores(d);
        for (double s : base) EXPECT_GE(s, 0.0);

        auto shuffled = d;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto perm = chi2_scores(shuffled);
        for (std::size_t j = 0; j < base.size(); ++j) EXPECT_NEAR(perm[j], base[j], 1e-9);

        auto affine = d;
        for (std::size_t j = 0; j < 4; ++j) {
            const double a = slope(rng), b = offset(rng);
            for (auto& v : affine) v.values[j] = a * v.values[j] + b;
        }
        const auto aff = chi2_scores(affine);
        for (std::size_t j = 0; j < base.size(); ++j) EXPECT_NEAR(aff[j], base[j], 1e-9);
    }
}

TEST(Chi2, ContractViolations) {
    EXPECT_THROW(chi2_scores(std::vector<FeatureVector>{labeled({1}, "A"), labeled({2}, "A")}), ContractViolation);
    EXPECT_THROW(chi2_scores(std::vector<FeatureVector>{labeled({1}, "A")}), ContractViolation);
}

TEST(SelectTopK, OrderingAndTies) {
    EXPECT_EQ(select_top_k({3, 1, 2}, 2).selected, (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(select_top_k({5, 5, 1}, 1).selected, (std::vector<std::size_t>{0}));
    EXPECT_EQ(select_top_k({1, 3, 2}, 3).selected, (std::vector<std::size_t>{1, 2, 0}));
    EXPECT_THROW(select_top_k({1, 2}, 3), ArgumentError);
}

TEST(SelectTopK, DeterministicAndOrdered) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> small(0, 5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> scores(40);
        for (auto& s : scores) s = small(rng);
        const auto a = select_top_k(scores, 30), b = select_top_k(scores, 30);
        EXPECT_EQ(a.selected, b.selected);
        for (std::size_t i = 1; i < a.selected.size(); ++i) {
            const auto p = a.selected[i - 1], q = a.selected[i];
            EXPECT_TRUE(scores[p] > scores[q] || (scores[p] == scores[q] && p < q));
        }
    }
}

// ---------------------------------------------------------- table export

TEST(FeatureTable, TextAndBinaryRoundTrip) {
    std::mt19937_64 rng(21);
    std::vector<FeatureVector> rows;
    for (int i = 0; i < 7; ++i) {
        auto fv = extract_features(random_window(rng, 1, 40));
        fv.subject = "s" + std::to_string(i % 2);
        if (i % 3) fv.label = "A" + std::to_string(i);
        fv.window.start_t = 0.1 * i;
        rows.push_back(fv);
    }
    const auto t = read_feature_table(write_feature_table(rows, feature_names(1)));
    ASSERT_EQ(t.rows.size(), rows.size());
    EXPECT_EQ(t.names, feature_names(1));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(t.rows[i].values, rows[i].values);
        EXPECT_EQ(t.rows[i].label, rows[i].label);
        EXPECT_EQ(t.rows[i].window, rows[i].window);
    }
    const auto bytes = write_feature_matrix(rows);
    EXPECT_EQ(bytes.size(), 8 + 7 * 234 * 8u);
    EXPECT_EQ(bytes[0], 7);
    EXPECT_EQ(bytes[4], 234);
    const auto m = read_feature_matrix(bytes);
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(m[i], rows[i].values);
    auto cut = bytes;
    cut.pop_back();
    EXPECT_THROW(read_feature_matrix(cut), FormatError);
}
