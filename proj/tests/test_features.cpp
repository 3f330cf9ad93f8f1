#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "ecglang/features.hpp"

using namespace ecglang;
using feat::Vec;

namespace {

// Naive per-definition oracle, written independently of features.cpp.
std::array<double, 16> oracle_time(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    const double mx = *std::max_element(x.begin(), x.end());
    const double mn = *std::min_element(x.begin(), x.end());
    double sum = 0, sum_sq = 0, sum_cube = 0, sum_abs = 0, sum_sqrt_abs = 0, abs_max = 0;
    for (double v : x) {
        sum += v;
        sum_sq += v * v;
        sum_cube += v * v * v;
        sum_abs += std::abs(v);
        sum_sqrt_abs += std::sqrt(std::abs(v));
        abs_max = std::max(abs_max, std::abs(v));
    }
    const double mean = sum / n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double v : x) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    const double var_sample = m2 / (n - 1);
    m2 /= n;
    m3 /= n;
    m4 /= n;

    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                            : 0.5 * (sorted[sorted.size() / 2 - 1] +
                                                     sorted[sorted.size() / 2]);
    std::map<double, int> counts;
    for (double v : x) ++counts[std::round(v * 1000.0) / 1000.0];
    double mode = counts.begin()->first;
    int mode_n = counts.begin()->second;
    for (const auto& [v, k] : counts)
        if (k > mode_n) mode = v, mode_n = k;

    const double mean_square = sum_sq / n;
    const double rms = std::sqrt(mean_square);
    const double sigma = std::sqrt(m2);
    const double abs_mean = sum_abs / n;
    const double sqrt_mean = sum_sqrt_abs / n;

    auto z = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
    const double kurt = z(m4, m2 * m2);
    return {mx,
            mn,
            mx - mn,
            mean,
            median,
            mode,
            std::sqrt(var_sample),
            rms,
            mean_square,
            sum_cube / n,
            z(m3, sigma * sigma * sigma),
            kurt,
            z(kurt, mean_square * mean_square),
            z(rms, abs_mean),
            z(abs_max, abs_mean),
            z(abs_max, sqrt_mean * sqrt_mean)};
}

// Direct transcription of the ten printed spectral formulas.
std::array<double, 10> oracle_freq(const std::vector<double>& F, const std::vector<double>& f) {
    const double n = static_cast<double>(F.size());
    auto z = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };

    double z1 = 0;
    for (double v : F) z1 += v;
    z1 /= n;
    double z2 = 0;
    for (double v : F) z2 += (v - z1) * (v - z1);
    z2 /= (n - 1);
    double z3 = 0;
    if (z1 > 0)
        for (double v : F) {
            const double p = v / (z1 * n);
            if (p > 0) z3 -= p * std::log2(p);
        }
    double z4 = 0;
    for (double v : F) z4 += v * v;
    z4 /= n;
    double z5 = 0, z6 = 0;
    if (z2 > 0) {
        for (double v : F) {
            const double s = (v - z1) / std::sqrt(z2);
            z5 += s * s * s;
            z6 += s * s * s * s;
        }
        z5 /= n;
        z6 /= n;
    }
    double sumF = 0;
    for (double v : F) sumF += v;
    double z7 = 0, z8 = 0, z9 = 0, z10 = 0;
    for (std::size_t k = 0; k < F.size(); ++k) z7 += f[k] - F[k];
    z7 = z(z7, sumF);
    for (std::size_t k = 0; k < F.size(); ++k) z8 += (f[k] - z6) * (f[k] - z6) * F[k];
    z8 = sumF == 0 ? 0 : std::sqrt(z8 / sumF);
    for (std::size_t k = 0; k < F.size(); ++k) {
        const double d = f[k] - F[k];
        z9 += d * d * d * F[k];
        z10 += d * d * d * d * F[k];
    }
    z9 = z(z9, sumF);
    z10 = z(z10, sumF);
    return {z1, z2, z3, z4, z5, z6, z7, z8, z9, z10};
}

dsp::Spectrum make_spec(const std::vector<double>& F, const std::vector<double>& f) {
    dsp::Spectrum s;
    s.magnitudes = Eigen::Map<const Eigen::VectorXd>(F.data(), static_cast<Eigen::Index>(F.size()));
    s.freq_bins = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    return s;
}

} // namespace

TEST_CASE("time_features on a constant beat") {
    const double c = 1.5;
    bool flagged = false;
    const Vec f = feat::time_features(Vec::Constant(10, c), &flagged);
    CHECK(f[0] == c);                     // max
    CHECK(f[1] == c);                     // min
    CHECK(f[2] == 0);                     // range
    CHECK(f[3] == doctest::Approx(c));    // mean
    CHECK(f[4] == doctest::Approx(c));    // median
    CHECK(f[5] == doctest::Approx(c));    // mode
    CHECK(f[6] == doctest::Approx(0));    // std
    CHECK(f[7] == doctest::Approx(c));    // rms
    CHECK(f[10] == 0);                    // skewness, zero-sigma convention
    CHECK(f[11] == 0);                    // kurtosis
    CHECK(f[13] == doctest::Approx(1.0)); // waveform factor
    CHECK(f[14] == doctest::Approx(1.0)); // pulse factor
    CHECK(flagged);                       // zero denominators fired
}

TEST_CASE("time_features hand case [3,4]") {
    Vec beat(2);
    beat << 3, 4;
    const Vec f = feat::time_features(beat);
    CHECK(f[7] == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12)); // rms
    CHECK(f[8] == doctest::Approx(12.5).epsilon(1e-12));            // mean square
    CHECK(f[2] == doctest::Approx(1.0));                            // range
}

TEST_CASE("time_features match the naive oracle on random beats") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 5 + static_cast<int>(rng() % 60);
        std::vector<double> x(static_cast<std::size_t>(n));
        for (auto& v : x) v = normal(rng);
        const Vec beat = Eigen::Map<const Vec>(x.data(), n);
        const Vec got = feat::time_features(beat);
        const auto want = oracle_time(x);
        for (int i = 0; i < feat::kNumTimeFeatures; ++i)
            CHECK(got[i] == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-9));
    }
}

TEST_CASE("time_features gain equivariance") {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> normal;
    Vec beat(30);
    for (Eigen::Index i = 0; i < beat.size(); ++i) beat[i] = normal(rng);
    const double g = 3.7;
    const Vec a = feat::time_features(beat);
    const Vec b = feat::time_features(g * beat);
    for (int i : {0, 1, 2, 3, 4, 6, 7}) // max,min,range,mean,median,std,rms scale linearly
        CHECK(b[i] == doctest::Approx(g * a[i]).epsilon(1e-9));
    for (int i : {10, 11, 13, 14, 15}) // skew, kurt and the factors are gain invariant
        CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));
}

TEST_CASE("freq_features on a uniform spectrum") {
    const int n = 16;
    std::vector<double> F(n, 3.0), fr(n);
    for (int k = 0; k < n; ++k) fr[static_cast<std::size_t>(k)] = k;
    bool flagged = false;
    const Vec z = feat::freq_features(make_spec(F, fr), &flagged);
    CHECK(z[0] == doctest::Approx(3.0));
    CHECK(z[1] == doctest::Approx(0.0));
    CHECK(z[2] == doctest::Approx(std::log2(n)).epsilon(1e-12));
    CHECK(z[3] == doctest::Approx(9.0));
    CHECK(z[4] == 0.0); // 0/0 convention
    CHECK(z[5] == 0.0);
    CHECK(flagged);
}

TEST_CASE("freq_features hand case N=4") {
    const std::vector<double> F = {1, 2, 3, 4};
    const std::vector<double> fr = {0, 1, 2, 3};
    const Vec z = feat::freq_features(make_spec(F, fr));
    const auto want = oracle_freq(F, fr);
    for (int i = 0; i < feat::kNumFreqFeatures; ++i)
        CHECK(z[i] == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-12));
    // a couple of fully hand-computed anchors
    CHECK(z[0] == doctest::Approx(2.5));
    CHECK(z[1] == doctest::Approx((2.25 + 0.25 + 0.25 + 2.25) / 3.0));
    CHECK(z[3] == doctest::Approx((1.0 + 4.0 + 9.0 + 16.0) / 4.0));
    CHECK(z[6] == doctest::Approx((0.0 - 1 + 1 - 2 + 2 - 3 + 3 - 4) / 10.0));
}

TEST_CASE("freq_features match the transcription oracle on random spectra") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> unif(0.0, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 40);
        std::vector<double> F(static_cast<std::size_t>(n)), fr(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            F[static_cast<std::size_t>(k)] = unif(rng);
            fr[static_cast<std::size_t>(k)] = k * 0.5;
        }
        const Vec z = feat::freq_features(make_spec(F, fr));
        const auto want = oracle_freq(F, fr);
        for (int i = 0; i < feat::kNumFreqFeatures; ++i)
            CHECK(z[i] == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-9));
    }
}

TEST_CASE("freq_features zero spectrum flags and zeros") {
    const int n = 8;
    std::vector<double> F(n, 0.0), fr(n);
    for (int k = 0; k < n; ++k) fr[static_cast<std::size_t>(k)] = k;
    bool flagged = false;
    const Vec z = feat::freq_features(make_spec(F, fr), &flagged);
    CHECK(flagged);
    for (int i : {0, 2, 4, 5, 6, 7, 8, 9}) CHECK(z[i] == 0.0);
}

TEST_CASE("z1 is exactly the arithmetic mean of magnitudes") {
    const std::vector<double> F = {0.25, 0.5, 0.75, 1.0, 1.25};
    const std::vector<double> fr = {0, 1, 2, 3, 4};
    const Vec z = feat::freq_features(make_spec(F, fr));
    CHECK(z[0] == 0.75);
}

namespace {

io::EcgRecord wavy_record(int samples) {
    io::EcgRecord rec;
    rec.record_id = "t";
    rec.fs = 100;
    rec.leads.resize(io::kNumLeads, samples);
    for (int l = 0; l < io::kNumLeads; ++l)
        for (int s = 0; s < samples; ++s)
            rec.leads(l, s) = std::sin(0.071 * s + l) + 0.01 * l;
    return rec;
}

} // namespace

TEST_CASE("assemble_input default layout yields 864 dims") {
    const auto rec = wavy_record(400);
    const auto beats = dsp::segment_beats(rec, {100, 200, 300}, 24, 24);
    const auto layout = feat::FeatureLayout::defaults();
    const auto input = feat::assemble_input(rec, beats, layout);
    CHECK(input.values.size() == 864);
    CHECK(layout.dims() == 864);
}

TEST_CASE("assemble_input with all 26 features yields 912 dims") {
    const auto rec = wavy_record(400);
    const auto beats = dsp::segment_beats(rec, {100, 200, 300}, 24, 24);
    feat::FeatureLayout layout = feat::FeatureLayout::defaults();
    layout.feature_subset.clear();
    for (int i = 0; i < feat::kNumFeatures; ++i) layout.feature_subset.push_back(i);
    const auto input = feat::assemble_input(rec, beats, layout);
    CHECK(input.values.size() == 12 * (50 + 26));
}

TEST_CASE("assemble_input rejects empty beats") {
    const auto rec = wavy_record(400);
    CHECK_THROWS_AS(feat::assemble_input(rec, {}, feat::FeatureLayout::defaults()), EmptyRecord);
}

TEST_CASE("standardization makes the training set zero mean unit variance") {
    std::mt19937_64 rng(24);
    std::normal_distribution<double> normal;

    std::vector<Eigen::VectorXd> raw;
    feat::FeatureLayout layout = feat::FeatureLayout::defaults();
    std::vector<io::EcgRecord> recs;
    std::vector<std::vector<dsp::BeatSegment>> beat_sets;
    for (int r = 0; r < 6; ++r) {
        io::EcgRecord rec = wavy_record(400);
        for (int l = 0; l < io::kNumLeads; ++l)
            for (int s = 0; s < 400; ++s) rec.leads(l, s) += 0.05 * normal(rng);
        recs.push_back(rec);
        beat_sets.push_back(dsp::segment_beats(rec, {100, 200, 300}, 24, 24));
        raw.push_back(feat::assemble_input(rec, beat_sets.back(), layout).values);
    }
    feat::fit_standardization(layout, raw);

    // Re-assemble with the constants applied and recompute moments.
    Eigen::MatrixXd all(static_cast<Eigen::Index>(raw.size()), layout.dims());
    for (std::size_t r = 0; r < recs.size(); ++r)
        all.row(static_cast<Eigen::Index>(r)) =
            feat::assemble_input(recs[r], beat_sets[r], layout).values.transpose();

    for (Eigen::Index d = 0; d < all.cols(); ++d) {
        const double mean = all.col(d).mean();
        const double var = (all.col(d).array() - mean).square().mean();
        CHECK(std::abs(mean) < 1e-6);
        // constant dims keep scale 1 by the floor rule; others have unit var
        if (var > 1e-20) CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
    }
}

TEST_CASE("assemble_input is deterministic") {
    const auto rec = wavy_record(400);
    const auto beats = dsp::segment_beats(rec, {100, 200, 300}, 24, 24);
    const auto layout = feat::FeatureLayout::defaults();
    const auto a = feat::assemble_input(rec, beats, layout);
    const auto b = feat::assemble_input(rec, beats, layout);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
}
