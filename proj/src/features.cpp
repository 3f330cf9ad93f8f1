#include "ecglang/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ecglang::feat {

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = {
        "max", "min", "range", "mean", "median", "mode", "std", "rms",
        "mean_square", "k_moment", "skewness", "kurtosis", "kurtosis_factor",
        "waveform_factor", "pulse_factor", "margin_factor",
        "z1", "z2", "z3", "z4", "z5", "z6", "z7", "z8", "z9", "z10"};
    return names;
}

namespace {

double median_of(Vec v) {
    std::sort(v.data(), v.data() + v.size());
    const Eigen::Index n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mode_of(const Vec& v) {
    std::map<double, int> counts; // keys ordered, so ties resolve to smallest
    for (Eigen::Index i = 0; i < v.size(); ++i)
        ++counts[std::round(v[i] * 1000.0) / 1000.0];
    double best = counts.begin()->first;
    int best_n = counts.begin()->second;
    for (const auto& [val, n] : counts)
        if (n > best_n) best = val, best_n = n;
    return best;
}

// 0 when the denominator vanishes, flagging the convention.
double safe_div(double num, double den, bool* flagged) {
    if (den == 0.0) {
        if (flagged) *flagged = true;
        return 0.0;
    }
    return num / den;
}

} // namespace

Vec time_features(const Vec& beat, bool* flagged) {
    const Eigen::Index n = beat.size();
    if (n < 2) throw DataError("time_features needs at least 2 samples");
    if (!beat.allFinite()) throw NumericalFault("time_features: non-finite input");

    const double mx = beat.maxCoeff();
    const double mn = beat.minCoeff();
    const double mean = beat.mean();
    const double mean_square = beat.array().square().mean();
    const double rms = std::sqrt(mean_square);
    const double var_sample = (beat.array() - mean).square().sum() / static_cast<double>(n - 1);
    const double m2 = (beat.array() - mean).square().mean();
    const double m3 = (beat.array() - mean).cube().mean();
    const double m4 = (beat.array() - mean).pow(4).mean();
    const double sigma = std::sqrt(m2);
    const double abs_mean = beat.array().abs().mean();
    const double abs_max = beat.array().abs().maxCoeff();
    const double sqrt_mean = beat.array().abs().sqrt().mean();

    const double skew = safe_div(m3, sigma * sigma * sigma, flagged);
    const double kurt = safe_div(m4, m2 * m2, flagged);

    Vec f(kNumTimeFeatures);
    f[0] = mx;
    f[1] = mn;
    f[2] = mx - mn;
    f[3] = mean;
    f[4] = median_of(beat);
    f[5] = mode_of(beat);
    f[6] = std::sqrt(var_sample);
    f[7] = rms;
    f[8] = mean_square;
    f[9] = beat.array().cube().mean();
    f[10] = skew;
    f[11] = kurt;
    f[12] = safe_div(kurt, mean_square * mean_square, flagged);
    f[13] = safe_div(rms, abs_mean, flagged);
    f[14] = safe_div(abs_max, abs_mean, flagged);
    f[15] = safe_div(abs_max, sqrt_mean * sqrt_mean, flagged);
    return f;
}

Vec freq_features(const dsp::Spectrum& spec, bool* flagged, bool z8_centered_on_z7) {
    const Eigen::Index n = spec.bins();
    if (n < 2) throw DataError("freq_features needs at least 2 bins");
    if (spec.magnitudes.minCoeff() < 0) throw DataError("freq_features: negative magnitude");

    const auto& F = spec.magnitudes.array();
    const auto& fr = spec.freq_bins.array();
    const double N = static_cast<double>(n);

    Vec z(kNumFreqFeatures);
    const double z1 = F.mean();
    const double z2 = (F - z1).square().sum() / (N - 1.0);
    z[0] = z1;
    z[1] = z2;

    // z3: Shannon entropy over F(k)/(z1*N), with the 0*log0 = 0 convention.
    double z3 = 0.0;
    if (z1 == 0.0) {
        if (flagged) *flagged = true;
    } else {
        for (Eigen::Index k = 0; k < n; ++k) {
            const double p = spec.magnitudes[k] / (z1 * N);
            if (p > 0.0) z3 -= p * std::log2(p);
        }
    }
    z[2] = z3;
    z[3] = F.square().mean();

    if (z2 == 0.0) {
        if (flagged) *flagged = true;
        z[4] = 0.0;
        z[5] = 0.0;
    } else {
        const double s = std::sqrt(z2);
        z[4] = ((F - z1) / s).cube().mean();
        z[5] = ((F - z1) / s).pow(4).mean();
    }

    const double sumF = F.sum();
    if (sumF == 0.0) {
        if (flagged) *flagged = true;
        z[6] = z[7] = z[8] = z[9] = 0.0;
        return z;
    }
    z[6] = (fr - F).sum() / sumF;
    const double center = z8_centered_on_z7 ? z[6] : z[5];
    z[7] = std::sqrt(((fr - center).square() * F).sum() / sumF);
    z[8] = ((fr - F).cube() * F).sum() / sumF;
    z[9] = ((fr - F).pow(4) * F).sum() / sumF;
    return z;
}

FeatureLayout FeatureLayout::defaults() {
    FeatureLayout l;
    l.samples_per_lead = 50;
    // All 26 minus mode, mean_square, k_moment, kurtosis_factor = 22, so the
    // assembled vector has 12 * (50 + 22) = 864 dims.
    for (int i = 0; i < kNumFeatures; ++i)
        if (i != 5 && i != 8 && i != 9 && i != 12) l.feature_subset.push_back(i);
    return l;
}

ModelInput assemble_input(const io::EcgRecord& record,
                          const std::vector<dsp::BeatSegment>& beats,
                          const FeatureLayout& layout) {
    if (beats.empty()) throw EmptyRecord("assemble_input: record " + record.record_id + " has no beats");
    for (int idx : layout.feature_subset)
        if (idx < 0 || idx >= kNumFeatures) throw ConfigError("feature_subset index out of range");

    const Eigen::Index win = beats.front().windows.cols();
    const int n_feat = static_cast<int>(layout.feature_subset.size());
    const int per_lead = layout.samples_per_lead + n_feat;

    ModelInput input;
    input.values.resize(layout.dims());

    Vec column(beats.size());
    for (int lead = 0; lead < io::kNumLeads; ++lead) {
        // Pointwise median across this record's beats.
        Vec median_beat(win);
        for (Eigen::Index s = 0; s < win; ++s) {
            for (std::size_t b = 0; b < beats.size(); ++b) column[static_cast<Eigen::Index>(b)] = beats[b].windows(lead, s);
            median_beat[s] = median_of(column);
        }

        const Vec resampled = dsp::resample_linear(median_beat, layout.samples_per_lead);
        Vec all_feats(kNumFeatures);
        all_feats.head(kNumTimeFeatures) = time_features(median_beat, &input.flagged);
        all_feats.tail(kNumFreqFeatures) = freq_features(
            dsp::fft_magnitude(median_beat, record.fs), &input.flagged, layout.z8_centered_on_z7);

        const int base = lead * per_lead;
        input.values.segment(base, layout.samples_per_lead) = resampled;
        for (int j = 0; j < n_feat; ++j)
            input.values[base + layout.samples_per_lead + j] = all_feats[layout.feature_subset[j]];
    }

    if (layout.standardized()) {
        if (layout.standard_mean.size() != input.values.size())
            throw ConfigError("standardization constants do not match layout dims");
        input.values = (input.values - layout.standard_mean).cwiseQuotient(layout.standard_scale);
    }
    if (!input.values.allFinite())
        throw NumericalFault("assemble_input produced non-finite values for " + record.record_id);
    return input;
}

void fit_standardization(FeatureLayout& layout, const std::vector<Vec>& train_inputs) {
    if (train_inputs.empty()) throw DataError("fit_standardization: empty training set");
    const Eigen::Index d = train_inputs.front().size();
    Vec mean = Vec::Zero(d);
    for (const auto& v : train_inputs) mean += v;
    mean /= static_cast<double>(train_inputs.size());

    Vec var = Vec::Zero(d);
    for (const auto& v : train_inputs) var += (v - mean).cwiseAbs2();
    var /= static_cast<double>(train_inputs.size());

    layout.standard_mean = mean;
    layout.standard_scale = var.cwiseSqrt().cwiseMax(1e-12);
}

} // namespace ecglang::feat
