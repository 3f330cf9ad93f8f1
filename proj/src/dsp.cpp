#include "ecglang/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ecglang::dsp {

Spectrum fft_magnitude(const Vec& signal, double fs) {
    const Eigen::Index n = signal.size();
    if (n < 2) throw DataError("fft_magnitude needs at least 2 samples");
    if (!signal.allFinite()) throw NumericalFault("fft_magnitude: non-finite input");
    if (fs <= 0) throw ConfigError("fft_magnitude: fs must be positive");

    std::vector<double> time(signal.data(), signal.data() + n);
    std::vector<std::complex<double>> freq;
    Eigen::FFT<double> fft;
    fft.fwd(freq, time);

    const Eigen::Index half = n / 2;
    Spectrum s;
    s.magnitudes.resize(half + 1);
    s.freq_bins.resize(half + 1);
    for (Eigen::Index k = 0; k <= half; ++k) {
        s.magnitudes[k] = std::abs(freq[static_cast<std::size_t>(k)]);
        s.freq_bins[k] = static_cast<double>(k) * fs / static_cast<double>(n);
    }
    return s;
}

Vec window_filter(const Vec& signal, int n) {
    const Eigen::Index len = signal.size();
    if (n < 1 || n % 2 == 0) throw ConfigError("window_filter: n must be odd and >= 1");
    if (n > len) throw ConfigError("window_filter: n exceeds signal length");

    const int half = n / 2;
    Vec out(len);
    for (Eigen::Index i = 0; i < len; ++i) {
        double acc = 0.0;
        for (int j = -half; j <= half; ++j) {
            Eigen::Index k = i + j;
            k = std::clamp<Eigen::Index>(k, 0, len - 1); // edge replication
            acc += signal[k];
        }
        out[i] = acc / n;
    }
    return out;
}

Biquad Biquad::notch(double fs, double f0, double q) {
    const double w0 = 2.0 * std::numbers::pi * f0 / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    return {1.0 / a0, -2.0 * cw / a0, 1.0 / a0, -2.0 * cw / a0, (1.0 - alpha) / a0};
}

Biquad Biquad::lowpass(double fs, double fc, double q) {
    const double w0 = 2.0 * std::numbers::pi * fc / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    return {(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0,
            -2.0 * cw / a0, (1.0 - alpha) / a0};
}

Biquad Biquad::highpass(double fs, double fc, double q) {
    const double w0 = 2.0 * std::numbers::pi * fc / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    return {(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0,
            -2.0 * cw / a0, (1.0 - alpha) / a0};
}

Vec Biquad::filter(const Vec& x) const {
    // Transposed direct form II with steady-state initial conditions for a
    // step of height x[0] (same convention as scipy's lfilter_zi), so a
    // constant input passes through without a start transient.
    const double dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
    double z2 = (b2 - a2 * dc) * (x.size() ? x[0] : 0.0);
    double z1 = (b1 + b2 - (a1 + a2) * dc) * (x.size() ? x[0] : 0.0);

    Vec y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double yi = b0 * x[i] + z1;
        z1 = b1 * x[i] - a1 * yi + z2;
        z2 = b2 * x[i] - a2 * yi;
        y[i] = yi;
    }
    return y;
}

Vec Biquad::filtfilt(const Vec& x) const {
    Vec y = filter(x);
    y.reverseInPlace();
    y = filter(y);
    y.reverseInPlace();
    return y;
}

Vec notch_filter(const Vec& signal, double fs, double f0, double q) {
    if (fs <= 0) throw ConfigError("notch_filter: fs must be positive");
    if (!signal.allFinite()) throw NumericalFault("notch_filter: non-finite input");
    if (f0 >= fs / 2.0)
        throw NyquistNotch("notch frequency " + io::format_double(f0) +
                           " Hz is at or above Nyquist for fs = " + io::format_double(fs));
    if (f0 <= 0 || q <= 0) throw ConfigError("notch_filter: f0 and Q must be positive");
    return Biquad::notch(fs, f0, q).filtfilt(signal);
}

Vec nyquist_fir(const Vec& signal) {
    Vec out(signal.size());
    if (signal.size() == 0) return out;
    out[0] = signal[0];
    for (Eigen::Index i = 1; i < signal.size(); ++i) out[i] = 0.5 * (signal[i] + signal[i - 1]);
    return out;
}

std::vector<Eigen::Index> detect_r_peaks(const Vec& signal, double fs) {
    const Eigen::Index n = signal.size();
    if (fs < 50.0) throw ConfigError("detect_r_peaks: fs must be >= 50 Hz");
    if (n < static_cast<Eigen::Index>(2 * fs))
        throw DataError("detect_r_peaks: signal shorter than 2 s");

    // Band-limit to the QRS band. Zero-phase so peak positions stay put.
    Vec band = Biquad::highpass(fs, 5.0, std::numbers::sqrt2 / 2.0).filtfilt(signal);
    band = Biquad::lowpass(fs, 15.0, std::numbers::sqrt2 / 2.0).filtfilt(band);

    // Derivative, squaring, moving-window integration (150 ms).
    Vec deriv(n);
    deriv[0] = band[1] - band[0];
    deriv[n - 1] = band[n - 1] - band[n - 2];
    for (Eigen::Index i = 1; i + 1 < n; ++i) deriv[i] = 0.5 * (band[i + 1] - band[i - 1]);
    Vec squared = deriv.array().square();

    int win = std::max(1, static_cast<int>(std::lround(0.150 * fs)));
    if (win % 2 == 0) ++win;
    Vec integrated = window_filter(squared, std::min<int>(win, static_cast<int>(n)));

    const Eigen::Index refractory = static_cast<Eigen::Index>(std::lround(0.200 * fs));
    const Eigen::Index search_half = static_cast<Eigen::Index>(std::lround(0.075 * fs));

    // Adaptive threshold on the integrated signal, seeded from the first
    // two seconds as in the classic detector.
    const Eigen::Index init = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(2 * fs));
    double spki = integrated.head(init).maxCoeff() * 0.25;
    double npki = integrated.head(init).mean() * 0.5;

    std::vector<Eigen::Index> peaks;
    Eigen::Index last_peak = -refractory - 1;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        if (!(integrated[i] > integrated[i - 1] && integrated[i] >= integrated[i + 1])) continue;
        const double thr = npki + 0.25 * (spki - npki);
        if (integrated[i] > thr) {
            // Localize the R peak on the bandpassed signal around the
            // integrator maximum.
            const Eigen::Index lo = std::max<Eigen::Index>(0, i - search_half);
            const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + search_half);
            Eigen::Index best = lo;
            for (Eigen::Index k = lo + 1; k <= hi; ++k)
                if (std::abs(band[k]) > std::abs(band[best])) best = k;

            if (!peaks.empty() && best - peaks.back() < refractory) {
                // Within refractory: keep the stronger candidate.
                if (std::abs(band[best]) > std::abs(band[peaks.back()])) peaks.back() = best;
            } else if (best - last_peak >= refractory || peaks.empty()) {
                peaks.push_back(best);
            }
            last_peak = peaks.empty() ? last_peak : peaks.back();
            spki = 0.125 * integrated[i] + 0.875 * spki;
        } else {
            npki = 0.125 * integrated[i] + 0.875 * npki;
        }
    }
    std::sort(peaks.begin(), peaks.end());
    peaks.erase(std::unique(peaks.begin(), peaks.end()), peaks.end());
    return peaks;
}

std::vector<BeatSegment> segment_beats(const io::EcgRecord& record,
                                       const std::vector<Eigen::Index>& r_peaks,
                                       int pre, int post) {
    if (pre < 1 || post < 1) throw ConfigError("segment_beats: pre and post must be >= 1");
    std::vector<BeatSegment> out;
    const Eigen::Index len = record.samples();
    for (Eigen::Index r : r_peaks) {
        if (r - pre < 0 || r + post >= len) continue;
        BeatSegment seg;
        seg.r_index = r;
        seg.pre = pre;
        seg.post = post;
        seg.windows = record.leads.middleCols(r - pre, pre + post + 1);
        out.push_back(std::move(seg));
    }
    return out;
}

Vec resample_linear(const Vec& signal, int n_out) {
    const Eigen::Index n_in = signal.size();
    if (n_in < 2) throw DataError("resample_linear needs at least 2 samples");
    if (n_out < 2) throw ConfigError("resample_linear: n_out must be >= 2");
    Vec out(n_out);
    const double scale = static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
    for (int i = 0; i < n_out; ++i) {
        const double pos = i * scale;
        const Eigen::Index lo = std::min<Eigen::Index>(static_cast<Eigen::Index>(pos), n_in - 2);
        const double frac = pos - static_cast<double>(lo);
        out[i] = signal[lo] * (1.0 - frac) + signal[lo + 1] * frac;
    }
    return out;
}

} // namespace ecglang::dsp
