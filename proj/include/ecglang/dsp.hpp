#pragma once

#include <Eigen/Dense>

#include <vector>

#include "ecglang/error.hpp"
#include "ecglang/wfdb.hpp"

namespace ecglang::dsp {

using Vec = Eigen::VectorXd;

// One-sided magnitude spectrum: F(k) = |DFT(x)[k]| for k = 0..floor(N/2),
// f(k) = k*fs/N in Hz.
struct Spectrum {
    Vec magnitudes;
    Vec freq_bins;
    Eigen::Index bins() const { return magnitudes.size(); }
};

Spectrum fft_magnitude(const Vec& signal, double fs);

// Centered n-point moving average with edge replication; n must be odd.
Vec window_filter(const Vec& signal, int n);

// Second-order IIR notch (RBJ biquad), applied forward then backward for
// zero phase. Steady-state initial conditions keep DC exact. Throws
// NyquistNotch when f0 >= fs/2.
Vec notch_filter(const Vec& signal, double fs, double f0 = 50.0, double q = 30.0);

// Two-tap FIR y[n] = (x[n] + x[n-1]) / 2; has a zero at Nyquist. Used by
// the pipeline in place of the biquad when f0 >= fs/2.
Vec nyquist_fir(const Vec& signal);

// Pan-Tompkins style QRS detector: zero-phase 5-15 Hz bandpass, derivative,
// squaring, 150 ms moving-window integration, adaptive threshold with a
// 200 ms refractory period. Returns ascending sample indices of R peaks.
std::vector<Eigen::Index> detect_r_peaks(const Vec& signal, double fs);

struct BeatSegment {
    Eigen::MatrixXd windows; // kNumLeads x (pre + post + 1), mV
    Eigen::Index r_index = 0;
    int pre = 0;
    int post = 0;
};

// One segment per R peak whose full [r-pre, r+post] window fits inside the
// record; peaks too close to an edge are skipped.
std::vector<BeatSegment> segment_beats(const io::EcgRecord& record,
                                       const std::vector<Eigen::Index>& r_peaks,
                                       int pre, int post);

// Linear-interpolation resample to n_out samples (endpoints preserved).
Vec resample_linear(const Vec& signal, int n_out);

// Biquad helpers shared by the notch and the detector bandpass.
struct Biquad {
    // normalized: y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
    double b0, b1, b2, a1, a2;

    static Biquad notch(double fs, double f0, double q);
    static Biquad lowpass(double fs, double fc, double q);
    static Biquad highpass(double fs, double fc, double q);

    // Single forward pass with steady-state initialization for x[0].
    Vec filter(const Vec& x) const;
    // Forward-backward pass (zero phase).
    Vec filtfilt(const Vec& x) const;
};

} // namespace ecglang::dsp
