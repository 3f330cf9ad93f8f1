#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "ecglang/dsp.hpp"
#include "ecglang/error.hpp"
#include "ecglang/wfdb.hpp"

namespace ecglang::feat {

using Vec = Eigen::VectorXd;

inline constexpr int kNumTimeFeatures = 16;
inline constexpr int kNumFreqFeatures = 10;
inline constexpr int kNumFeatures = kNumTimeFeatures + kNumFreqFeatures;

// Canonical feature order. Time indices 0..15:
//   max, min, range, mean, median, mode, std, rms, mean_square, k_moment,
//   skewness, kurtosis, kurtosis_factor, waveform_factor, pulse_factor,
//   margin_factor
// Frequency indices 16..25: z1..z10.
const std::vector<std::string>& feature_names();

// 16 time-domain statistics of one beat. std uses the N-1 denominator;
// skewness/kurtosis use population central moments; k_moment is the raw
// third moment (1/N) sum x^3; mode rounds to 3 decimals with ties going to
// the smallest value. Features with zero denominators return 0 and set
// *flagged.
Vec time_features(const Vec& beat, bool* flagged = nullptr);

// The ten spectral statistics z1..z10, computed verbatim from the printed
// formulas (z8 centers f(k) on z6; z7/z9/z10 use f(k)-F(k)). The
// z8_centered_on_z7 switch replaces z6 with z7 inside z8. An all-zero
// spectrum yields zeros for the z1-normalized features and sets *flagged.
Vec freq_features(const dsp::Spectrum& spec, bool* flagged = nullptr,
                  bool z8_centered_on_z7 = false);

// Layout of the assembled model input plus optional per-dimension
// standardization constants learned from the training split.
struct FeatureLayout {
    int samples_per_lead = 50;
    std::vector<int> feature_subset; // indices into the 26 canonical features
    bool z8_centered_on_z7 = false;

    Vec standard_mean;  // empty until fit_standardization
    Vec standard_scale; // population std, floored at 1e-12

    static FeatureLayout defaults(); // 50 samples + 22 features -> 864 dims
    int dims() const {
        return io::kNumLeads * (samples_per_lead + static_cast<int>(feature_subset.size()));
    }
    bool standardized() const { return standard_mean.size() > 0; }
};

struct ModelInput {
    Vec values;
    bool flagged = false; // any zero-denominator convention fired
};

// Per lead: pointwise median beat resampled to samples_per_lead, followed
// by the selected features of that median beat (time stats on the samples,
// frequency stats on its magnitude spectrum). Applies standardization when
// the layout carries constants. Throws EmptyRecord when beats is empty.
ModelInput assemble_input(const io::EcgRecord& record,
                          const std::vector<dsp::BeatSegment>& beats,
                          const FeatureLayout& layout);

// Computes mean/scale over a training set of raw (unstandardized) vectors.
void fit_standardization(FeatureLayout& layout, const std::vector<Vec>& train_inputs);

} // namespace ecglang::feat
