#pragma once

#include <string>
#include <vector>

#include "ecglang/config.hpp"
#include "ecglang/wfdb.hpp"

namespace ecglang::synth {

struct GeneratedDataset {
    std::vector<io::ManifestEntry> entries;
    std::array<int, io::kNumLabels> class_counts{};
};

// Emits n_records synthetic 12-lead records (10 s at 100 Hz, 16-bit at
// 1000 LSB/mV) under out_dir: records/<id>.hea/.dat, ground-truth R peaks
// in records/<id>.peaks (one ascending index per line) and manifest.csv.
// Class counts follow the priors by largest remainder; everything is
// deterministic in the seed.
GeneratedDataset generate(const cfg::SynthConfig& spec, std::uint64_t seed,
                          const std::string& out_dir);

// Class allocation helper (exposed for tests): largest-remainder counts,
// ties resolved in label order.
std::array<int, io::kNumLabels> allocate_counts(const std::array<double, io::kNumLabels>& priors,
                                                int n);

} // namespace ecglang::synth
