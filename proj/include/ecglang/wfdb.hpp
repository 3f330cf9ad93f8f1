#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ecglang/error.hpp"

namespace ecglang::io {

inline constexpr int kNumLeads = 12;

// Standard 12-lead order used when synthesizing records.
extern const std::array<const char*, kNumLeads> kDefaultLeadNames;

// PTB-XL diagnostic superclasses.
enum class Label { NORM = 0, MI, STTC, CD, HYP };
inline constexpr int kNumLabels = 5;

Label label_from_string(const std::string& s);
const char* label_to_string(Label l);

// One 12-lead ECG record. Lead samples are in millivolts; row r of
// `leads` is the r-th channel as declared in the header.
struct EcgRecord {
    std::string record_id;
    Eigen::MatrixXd leads;               // kNumLeads x n_samples, mV
    double fs = 0.0;                     // Hz
    std::vector<std::string> lead_names; // size kNumLeads
    std::vector<double> gains;           // LSB per mV, per lead
    std::set<Label> labels;
    std::string report;

    Eigen::Index samples() const { return leads.cols(); }
};

// Parses the header/signal pair. Header layout:
//   line 1:  record_id n_leads fs n_samples
//   12 lines: lead_name gain_lsb_per_mv
// Signal: little-endian int16, frame interleaved (ch0..ch11, ch0..ch11, ...).
// Voltage is raw / gain.
EcgRecord parse_record(const std::string& header_text,
                       const std::vector<std::uint8_t>& signal_bytes);

// Inverse of parse_record; emits the canonical byte representation.
// Samples are quantized with round-half-away-from-zero and clamped to int16.
std::pair<std::string, std::vector<std::uint8_t>> write_record(const EcgRecord& rec);

// File-level helpers: <path>.hea and <path>.dat.
EcgRecord read_record_files(const std::string& path_prefix);
void write_record_files(const EcgRecord& rec, const std::string& path_prefix);

// Shortest round-trip decimal form (used for fs/gain fields so that
// parse -> write is byte exact).
std::string format_double(double v);

struct ManifestEntry {
    std::string record_id;
    std::string path;   // prefix, resolved relative to the manifest directory
    std::set<Label> labels;
    std::string report;
};

// CSV with columns record_id,path,labels,report. Labels are
// semicolon-separated; the report field is everything after the third
// comma (reports never contain commas in our corpora). Verifies that
// <path>.hea and <path>.dat exist.
std::vector<ManifestEntry> load_manifest(const std::string& csv_path);

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& csv_path);

} // namespace ecglang::io
