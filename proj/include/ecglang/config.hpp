#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ecglang/error.hpp"

namespace ecglang::cfg {

struct PathsConfig {
    std::string manifest;              // dataset manifest CSV
    std::string out_dir = "out";       // artifact directory
    std::string embeddings;            // optional EMB1 file -> FileBacked provider
    std::string checkpoint;            // checkpoint prefix for generate/detect
};

struct PreprocessConfig {
    int window_n = 5;       // n-point moving average
    double notch_f0 = 50.0; // Hz
    double notch_q = 30.0;
    int pre = 24;           // beat window samples before/after the R peak
    int post = 24;
    int detect_lead = 1;    // lead II
};

struct FeaturesConfig {
    int samples_per_lead = 50;
    std::vector<int> feature_subset; // empty -> default 22-feature subset
    bool z8_centered_on_z7 = false;
};

struct ModelConfig {
    int positions = 16;
    int d_model = 40;
    int n_layers = 5;
    int n_heads = 5;
    int d_ff = 80;
    double dropout = 0.3;
    int d_emb = 32;
    int m_max = 16;
    int head_kernel = 1;
};

struct TrainConfig {
    int batch_size = 16;
    int epochs = 50;
    int warmup_steps = 2000;
    double lambda_ot = 1.0;
    double grad_clip = 1.0;
    std::array<double, 3> split = {0.8, 0.1, 0.1};
    int min_freq = 1;
};

struct OtConfig {
    double eps_scale = 0.05; // eps = eps_scale * mean(C)
    int max_iters = 500;
    double tol = 1e-6;
    std::string metric = "sq_euclidean";
};

struct EvalConfig {
    std::map<std::string, std::string> class_descriptions; // label -> text
};

struct SynthClassConfig {
    double heart_rate_bpm = 72;
    double qrs_amp = 1.0;
    double qrs_width_s = 0.04;
    double st_offset = 0.0;
    double t_amp = 0.3;
    std::vector<std::string> reports;
};

struct SynthConfig {
    int n_records = 500;
    double snr_db = 20.0;
    std::array<double, 5> priors = {0.342, 0.197, 0.189, 0.176, 0.095};
    std::map<std::string, SynthClassConfig> classes; // keyed by label name
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    PathsConfig paths;
    PreprocessConfig preprocess;
    FeaturesConfig features;
    ModelConfig model;
    TrainConfig train;
    OtConfig ot;
    EvalConfig eval;
    SynthConfig synth;

    void validate() const;

    // Hash over the canonical JSON form with the paths section excluded, so
    // artifacts stay comparable when directories move.
    std::string hash() const;

    // Hash restricted to the named top-level sections (e.g. the preprocess
    // cache only depends on "preprocess" + "features").
    std::string section_hash(const std::vector<std::string>& sections) const;

    std::string to_json_string(int indent = 2) const;
    static PipelineConfig from_json_string(const std::string& text);
    static PipelineConfig load(const std::string& path); // missing keys keep defaults
};

// Built-in class descriptions used for zero-shot prototypes.
std::map<std::string, std::string> default_class_descriptions();

std::uint64_t fnv1a64(const std::string& bytes);

} // namespace ecglang::cfg
