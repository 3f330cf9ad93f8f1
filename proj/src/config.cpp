#include "ecglang/config.hpp"

#include <json.hpp>

#include <fstream>

#include "ecglang/ot.hpp"
#include "ecglang/tensor_io.hpp"
#include "ecglang/wfdb.hpp"

using nlohmann::json;

namespace ecglang::cfg {

std::map<std::string, std::string> default_class_descriptions() {
    return {
        {"NORM", "normal ecg sinus rhythm"},
        {"MI", "myocardial infarction st depression"},
        {"STTC", "ischemic t wave change"},
        {"CD", "conduction disturbance bundle branch block wide qrs"},
        {"HYP", "left ventricular hypertrophy high voltage"},
    };
}

namespace {

std::map<std::string, SynthClassConfig> default_synth_classes() {
    std::map<std::string, SynthClassConfig> c;
    c["NORM"] = {72, 1.0, 0.04, 0.00, 0.30,
                 {"sinus rhythm normal ecg", "normal ecg sinus rhythm no abnormality"}};
    c["MI"] = {96, 0.6, 0.05, -0.30, 0.20,
               {"anterior myocardial infarction st depression",
                "myocardial infarction with st depression"}};
    c["STTC"] = {60, 1.0, 0.04, 0.25, 0.55,
                 {"ischemic t wave change nonspecific", "nonspecific ischemic t wave change"}};
    c["CD"] = {45, 1.3, 0.11, 0.00, 0.30,
               {"conduction disturbance wide qrs bundle branch block",
                "bundle branch block conduction disturbance wide qrs"}};
    c["HYP"] = {110, 2.0, 0.05, -0.10, 0.40,
                {"left ventricular hypertrophy high voltage",
                 "high voltage left ventricular hypertrophy"}};
    return c;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).template get<T>();
}

json to_json(const PipelineConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["paths"] = {{"manifest", c.paths.manifest},
                  {"out_dir", c.paths.out_dir},
                  {"embeddings", c.paths.embeddings},
                  {"checkpoint", c.paths.checkpoint}};
    j["preprocess"] = {{"window_n", c.preprocess.window_n},
                       {"notch_f0", c.preprocess.notch_f0},
                       {"notch_q", c.preprocess.notch_q},
                       {"pre", c.preprocess.pre},
                       {"post", c.preprocess.post},
                       {"detect_lead", c.preprocess.detect_lead}};
    j["features"] = {{"samples_per_lead", c.features.samples_per_lead},
                     {"feature_subset", c.features.feature_subset},
                     {"z8_centered_on_z7", c.features.z8_centered_on_z7}};
    j["model"] = {{"positions", c.model.positions},
                  {"d_model", c.model.d_model},
                  {"n_layers", c.model.n_layers},
                  {"n_heads", c.model.n_heads},
                  {"d_ff", c.model.d_ff},
                  {"dropout", c.model.dropout},
                  {"d_emb", c.model.d_emb},
                  {"m_max", c.model.m_max},
                  {"head_kernel", c.model.head_kernel}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"warmup_steps", c.train.warmup_steps},
                  {"lambda_ot", c.train.lambda_ot},
                  {"grad_clip", c.train.grad_clip},
                  {"split", c.train.split},
                  {"min_freq", c.train.min_freq}};
    j["ot"] = {{"eps_scale", c.ot.eps_scale},
               {"max_iters", c.ot.max_iters},
               {"tol", c.ot.tol},
               {"metric", c.ot.metric}};
    j["eval"] = {{"class_descriptions", c.eval.class_descriptions}};
    json classes = json::object();
    for (const auto& [name, t] : c.synth.classes)
        classes[name] = {{"heart_rate_bpm", t.heart_rate_bpm}, {"qrs_amp", t.qrs_amp},
                         {"qrs_width_s", t.qrs_width_s},       {"st_offset", t.st_offset},
                         {"t_amp", t.t_amp},                   {"reports", t.reports}};
    j["synth"] = {{"n_records", c.synth.n_records},
                  {"snr_db", c.synth.snr_db},
                  {"priors", c.synth.priors},
                  {"classes", classes}};
    return j;
}

PipelineConfig from_json(const json& j) {
    PipelineConfig c;
    c.eval.class_descriptions = default_class_descriptions();
    c.synth.classes = default_synth_classes();

    maybe(j, "seed", c.seed);
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        maybe(p, "manifest", c.paths.manifest);
        maybe(p, "out_dir", c.paths.out_dir);
        maybe(p, "embeddings", c.paths.embeddings);
        maybe(p, "checkpoint", c.paths.checkpoint);
    }
    if (j.contains("preprocess")) {
        const auto& p = j.at("preprocess");
        maybe(p, "window_n", c.preprocess.window_n);
        maybe(p, "notch_f0", c.preprocess.notch_f0);
        maybe(p, "notch_q", c.preprocess.notch_q);
        maybe(p, "pre", c.preprocess.pre);
        maybe(p, "post", c.preprocess.post);
        maybe(p, "detect_lead", c.preprocess.detect_lead);
    }
    if (j.contains("features")) {
        const auto& p = j.at("features");
        maybe(p, "samples_per_lead", c.features.samples_per_lead);
        maybe(p, "feature_subset", c.features.feature_subset);
        maybe(p, "z8_centered_on_z7", c.features.z8_centered_on_z7);
    }
    if (j.contains("model")) {
        const auto& p = j.at("model");
        maybe(p, "positions", c.model.positions);
        maybe(p, "d_model", c.model.d_model);
        maybe(p, "n_layers", c.model.n_layers);
        maybe(p, "n_heads", c.model.n_heads);
        maybe(p, "d_ff", c.model.d_ff);
        maybe(p, "dropout", c.model.dropout);
        maybe(p, "d_emb", c.model.d_emb);
        maybe(p, "m_max", c.model.m_max);
        maybe(p, "head_kernel", c.model.head_kernel);
    }
    if (j.contains("train")) {
        const auto& p = j.at("train");
        maybe(p, "batch_size", c.train.batch_size);
        maybe(p, "epochs", c.train.epochs);
        maybe(p, "warmup_steps", c.train.warmup_steps);
        maybe(p, "lambda_ot", c.train.lambda_ot);
        maybe(p, "grad_clip", c.train.grad_clip);
        maybe(p, "split", c.train.split);
        maybe(p, "min_freq", c.train.min_freq);
    }
    if (j.contains("ot")) {
        const auto& p = j.at("ot");
        maybe(p, "eps_scale", c.ot.eps_scale);
        maybe(p, "max_iters", c.ot.max_iters);
        maybe(p, "tol", c.ot.tol);
        maybe(p, "metric", c.ot.metric);
    }
    if (j.contains("eval")) maybe(j.at("eval"), "class_descriptions", c.eval.class_descriptions);
    if (j.contains("synth")) {
        const auto& p = j.at("synth");
        maybe(p, "n_records", c.synth.n_records);
        maybe(p, "snr_db", c.synth.snr_db);
        maybe(p, "priors", c.synth.priors);
        if (p.contains("classes")) {
            for (auto it = p.at("classes").begin(); it != p.at("classes").end(); ++it) {
                SynthClassConfig& t = c.synth.classes[it.key()];
                maybe(it.value(), "heart_rate_bpm", t.heart_rate_bpm);
                maybe(it.value(), "qrs_amp", t.qrs_amp);
                maybe(it.value(), "qrs_width_s", t.qrs_width_s);
                maybe(it.value(), "st_offset", t.st_offset);
                maybe(it.value(), "t_amp", t.t_amp);
                maybe(it.value(), "reports", t.reports);
            }
        }
    }
    return c;
}

} // namespace

void PipelineConfig::validate() const {
    if (model.d_model % model.n_heads != 0)
        throw ConfigError("model.d_model must be divisible by model.n_heads");
    if (model.m_max < 3) throw ConfigError("model.m_max must be >= 3");
    if (train.batch_size < 1 || train.epochs < 1 || train.warmup_steps < 1)
        throw ConfigError("train counts must be positive");
    if (model.dropout < 0.0 || model.dropout >= 1.0)
        throw ConfigError("model.dropout must be in [0, 1)");
    const double s = train.split[0] + train.split[1] + train.split[2];
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("train.split must sum to 1");
    if (train.lambda_ot < 0) throw ConfigError("train.lambda_ot must be >= 0");
    if (preprocess.window_n < 1 || preprocess.window_n % 2 == 0)
        throw ConfigError("preprocess.window_n must be odd");
    if (preprocess.pre < 1 || preprocess.post < 1)
        throw ConfigError("preprocess.pre/post must be >= 1");
    if (preprocess.detect_lead < 0 || preprocess.detect_lead >= 12)
        throw ConfigError("preprocess.detect_lead must be in 0..11");
    double prior_sum = 0;
    for (double p : synth.priors) prior_sum += p;
    if (std::abs(prior_sum - 1.0) > 1e-9) throw ConfigError("synth.priors must sum to 1");
    if (synth.snr_db <= 0) throw ConfigError("synth.snr_db must be positive");
    for (const char* name : {"NORM", "MI", "STTC", "CD", "HYP"})
        if (!eval.class_descriptions.count(name))
            throw ConfigError(std::string("eval.class_descriptions missing ") + name);
    ecglang::ot::metric_from_string(ot.metric);
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string PipelineConfig::hash() const {
    json j = to_json(*this);
    j.erase("paths");
    return io::hex64(fnv1a64(j.dump()));
}

std::string PipelineConfig::section_hash(const std::vector<std::string>& sections) const {
    const json full = to_json(*this);
    json j;
    for (const auto& s : sections) {
        if (!full.contains(s)) throw ConfigError("unknown config section: " + s);
        j[s] = full.at(s);
    }
    return io::hex64(fnv1a64(j.dump()));
}

std::string PipelineConfig::to_json_string(int indent) const { return to_json(*this).dump(indent); }

PipelineConfig PipelineConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    try {
        PipelineConfig c = from_json(j);
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config schema error: ") + e.what());
    }
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

} // namespace ecglang::cfg
