#include "ecglang/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ecglang/dsp.hpp"
#include "ecglang/evalmetrics.hpp"
#include "ecglang/features.hpp"
#include "ecglang/synth.hpp"
#include "ecglang/tensor_io.hpp"
#include "ecglang/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ecglang::pipeline {

namespace {

const std::vector<std::string> kCacheSections = {"preprocess", "features"};

feat::FeatureLayout layout_from(const cfg::PipelineConfig& config) {
    feat::FeatureLayout layout = feat::FeatureLayout::defaults();
    layout.samples_per_lead = config.features.samples_per_lead;
    if (!config.features.feature_subset.empty())
        layout.feature_subset = config.features.feature_subset;
    layout.z8_centered_on_z7 = config.features.z8_centered_on_z7;
    return layout;
}

std::string labels_to_string(const std::set<io::Label>& labels) {
    std::string s;
    for (auto l : labels) {
        if (!s.empty()) s += ';';
        s += io::label_to_string(l);
    }
    return s;
}

std::set<io::Label> labels_from_string(const std::string& s) {
    std::set<io::Label> out;
    std::size_t pos = 0;
    while (pos <= s.size() && !s.empty()) {
        auto sep = s.find(';', pos);
        const std::string tok = s.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
        if (!tok.empty()) out.insert(io::label_from_string(tok));
        if (sep == std::string::npos) break;
        pos = sep + 1;
    }
    return out;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

// Minimal CSV row reader supporting double-quoted fields.
std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

struct CachedRecord {
    std::string record_id;
    std::set<io::Label> labels;
    std::string report;
    long beats = 0;
    Eigen::VectorXd raw_input;
};

struct Cache {
    std::vector<CachedRecord> records;
    std::string section_hash;
    int dims = 0;
};

Cache load_cache(const cfg::PipelineConfig& config) {
    const fs::path cache_dir = fs::path(config.paths.out_dir) / "cache";
    std::ifstream f(cache_dir / "index.json");
    if (!f) throw DataError("missing preprocess cache at " + (cache_dir / "index.json").string() +
                            "; run preprocess first");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("bad cache index: ") + e.what());
    }

    Cache cache;
    cache.section_hash = j.at("config_hash").get<std::string>();
    cache.dims = j.at("dims").get<int>();
    if (cache.section_hash != config.section_hash(kCacheSections))
        throw ConfigError("preprocess cache was built under a different preprocess/features "
                          "config (hash mismatch); re-run preprocess");

    for (const auto& r : j.at("records")) {
        CachedRecord rec;
        rec.record_id = r.at("id").get<std::string>();
        rec.labels = labels_from_string(r.at("labels").get<std::string>());
        rec.report = r.at("report").get<std::string>();
        rec.beats = r.at("beats").get<long>();
        const auto tensors = io::load_tensors((cache_dir / (rec.record_id + ".tns")).string());
        rec.raw_input = tensors.at("input").row(0).transpose();
        if (rec.raw_input.size() != cache.dims) throw DataError("cache dims mismatch for " + rec.record_id);
        cache.records.push_back(std::move(rec));
    }
    return cache;
}

train::Checkpoint load_checkpoint_checked(const cfg::PipelineConfig& config) {
    const train::Checkpoint ck = train::Checkpoint::load(checkpoint_prefix(config));
    if (ck.config_hash != config.hash())
        throw ConfigError("checkpoint was trained under a different config (hash " +
                          ck.config_hash + " vs " + config.hash() + "); refusing to run");
    return ck;
}

void echo_hash(const cfg::PipelineConfig& config, const char* cmd) {
    std::cout << cmd << " config_hash " << config.hash() << "\n";
}

} // namespace

std::string checkpoint_prefix(const cfg::PipelineConfig& config) {
    if (!config.paths.checkpoint.empty()) return config.paths.checkpoint;
    return (fs::path(config.paths.out_dir) / "checkpoint").string();
}

void cmd_synth(const cfg::PipelineConfig& config) {
    echo_hash(config, "synth");
    fs::create_directories(config.paths.out_dir);
    const auto ds = synth::generate(config.synth, config.seed, config.paths.out_dir);
    std::cout << "synth wrote " << ds.entries.size() << " records to " << config.paths.out_dir
              << "\n";
}

void cmd_preprocess(const cfg::PipelineConfig& config) {
    echo_hash(config, "preprocess");
    if (config.paths.manifest.empty()) throw ConfigError("preprocess needs paths.manifest");
    const auto entries = io::load_manifest(config.paths.manifest);
    if (entries.empty()) throw DataError("manifest has no records");

    const feat::FeatureLayout layout = layout_from(config);
    const fs::path out_dir = config.paths.out_dir;
    fs::create_directories(out_dir / "cache");

    std::ofstream feat_csv(out_dir / "features.csv", std::ios::binary);
    feat_csv << "record_id,lead";
    for (const auto& name : feat::feature_names()) feat_csv << ',' << name;
    feat_csv << '\n';

    json index;
    index["config_hash"] = config.section_hash(kCacheSections);
    index["dims"] = layout.dims();
    index["records"] = json::array();

    std::array<long, io::kNumLabels> class_beats{};
    std::array<long, io::kNumLabels> class_records{};
    std::vector<std::string> failures;
    std::string notch_mode = "biquad";

    for (const auto& entry : entries) {
        try {
            io::EcgRecord rec = io::read_record_files(entry.path);
            rec.labels = entry.labels;
            rec.report = entry.report;

            // Filter chain per lead: n-point window average, then the notch
            // (two-tap Nyquist FIR when f0 is not below Nyquist).
            for (int lead = 0; lead < io::kNumLeads; ++lead) {
                dsp::Vec x = rec.leads.row(lead).transpose();
                x = dsp::window_filter(x, config.preprocess.window_n);
                if (config.preprocess.notch_f0 >= rec.fs / 2.0) {
                    x = dsp::nyquist_fir(x);
                    notch_mode = "nyquist_fir";
                } else {
                    x = dsp::notch_filter(x, rec.fs, config.preprocess.notch_f0,
                                          config.preprocess.notch_q);
                }
                rec.leads.row(lead) = x.transpose();
            }

            const dsp::Vec detect_lead =
                rec.leads.row(config.preprocess.detect_lead).transpose();
            const auto peaks = dsp::detect_r_peaks(detect_lead, rec.fs);
            const auto beats =
                dsp::segment_beats(rec, peaks, config.preprocess.pre, config.preprocess.post);
            const feat::ModelInput input = feat::assemble_input(rec, beats, layout);

            io::TensorMap tensors;
            tensors["input"] = input.values.transpose();
            io::save_tensors(tensors, (out_dir / "cache" / (entry.record_id + ".tns")).string());

            // Per-lead feature export (all 26, before subsetting).
            for (int lead = 0; lead < io::kNumLeads; ++lead) {
                dsp::Vec median_beat(beats.front().windows.cols());
                // median across beats, reusing the assembly definition
                std::vector<double> col(beats.size());
                for (Eigen::Index s = 0; s < median_beat.size(); ++s) {
                    for (std::size_t b = 0; b < beats.size(); ++b)
                        col[b] = beats[b].windows(lead, s);
                    std::sort(col.begin(), col.end());
                    median_beat[s] = col.size() % 2 ? col[col.size() / 2]
                                                    : 0.5 * (col[col.size() / 2 - 1] +
                                                             col[col.size() / 2]);
                }
                bool flagged = false;
                Eigen::VectorXd tf = feat::time_features(median_beat, &flagged);
                Eigen::VectorXd zf = feat::freq_features(dsp::fft_magnitude(median_beat, rec.fs),
                                                         &flagged, layout.z8_centered_on_z7);
                feat_csv << entry.record_id << ',' << rec.lead_names[static_cast<std::size_t>(lead)];
                for (Eigen::Index i = 0; i < tf.size(); ++i)
                    feat_csv << ',' << io::format_double(tf[i]);
                for (Eigen::Index i = 0; i < zf.size(); ++i)
                    feat_csv << ',' << io::format_double(zf[i]);
                feat_csv << '\n';
            }

            json rj;
            rj["id"] = entry.record_id;
            rj["labels"] = labels_to_string(entry.labels);
            rj["report"] = entry.report;
            rj["beats"] = beats.size();
            rj["flagged"] = input.flagged;
            index["records"].push_back(rj);

            if (!entry.labels.empty()) {
                const auto cls = static_cast<std::size_t>(*entry.labels.begin());
                class_beats[cls] += static_cast<long>(beats.size());
                ++class_records[cls];
            }
        } catch (const Error& e) {
            failures.push_back(entry.record_id + ": " + e.what());
        }
    }
    index["notch_mode"] = notch_mode;

    {
        std::ofstream f(out_dir / "cache" / "index.json", std::ios::binary);
        f << index.dump(2) << '\n';
    }
    {
        json summary;
        summary["config_hash"] = config.section_hash(kCacheSections);
        summary["notch_mode"] = notch_mode;
        long total_beats = 0, total_records = 0;
        for (int c = 0; c < io::kNumLabels; ++c) {
            total_beats += class_beats[static_cast<std::size_t>(c)];
            total_records += class_records[static_cast<std::size_t>(c)];
        }
        json per_class = json::object();
        for (int c = 0; c < io::kNumLabels; ++c) {
            const auto cs = static_cast<std::size_t>(c);
            per_class[io::label_to_string(static_cast<io::Label>(c))] = {
                {"records", class_records[cs]},
                {"record_share",
                 total_records ? static_cast<double>(class_records[cs]) / total_records : 0.0},
                {"beats", class_beats[cs]},
                {"beat_share",
                 total_beats ? static_cast<double>(class_beats[cs]) / total_beats : 0.0}};
        }
        summary["classes"] = per_class;
        summary["failures"] = failures;
        std::ofstream f(out_dir / "preprocess_summary.json", std::ios::binary);
        f << summary.dump(2) << '\n';
    }

    std::cout << "preprocess cached " << (entries.size() - failures.size()) << "/" << entries.size()
              << " records\n";
    if (!failures.empty()) {
        for (const auto& f : failures) std::cerr << "failed: " << f << "\n";
        throw DataError(std::to_string(failures.size()) + " record(s) failed preprocessing");
    }
}

void cmd_train(const cfg::PipelineConfig& config) {
    echo_hash(config, "train");
    const Cache cache = load_cache(config);

    std::vector<train::DatasetItem> items;
    items.reserve(cache.records.size());
    for (const auto& r : cache.records) {
        if (r.labels.empty())
            throw DataError("training record " + r.record_id + " has no labels");
        items.push_back({r.record_id, r.raw_input, r.labels, r.report});
    }

    feat::FeatureLayout layout = layout_from(config);
    if (layout.dims() != cache.dims)
        throw ConfigError("feature layout dims do not match the cache");

    train::Trainer trainer(config, layout);
    const train::FitResult result = trainer.fit(items);

    const fs::path out_dir = config.paths.out_dir;
    fs::create_directories(out_dir);
    {
        std::ofstream f(out_dir / "metrics.jsonl", std::ios::binary);
        for (const auto& e : result.log) {
            json j = {{"epoch", e.epoch},
                      {"train_ce", e.train_ce},
                      {"train_ot", e.train_ot},
                      {"train_total", e.train_total},
                      {"val_total", e.val_total},
                      {"val_accuracy", e.val_accuracy}};
            f << j.dump() << '\n';
        }
    }
    trainer.make_checkpoint().save(checkpoint_prefix(config));

    std::cout << "train finished: " << result.log.size() << " epochs, final total loss "
              << result.log.back().train_total << ", provider checksum "
              << io::hex64(result.provider_checksum_after) << "\n";
}

void cmd_generate(const cfg::PipelineConfig& config) {
    echo_hash(config, "generate");
    const Cache cache = load_cache(config);
    const train::Checkpoint ck = load_checkpoint_checked(config);
    train::LoadedModel lm = train::restore_model(ck);

    std::map<std::string, const CachedRecord*> by_id;
    for (const auto& r : cache.records) by_id[r.record_id] = &r;

    const auto& ids = ck.test_ids.empty() ? ck.val_ids : ck.test_ids;
    if (ids.empty()) throw DataError("checkpoint has no evaluation split");

    const fs::path out_path = fs::path(config.paths.out_dir) / "generations.csv";
    std::ofstream f(out_path, std::ios::binary);
    f << "record_id,reference,hypothesis,bleu1,rouge1_f,meteor\n";
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("record " + id + " missing from cache");
        const CachedRecord& rec = *it->second;

        const Eigen::VectorXd x = (rec.raw_input - lm.layout.standard_mean)
                                      .cwiseQuotient(lm.layout.standard_scale);
        const Eigen::MatrixXd l = lm.model.eval_embeddings(x);
        const Eigen::MatrixXd probs = lm.model.eval_probs(l);
        const eval::GenerationResult gen = eval::greedy_decode_scores(probs, lm.vocab);

        const auto cand = io::tokenize_words(gen.text);
        const auto ref = io::tokenize_words(rec.report);
        const double b = eval::bleu1(cand, {ref});
        const double rf = eval::rouge1(cand, ref).f;
        const double mt = eval::meteor(cand, ref);
        f << rec.record_id << ',' << csv_quote(rec.report) << ',' << csv_quote(gen.text) << ','
          << io::format_double(b) << ',' << io::format_double(rf) << ','
          << io::format_double(mt) << '\n';
    }
    std::cout << "generate wrote " << ids.size() << " hypotheses to " << out_path.string() << "\n";
}

void cmd_detect(const cfg::PipelineConfig& config) {
    echo_hash(config, "detect");
    const Cache cache = load_cache(config);
    const train::Checkpoint ck = load_checkpoint_checked(config);
    train::LoadedModel lm = train::restore_model(ck);

    const Eigen::MatrixXd prototypes = eval::class_prototypes(
        config.eval.class_descriptions, lm.vocab, lm.model.provider(), ck.model_cfg.m_max);

    std::map<std::string, const CachedRecord*> by_id;
    for (const auto& r : cache.records) by_id[r.record_id] = &r;
    const auto& ids = ck.test_ids.empty() ? ck.val_ids : ck.test_ids;
    if (ids.empty()) throw DataError("checkpoint has no evaluation split");

    const fs::path out_path = fs::path(config.paths.out_dir) / "dd_scores.csv";
    std::ofstream f(out_path, std::ios::binary);
    f << "record_id";
    for (int c = 0; c < io::kNumLabels; ++c)
        f << ",score_" << io::label_to_string(static_cast<io::Label>(c));
    f << ",predicted,labels\n";
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("record " + id + " missing from cache");
        const CachedRecord& rec = *it->second;
        const Eigen::VectorXd x = (rec.raw_input - lm.layout.standard_mean)
                                      .cwiseQuotient(lm.layout.standard_scale);
        const Eigen::MatrixXd l = lm.model.eval_embeddings(x);
        const eval::ZeroShotResult zs = eval::zero_shot_classify(l, prototypes);

        f << rec.record_id;
        for (double s : zs.scores) f << ',' << io::format_double(s);
        f << ',' << io::label_to_string(zs.label) << ',' << labels_to_string(rec.labels) << '\n';
    }
    std::cout << "detect wrote " << ids.size() << " score rows to " << out_path.string() << "\n";
}

void cmd_evaluate(const cfg::PipelineConfig& config, const std::string& generations_csv,
                  const std::string& scores_csv) {
    echo_hash(config, "evaluate");
    if (generations_csv.empty() && scores_csv.empty())
        throw ConfigError("evaluate needs --generations and/or --scores");

    json report;
    report["config_hash"] = config.hash();

    if (!generations_csv.empty()) {
        std::ifstream f(generations_csv);
        if (!f) throw DataError("cannot open " + generations_csv);
        std::string line;
        std::getline(f, line); // header
        std::vector<eval::Words> cands;
        std::vector<std::vector<eval::Words>> refs;
        double rouge_p = 0, rouge_r = 0, rouge_f = 0, meteor_sum = 0;
        long n = 0;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto fields = csv_fields(line);
            if (fields.size() < 3) throw DataError("bad generations row: " + line);
            const auto ref = io::tokenize_words(fields[1]);
            const auto cand = io::tokenize_words(fields[2]);
            cands.push_back(cand);
            refs.push_back({ref});
            const auto rs = eval::rouge1(cand, ref);
            rouge_p += rs.p;
            rouge_r += rs.r;
            rouge_f += rs.f;
            meteor_sum += eval::meteor(cand, ref);
            ++n;
        }
        if (n == 0) throw DataError("generations file has no rows");
        report["tg"] = {{"bleu1", eval::corpus_bleu1(cands, refs)},
                        {"rouge1_p", rouge_p / n},
                        {"rouge1_r", rouge_r / n},
                        {"rouge1_f", rouge_f / n},
                        {"meteor", meteor_sum / n},
                        {"records", n}};
    }

    if (!scores_csv.empty()) {
        std::ifstream f(scores_csv);
        if (!f) throw DataError("cannot open " + scores_csv);
        std::string line;
        std::getline(f, line); // header
        std::vector<std::array<double, io::kNumLabels>> scores;
        std::vector<std::set<io::Label>> labels;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto fields = csv_fields(line);
            if (fields.size() != 2 + io::kNumLabels + 1)
                throw DataError("bad scores row: " + line);
            std::array<double, io::kNumLabels> s{};
            for (int c = 0; c < io::kNumLabels; ++c)
                s[static_cast<std::size_t>(c)] = std::stod(fields[static_cast<std::size_t>(1 + c)]);
            scores.push_back(s);
            labels.push_back(labels_from_string(fields.back()));
        }
        if (scores.empty()) throw DataError("scores file has no rows");
        const auto cm = eval::classification_metrics(scores, labels);
        json per_class = json::object();
        for (int c = 0; c < io::kNumLabels; ++c) {
            const auto& auc = cm.per_class_auc[static_cast<std::size_t>(c)];
            if (auc)
                per_class[io::label_to_string(static_cast<io::Label>(c))] = *auc;
        }
        report["dd"] = {{"accuracy", cm.accuracy},
                        {"f1_macro", cm.f1_macro},
                        {"aucroc_macro", cm.aucroc_macro},
                        {"per_class_auc", per_class},
                        {"records", scores.size()}};
    }

    const fs::path out_path = fs::path(config.paths.out_dir) / "metrics.json";
    fs::create_directories(config.paths.out_dir);
    std::ofstream f(out_path, std::ios::binary);
    f << report.dump(2) << '\n';
    std::cout << "evaluate wrote " << out_path.string() << "\n";
}

} // namespace ecglang::pipeline
