#include "ecglang/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ecglang/evalmetrics.hpp"
#include "ecglang/tensor_io.hpp"

using nlohmann::json;

namespace ecglang::train {

double lr_schedule(long step, int d_model, int warmup) {
    if (step < 1) throw ConfigError("lr_schedule: step must be >= 1");
    if (d_model < 1 || warmup < 1) throw ConfigError("lr_schedule: bad d_model/warmup");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(warmup);
    return std::pow(static_cast<double>(d_model), -0.5) *
           std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

SplitIndices stratified_split(const std::vector<std::set<io::Label>>& labels,
                              const std::array<double, 3>& ratios, std::uint64_t seed) {
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");
    for (double r : ratios)
        if (r < 0) throw ConfigError("split ratios must be nonnegative");

    std::array<std::vector<int>, io::kNumLabels> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].empty()) throw DataError("record without labels cannot be split");
        by_class[static_cast<std::size_t>(*labels[i].begin())].push_back(static_cast<int>(i));
    }

    std::mt19937_64 rng(seed);
    SplitIndices out;
    for (int c = 0; c < io::kNumLabels; ++c) {
        auto& group = by_class[static_cast<std::size_t>(c)];
        if (group.empty()) continue;
        if (group.size() < 3)
            throw DataError(std::string("class ") +
                            io::label_to_string(static_cast<io::Label>(c)) +
                            " has fewer than 3 records");
        std::shuffle(group.begin(), group.end(), rng);

        // Largest-remainder allocation over (train, val, test).
        const auto k = static_cast<double>(group.size());
        std::array<long, 3> take{};
        std::array<double, 3> frac{};
        long assigned = 0;
        for (int b = 0; b < 3; ++b) {
            const double ideal = k * ratios[static_cast<std::size_t>(b)];
            take[static_cast<std::size_t>(b)] = static_cast<long>(std::floor(ideal));
            frac[static_cast<std::size_t>(b)] = ideal - std::floor(ideal);
            assigned += take[static_cast<std::size_t>(b)];
        }
        while (assigned < static_cast<long>(group.size())) {
            int best = 0;
            for (int b = 1; b < 3; ++b)
                if (frac[static_cast<std::size_t>(b)] > frac[static_cast<std::size_t>(best)])
                    best = b;
            ++take[static_cast<std::size_t>(best)];
            frac[static_cast<std::size_t>(best)] = -1;
            ++assigned;
        }

        std::size_t pos = 0;
        for (long i = 0; i < take[0]; ++i) out.train.push_back(group[pos++]);
        for (long i = 0; i < take[1]; ++i) out.val.push_back(group[pos++]);
        for (long i = 0; i < take[2]; ++i) out.test.push_back(group[pos++]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(nn::ParamSet& params, double lr, double clip_norm) {
    double sq_norm = 0;
    for (const auto& [name, g] : params.grads)
        if (params.trainable(name)) sq_norm += g.squaredNorm();
    const double norm = std::sqrt(sq_norm);
    const double scale = (clip_norm > 0 && norm > clip_norm) ? clip_norm / norm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, value] : params.values) {
        if (!params.trainable(name)) continue;
        const nn::Mat g = params.grads.at(name) * scale;
        auto mit = m.find(name);
        if (mit == m.end()) {
            m[name] = nn::Mat::Zero(g.rows(), g.cols());
            v[name] = nn::Mat::Zero(g.rows(), g.cols());
            mit = m.find(name);
        }
        nn::Mat& mm = mit->second;
        nn::Mat& vv = v.at(name);
        mm = beta1_ * mm + (1.0 - beta1_) * g;
        vv = beta2_ * vv + (1.0 - beta2_) * g.cwiseAbs2();
        value.array() -=
            lr * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + eps_);
    }
}

std::uint64_t Trainer::provider_seed_from(std::uint64_t seed) {
    return seed ^ 0x9e3779b97f4a7c15ull;
}

Trainer::Trainer(const cfg::PipelineConfig& config, feat::FeatureLayout layout)
    : config_(config), layout_(std::move(layout)) {}

Model& Trainer::model() {
    if (!model_) throw Error("trainer has no model yet; call fit");
    return *model_;
}

FitResult Trainer::fit(const std::vector<DatasetItem>& items) {
    if (items.empty()) throw DataError("fit: empty dataset");
    const auto& tc = config_.train;

    std::vector<std::set<io::Label>> labels;
    labels.reserve(items.size());
    for (const auto& it : items) labels.push_back(it.labels);
    FitResult result;
    result.split = stratified_split(labels, tc.split, config_.seed);
    if (result.split.train.empty()) throw DataError("fit: empty training split");
    train_ids_.clear();
    val_ids_.clear();
    test_ids_.clear();
    for (int i : result.split.train) train_ids_.push_back(items[static_cast<std::size_t>(i)].record_id);
    for (int i : result.split.val) val_ids_.push_back(items[static_cast<std::size_t>(i)].record_id);
    for (int i : result.split.test) test_ids_.push_back(items[static_cast<std::size_t>(i)].record_id);

    // Standardization constants from the training split only.
    std::vector<Eigen::VectorXd> train_raw;
    train_raw.reserve(result.split.train.size());
    for (int i : result.split.train) train_raw.push_back(items[static_cast<std::size_t>(i)].raw_input);
    feat::fit_standardization(layout_, train_raw);

    std::vector<std::string> train_reports;
    for (int i : result.split.train) train_reports.push_back(items[static_cast<std::size_t>(i)].report);
    vocab_ = io::Vocab::build(train_reports, tc.min_freq);

    embed::EmbeddingProvider provider =
        config_.paths.embeddings.empty()
            ? embed::EmbeddingProvider::stand_in(vocab_.size(), config_.model.d_emb,
                                                 provider_seed_from(config_.seed))
            : embed::EmbeddingProvider::file_backed(config_.paths.embeddings);

    model_.emplace(config_.model, layout_.dims(), vocab_.size(), std::move(provider));
    model_->init_params(config_.seed);
    result.provider_checksum_before = model_->provider().checksum();

    // Pre-standardize and pre-tokenize every record once.
    std::vector<Eigen::VectorXd> inputs(items.size());
    std::vector<io::TokenSeq> targets(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        inputs[i] = (items[i].raw_input - layout_.standard_mean)
                        .cwiseQuotient(layout_.standard_scale);
        targets[i] = io::tokenize(items[i].report, vocab_, config_.model.m_max);
    }

    const Eigen::MatrixXd prototypes = eval::class_prototypes(
        config_.eval.class_descriptions, vocab_, model_->provider(), config_.model.m_max);

    std::mt19937_64 run_rng(config_.seed + 1);
    std::vector<int> order = result.split.train;
    long step = 0;

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), run_rng);

        EpochStats stats;
        stats.epoch = epoch;
        long seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
            const int batch_n = static_cast<int>(stop - start);

            model_->params.zero_grads();
            nn::Tape tape;
            nn::ParamBinding bind(tape, model_->params);

            nn::Var batch_sum{};
            for (std::size_t k = start; k < stop; ++k) {
                const auto idx = static_cast<std::size_t>(order[k]);
                Model::LossParts parts =
                    model_->item_loss(tape, bind, inputs[idx], targets[idx], run_rng,
                                      /*train_mode=*/true, config_.ot, tc.lambda_ot);
                stats.train_ce += parts.ce;
                stats.train_ot += parts.ot;
                stats.train_total += parts.total.value()(0, 0);
                batch_sum = batch_sum.valid() ? nn::add(batch_sum, parts.total) : parts.total;
            }
            seen += batch_n;
            nn::Var batch_loss = nn::scale(batch_sum, 1.0 / batch_n);

            const double loss_value = batch_loss.value()(0, 0);
            if (!std::isfinite(loss_value)) {
                double pnorm = 0;
                for (const auto& [name, value] : model_->params.values)
                    pnorm += value.squaredNorm();
                throw NumericalFault("non-finite loss at step " + std::to_string(step + 1) +
                                     ", parameter norm " + std::to_string(std::sqrt(pnorm)));
            }

            tape.backward(batch_loss);
            bind.harvest();
            ++step;
            adam_.step(model_->params, lr_schedule(step, config_.model.d_model, tc.warmup_steps),
                       tc.grad_clip);
        }
        stats.train_ce /= static_cast<double>(seen);
        stats.train_ot /= static_cast<double>(seen);
        stats.train_total /= static_cast<double>(seen);

        // Validation: loss in eval mode plus zero-shot accuracy.
        if (!result.split.val.empty()) {
            long correct = 0;
            for (int vi : result.split.val) {
                const auto idx = static_cast<std::size_t>(vi);
                nn::Tape tape;
                nn::ParamBinding bind(tape, model_->params);
                std::mt19937_64 eval_rng(0);
                Model::LossParts parts =
                    model_->item_loss(tape, bind, inputs[idx], targets[idx], eval_rng,
                                      /*train_mode=*/false, config_.ot, tc.lambda_ot);
                stats.val_total += parts.total.value()(0, 0);
                const auto zs = eval::zero_shot_classify(parts.fwd.l.value(), prototypes);
                if (items[idx].labels.count(zs.label)) ++correct;
            }
            stats.val_total /= static_cast<double>(result.split.val.size());
            stats.val_accuracy =
                static_cast<double>(correct) / static_cast<double>(result.split.val.size());
        }
        result.log.push_back(stats);
    }

    result.provider_checksum_after = model_->provider().checksum();
    if (result.provider_checksum_before != result.provider_checksum_after)
        throw NumericalFault("frozen provider changed during training");
    return result;
}

Checkpoint Trainer::make_checkpoint() const {
    if (!model_) throw Error("no model to checkpoint");
    Checkpoint ck;
    ck.model_cfg = config_.model;
    ck.vocab = vocab_;
    ck.layout = layout_;
    ck.config_hash = config_.hash();
    ck.provider_checksum = model_->provider().checksum();
    ck.provider_seed = provider_seed_from(config_.seed);
    ck.embeddings_path = config_.paths.embeddings;
    ck.steps = adam_.steps();
    ck.train_ids = train_ids_;
    ck.val_ids = val_ids_;
    ck.test_ids = test_ids_;

    for (const auto& [name, value] : model_->params.values) ck.tensors["param." + name] = value;
    for (const auto& [name, value] : adam_.m) ck.tensors["adam.m." + name] = value;
    for (const auto& [name, value] : adam_.v) ck.tensors["adam.v." + name] = value;
    if (layout_.standardized()) {
        ck.tensors["norm.mean"] = layout_.standard_mean.transpose();
        ck.tensors["norm.scale"] = layout_.standard_scale.transpose();
    }
    return ck;
}

void Checkpoint::save(const std::string& prefix) const {
    io::save_tensors(tensors, prefix + ".tns");

    json j;
    j["model"] = {{"positions", model_cfg.positions}, {"d_model", model_cfg.d_model},
                  {"n_layers", model_cfg.n_layers},   {"n_heads", model_cfg.n_heads},
                  {"d_ff", model_cfg.d_ff},           {"dropout", model_cfg.dropout},
                  {"d_emb", model_cfg.d_emb},         {"m_max", model_cfg.m_max},
                  {"head_kernel", model_cfg.head_kernel}};
    std::vector<std::string> tokens;
    for (int i = 4; i < vocab.size(); ++i) tokens.push_back(vocab.token(i));
    j["vocab"] = tokens;
    j["layout"] = {{"samples_per_lead", layout.samples_per_lead},
                   {"feature_subset", layout.feature_subset},
                   {"z8_centered_on_z7", layout.z8_centered_on_z7}};
    j["config_hash"] = config_hash;
    j["provider"] = {{"checksum", io::hex64(provider_checksum)},
                     {"seed", provider_seed},
                     {"embeddings", embeddings_path}};
    j["steps"] = steps;
    j["split"] = {{"train", train_ids}, {"val", val_ids}, {"test", test_ids}};

    std::ofstream f(prefix + ".json", std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint sidecar " + prefix + ".json");
    f << j.dump(2) << '\n';
}

Checkpoint Checkpoint::load(const std::string& prefix) {
    std::ifstream f(prefix + ".json");
    if (!f) throw DataError("cannot open checkpoint sidecar " + prefix + ".json");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("bad checkpoint sidecar: ") + e.what());
    }

    Checkpoint ck;
    const auto& m = j.at("model");
    ck.model_cfg.positions = m.at("positions").get<int>();
    ck.model_cfg.d_model = m.at("d_model").get<int>();
    ck.model_cfg.n_layers = m.at("n_layers").get<int>();
    ck.model_cfg.n_heads = m.at("n_heads").get<int>();
    ck.model_cfg.d_ff = m.at("d_ff").get<int>();
    ck.model_cfg.dropout = m.at("dropout").get<double>();
    ck.model_cfg.d_emb = m.at("d_emb").get<int>();
    ck.model_cfg.m_max = m.at("m_max").get<int>();
    ck.model_cfg.head_kernel = m.at("head_kernel").get<int>();

    {
        std::vector<std::string> tokens;
        for (const auto& tok : j.at("vocab")) tokens.push_back(tok.get<std::string>());
        ck.vocab = io::Vocab::from_tokens(tokens);
    }

    ck.layout.samples_per_lead = j.at("layout").at("samples_per_lead").get<int>();
    ck.layout.feature_subset = j.at("layout").at("feature_subset").get<std::vector<int>>();
    ck.layout.z8_centered_on_z7 = j.at("layout").at("z8_centered_on_z7").get<bool>();

    ck.config_hash = j.at("config_hash").get<std::string>();
    ck.provider_seed = j.at("provider").at("seed").get<std::uint64_t>();
    ck.embeddings_path = j.at("provider").at("embeddings").get<std::string>();
    ck.provider_checksum = std::stoull(j.at("provider").at("checksum").get<std::string>(), nullptr, 16);
    ck.steps = j.at("steps").get<long>();
    if (j.contains("split")) {
        ck.train_ids = j.at("split").at("train").get<std::vector<std::string>>();
        ck.val_ids = j.at("split").at("val").get<std::vector<std::string>>();
        ck.test_ids = j.at("split").at("test").get<std::vector<std::string>>();
    }

    ck.tensors = io::load_tensors(prefix + ".tns");
    if (ck.tensors.count("norm.mean")) {
        ck.layout.standard_mean = ck.tensors.at("norm.mean").row(0).transpose();
        ck.layout.standard_scale = ck.tensors.at("norm.scale").row(0).transpose();
    }
    return ck;
}

LoadedModel restore_model(const Checkpoint& ckpt) {
    embed::EmbeddingProvider provider =
        ckpt.embeddings_path.empty()
            ? embed::EmbeddingProvider::stand_in(ckpt.vocab.size(), ckpt.model_cfg.d_emb,
                                                 ckpt.provider_seed)
            : embed::EmbeddingProvider::file_backed(ckpt.embeddings_path);
    if (provider.checksum() != ckpt.provider_checksum)
        throw DataError("provider checksum mismatch: frozen weights differ from checkpoint");

    LoadedModel lm{Model(ckpt.model_cfg, ckpt.layout.dims(), ckpt.vocab.size(), std::move(provider)),
                   ckpt.vocab, ckpt.layout, ckpt.config_hash};
    lm.model.init_params(0); // shapes only; values overwritten below
    for (auto& [name, value] : lm.model.params.values) {
        auto it = ckpt.tensors.find("param." + name);
        if (it == ckpt.tensors.end()) throw DataError("checkpoint missing parameter " + name);
        if (it->second.rows() != value.rows() || it->second.cols() != value.cols())
            throw DataError("checkpoint shape mismatch for " + name);
        value = it->second;
    }
    return lm;
}

} // namespace ecglang::train
