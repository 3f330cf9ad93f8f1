#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecglang/config.hpp"
#include "ecglang/features.hpp"
#include "ecglang/model.hpp"
#include "ecglang/tensor_io.hpp"
#include "ecglang/vocab.hpp"
#include "ecglang/wfdb.hpp"

namespace ecglang::train {

// Original transformer schedule: d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
double lr_schedule(long step, int d_model, int warmup);

struct SplitIndices {
    std::vector<int> train, val, test;
};

// Stratified by the first label of each record; deterministic in `seed`.
// Requires >= 3 records per class present in `labels`.
SplitIndices stratified_split(const std::vector<std::set<io::Label>>& labels,
                              const std::array<double, 3>& ratios, std::uint64_t seed);

// Adam with global-norm gradient clipping; frozen parameters are skipped.
class Adam {
  public:
    Adam(double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9);
    void step(nn::ParamSet& params, double lr, double clip_norm);
    long steps() const { return t_; }

    std::map<std::string, nn::Mat> m, v; // exposed for checkpointing
    void set_steps(long t) { t_ = t; }

  private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

struct DatasetItem {
    std::string record_id;
    Eigen::VectorXd raw_input; // unstandardized assembled vector
    std::set<io::Label> labels;
    std::string report;
};

struct EpochStats {
    int epoch = 0;
    double train_ce = 0, train_ot = 0, train_total = 0;
    double val_total = 0;
    double val_accuracy = 0; // zero-shot on the validation split
};

struct FitResult {
    std::vector<EpochStats> log;
    SplitIndices split;
    std::uint64_t provider_checksum_before = 0;
    std::uint64_t provider_checksum_after = 0;
};

// Checkpoint = <prefix>.tns (parameters, Adam moments, standardization
// constants) + <prefix>.json (hyperparameters, vocab, hashes).
struct Checkpoint {
    cfg::ModelConfig model_cfg;
    io::Vocab vocab;
    feat::FeatureLayout layout;
    std::string config_hash;
    std::uint64_t provider_checksum = 0;
    std::uint64_t provider_seed = 0;
    std::string embeddings_path; // nonempty -> FileBacked provider
    long steps = 0;
    std::vector<std::string> train_ids, val_ids, test_ids;
    io::TensorMap tensors; // params + adam state + standardization

    void save(const std::string& prefix) const;
    static Checkpoint load(const std::string& prefix);
};

class Trainer {
  public:
    Trainer(const cfg::PipelineConfig& config, feat::FeatureLayout layout);

    // Builds vocab/provider/model from the training split, runs the
    // optimization loop, fills `model_` and returns the per-epoch log.
    FitResult fit(const std::vector<DatasetItem>& items);

    Model& model();
    const io::Vocab& vocab() const { return vocab_; }
    const feat::FeatureLayout& layout() const { return layout_; }
    Checkpoint make_checkpoint() const;

    static std::uint64_t provider_seed_from(std::uint64_t seed);

  private:
    cfg::PipelineConfig config_;
    feat::FeatureLayout layout_;
    io::Vocab vocab_;
    std::optional<Model> model_;
    Adam adam_;
    std::vector<std::string> train_ids_, val_ids_, test_ids_;
};

// Rebuilds a ready-to-run model from a checkpoint; verifies the provider
// checksum and returns the model plus vocab/layout.
struct LoadedModel {
    Model model;
    io::Vocab vocab;
    feat::FeatureLayout layout;
    std::string config_hash;
};
LoadedModel restore_model(const Checkpoint& ckpt);

} // namespace ecglang::train
