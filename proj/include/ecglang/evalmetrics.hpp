#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecglang/provider.hpp"
#include "ecglang/vocab.hpp"
#include "ecglang/wfdb.hpp"

namespace ecglang::eval {

using Mat = Eigen::MatrixXd;

struct GenerationResult {
    std::string record_id;
    io::TokenSeq tokens; // argmax ids up to and including EOS (or m_max)
    std::string text;    // detokenized, specials stripped
    std::string reference;
};

// Argmax per row of a per-position score matrix (logits or probabilities;
// ties go to the smallest id), stopping after EOS.
GenerationResult greedy_decode_scores(const Mat& position_scores, const io::Vocab& vocab);

// The spec surface: scores are the tied-embedding logits of L.
GenerationResult greedy_decode(const Mat& l, const embed::EmbeddingProvider& provider,
                               const io::Vocab& vocab, int m_max);

// Class prototypes in Label order: mean-pooled embeddings of the tokenized
// class descriptions.
Mat class_prototypes(const std::map<std::string, std::string>& descriptions,
                     const io::Vocab& vocab, const embed::EmbeddingProvider& provider,
                     int m_max);

struct ZeroShotResult {
    io::Label label;
    std::array<double, io::kNumLabels> scores; // cosine per class, Label order
};

// Cosine of mean-pooled L against each prototype; ties break by class name.
ZeroShotResult zero_shot_classify(const Mat& l, const Mat& prototypes);

// --- text-generation metrics (unigram) --------------------------------------

using Words = std::vector<std::string>;

// Modified unigram precision with per-reference clipping and the closest-
// length brevity penalty. Empty candidate scores 0.
double bleu1(const Words& candidate, const std::vector<Words>& references);

struct RougeScore {
    double p = 0, r = 0, f = 0;
};
RougeScore rouge1(const Words& candidate, const Words& reference);

// Exact-match Meteor: F_mean = 10PR/(R+9P), penalty = 0.5*(chunks/m)^3.
double meteor(const Words& candidate, const Words& reference);

// Corpus-level BLEU-1: clipped counts and lengths summed over pairs.
double corpus_bleu1(const std::vector<Words>& candidates,
                    const std::vector<std::vector<Words>>& references);

// --- classification metrics --------------------------------------------------

struct ClassificationMetrics {
    double accuracy = 0;
    double f1_macro = 0;
    double aucroc_macro = 0;
    std::array<std::optional<double>, io::kNumLabels> per_class_auc; // absent class -> nullopt
};

// Accuracy counts a prediction as correct when the argmax class is anywhere
// in the record's label set. AUC uses Mann-Whitney pair counting with ties
// worth 0.5; classes without both positives and negatives are skipped from
// the macro mean.
ClassificationMetrics classification_metrics(
    const std::vector<std::array<double, io::kNumLabels>>& scores,
    const std::vector<std::set<io::Label>>& labels);

// Argmax over per-class scores with the lexicographic class-name tie rule.
io::Label argmax_label(const std::array<double, io::kNumLabels>& scores);

} // namespace ecglang::eval
