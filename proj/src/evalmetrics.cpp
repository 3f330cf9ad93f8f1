#include "ecglang/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ecglang::eval {

GenerationResult greedy_decode_scores(const Mat& position_scores, const io::Vocab& vocab) {
    GenerationResult res;
    for (Eigen::Index r = 0; r < position_scores.rows(); ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < position_scores.cols(); ++c)
            if (position_scores(r, c) > position_scores(r, best)) best = static_cast<int>(c);
        res.tokens.push_back(best);
        if (best == io::Vocab::kEos) break;
    }
    res.text = detokenize(res.tokens, vocab);
    return res;
}

GenerationResult greedy_decode(const Mat& l, const embed::EmbeddingProvider& provider,
                               const io::Vocab& vocab, int m_max) {
    Mat logits = provider.vocab_logits_eval(l);
    if (logits.rows() > m_max) logits.conservativeResize(m_max, Eigen::NoChange);
    return greedy_decode_scores(logits, vocab);
}

Mat class_prototypes(const std::map<std::string, std::string>& descriptions,
                     const io::Vocab& vocab, const embed::EmbeddingProvider& provider,
                     int m_max) {
    Mat protos(io::kNumLabels, provider.d_emb());
    for (int c = 0; c < io::kNumLabels; ++c) {
        const std::string name = io::label_to_string(static_cast<io::Label>(c));
        auto it = descriptions.find(name);
        if (it == descriptions.end()) throw ConfigError("missing class description for " + name);
        const io::TokenSeq toks = io::tokenize(it->second, vocab, m_max);
        protos.row(c) = provider.embed_report(toks).colwise().mean();
    }
    return protos;
}

io::Label argmax_label(const std::array<double, io::kNumLabels>& scores) {
    int best = 0;
    for (int c = 1; c < io::kNumLabels; ++c) {
        if (scores[static_cast<std::size_t>(c)] > scores[static_cast<std::size_t>(best)]) {
            best = c;
        } else if (scores[static_cast<std::size_t>(c)] == scores[static_cast<std::size_t>(best)]) {
            // ties resolve to the lexicographically smaller class name
            if (std::string(io::label_to_string(static_cast<io::Label>(c))) <
                io::label_to_string(static_cast<io::Label>(best)))
                best = c;
        }
    }
    return static_cast<io::Label>(best);
}

ZeroShotResult zero_shot_classify(const Mat& l, const Mat& prototypes) {
    if (prototypes.rows() != io::kNumLabels || prototypes.cols() != l.cols())
        throw ConfigError("zero_shot_classify: prototype shape mismatch");
    const Eigen::RowVectorXd pooled = l.colwise().mean();
    const double pn = pooled.norm();
    if (pn == 0.0) throw UndefinedSimilarity("zero_shot_classify: zero-norm pooled embedding");

    ZeroShotResult res{};
    for (int c = 0; c < io::kNumLabels; ++c) {
        const double qn = prototypes.row(c).norm();
        if (qn == 0.0) throw UndefinedSimilarity("zero_shot_classify: zero-norm prototype");
        res.scores[static_cast<std::size_t>(c)] = pooled.dot(prototypes.row(c)) / (pn * qn);
    }
    res.label = argmax_label(res.scores);
    return res;
}

namespace {

std::map<std::string, int> count_words(const Words& ws) {
    std::map<std::string, int> counts;
    for (const auto& w : ws) ++counts[w];
    return counts;
}

} // namespace

double bleu1(const Words& candidate, const std::vector<Words>& references) {
    if (candidate.empty()) return 0.0;
    if (references.empty()) throw DataError("bleu1: no references");

    // Per-token clip at the max count over references.
    std::map<std::string, int> max_ref;
    for (const auto& ref : references)
        for (const auto& [w, n] : count_words(ref))
            max_ref[w] = std::max(max_ref[w], n);

    long clipped = 0;
    for (const auto& [w, n] : count_words(candidate)) {
        auto it = max_ref.find(w);
        if (it != max_ref.end()) clipped += std::min(n, it->second);
    }
    const double precision = static_cast<double>(clipped) / static_cast<double>(candidate.size());

    // Closest reference length; ties prefer the shorter reference.
    long r_best = static_cast<long>(references.front().size());
    for (const auto& ref : references) {
        const long r = static_cast<long>(ref.size());
        const long c = static_cast<long>(candidate.size());
        if (std::llabs(r - c) < std::llabs(r_best - c) ||
            (std::llabs(r - c) == std::llabs(r_best - c) && r < r_best))
            r_best = r;
    }
    const double bp =
        std::exp(std::min(0.0, 1.0 - static_cast<double>(r_best) /
                                         static_cast<double>(candidate.size())));
    return precision * bp;
}

double corpus_bleu1(const std::vector<Words>& candidates,
                    const std::vector<std::vector<Words>>& references) {
    if (candidates.size() != references.size())
        throw DataError("corpus_bleu1: candidate/reference count mismatch");
    long clipped = 0, cand_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Words& cand = candidates[i];
        cand_len += static_cast<long>(cand.size());

        std::map<std::string, int> max_ref;
        for (const auto& ref : references[i])
            for (const auto& [w, n] : count_words(ref)) max_ref[w] = std::max(max_ref[w], n);
        for (const auto& [w, n] : count_words(cand)) {
            auto it = max_ref.find(w);
            if (it != max_ref.end()) clipped += std::min(n, it->second);
        }

        long r_best = references[i].empty() ? 0 : static_cast<long>(references[i].front().size());
        for (const auto& ref : references[i]) {
            const long r = static_cast<long>(ref.size());
            const long c = static_cast<long>(cand.size());
            if (std::llabs(r - c) < std::llabs(r_best - c) ||
                (std::llabs(r - c) == std::llabs(r_best - c) && r < r_best))
                r_best = r;
        }
        ref_len += r_best;
    }
    if (cand_len == 0) return 0.0;
    const double precision = static_cast<double>(clipped) / static_cast<double>(cand_len);
    const double bp = std::exp(
        std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len)));
    return precision * bp;
}

RougeScore rouge1(const Words& candidate, const Words& reference) {
    RougeScore s;
    if (candidate.empty() || reference.empty()) return s;
    const auto ref_counts = count_words(reference);
    long overlap = 0;
    for (const auto& [w, n] : count_words(candidate)) {
        auto it = ref_counts.find(w);
        if (it != ref_counts.end()) overlap += std::min(n, it->second);
    }
    s.p = static_cast<double>(overlap) / static_cast<double>(candidate.size());
    s.r = static_cast<double>(overlap) / static_cast<double>(reference.size());
    s.f = (s.p + s.r) > 0 ? 2.0 * s.p * s.r / (s.p + s.r) : 0.0;
    return s;
}

namespace {

// Exhaustive search over maximum matchings for the minimal chunk count.
// Candidate position i matched to reference position j continues a chunk
// iff position i-1 was matched to j-1. Sentences here are short reports,
// so the branch-and-bound search stays tiny; a node cap guards the worst
// case (falling back to the best found so far).
struct ChunkSearch {
    const std::vector<std::vector<int>>& options; // per cand pos: ref positions
    const std::vector<int>& remaining_possible;   // suffix max-match counts
    std::vector<char> used;
    int needed;     // matches that must be placed (max matching size)
    int best = 1 << 20;
    long nodes = 0;
    static constexpr long kNodeCap = 2'000'000;

    void dfs(std::size_t pos, int placed, int chunks, int prev_ref) {
        if (++nodes > kNodeCap) return;
        if (chunks >= best) return;
        if (placed + remaining_possible[pos] < needed) return;
        if (pos == options.size()) {
            if (placed == needed) best = std::min(best, chunks);
            return;
        }
        for (int j : options[pos]) {
            if (used[static_cast<std::size_t>(j)]) continue;
            used[static_cast<std::size_t>(j)] = 1;
            dfs(pos + 1, placed + 1, chunks + (j == prev_ref + 1 ? 0 : 1), j);
            used[static_cast<std::size_t>(j)] = 0;
        }
        dfs(pos + 1, placed, chunks, -2); // leave this candidate word unmatched
    }
};

} // namespace

double meteor(const Words& candidate, const Words& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;

    // m = multiset-overlap size (the max matching for exact unigrams).
    const auto ref_counts = count_words(reference);
    long m = 0;
    for (const auto& [w, n] : count_words(candidate)) {
        auto it = ref_counts.find(w);
        if (it != ref_counts.end()) m += std::min(n, it->second);
    }
    if (m == 0) return 0.0;

    std::vector<std::vector<int>> options(candidate.size());
    for (std::size_t i = 0; i < candidate.size(); ++i)
        for (std::size_t j = 0; j < reference.size(); ++j)
            if (candidate[i] == reference[j]) options[i].push_back(static_cast<int>(j));

    std::vector<int> suffix(candidate.size() + 1, 0);
    for (std::size_t i = candidate.size(); i-- > 0;)
        suffix[i] = suffix[i + 1] + (options[i].empty() ? 0 : 1);

    // Greedy left-to-right matching seeds the bound with a feasible chunk
    // count (per-word blocks are complete bipartite, so any maximal greedy
    // assignment reaches m matches).
    int greedy_chunks = 0;
    {
        std::vector<char> used(reference.size(), 0);
        int prev = -2;
        for (std::size_t i = 0; i < candidate.size(); ++i) {
            int pick = -1;
            if (prev + 1 >= 0 && prev + 1 < static_cast<int>(reference.size()) &&
                !used[static_cast<std::size_t>(prev + 1)] &&
                reference[static_cast<std::size_t>(prev + 1)] == candidate[i])
                pick = prev + 1;
            else
                for (int j : options[i])
                    if (!used[static_cast<std::size_t>(j)]) {
                        pick = j;
                        break;
                    }
            if (pick < 0) {
                prev = -2;
                continue;
            }
            used[static_cast<std::size_t>(pick)] = 1;
            greedy_chunks += pick == prev + 1 ? 0 : 1;
            prev = pick;
        }
    }

    ChunkSearch search{options, suffix, std::vector<char>(reference.size(), 0),
                       static_cast<int>(m)};
    search.best = std::max(greedy_chunks, 1);
    search.dfs(0, 0, 0, -2);
    const double chunks = search.best;

    const double p = static_cast<double>(m) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(m) / static_cast<double>(reference.size());
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);
    const double penalty = 0.5 * std::pow(chunks / static_cast<double>(m), 3.0);
    return f_mean * (1.0 - penalty);
}

ClassificationMetrics classification_metrics(
    const std::vector<std::array<double, io::kNumLabels>>& scores,
    const std::vector<std::set<io::Label>>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("classification_metrics: score/label size mismatch");
    const std::size_t n = scores.size();

    ClassificationMetrics out;

    long correct = 0;
    std::vector<int> preds(n);
    for (std::size_t i = 0; i < n; ++i) {
        preds[i] = static_cast<int>(argmax_label(scores[i]));
        if (labels[i].count(static_cast<io::Label>(preds[i]))) ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    // Macro F1, one-vs-rest on the argmax predictions.
    double f1_sum = 0;
    for (int c = 0; c < io::kNumLabels; ++c) {
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool pred_c = preds[i] == c;
            const bool true_c = labels[i].count(static_cast<io::Label>(c)) > 0;
            tp += pred_c && true_c;
            fp += pred_c && !true_c;
            fn += !pred_c && true_c;
        }
        const double denom = 2.0 * tp + fp + fn;
        f1_sum += denom > 0 ? 2.0 * tp / denom : 0.0;
    }
    out.f1_macro = f1_sum / io::kNumLabels;

    // Macro AUC by Mann-Whitney pair counting, ties worth 0.5.
    double auc_sum = 0;
    int auc_classes = 0;
    for (int c = 0; c < io::kNumLabels; ++c) {
        double pairs = 0, wins = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!labels[i].count(static_cast<io::Label>(c))) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (labels[j].count(static_cast<io::Label>(c))) continue;
                pairs += 1;
                const double si = scores[i][static_cast<std::size_t>(c)];
                const double sj = scores[j][static_cast<std::size_t>(c)];
                wins += si > sj ? 1.0 : (si == sj ? 0.5 : 0.0);
            }
        }
        if (pairs > 0) {
            const double auc = wins / pairs;
            out.per_class_auc[static_cast<std::size_t>(c)] = auc;
            auc_sum += auc;
            ++auc_classes;
        }
    }
    if (auc_classes == 0) throw DataError("aucroc needs at least 2 classes present");
    out.aucroc_macro = auc_sum / auc_classes;
    return out;
}

} // namespace ecglang::eval
