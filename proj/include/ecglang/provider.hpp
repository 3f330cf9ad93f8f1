#pragma once

#include <cstdint>
#include <string>

#include "ecglang/encoder.hpp"
#include "ecglang/tape.hpp"
#include "ecglang/vocab.hpp"

namespace ecglang::embed {

using Mat = Eigen::MatrixXd;

// Frozen language-embedding provider. StandIn derives a token table and a
// single frozen transformer layer from a seed; FileBacked wraps an external
// table of precomputed embeddings. Neither variant is ever updated by
// training (the checksum pins that down).
class EmbeddingProvider {
  public:
    enum class Kind { StandIn, FileBacked };

    static EmbeddingProvider stand_in(int vocab_size, int d_emb, std::uint64_t seed);
    static EmbeddingProvider file_backed(const std::string& emb_path);

    Kind kind() const { return kind_; }
    int d_emb() const { return static_cast<int>(table_.cols()); }
    int rows() const { return static_cast<int>(table_.rows()); }
    const Mat& table() const { return table_; }
    std::uint64_t seed() const { return seed_; }
    const std::string& source_path() const { return path_; }

    // FNV checksum over the table and the frozen layer weights.
    std::uint64_t checksum() const;

    // Ground-truth embeddings: row lookup per token id, no gradients.
    Mat embed_report(const io::TokenSeq& tokens) const;

    // Maps encoder output X to m language-embedding slots:
    //   H = X * W(map.proj)           (learned)
    //   H = frozen_layer(H)           (StandIn only, gradients pass through)
    //   L = attention(Q(map.queries), H, H)
    // Learned weights come from `learned`; create them with
    // init_mapper_params.
    nn::Var llm_map(nn::Var x, nn::ParamBinding& learned, int m) const;

    // logits = L * table^T (tied, frozen).
    nn::Var vocab_logits(nn::Var l) const;
    Mat vocab_logits_eval(const Mat& l) const { return l * table_.transpose(); }

  private:
    EmbeddingProvider() = default;
    Kind kind_ = Kind::StandIn;
    std::uint64_t seed_ = 0;
    std::string path_;
    Mat table_;
    // Frozen single-head transformer layer (StandIn only); mutable because
    // binding creates tape leaves but never changes values.
    mutable nn::ParamSet frozen_;
};

// Learned mapper parameters: "map.proj" (d_model x d_emb) and
// "map.queries" (m_max x d_emb).
void init_mapper_params(nn::ParamSet& params, int d_model, int d_emb, int m_max,
                        std::mt19937_64& rng);

} // namespace ecglang::embed
