#pragma once

#include "ecglang/config.hpp"
#include "ecglang/encoder.hpp"
#include "ecglang/ot.hpp"
#include "ecglang/provider.hpp"
#include "ecglang/vocab.hpp"

namespace ecglang {

// Full network: transformer encoder over the assembled ECG vector, frozen
// provider mapping into language-embedding space, tied vocabulary logits
// and the 1-D conv + softmax output head.
class Model {
  public:
    Model(const cfg::ModelConfig& mc, int input_dims, int vocab_size,
          embed::EmbeddingProvider provider);

    void init_params(std::uint64_t seed);

    const cfg::ModelConfig& config() const { return mc_; }
    const embed::EmbeddingProvider& provider() const { return provider_; }
    int input_dims() const { return enc_.positions * enc_.channels; }
    int vocab_size() const { return vocab_size_; }

    struct Forward {
        nn::Var encoder_out; // positions x d_model
        nn::Var l;           // m_max x d_emb
        nn::Var conv_logits; // m_max x |V|, pre softmax
    };
    Forward forward(nn::Tape& tape, nn::ParamBinding& bind, const Eigen::VectorXd& input,
                    std::mt19937_64& rng, bool train_mode) const;

    struct LossParts {
        nn::Var total;
        double ce = 0;
        double ot = 0;
        Forward fwd;
    };
    LossParts item_loss(nn::Tape& tape, nn::ParamBinding& bind, const Eigen::VectorXd& input,
                        const io::TokenSeq& target, std::mt19937_64& rng, bool train_mode,
                        const cfg::OtConfig& ot_cfg, double lambda_ot) const;

    // Evaluation-mode runs on a throwaway tape.
    Eigen::MatrixXd eval_embeddings(const Eigen::VectorXd& input);
    Eigen::MatrixXd eval_probs(const Eigen::MatrixXd& l); // conv head distribution

    nn::ParamSet params;

  private:
    cfg::ModelConfig mc_;
    nn::EncoderConfig enc_;
    int vocab_size_;
    embed::EmbeddingProvider provider_;
};

} // namespace ecglang
