#include "ecglang/model.hpp"

namespace ecglang {

Model::Model(const cfg::ModelConfig& mc, int input_dims, int vocab_size,
             embed::EmbeddingProvider provider)
    : mc_(mc), vocab_size_(vocab_size), provider_(std::move(provider)) {
    if (input_dims % mc.positions != 0)
        throw ConfigError("input dims " + std::to_string(input_dims) +
                          " not divisible by model.positions");
    enc_.positions = mc.positions;
    enc_.channels = input_dims / mc.positions;
    enc_.d_model = mc.d_model;
    enc_.n_layers = mc.n_layers;
    enc_.n_heads = mc.n_heads;
    enc_.d_ff = mc.d_ff;
    enc_.dropout = mc.dropout;
    enc_.validate();
    if (provider_.d_emb() != mc.d_emb)
        throw ConfigError("provider d_emb does not match model.d_emb");
    if (provider_.rows() != vocab_size)
        throw ConfigError("provider table rows do not match vocab size");
}

void Model::init_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::init_encoder_params(params, enc_, rng);
    embed::init_mapper_params(params, mc_.d_model, mc_.d_emb, mc_.m_max, rng);
    nn::init_conv_head_params(params, vocab_size_, vocab_size_, mc_.head_kernel, rng,
                              /*identity_init=*/true);
}

Model::Forward Model::forward(nn::Tape& tape, nn::ParamBinding& bind,
                              const Eigen::VectorXd& input, std::mt19937_64& rng,
                              bool train_mode) const {
    Forward f;
    f.encoder_out = nn::encoder_forward(tape, bind, input, enc_, rng, train_mode);
    f.l = provider_.llm_map(f.encoder_out, bind, mc_.m_max);
    f.conv_logits = nn::conv1d(provider_.vocab_logits(f.l), bind, "head", mc_.head_kernel);
    return f;
}

Model::LossParts Model::item_loss(nn::Tape& tape, nn::ParamBinding& bind,
                                  const Eigen::VectorXd& input, const io::TokenSeq& target,
                                  std::mt19937_64& rng, bool train_mode,
                                  const cfg::OtConfig& ot_cfg, double lambda_ot) const {
    Forward f = forward(tape, bind, input, rng, train_mode);

    // Targets padded to the model's m_max slots; PAD is masked in the CE.
    std::vector<int> padded(static_cast<std::size_t>(mc_.m_max), io::Vocab::kPad);
    for (std::size_t i = 0; i < target.size() && i < padded.size(); ++i) padded[i] = target[i];

    LossParts parts;
    parts.fwd = f;
    nn::Var ce = nn::cross_entropy_with_logits(f.conv_logits, padded, io::Vocab::kPad);
    parts.ce = ce.value()(0, 0);
    if (lambda_ot == 0.0) {
        parts.total = ce;
        return parts;
    }

    const Eigen::MatrixXd l_gt = provider_.embed_report(target);
    ot::SinkhornParams sp;
    sp.eps = ot_cfg.eps_scale;
    sp.max_iters = ot_cfg.max_iters;
    sp.tol = ot_cfg.tol;
    nn::Var wd = ot::sinkhorn_loss(f.l, l_gt, ot::metric_from_string(ot_cfg.metric), sp,
                                   /*eps_relative_to_mean_cost=*/true);
    parts.ot = wd.value()(0, 0);
    parts.total = nn::add(ce, nn::scale(wd, lambda_ot));
    return parts;
}

Eigen::MatrixXd Model::eval_embeddings(const Eigen::VectorXd& input) {
    nn::Tape tape;
    nn::ParamBinding bind(tape, params);
    std::mt19937_64 rng(0); // dropout disabled in eval mode; rng unused
    Forward f = forward(tape, bind, input, rng, /*train_mode=*/false);
    return f.l.value();
}

Eigen::MatrixXd Model::eval_probs(const Eigen::MatrixXd& l) {
    nn::Tape tape;
    nn::ParamBinding bind(tape, params);
    nn::Var lv = tape.leaf(l);
    nn::Var probs = nn::conv_softmax_head(provider_.vocab_logits(lv), bind, "head", mc_.head_kernel);
    return probs.value();
}

} // namespace ecglang
