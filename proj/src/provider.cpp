#include "ecglang/provider.hpp"

#include <cmath>

#include "ecglang/tensor_io.hpp"

namespace ecglang::embed {

namespace {

Mat gaussian(int rows, int cols, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, sigma);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = normal(rng);
    return m;
}

} // namespace

EmbeddingProvider EmbeddingProvider::stand_in(int vocab_size, int d_emb, std::uint64_t seed) {
    if (vocab_size < 4) throw ConfigError("stand-in provider needs at least the special tokens");
    if (d_emb < 2) throw ConfigError("stand-in provider needs d_emb >= 2");

    EmbeddingProvider p;
    p.kind_ = Kind::StandIn;
    p.seed_ = seed;
    std::mt19937_64 rng(seed);
    // Rows are approximately unit norm, so distinct tokens are near
    // orthogonal under the tied-logit inner product.
    p.table_ = gaussian(vocab_size, d_emb, 1.0 / std::sqrt(static_cast<double>(d_emb)), rng);

    // One frozen single-head transformer layer over d_emb channels.
    nn::EncoderConfig layer;
    layer.positions = 1; // unused by layer init
    layer.channels = d_emb;
    layer.d_model = d_emb;
    layer.n_layers = 1;
    layer.n_heads = 1;
    layer.d_ff = 2 * d_emb;
    layer.dropout = 0.0;
    nn::init_encoder_params(p.frozen_, layer, rng, "frozen");
    // The embed projection of the helper config is not part of the layer.
    p.frozen_.values.erase("frozen.embed");
    p.frozen_.grads.erase("frozen.embed");
    for (const auto& [name, value] : p.frozen_.values) p.frozen_.frozen.insert(name);
    return p;
}

EmbeddingProvider EmbeddingProvider::file_backed(const std::string& emb_path) {
    EmbeddingProvider p;
    p.kind_ = Kind::FileBacked;
    p.path_ = emb_path;
    p.table_ = io::load_embedding_file(emb_path).cast<double>();
    if (p.table_.rows() < 4) throw DataError("embedding file must cover the special tokens");
    return p;
}

std::uint64_t EmbeddingProvider::checksum() const {
    io::TensorMap tensors;
    tensors["table"] = table_;
    for (const auto& [name, value] : frozen_.values) tensors[name] = value;
    return io::tensor_checksum(tensors);
}

Mat EmbeddingProvider::embed_report(const io::TokenSeq& tokens) const {
    Mat out(static_cast<Eigen::Index>(tokens.size()), table_.cols());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const int id = tokens[i];
        if (id < 0 || id >= table_.rows())
            throw DataError("token id " + std::to_string(id) + " outside embedding table");
        out.row(static_cast<Eigen::Index>(i)) = table_.row(id);
    }
    return out;
}

nn::Var EmbeddingProvider::llm_map(nn::Var x, nn::ParamBinding& learned, int m) const {
    if (m < 1) throw ConfigError("llm_map: m must be >= 1");
    nn::Var h = nn::matmul(x, learned.use("map.proj"));
    if (h.value().cols() != d_emb()) throw ConfigError("llm_map: projection width mismatch");

    if (kind_ == Kind::StandIn) {
        // Frozen layer: bound onto the same tape so gradients flow through
        // to the learned projection, but harvest() is never called on it.
        nn::ParamBinding frozen_bind(*x.tape, frozen_);
        std::mt19937_64 unused_rng(0);
        h = nn::encoder_layer(h, frozen_bind, "frozen.l0", 1, 0.0, unused_rng, false);
    }

    nn::Var queries = learned.use("map.queries");
    if (queries.value().rows() != m)
        throw ConfigError("llm_map: query slots do not match m");
    return nn::attention(queries, h, h);
}

nn::Var EmbeddingProvider::vocab_logits(nn::Var l) const {
    if (l.value().cols() != table_.cols()) throw ConfigError("vocab_logits: width mismatch");
    nn::Var table_leaf = l.tape->leaf(table_);
    return nn::matmul_nt(l, table_leaf);
}

void init_mapper_params(nn::ParamSet& params, int d_model, int d_emb, int m_max,
                        std::mt19937_64& rng) {
    params.add("map.proj", nn::xavier(d_model, d_emb, rng));
    params.add("map.queries", nn::xavier(m_max, d_emb, rng));
}

} // namespace ecglang::embed
