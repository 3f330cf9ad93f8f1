#include "ecglang/encoder.hpp"

#include <cmath>

namespace ecglang::nn {

Mat& ParamSet::at(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

const Mat& ParamSet::at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

void ParamSet::add(const std::string& name, Mat value, bool frozen_param) {
    if (values.count(name)) throw Error("duplicate parameter: " + name);
    grads[name] = Mat::Zero(value.rows(), value.cols());
    values[name] = std::move(value);
    if (frozen_param) frozen.insert(name);
}

void ParamSet::zero_grads() {
    for (auto& [name, g] : grads) g.setZero();
}

Var ParamBinding::use(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_->leaf(params_->at(name));
    bound_.emplace(name, v);
    return v;
}

void ParamBinding::harvest() {
    for (const auto& [name, var] : bound_) params_->grads[name] += tape_->grad(var);
}

void EncoderConfig::validate() const {
    if (n_layers < 0 || n_heads < 1) throw ConfigError("encoder needs n_layers >= 0, n_heads >= 1");
    if (d_model % n_heads != 0)
        throw ConfigError("d_model must be divisible by n_heads (" + std::to_string(d_model) +
                          " / " + std::to_string(n_heads) + ")");
    if (d_model % 2 != 0) throw ConfigError("d_model must be even for the positional encoding");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (positions < 1 || channels < 1 || d_ff < 1) throw ConfigError("bad encoder dimensions");
}

Mat positional_encoding(int n_pos, int d_model) {
    if (d_model < 2 || d_model % 2 != 0)
        throw ConfigError("positional encoding requires even d_model >= 2");
    Mat pe(n_pos, d_model);
    for (int pos = 0; pos < n_pos; ++pos) {
        for (int i = 0; 2 * i < d_model; ++i) {
            const double denom = std::pow(10000.0, 2.0 * i / d_model);
            pe(pos, 2 * i) = std::sin(pos / denom);
            pe(pos, 2 * i + 1) = std::cos(pos / denom);
        }
    }
    return pe;
}

Var attention(Var q, Var k, Var v) {
    if (q.value().cols() != k.value().cols()) throw Error("attention: Q/K width mismatch");
    if (k.value().rows() != v.value().rows()) throw Error("attention: K/V position mismatch");
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(q.value().cols()));
    Var scores = scale(matmul_nt(q, k), scale_factor);
    return matmul(softmax_rows(scores), v);
}

Var multi_head(Var x, ParamBinding& bind, const std::string& layer_prefix, int n_heads) {
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        const std::string hp = layer_prefix + ".h" + std::to_string(h);
        Var q = matmul(x, bind.use(hp + ".wq"));
        Var k = matmul(x, bind.use(hp + ".wk"));
        Var v = matmul(x, bind.use(hp + ".wv"));
        heads.push_back(attention(q, k, v));
    }
    return matmul(concat_cols(heads), bind.use(layer_prefix + ".wo"));
}

Var encoder_layer(Var x, ParamBinding& bind, const std::string& layer_prefix, int n_heads,
                  double dropout_p, std::mt19937_64& rng, bool train_mode) {
    Var att = multi_head(x, bind, layer_prefix, n_heads);
    att = dropout(att, dropout_p, rng, train_mode);
    x = layer_norm(add(x, att), bind.use(layer_prefix + ".ln1_g"), bind.use(layer_prefix + ".ln1_b"));

    Var ff = matmul(x, bind.use(layer_prefix + ".ff_w1"));
    ff = relu(add_rowvec(ff, bind.use(layer_prefix + ".ff_b1")));
    ff = add_rowvec(matmul(ff, bind.use(layer_prefix + ".ff_w2")), bind.use(layer_prefix + ".ff_b2"));
    ff = dropout(ff, dropout_p, rng, train_mode);
    return layer_norm(add(x, ff), bind.use(layer_prefix + ".ln2_g"), bind.use(layer_prefix + ".ln2_b"));
}

Var encoder_forward(Tape& tape, ParamBinding& bind, const Eigen::VectorXd& input,
                    const EncoderConfig& cfg, std::mt19937_64& rng, bool train_mode,
                    const std::string& prefix) {
    cfg.validate();
    if (input.size() != static_cast<Eigen::Index>(cfg.positions) * cfg.channels)
        throw ConfigError("input dims " + std::to_string(input.size()) + " do not reshape to " +
                          std::to_string(cfg.positions) + " x " + std::to_string(cfg.channels));

    // Row-major reshape: position p holds input[p*channels .. (p+1)*channels).
    Mat seq(cfg.positions, cfg.channels);
    for (int p = 0; p < cfg.positions; ++p)
        for (int c = 0; c < cfg.channels; ++c)
            seq(p, c) = input[static_cast<Eigen::Index>(p) * cfg.channels + c];

    Var x = matmul(tape.leaf(std::move(seq)), bind.use(prefix + ".embed"));
    x = add_const(x, positional_encoding(cfg.positions, cfg.d_model));
    x = dropout(x, cfg.dropout, rng, train_mode);

    for (int l = 0; l < cfg.n_layers; ++l) {
        x = encoder_layer(x, bind, prefix + ".l" + std::to_string(l), cfg.n_heads, cfg.dropout,
                          rng, train_mode);
        if (!x.value().allFinite())
            throw NumericalFault("non-finite activations after encoder layer " + std::to_string(l));
    }
    return x;
}

Var conv1d(Var x, ParamBinding& bind, const std::string& prefix, int kernel) {
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("conv1d kernel must be odd");
    const int half = kernel / 2;
    const int n_pos = static_cast<int>(x.value().rows());

    // Zero padding outside the sequence: taps that fall off the edge are
    // simply skipped.
    Var acc{};
    for (int j = 0; j < kernel; ++j) {
        Var w = bind.use(prefix + ".k" + std::to_string(j));
        const int offset = j - half; // tap j reads position p + offset
        const int dst_start = std::max(0, -offset);
        const int count = n_pos - std::abs(offset);
        if (count <= 0) continue;
        Var shifted = matmul(slice_rows(x, dst_start + offset, count), w);
        // Scatter back into a full-length result via zero-padded slice add.
        Tape& t = *x.tape;
        const int si = shifted.idx;
        Mat padded = Mat::Zero(n_pos, shifted.value().cols());
        padded.middleRows(dst_start, count) = shifted.value();
        Var padded_var = t.emit(std::move(padded), [si, dst_start, count](Tape& tp, const Mat& g) {
            tp.accumulate(si, g.middleRows(dst_start, count));
        });
        acc = acc.valid() ? add(acc, padded_var) : padded_var;
    }
    return add_rowvec(acc, bind.use(prefix + ".b"));
}

Var conv_softmax_head(Var x, ParamBinding& bind, const std::string& prefix, int kernel) {
    return softmax_rows(conv1d(x, bind, prefix, kernel));
}

Mat xavier(int rows, int cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> unif(-limit, limit);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = unif(rng);
    return m;
}

void init_encoder_params(ParamSet& params, const EncoderConfig& cfg, std::mt19937_64& rng,
                         const std::string& prefix) {
    cfg.validate();
    params.add(prefix + ".embed", xavier(cfg.channels, cfg.d_model, rng));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const std::string hp = lp + ".h" + std::to_string(h);
            params.add(hp + ".wq", xavier(cfg.d_model, cfg.d_k(), rng));
            params.add(hp + ".wk", xavier(cfg.d_model, cfg.d_k(), rng));
            params.add(hp + ".wv", xavier(cfg.d_model, cfg.d_k(), rng));
        }
        params.add(lp + ".wo", xavier(cfg.n_heads * cfg.d_k(), cfg.d_model, rng));
        params.add(lp + ".ff_w1", xavier(cfg.d_model, cfg.d_ff, rng));
        params.add(lp + ".ff_b1", Mat::Zero(1, cfg.d_ff));
        params.add(lp + ".ff_w2", xavier(cfg.d_ff, cfg.d_model, rng));
        params.add(lp + ".ff_b2", Mat::Zero(1, cfg.d_model));
        params.add(lp + ".ln1_g", Mat::Ones(1, cfg.d_model));
        params.add(lp + ".ln1_b", Mat::Zero(1, cfg.d_model));
        params.add(lp + ".ln2_g", Mat::Ones(1, cfg.d_model));
        params.add(lp + ".ln2_b", Mat::Zero(1, cfg.d_model));
    }
}

void init_conv_head_params(ParamSet& params, int c_in, int c_out, int kernel,
                           std::mt19937_64& rng, bool identity_init, const std::string& prefix) {
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("conv head kernel must be odd");
    for (int j = 0; j < kernel; ++j) {
        Mat w;
        if (identity_init && c_in == c_out) {
            // Center tap starts as identity so the head initially passes the
            // tied-embedding logits through unchanged.
            w = Mat::Zero(c_in, c_out);
            if (j == kernel / 2) w = Mat::Identity(c_in, c_out);
        } else {
            w = xavier(c_in, c_out, rng);
        }
        params.add(prefix + ".k" + std::to_string(j), std::move(w));
    }
    params.add(prefix + ".b", Mat::Zero(1, c_out));
}

} // namespace ecglang::nn
