#pragma once

#include <map>
#include <random>
#include <set>
#include <string>

#include "ecglang/tape.hpp"

namespace ecglang::nn {

// Named parameter store. Frozen entries take part in forward/backward but
// are never updated by the optimizer.
struct ParamSet {
    std::map<std::string, Mat> values;
    std::map<std::string, Mat> grads;
    std::set<std::string> frozen;

    Mat& at(const std::string& name);
    const Mat& at(const std::string& name) const;
    void add(const std::string& name, Mat value, bool frozen_param = false);
    void zero_grads();
    bool trainable(const std::string& name) const { return !frozen.count(name); }
};

// Binds parameters to tape leaves for one forward/backward pass and pulls
// the leaf gradients back afterwards.
class ParamBinding {
  public:
    explicit ParamBinding(Tape& tape, ParamSet& params) : tape_(&tape), params_(&params) {}
    Var use(const std::string& name);
    void harvest(); // adds tape gradients into params.grads
  private:
    Tape* tape_;
    ParamSet* params_;
    std::map<std::string, Var> bound_;
};

struct EncoderConfig {
    int positions = 16; // input vector is reshaped to positions x channels
    int channels = 54;
    int d_model = 40;
    int n_layers = 5;
    int n_heads = 5;
    int d_ff = 80;
    double dropout = 0.3;

    int d_k() const { return d_model / n_heads; }
    void validate() const;
};

// PE[pos, 2i] = sin(pos / 10000^(2i/d_model)), PE[pos, 2i+1] = cos(...).
Mat positional_encoding(int n_pos, int d_model);

// softmax(Q K^T / sqrt(d_k)) V
Var attention(Var q, Var k, Var v);

// Weight names for layer `l`, head `h`: prefix.l{l}.h{h}.{wq,wk,wv},
// prefix.l{l}.{wo,ff_w1,ff_b1,ff_w2,ff_b2,ln1_g,ln1_b,ln2_g,ln2_b}.
Var multi_head(Var x, ParamBinding& bind, const std::string& layer_prefix, int n_heads);

// One post-norm encoder layer: LayerNorm(x + Dropout(MultiHead(x))) then
// LayerNorm(x + Dropout(FFN(x))).
Var encoder_layer(Var x, ParamBinding& bind, const std::string& layer_prefix, int n_heads,
                  double dropout_p, std::mt19937_64& rng, bool train_mode);

// Full stack: reshape -> embed -> +PE -> n_layers encoder layers. `input`
// is the assembled model-input vector. Throws NumericalFault naming the
// first layer that produced a non-finite activation.
Var encoder_forward(Tape& tape, ParamBinding& bind, const Eigen::VectorXd& input,
                    const EncoderConfig& cfg, std::mt19937_64& rng, bool train_mode,
                    const std::string& prefix = "enc");

// 1-D convolution over positions (odd kernel, zero padding) + row softmax.
// Weight names: prefix.k{j} (c_in x c_out) for each tap and prefix.b.
Var conv1d(Var x, ParamBinding& bind, const std::string& prefix, int kernel);
Var conv_softmax_head(Var x, ParamBinding& bind, const std::string& prefix, int kernel);

// Parameter initialization (Xavier uniform, seeded).
void init_encoder_params(ParamSet& params, const EncoderConfig& cfg, std::mt19937_64& rng,
                         const std::string& prefix = "enc");
void init_conv_head_params(ParamSet& params, int c_in, int c_out, int kernel,
                           std::mt19937_64& rng, bool identity_init,
                           const std::string& prefix = "head");
Mat xavier(int rows, int cols, std::mt19937_64& rng);

} // namespace ecglang::nn
