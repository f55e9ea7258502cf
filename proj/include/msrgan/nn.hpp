#pragma once

#include <string>
#include <vector>

#include "msrgan/autodiff.hpp"
#include "msrgan/rng.hpp"

namespace msrgan {

struct NamedParam {
    std::string name;
    Var var;
};

/// Flat registry of a network's parameters. Networks append here at
/// construction; checkpoints, optimizers and count_parameters all walk it.
using ParamList = std::vector<NamedParam>;

struct ParamCounts {
    int64_t trainable = 0;
    int64_t non_trainable = 0;
    int64_t total = 0;
};

ParamCounts count_parameters(const ParamList& params);
void set_frozen(ParamList& params, bool frozen);
void zero_grads(ParamList& params);
real grad_norm(const ParamList& params);
/// SHA-256 over the raw parameter values in registry order.
std::string params_checksum(const ParamList& params);

// ---- init ------------------------------------------------------------------

Var make_conv_weight(int out_ch, int in_ch, int kh, int kw, Rng& rng);
Var make_linear_weight(int out_dim, int in_dim, Rng& rng);
Var make_zeros_param(std::vector<int> shape);
Var make_normal_param(std::vector<int> shape, real stddev, Rng& rng);

// ---- layers ----------------------------------------------------------------

struct Conv2d {
    Var w, b;
    int stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int k, int stride_, int pad_, Rng& rng, const std::string& name,
           ParamList& reg);

    Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct Linear {
    Var w, b;

    Linear() = default;
    Linear(int in_dim, int out_dim, Rng& rng, const std::string& name, ParamList& reg);

    Var operator()(const Var& x) const { return linear(x, w, b); }
};

// ---- optimizer ---------------------------------------------------------------

/// Adam over a fixed parameter list. First/second moment buffers live here
/// and serialize into training checkpoints so resumed runs continue
/// bit-exactly.
class Adam {
public:
    Adam() = default;
    Adam(ParamList params, real lr, real beta1, real beta2, real eps = 1e-8);

    void step();
    void zero_grad();

    int64_t step_count() const { return t_; }
    const ParamList& params() const { return params_; }

    /// Moment buffers as named tensors ("m.<param>", "v.<param>") for
    /// checkpointing, plus the step counter.
    std::vector<std::pair<std::string, const Tensor*>> state_tensors() const;
    void load_state(const std::string& name, const Tensor& t);
    void set_step_count(int64_t t) { t_ = t; }

private:
    ParamList params_;
    std::vector<Tensor> m_, v_;
    real lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
};

} // namespace msrgan
