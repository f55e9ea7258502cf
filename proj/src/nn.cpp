#include "msrgan/nn.hpp"

#include <cmath>

#include "msrgan/sha256.hpp"

namespace msrgan {

ParamCounts count_parameters(const ParamList& params) {
    ParamCounts c;
    for (const auto& p : params) {
        if (p.var.requires_grad())
            c.trainable += p.var.value().size();
        else
            c.non_trainable += p.var.value().size();
    }
    c.total = c.trainable + c.non_trainable;
    return c;
}

void set_frozen(ParamList& params, bool frozen) {
    for (auto& p : params) p.var.set_requires_grad(!frozen);
}

void zero_grads(ParamList& params) {
    for (auto& p : params) p.var.zero_grad();
}

real grad_norm(const ParamList& params) {
    real acc = 0;
    for (auto& p : params) {
        if (!p.var.node() || !p.var.has_grad()) continue;
        const Tensor& g = p.var.node()->grad;
        for (int64_t i = 0; i < g.size(); ++i) acc += g[i] * g[i];
    }
    return std::sqrt(acc);
}

std::string params_checksum(const ParamList& params) {
    Sha256 h;
    for (const auto& p : params) {
        h.update(p.name.data(), p.name.size());
        const Tensor& t = p.var.value();
        h.update(t.data(), size_t(t.size()) * sizeof(real));
    }
    return h.hex_digest();
}

Var make_conv_weight(int out_ch, int in_ch, int kh, int kw, Rng& rng) {
    Tensor t({out_ch, in_ch, kh, kw});
    const real std = std::sqrt(real(2) / (real(in_ch) * kh * kw));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * std;
    return Var::param(std::move(t));
}

Var make_linear_weight(int out_dim, int in_dim, Rng& rng) {
    Tensor t({out_dim, in_dim});
    const real std = std::sqrt(real(2) / real(in_dim + out_dim));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * std;
    return Var::param(std::move(t));
}

Var make_zeros_param(std::vector<int> shape) { return Var::param(Tensor::zeros(std::move(shape))); }

Var make_normal_param(std::vector<int> shape, real stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * stddev;
    return Var::param(std::move(t));
}

Conv2d::Conv2d(int in_ch, int out_ch, int k, int stride_, int pad_, Rng& rng, const std::string& name,
               ParamList& reg)
    : w(make_conv_weight(out_ch, in_ch, k, k, rng)),
      b(make_zeros_param({out_ch})),
      stride(stride_),
      pad(pad_) {
    reg.push_back({name + ".w", w});
    reg.push_back({name + ".b", b});
}

Linear::Linear(int in_dim, int out_dim, Rng& rng, const std::string& name, ParamList& reg)
    : w(make_linear_weight(out_dim, in_dim, rng)), b(make_zeros_param({out_dim})) {
    reg.push_back({name + ".w", w});
    reg.push_back({name + ".b", b});
}

Adam::Adam(ParamList params, real lr, real beta1, real beta2, real eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& p : params_) {
        m_.push_back(Tensor::zeros(p.var.value().shape()));
        v_.push_back(Tensor::zeros(p.var.value().shape()));
    }
}

void Adam::step() {
    ++t_;
    const real bc1 = real(1) - std::pow(beta1_, real(t_));
    const real bc2 = real(1) - std::pow(beta2_, real(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
        Var& p = params_[k].var;
        if (!p.requires_grad() || !p.has_grad()) continue;
        Tensor& val = p.value();
        const Tensor& g = p.node()->grad;
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        const int64_t n = val.size();
        real* mp = m.data();
        real* vp = v.data();
        real* wp = val.data();
        const real* gp = g.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) {
            mp[i] = beta1_ * mp[i] + (real(1) - beta1_) * gp[i];
            vp[i] = beta2_ * vp[i] + (real(1) - beta2_) * gp[i] * gp[i];
            const real mhat = mp[i] / bc1;
            const real vhat = vp[i] / bc2;
            wp[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grad() { zero_grads(params_); }

std::vector<std::pair<std::string, const Tensor*>> Adam::state_tensors() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(params_.size() * 2);
    for (size_t k = 0; k < params_.size(); ++k) {
        out.emplace_back("m." + params_[k].name, &m_[k]);
        out.emplace_back("v." + params_[k].name, &v_[k]);
    }
    return out;
}

void Adam::load_state(const std::string& name, const Tensor& t) {
    for (size_t k = 0; k < params_.size(); ++k) {
        if (name == "m." + params_[k].name) {
            if (!m_[k].same_shape(t)) throw CheckpointMismatch("adam state shape mismatch: " + name);
            m_[k] = t;
            return;
        }
        if (name == "v." + params_[k].name) {
            if (!v_[k].same_shape(t)) throw CheckpointMismatch("adam state shape mismatch: " + name);
            v_[k] = t;
            return;
        }
    }
    throw CheckpointMismatch("unknown adam state tensor: " + name);
}

} // namespace msrgan
