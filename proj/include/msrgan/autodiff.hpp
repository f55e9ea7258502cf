#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "msrgan/tensor.hpp"

namespace msrgan {

/// Reverse-mode autodiff over Tensor. Graphs are built define-by-run: every
/// op allocates a node whose creation index gives a topological order, so
/// backward() is a single reverse sweep. Ops skip gradient work for parents
/// that do not require it, which is how frozen networks (the backbone, the
/// discriminator during a generator step) stay cheap and untouched.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;
    int64_t seq = 0;

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    /// Wraps a value that never needs gradients (images, targets).
    static Var constant(Tensor t);
    /// Wraps a trainable leaf.
    static Var param(Tensor t);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& value() { return node_->value; }
    Tensor& grad() { return node_->ensure_grad(); }
    bool has_grad() const { return !node_->grad.empty(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    void zero_grad() {
        if (node_ && !node_->grad.empty()) node_->grad.fill(0);
    }
    std::shared_ptr<Node> node() const { return node_; }

    /// Same value, detached from the graph as a non-grad leaf.
    Var detach() const { return constant(node_->value); }

private:
    std::shared_ptr<Node> node_;
};

/// Runs the reverse sweep from a scalar loss. Gradients accumulate into
/// every reachable node with requires_grad.
void backward(const Var& loss);

// ---- primitive ops -------------------------------------------------------

/// 2-D cross-correlation. x:[B,IC,H,W] w:[OC,IC,KH,KW] bias:[OC] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);

/// x:[B,N] w:[M,N] bias:[M] -> [B,M]
Var linear(const Var& x, const Var& w, const Var& bias);

Var relu(const Var& x);
Var leaky_relu(const Var& x, real slope);
Var sigmoid(const Var& x);
/// Hard clamp to [0,1]; gradient passes only through strictly interior values.
Var clamp01(const Var& x);

Var upsample_nearest2(const Var& x);
Var avg_pool2(const Var& x);
Var global_avg_pool(const Var& x);  // [B,C,H,W] -> [B,C]

Var concat_channels(const std::vector<Var>& xs);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, real s);
Var reshape(const Var& x, std::vector<int> shape);

/// Mean of |a - b| over all elements.
Var mae(const Var& a, const Var& b);
/// Mean binary cross-entropy against a constant target in {0,1}, with
/// epsilon clamping so the loss stays finite for saturated predictions.
Var bce_mean(const Var& pred, real target, real eps = 1e-7);
/// Same loss with one target per prediction element.
Var bce_mean_targets(const Var& pred, const Tensor& targets, real eps = 1e-7);
Var mean_all(const Var& x);

// ---- capsule primitives --------------------------------------------------

/// [B, T*D, H, W] -> [B, T*H*W, D]: one capsule vector per (type, position).
Var primary_caps_arrange(const Var& x, int types, int dim);

/// v = s * |s| / (1 + |s|^2) over the last axis; |v| < 1, v = 0 at s = 0.
Var squash_last(const Var& s);

/// uhat[b,i,o,:] = W[i,o] @ u[b,i,:].  W:[I,O,OD,ID], u:[B,I,ID].
Var caps_transform(const Var& W, const Var& u);

Var softmax_last(const Var& x);

/// s[b,o,:] = sum_i c[b,i,o] * uhat[b,i,o,:]
Var caps_weighted_sum(const Var& c, const Var& uhat);

/// a[b,i,o] = uhat[b,i,o,:] . v[b,o,:]
Var caps_agreement(const Var& uhat, const Var& v);

} // namespace msrgan
