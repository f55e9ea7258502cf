#include "msrgan/capsule.hpp"

namespace msrgan {

CapsuleTensor primary_capsules(const Var& features, int types, int dim) {
    const Tensor& f = features.value();
    if (f.ndim() != 4 || f.dim(1) != types * dim)
        throw ShapeMismatch("primary_capsules expects channels == types * dim");
    const int caps = types * f.dim(2) * f.dim(3);
    Var u = squash_last(primary_caps_arrange(features, types, dim));
    return {u, caps, dim};
}

CapsuleTensor routed_capsule_layer(const CapsuleTensor& in, const Var& transform, int iterations,
                                   RoutingTrace* trace) {
    const Tensor& Wv = transform.value();
    if (Wv.ndim() != 4 || Wv.dim(0) != in.num_capsules || Wv.dim(3) != in.capsule_dim)
        throw ShapeMismatch("routing transform shape does not match input capsules");
    const int out_caps = Wv.dim(1);
    const int out_dim = Wv.dim(2);
    const int batch = in.vectors.value().dim(0);
    if (iterations < 1) throw Error("routing needs at least one iteration");

    const Var uhat = caps_transform(transform, in.vectors);

    Var logits = Var::constant(Tensor::zeros({batch, in.num_capsules, out_caps}));
    Var v;
    for (int it = 0; it < iterations; ++it) {
        const Var c = softmax_last(logits);
        if (trace) trace->couplings.push_back(c.value());
        v = squash_last(caps_weighted_sum(c, uhat));
        if (it + 1 < iterations) {
            // Last iteration's agreement update would not affect the output.
            logits = add(logits, caps_agreement(uhat, v));
        }
    }
    if (trace) trace->routed_output = v.value();
    return {v, out_caps, out_dim};
}

Var make_caps_transform(int in_caps, int out_caps, int out_dim, int in_dim, Rng& rng) {
    return make_normal_param({in_caps, out_caps, out_dim, in_dim}, real(0.1), rng);
}

} // namespace msrgan
