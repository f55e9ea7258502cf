#pragma once

#include <vector>

#include "msrgan/nn.hpp"

namespace msrgan {

/// Capsule vectors: [batch, num_capsules, capsule_dim]. After squash every
/// vector has norm < 1 (length-as-probability reading).
struct CapsuleTensor {
    Var vectors;
    int num_capsules = 0;
    int capsule_dim = 0;
};

/// Coupling coefficients observed during routing, one [B, in, out] tensor
/// per iteration, plus the final routed vectors. Tests assert rows sum to 1
/// and output norms stay below 1.
struct RoutingTrace {
    std::vector<Tensor> couplings;
    Tensor routed_output;  // [B, out_caps, out_dim]
};

/// Reshapes a [B, types*dim, H, W] feature map into types * H * W capsules
/// of `dim` components and squashes them.
CapsuleTensor primary_capsules(const Var& features, int types, int dim);

/// One routed capsule layer (dynamic routing by agreement):
///   b = 0; repeat `iterations`: c = softmax(b); s_j = sum_i c_ij uhat_j|i;
///   v_j = squash(s_j); b_ij += uhat_j|i . v_j
/// `transform` has shape [in_caps, out_caps, out_dim, in_dim].
CapsuleTensor routed_capsule_layer(const CapsuleTensor& in, const Var& transform, int iterations,
                                   RoutingTrace* trace = nullptr);

/// Transform parameter for a routed layer.
Var make_caps_transform(int in_caps, int out_caps, int out_dim, int in_dim, Rng& rng);

} // namespace msrgan
