#pragma once

#include <cstdint>

#include "mixtg/tensor.hpp"

namespace mixtg {

class Rng;

/// Weights of one graph-convolution branch:
/// sigma( F + LayerNorm( A_hat·F·W1 + F·W2 ) ).
struct GcnParams {
    Tensor w1;     // [d, d]
    Tensor w2;     // [d, d]
    Tensor gamma;  // [d]
    Tensor beta;   // [d]
    Act act = Act::Gelu;
    double ln_eps = 1e-5;

    static GcnParams init(std::int64_t embed_dim, Rng& rng, Act act = Act::Gelu,
                          bool requires_grad = true);
    std::int64_t embed_dim() const { return w1.dim(0); }
    void validate() const;
};

/// Temporal graph construction: per joint, each frame keeps itself plus the
/// k-1 most similar other frames (dot-product similarity, ties to the lower
/// frame index), row-softmaxed over the kept set.
struct TemporalAdjacencySpec {
    std::int64_t neighbor_count = 3;
    bool include_self = true;  // fixed true
};

/// Graph convolution over the joint axis with a fixed skeleton adjacency.
Tensor spatial_gcn(const Tensor& f, const Tensor& a_hat, const GcnParams& params);

/// Row-stochastic dynamic frame adjacency, shape [B, J, T, T]. Each row has
/// exactly min(k, T) nonzeros, always including the diagonal.
Tensor temporal_adjacency(const Tensor& f, const TemporalAdjacencySpec& spec);

/// Graph convolution over the frame axis with a per-(batch, joint) adjacency.
Tensor temporal_gcn(const Tensor& f, const Tensor& adj, const GcnParams& params);

}  // namespace mixtg
