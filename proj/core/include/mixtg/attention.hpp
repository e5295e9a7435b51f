#pragma once

#include <cstdint>
#include <vector>

#include "mixtg/tensor.hpp"

namespace mixtg {

class Rng;

enum class AttnMode { Spatial, Temporal };

/// Per-head Q/K/V projections (no bias) plus the biased output projection.
struct MhsaParams {
    std::int64_t heads = 1;
    std::vector<Tensor> w_q;  // heads x [d, d/h]
    std::vector<Tensor> w_k;
    std::vector<Tensor> w_v;
    Tensor w_out;  // [d, d]
    Tensor b_out;  // [d]

    static MhsaParams init(std::int64_t embed_dim, std::int64_t heads, Rng& rng,
                           bool requires_grad = true);
    std::int64_t embed_dim() const;
    std::int64_t head_dim() const;
    void validate() const;  // ConfigError on inconsistent shapes
};

/// Debug hook: one attention map per head, rows summing to 1.
struct AttentionDebug {
    std::vector<Tensor> head_attention;
};

/// Multi-head self-attention over [B, T, J, d]. Spatial mode attends across
/// joints within each frame; temporal mode attends across frames within each
/// joint trajectory. No positional information enters here, so spatial mode
/// commutes with joint permutations and temporal mode with frame
/// permutations.
Tensor mhsa(const Tensor& f, const MhsaParams& params, AttnMode mode,
            AttentionDebug* debug = nullptr);

}  // namespace mixtg
