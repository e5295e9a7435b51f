#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mixtg/attention.hpp"
#include "mixtg/graph_conv.hpp"
#include "mixtg/tensor.hpp"

namespace mixtg {

class Rng;

enum class BlockMode { Spatial, Temporal };
enum class BranchComposition { AttentionGcn, DoubleAttention, DoubleGcn };
enum class StreamOrder { StTs, StSt, TsTs, SsSs, TtTt };
enum class SePosition { None, BeforeFusion, BetweenBlocks, AfterFusion };

BranchComposition parse_branch_composition(const std::string& name);
StreamOrder parse_stream_order(const std::string& name);
SePosition parse_se_position(const std::string& name);
std::string branch_composition_name(BranchComposition v);
std::string stream_order_name(StreamOrder v);
std::string se_position_name(SePosition v);

/// Squeeze-and-excitation weights: d -> d/r bottleneck -> d.
struct SeParams {
    Tensor fc1_w;  // [d, d/r]
    Tensor fc1_b;  // [d/r]
    Tensor fc2_w;  // [d/r, d]
    Tensor fc2_b;  // [d]

    static SeParams init(std::int64_t embed_dim, std::int64_t reduction, Rng& rng,
                         bool requires_grad = true);
    std::int64_t embed_dim() const { return fc1_w.dim(0); }
    void validate() const;
};

/// One Mixformer block: pre-norm, two parallel branches chosen by the
/// composition, adaptive branch fusion with residual, then a pre-norm MLP
/// with residual.
struct MixformerBlockParams {
    BlockMode mode = BlockMode::Spatial;
    BranchComposition composition = BranchComposition::AttentionGcn;
    std::optional<MhsaParams> attn1, attn2;
    std::optional<GcnParams> gcn1, gcn2;
    TemporalAdjacencySpec adj_spec;
    Tensor norm1_gamma, norm1_beta;
    Tensor norm2_gamma, norm2_beta;
    Tensor fuse_w, fuse_b;  // [2d, 2], [2]
    Tensor mlp_w1, mlp_b1;  // [d, r*d], [r*d]
    Tensor mlp_w2, mlp_b2;  // [r*d, d], [d]
    double ln_eps = 1e-5;

    static MixformerBlockParams init(BlockMode mode, BranchComposition composition,
                                     std::int64_t embed_dim, std::int64_t heads,
                                     std::int64_t mlp_ratio, std::int64_t temporal_neighbors,
                                     Act gcn_act, Rng& rng, bool requires_grad = true);
    std::int64_t embed_dim() const { return mlp_w1.dim(0); }
    void validate() const;  // branch params present must match the composition
};

/// Dual-stream Mixformer layer: two block pipelines, adaptive stream fusion,
/// SE at a configurable position, trailing fully connected layer.
struct MixformerLayerParams {
    StreamOrder order = StreamOrder::StTs;
    SePosition se_position = SePosition::AfterFusion;
    MixformerBlockParams a1, a2;  // stream A
    MixformerBlockParams b1, b2;  // stream B
    Tensor fuse_w, fuse_b;        // [2d, 2], [2]
    std::optional<SeParams> se;   // absent iff se_position == None
    Tensor fc_w, fc_b;            // [d, d], [d]

    static MixformerLayerParams init(StreamOrder order, SePosition se_position,
                                     BranchComposition composition, std::int64_t embed_dim,
                                     std::int64_t heads, std::int64_t mlp_ratio,
                                     std::int64_t se_reduction, std::int64_t temporal_neighbors,
                                     Act gcn_act, Rng& rng, bool requires_grad = true);
    std::int64_t embed_dim() const { return fc_w.dim(0); }
    void validate() const;
};

/// Per-position convex blend: softmax(concat(fa, fb)·w + b) over two logits
/// yields alpha_a + alpha_b = 1 at every (b, t, j).
Tensor adaptive_fuse(const Tensor& fa, const Tensor& fb, const Tensor& w, const Tensor& b,
                     Tensor* alpha_out = nullptr);

/// Squeeze over frames and joints, excite through the bottleneck MLP with a
/// sigmoid gate, rescale each channel. Shape preserving.
Tensor se_layer(const Tensor& x, const SeParams& params, Tensor* scale_out = nullptr);

Tensor mixformer_block(const Tensor& f, const MixformerBlockParams& params, const Tensor& a_hat);

struct LayerDebug {
    Tensor stream_alpha;  // [B, T, J, 2]
    Tensor se_scale;      // [B, 1, 1, d] when SE is present
};

Tensor mixformer_layer(const Tensor& f, const MixformerLayerParams& params, const Tensor& a_hat,
                       LayerDebug* debug = nullptr);

}  // namespace mixtg
