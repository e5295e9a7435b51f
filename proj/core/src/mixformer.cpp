#include "mixtg/mixformer.hpp"

#include <cmath>

#include "mixtg/errors.hpp"
#include "mixtg/rng.hpp"

namespace mixtg {

BranchComposition parse_branch_composition(const std::string& name) {
    if (name == "attention_gcn") return BranchComposition::AttentionGcn;
    if (name == "double_attention") return BranchComposition::DoubleAttention;
    if (name == "double_gcn") return BranchComposition::DoubleGcn;
    throw ConfigError("unknown branch_composition '" + name +
                      "' (expected attention_gcn|double_attention|double_gcn)");
}

StreamOrder parse_stream_order(const std::string& name) {
    if (name == "st_ts") return StreamOrder::StTs;
    if (name == "st_st") return StreamOrder::StSt;
    if (name == "ts_ts") return StreamOrder::TsTs;
    if (name == "ss_ss") return StreamOrder::SsSs;
    if (name == "tt_tt") return StreamOrder::TtTt;
    throw ConfigError("unknown stream_order '" + name +
                      "' (expected st_ts|st_st|ts_ts|ss_ss|tt_tt)");
}

SePosition parse_se_position(const std::string& name) {
    if (name == "none") return SePosition::None;
    if (name == "before_fusion") return SePosition::BeforeFusion;
    if (name == "between_blocks") return SePosition::BetweenBlocks;
    if (name == "after_fusion") return SePosition::AfterFusion;
    throw ConfigError("unknown se_position '" + name +
                      "' (expected none|before_fusion|between_blocks|after_fusion)");
}

std::string branch_composition_name(BranchComposition v) {
    switch (v) {
        case BranchComposition::AttentionGcn: return "attention_gcn";
        case BranchComposition::DoubleAttention: return "double_attention";
        case BranchComposition::DoubleGcn: return "double_gcn";
    }
    throw ConfigError("invalid branch_composition value");
}

std::string stream_order_name(StreamOrder v) {
    switch (v) {
        case StreamOrder::StTs: return "st_ts";
        case StreamOrder::StSt: return "st_st";
        case StreamOrder::TsTs: return "ts_ts";
        case StreamOrder::SsSs: return "ss_ss";
        case StreamOrder::TtTt: return "tt_tt";
    }
    throw ConfigError("invalid stream_order value");
}

std::string se_position_name(SePosition v) {
    switch (v) {
        case SePosition::None: return "none";
        case SePosition::BeforeFusion: return "before_fusion";
        case SePosition::BetweenBlocks: return "between_blocks";
        case SePosition::AfterFusion: return "after_fusion";
    }
    throw ConfigError("invalid se_position value");
}

namespace {

Tensor xavier(Shape shape, Rng& rng, bool requires_grad) {
    const double fan_in = static_cast<double>(shape[0]);
    const double fan_out = static_cast<double>(shape[shape.size() - 1]);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    return Tensor::uniform(std::move(shape), -a, a, rng, requires_grad);
}

}  // namespace

SeParams SeParams::init(std::int64_t embed_dim, std::int64_t reduction, Rng& rng,
                        bool requires_grad) {
    if (reduction <= 0 || embed_dim % reduction != 0) {
        throw ConfigError("se: reduction " + std::to_string(reduction) + " must divide embed dim " +
                          std::to_string(embed_dim));
    }
    const std::int64_t hidden = embed_dim / reduction;
    SeParams p;
    p.fc1_w = xavier({embed_dim, hidden}, rng, requires_grad);
    p.fc1_b = Tensor::zeros({hidden}, requires_grad);
    p.fc2_w = xavier({hidden, embed_dim}, rng, requires_grad);
    p.fc2_b = Tensor::zeros({embed_dim}, requires_grad);
    return p;
}

void SeParams::validate() const {
    const std::int64_t d = embed_dim();
    const std::int64_t hidden = fc1_w.dim(1);
    if (fc1_b.shape() != Shape{hidden} || fc2_w.shape() != Shape{hidden, d} ||
        fc2_b.shape() != Shape{d}) {
        throw ConfigError("se: weight shapes inconsistent");
    }
}

MixformerBlockParams MixformerBlockParams::init(BlockMode mode, BranchComposition composition,
                                                std::int64_t embed_dim, std::int64_t heads,
                                                std::int64_t mlp_ratio,
                                                std::int64_t temporal_neighbors, Act gcn_act,
                                                Rng& rng, bool requires_grad) {
    MixformerBlockParams p;
    p.mode = mode;
    p.composition = composition;
    p.adj_spec.neighbor_count = temporal_neighbors;
    switch (composition) {
        case BranchComposition::AttentionGcn:
            p.attn1 = MhsaParams::init(embed_dim, heads, rng, requires_grad);
            p.gcn1 = GcnParams::init(embed_dim, rng, gcn_act, requires_grad);
            break;
        case BranchComposition::DoubleAttention:
            p.attn1 = MhsaParams::init(embed_dim, heads, rng, requires_grad);
            p.attn2 = MhsaParams::init(embed_dim, heads, rng, requires_grad);
            break;
        case BranchComposition::DoubleGcn:
            p.gcn1 = GcnParams::init(embed_dim, rng, gcn_act, requires_grad);
            p.gcn2 = GcnParams::init(embed_dim, rng, gcn_act, requires_grad);
            break;
    }
    p.norm1_gamma = Tensor::full({embed_dim}, 1.0, requires_grad);
    p.norm1_beta = Tensor::zeros({embed_dim}, requires_grad);
    p.norm2_gamma = Tensor::full({embed_dim}, 1.0, requires_grad);
    p.norm2_beta = Tensor::zeros({embed_dim}, requires_grad);
    p.fuse_w = xavier({2 * embed_dim, 2}, rng, requires_grad);
    p.fuse_b = Tensor::zeros({2}, requires_grad);
    const std::int64_t hidden = mlp_ratio * embed_dim;
    p.mlp_w1 = xavier({embed_dim, hidden}, rng, requires_grad);
    p.mlp_b1 = Tensor::zeros({hidden}, requires_grad);
    p.mlp_w2 = xavier({hidden, embed_dim}, rng, requires_grad);
    p.mlp_b2 = Tensor::zeros({embed_dim}, requires_grad);
    return p;
}

void MixformerBlockParams::validate() const {
    const bool want_attn2 = composition == BranchComposition::DoubleAttention;
    const bool want_gcn2 = composition == BranchComposition::DoubleGcn;
    const bool want_attn1 = composition != BranchComposition::DoubleGcn;
    const bool want_gcn1 = composition != BranchComposition::DoubleAttention;
    if (attn1.has_value() != want_attn1 || attn2.has_value() != want_attn2 ||
        gcn1.has_value() != want_gcn1 || gcn2.has_value() != want_gcn2) {
        throw ConfigError("mixformer block: branch parameter sets do not match composition " +
                          branch_composition_name(composition));
    }
    const std::int64_t d = embed_dim();
    if (fuse_w.shape() != Shape{2 * d, 2} || fuse_b.shape() != Shape{2}) {
        throw ConfigError("mixformer block: fusion weight must map 2d concat to 2 logits");
    }
    if (norm1_gamma.shape() != Shape{d} || norm2_gamma.shape() != Shape{d}) {
        throw ConfigError("mixformer block: norm affine size mismatch");
    }
    if (attn1) attn1->validate();
    if (attn2) attn2->validate();
    if (gcn1) gcn1->validate();
    if (gcn2) gcn2->validate();
}

namespace {

std::pair<BlockMode, BlockMode> stream_modes(StreamOrder order, bool stream_a) {
    switch (order) {
        case StreamOrder::StTs:
            return stream_a ? std::pair{BlockMode::Spatial, BlockMode::Temporal}
                            : std::pair{BlockMode::Temporal, BlockMode::Spatial};
        case StreamOrder::StSt:
            return {BlockMode::Spatial, BlockMode::Temporal};
        case StreamOrder::TsTs:
            return {BlockMode::Temporal, BlockMode::Spatial};
        case StreamOrder::SsSs:
            return {BlockMode::Spatial, BlockMode::Spatial};
        case StreamOrder::TtTt:
            return {BlockMode::Temporal, BlockMode::Temporal};
    }
    throw ConfigError("invalid stream_order value");
}

}  // namespace

MixformerLayerParams MixformerLayerParams::init(StreamOrder order, SePosition se_position,
                                                BranchComposition composition,
                                                std::int64_t embed_dim, std::int64_t heads,
                                                std::int64_t mlp_ratio, std::int64_t se_reduction,
                                                std::int64_t temporal_neighbors, Act gcn_act,
                                                Rng& rng, bool requires_grad) {
    MixformerLayerParams p;
    p.order = order;
    p.se_position = se_position;
    const auto [a1m, a2m] = stream_modes(order, true);
    const auto [b1m, b2m] = stream_modes(order, false);
    auto block = [&](BlockMode mode) {
        return MixformerBlockParams::init(mode, composition, embed_dim, heads, mlp_ratio,
                                          temporal_neighbors, gcn_act, rng, requires_grad);
    };
    p.a1 = block(a1m);
    p.a2 = block(a2m);
    p.b1 = block(b1m);
    p.b2 = block(b2m);
    p.fuse_w = xavier({2 * embed_dim, 2}, rng, requires_grad);
    p.fuse_b = Tensor::zeros({2}, requires_grad);
    if (se_position != SePosition::None) {
        p.se = SeParams::init(embed_dim, se_reduction, rng, requires_grad);
    }
    p.fc_w = xavier({embed_dim, embed_dim}, rng, requires_grad);
    p.fc_b = Tensor::zeros({embed_dim}, requires_grad);
    return p;
}

void MixformerLayerParams::validate() const {
    const auto [a1m, a2m] = stream_modes(order, true);
    const auto [b1m, b2m] = stream_modes(order, false);
    if (a1.mode != a1m || a2.mode != a2m || b1.mode != b1m || b2.mode != b2m) {
        throw ConfigError("mixformer layer: block modes inconsistent with stream order " +
                          stream_order_name(order));
    }
    if (se.has_value() != (se_position != SePosition::None)) {
        throw ConfigError("mixformer layer: SE parameters must be present exactly when " +
                          std::string("se_position != none"));
    }
    a1.validate();
    a2.validate();
    b1.validate();
    b2.validate();
    if (se) se->validate();
    const std::int64_t d = embed_dim();
    if (fuse_w.shape() != Shape{2 * d, 2} || fuse_b.shape() != Shape{2} ||
        fc_w.shape() != Shape{d, d} || fc_b.shape() != Shape{d}) {
        throw ConfigError("mixformer layer: fusion/FC shapes inconsistent");
    }
}

Tensor adaptive_fuse(const Tensor& fa, const Tensor& fb, const Tensor& w, const Tensor& b,
                     Tensor* alpha_out) {
    if (fa.shape() != fb.shape()) {
        throw DimensionError("adaptive_fuse: inputs " + shape_str(fa.shape()) + " and " +
                             shape_str(fb.shape()) + " must match");
    }
    const std::int64_t d = fa.dim(-1);
    if (w.shape() != Shape{2 * d, 2} || b.shape() != Shape{2}) {
        throw DimensionError("adaptive_fuse: fusion weight must be [2d, 2] with bias [2]");
    }
    auto logits = linear(concat_lastdim({fa, fb}), w, b);
    auto alpha = softmax_lastdim(logits);
    if (alpha_out) *alpha_out = alpha;
    auto alpha_a = slice_axis(alpha, -1, 0, 1);
    auto alpha_b = slice_axis(alpha, -1, 1, 1);
    return add(mul(alpha_a, fa), mul(alpha_b, fb));
}

Tensor se_layer(const Tensor& x, const SeParams& params, Tensor* scale_out) {
    params.validate();
    if (x.ndim() != 4 || x.dim(3) != params.embed_dim()) {
        throw DimensionError("se_layer: expected [B, T, J, d] with d = " +
                             std::to_string(params.embed_dim()) + ", got " + shape_str(x.shape()));
    }
    auto squeezed = mean_axes(x, {1, 2});  // [B, 1, 1, d]
    auto hidden = activation(Act::Relu, linear(squeezed, params.fc1_w, params.fc1_b));
    auto excited = activation(Act::Sigmoid, linear(hidden, params.fc2_w, params.fc2_b));
    if (scale_out) *scale_out = excited;
    return mul(x, excited);
}

Tensor mixformer_block(const Tensor& f, const MixformerBlockParams& params, const Tensor& a_hat) {
    params.validate();
    if (f.ndim() != 4 || f.dim(3) != params.embed_dim()) {
        throw DimensionError("mixformer_block: expected [B, T, J, d] with d = " +
                             std::to_string(params.embed_dim()) + ", got " + shape_str(f.shape()));
    }
    auto normed = layer_norm(f, params.norm1_gamma, params.norm1_beta, params.ln_eps);
    const AttnMode attn_mode =
        params.mode == BlockMode::Spatial ? AttnMode::Spatial : AttnMode::Temporal;
    auto gcn_branch = [&](const GcnParams& g) {
        if (params.mode == BlockMode::Spatial) return spatial_gcn(normed, a_hat, g);
        return temporal_gcn(normed, temporal_adjacency(normed, params.adj_spec), g);
    };
    Tensor branch1, branch2;
    switch (params.composition) {
        case BranchComposition::AttentionGcn:
            branch1 = mhsa(normed, *params.attn1, attn_mode);
            branch2 = gcn_branch(*params.gcn1);
            break;
        case BranchComposition::DoubleAttention:
            branch1 = mhsa(normed, *params.attn1, attn_mode);
            branch2 = mhsa(normed, *params.attn2, attn_mode);
            break;
        case BranchComposition::DoubleGcn:
            branch1 = gcn_branch(*params.gcn1);
            branch2 = gcn_branch(*params.gcn2);
            break;
    }
    auto fused = adaptive_fuse(branch1, branch2, params.fuse_w, params.fuse_b);
    auto y = add(f, fused);
    auto mlp_in = layer_norm(y, params.norm2_gamma, params.norm2_beta, params.ln_eps);
    auto mlp = linear(activation(Act::Gelu, linear(mlp_in, params.mlp_w1, params.mlp_b1)),
                      params.mlp_w2, params.mlp_b2);
    return add(y, mlp);
}

Tensor mixformer_layer(const Tensor& f, const MixformerLayerParams& params, const Tensor& a_hat,
                       LayerDebug* debug) {
    params.validate();
    const bool se_between = params.se_position == SePosition::BetweenBlocks;
    auto run_stream = [&](const MixformerBlockParams& first, const MixformerBlockParams& second) {
        auto mid = mixformer_block(f, first, a_hat);
        if (se_between) mid = se_layer(mid, *params.se);
        return mixformer_block(mid, second, a_hat);
    };
    auto stream_a = run_stream(params.a1, params.a2);
    auto stream_b = run_stream(params.b1, params.b2);
    if (params.se_position == SePosition::BeforeFusion) {
        stream_a = se_layer(stream_a, *params.se);
        stream_b = se_layer(stream_b, *params.se);
    }
    Tensor alpha;
    auto fused = adaptive_fuse(stream_a, stream_b, params.fuse_w, params.fuse_b,
                               debug ? &alpha : nullptr);
    if (debug) debug->stream_alpha = alpha;
    if (params.se_position == SePosition::AfterFusion) {
        fused = se_layer(fused, *params.se, debug ? &debug->se_scale : nullptr);
    }
    return linear(fused, params.fc_w, params.fc_b);
}

}  // namespace mixtg
