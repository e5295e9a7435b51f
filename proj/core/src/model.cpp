#include "mixtg/model.hpp"

#include <cmath>

#include "mixtg/errors.hpp"
#include "mixtg/rng.hpp"

namespace mixtg {

namespace {

Tensor xavier(Shape shape, Rng& rng, bool requires_grad) {
    const double fan_in = static_cast<double>(shape[0]);
    const double fan_out = static_cast<double>(shape[shape.size() - 1]);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    return Tensor::uniform(std::move(shape), -a, a, rng, requires_grad);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, bool requires_grad) {
    config.validate();
    Rng rng(config.seed);
    const std::int64_t d = config.embed_dim;
    ModelParams p;
    p.input_proj_w = xavier({3, d}, rng, requires_grad);
    p.input_proj_b = Tensor::zeros({d}, requires_grad);
    if (config.embedding_mode != EmbeddingMode::Temporal) {
        p.pos_spatial = Tensor::uniform({1, config.joints, d}, -0.02, 0.02, rng, requires_grad);
    }
    if (config.embedding_mode != EmbeddingMode::Spatial) {
        p.pos_temporal = Tensor::uniform({1, config.frames, d}, -0.02, 0.02, rng, requires_grad);
    }
    for (std::int64_t i = 0; i < config.layers; ++i) {
        p.layer_params.push_back(MixformerLayerParams::init(
            config.stream_order, config.se_position, config.branch_composition, d, config.heads,
            config.mlp_ratio, config.se_reduction, config.temporal_neighbors, config.gcn_act(),
            rng, requires_grad));
    }
    p.motion_w = xavier({d, config.motion_dim}, rng, requires_grad);
    p.motion_b = Tensor::zeros({config.motion_dim}, requires_grad);
    p.head_w = xavier({config.motion_dim, 3}, rng, requires_grad);
    p.head_b = Tensor::zeros({3}, requires_grad);
    return p;
}

namespace {

void collect_attn(const std::string& prefix, const MhsaParams& a,
                  std::vector<std::pair<std::string, Tensor>>& out) {
    for (std::size_t h = 0; h < a.w_q.size(); ++h) {
        out.emplace_back(prefix + ".q" + std::to_string(h), a.w_q[h]);
        out.emplace_back(prefix + ".k" + std::to_string(h), a.w_k[h]);
        out.emplace_back(prefix + ".v" + std::to_string(h), a.w_v[h]);
    }
    out.emplace_back(prefix + ".out.weight", a.w_out);
    out.emplace_back(prefix + ".out.bias", a.b_out);
}

void collect_gcn(const std::string& prefix, const GcnParams& g,
                 std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + ".w1", g.w1);
    out.emplace_back(prefix + ".w2", g.w2);
    out.emplace_back(prefix + ".gamma", g.gamma);
    out.emplace_back(prefix + ".beta", g.beta);
}

void collect_block(const std::string& prefix, const MixformerBlockParams& b,
                   std::vector<std::pair<std::string, Tensor>>& out) {
    if (b.attn1) collect_attn(prefix + ".attn1", *b.attn1, out);
    if (b.attn2) collect_attn(prefix + ".attn2", *b.attn2, out);
    if (b.gcn1) collect_gcn(prefix + ".gcn1", *b.gcn1, out);
    if (b.gcn2) collect_gcn(prefix + ".gcn2", *b.gcn2, out);
    out.emplace_back(prefix + ".norm1.gamma", b.norm1_gamma);
    out.emplace_back(prefix + ".norm1.beta", b.norm1_beta);
    out.emplace_back(prefix + ".norm2.gamma", b.norm2_gamma);
    out.emplace_back(prefix + ".norm2.beta", b.norm2_beta);
    out.emplace_back(prefix + ".fuse.weight", b.fuse_w);
    out.emplace_back(prefix + ".fuse.bias", b.fuse_b);
    out.emplace_back(prefix + ".mlp.w1", b.mlp_w1);
    out.emplace_back(prefix + ".mlp.b1", b.mlp_b1);
    out.emplace_back(prefix + ".mlp.w2", b.mlp_w2);
    out.emplace_back(prefix + ".mlp.b2", b.mlp_b2);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("input_proj.weight", input_proj_w);
    out.emplace_back("input_proj.bias", input_proj_b);
    if (pos_spatial.defined()) out.emplace_back("embed.spatial", pos_spatial);
    if (pos_temporal.defined()) out.emplace_back("embed.temporal", pos_temporal);
    for (std::size_t i = 0; i < layer_params.size(); ++i) {
        const std::string prefix = "layers." + std::to_string(i);
        const auto& lp = layer_params[i];
        collect_block(prefix + ".a1", lp.a1, out);
        collect_block(prefix + ".a2", lp.a2, out);
        collect_block(prefix + ".b1", lp.b1, out);
        collect_block(prefix + ".b2", lp.b2, out);
        out.emplace_back(prefix + ".fuse.weight", lp.fuse_w);
        out.emplace_back(prefix + ".fuse.bias", lp.fuse_b);
        if (lp.se) {
            out.emplace_back(prefix + ".se.fc1.weight", lp.se->fc1_w);
            out.emplace_back(prefix + ".se.fc1.bias", lp.se->fc1_b);
            out.emplace_back(prefix + ".se.fc2.weight", lp.se->fc2_w);
            out.emplace_back(prefix + ".se.fc2.bias", lp.se->fc2_b);
        }
        out.emplace_back(prefix + ".fc.weight", lp.fc_w);
        out.emplace_back(prefix + ".fc.bias", lp.fc_b);
    }
    out.emplace_back("motion.weight", motion_w);
    out.emplace_back("motion.bias", motion_b);
    out.emplace_back("head.weight", head_w);
    out.emplace_back("head.bias", head_b);
    return out;
}

std::vector<Tensor> ModelParams::all_tensors() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
}

void ModelParams::zero_grad() {
    for (auto& t : all_tensors()) t.zero_grad();
}

Tensor forward(const Tensor& x, const ModelParams& params, const ModelConfig& config,
               const Tensor& a_hat) {
    if (x.ndim() != 4 || x.dim(3) != 3) {
        throw DimensionError("forward: expected [B, T, J, 3] input, got " + shape_str(x.shape()));
    }
    if (x.dim(1) != config.frames || x.dim(2) != config.joints) {
        throw DimensionError("forward: input " + shape_str(x.shape()) +
                             " does not match config frames/joints (" +
                             std::to_string(config.frames) + ", " + std::to_string(config.joints) +
                             ")");
    }
    // Normalize centered pixels to [-1, 1]; confidence passes through as-is.
    auto norm = Tensor::from_data(
        {3}, {2.0 / config.image_width, 2.0 / config.image_height, 1.0});
    auto f = linear(mul(x, norm), params.input_proj_w, params.input_proj_b);
    if (params.pos_spatial.defined()) f = add(f, params.pos_spatial);
    if (params.pos_temporal.defined()) {
        f = add(f, reshape(params.pos_temporal, {config.frames, 1, config.embed_dim}));
    }
    for (const auto& lp : params.layer_params) {
        f = mixformer_layer(f, lp, a_hat);
    }
    auto motion = activation(Act::Tanh, linear(f, params.motion_w, params.motion_b));
    return scale(linear(motion, params.head_w, params.head_b), config.output_scale);
}

namespace {

Tensor reduce(const Tensor& per_term, LossReduction reduction) {
    return reduction == LossReduction::Mean ? mean_all(per_term) : sum_all(per_term);
}

Tensor joint_norms(const Tensor& diff) {
    return sqrt_elem(sum_axes(mul(diff, diff), {-1}));  // [B, T, J, 1]
}

}  // namespace

Tensor loss_position(const Tensor& pred, const Tensor& gt, LossReduction reduction) {
    if (pred.shape() != gt.shape()) {
        throw DimensionError("loss_position: shapes " + shape_str(pred.shape()) + " and " +
                             shape_str(gt.shape()) + " must match");
    }
    return reduce(joint_norms(sub(pred, gt)), reduction);
}

Tensor loss_delta(const Tensor& pred, const Tensor& gt, LossReduction reduction) {
    if (pred.shape() != gt.shape()) {
        throw DimensionError("loss_delta: shapes " + shape_str(pred.shape()) + " and " +
                             shape_str(gt.shape()) + " must match");
    }
    const std::int64_t frames = pred.dim(1);
    if (frames == 1) return Tensor::scalar(0.0);  // vacuous sum
    auto dpred = sub(slice_axis(pred, 1, 1, frames - 1), slice_axis(pred, 1, 0, frames - 1));
    auto dgt = sub(slice_axis(gt, 1, 1, frames - 1), slice_axis(gt, 1, 0, frames - 1));
    return reduce(joint_norms(sub(dpred, dgt)), reduction);
}

Tensor total_loss(const Tensor& pred, const Tensor& gt, double lambda_delta,
                  LossReduction reduction) {
    if (lambda_delta < 0) throw ConfigError("total_loss: lambda_delta must be >= 0");
    return add(loss_position(pred, gt, reduction),
               scale(loss_delta(pred, gt, reduction), lambda_delta));
}

std::int64_t param_count(const ModelParams& params) {
    std::int64_t n = 0;
    for (const auto& [name, t] : params.named_tensors()) n += t.numel();
    return n;
}

std::int64_t param_count_closed_form(const ModelConfig& config) {
    const std::int64_t d = config.embed_dim;
    const std::int64_t dm = config.motion_dim;
    const std::int64_t r = config.mlp_ratio;

    const std::int64_t attn_branch = 3 * d * d + d * d + d;  // h QKV heads sum to 3d^2; out d^2+d
    const std::int64_t gcn_branch = 2 * d * d + 2 * d;
    std::int64_t branches = 0;
    switch (config.branch_composition) {
        case BranchComposition::AttentionGcn: branches = attn_branch + gcn_branch; break;
        case BranchComposition::DoubleAttention: branches = 2 * attn_branch; break;
        case BranchComposition::DoubleGcn: branches = 2 * gcn_branch; break;
    }
    const std::int64_t fuse = 2 * d * 2 + 2;
    const std::int64_t mlp = 2 * r * d * d + r * d + d;
    const std::int64_t block = 4 * d /* two norms */ + branches + fuse + mlp;

    std::int64_t se = 0;
    if (config.se_position != SePosition::None) {
        const std::int64_t hidden = d / config.se_reduction;
        se = d * hidden + hidden + hidden * d + d;
    }
    const std::int64_t layer = 4 * block + fuse + se + (d * d + d);

    std::int64_t embed = 0;
    if (config.embedding_mode != EmbeddingMode::Temporal) embed += config.joints * d;
    if (config.embedding_mode != EmbeddingMode::Spatial) embed += config.frames * d;

    return (3 * d + d) + embed + config.layers * layer + (d * dm + dm) + (dm * 3 + 3);
}

}  // namespace mixtg
