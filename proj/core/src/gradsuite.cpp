#include "mixtg/gradsuite.hpp"

#include <cmath>
#include <functional>

#include "mixtg/attention.hpp"
#include "mixtg/gradcheck.hpp"
#include "mixtg/graph_conv.hpp"
#include "mixtg/mixformer.hpp"
#include "mixtg/model.hpp"
#include "mixtg/rng.hpp"
#include "mixtg/skeleton.hpp"

namespace mixtg {

namespace {

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Worst relative error across every leaf of a scalar-valued graph.
double fd_worst(const LossFn& loss_of, std::vector<Tensor> leaves, bool corrupt) {
    for (auto& t : leaves) t.zero_grad();
    loss_of(leaves).backward();
    double worst = 0.0;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        auto analytic = leaves[i].grad();
        if (corrupt && i == 0 && !analytic.empty()) analytic[0] += 1.0;
        auto fd = finite_diff_grad(
            [&](const Tensor& x) {
                auto probe = leaves;
                probe[i] = Tensor::from_data(x.shape(), x.data());
                return loss_of(probe).item();
            },
            leaves[i]);
        worst = std::max(worst, max_rel_error(analytic, fd.data()));
    }
    return worst;
}

Tensor weighted(const Tensor& t, const Tensor& w) { return sum_all(mul(t, w)); }

SkeletonTopology chain_topology(std::int64_t joints) {
    SkeletonTopology topo;
    topo.joint_count = joints;
    topo.root_index = 0;
    for (std::int64_t j = 1; j < joints; ++j) topo.edges.push_back({j - 1, j});
    return topo;
}

std::vector<Tensor> block_leaves(MixformerBlockParams& p) {
    std::vector<Tensor> out;
    auto add_attn = [&](std::optional<MhsaParams>& a) {
        if (!a) return;
        for (auto& t : a->w_q) out.push_back(t);
        for (auto& t : a->w_k) out.push_back(t);
        for (auto& t : a->w_v) out.push_back(t);
        out.push_back(a->w_out);
        out.push_back(a->b_out);
    };
    auto add_gcn = [&](std::optional<GcnParams>& g) {
        if (!g) return;
        out.push_back(g->w1);
        out.push_back(g->w2);
        out.push_back(g->gamma);
        out.push_back(g->beta);
    };
    add_attn(p.attn1);
    add_attn(p.attn2);
    add_gcn(p.gcn1);
    add_gcn(p.gcn2);
    for (auto& t : {p.norm1_gamma, p.norm1_beta, p.norm2_gamma, p.norm2_beta, p.fuse_w, p.fuse_b,
                    p.mlp_w1, p.mlp_b1, p.mlp_w2, p.mlp_b2}) {
        out.push_back(t);
    }
    return out;
}

struct ModelCheckSetup {
    ModelConfig config;
    ModelParams params;
    Tensor input;
    Tensor target;
    Tensor a_hat;
    std::vector<Tensor> leaves;  // input first, then every parameter
};

ModelCheckSetup make_model_check(const ModelConfig& config, std::uint64_t seed) {
    ModelCheckSetup s{config, ModelParams::init(config), {}, {}, {}, {}};
    Rng rng(seed);
    // Pixel-scale inputs with a confidence channel, millimeter-scale targets.
    std::vector<double> x(static_cast<std::size_t>(config.frames * config.joints * 3));
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = (i % 3 == 2) ? rng.uniform(0.3, 1.0) : rng.uniform(-350.0, 350.0);
    }
    s.input = Tensor::from_data({1, config.frames, config.joints, 3}, std::move(x), true);
    s.target = Tensor::uniform({1, config.frames, config.joints, 3}, -300.0, 300.0, rng);
    s.a_hat = normalized_adjacency(chain_topology(config.joints));
    s.leaves.push_back(s.input);
    for (auto& t : s.params.all_tensors()) s.leaves.push_back(t);
    return s;
}

// Rebuilds ModelParams views over the probe leaves so the loss closure sees
// perturbed parameters. Leaves order: input, then named tensor order.
Tensor model_loss_of(const ModelCheckSetup& s, const std::vector<Tensor>& leaves) {
    ModelParams p = s.params;
    // Rewire by replacing the underlying data of a copy: Tensor handles share
    // storage, so construct a fresh params struct from the leaf list instead.
    std::size_t k = 1;
    auto take = [&]() { return leaves[k++]; };
    p.input_proj_w = take();
    p.input_proj_b = take();
    if (p.pos_spatial.defined()) p.pos_spatial = take();
    if (p.pos_temporal.defined()) p.pos_temporal = take();
    for (auto& lp : p.layer_params) {
        auto rebuild_gcn = [&](std::optional<GcnParams>& g) {
            if (!g) return;
            g->w1 = take();
            g->w2 = take();
            g->gamma = take();
            g->beta = take();
        };
        auto rebuild_block = [&](MixformerBlockParams& b) {
            // Per-head interleaved order must match ModelParams::named_tensors.
            if (b.attn1) {
                auto& a = *b.attn1;
                for (std::size_t h = 0; h < a.w_q.size(); ++h) {
                    a.w_q[h] = take();
                    a.w_k[h] = take();
                    a.w_v[h] = take();
                }
                a.w_out = take();
                a.b_out = take();
            }
            if (b.attn2) {
                auto& a = *b.attn2;
                for (std::size_t h = 0; h < a.w_q.size(); ++h) {
                    a.w_q[h] = take();
                    a.w_k[h] = take();
                    a.w_v[h] = take();
                }
                a.w_out = take();
                a.b_out = take();
            }
            rebuild_gcn(b.gcn1);
            rebuild_gcn(b.gcn2);
            b.norm1_gamma = take();
            b.norm1_beta = take();
            b.norm2_gamma = take();
            b.norm2_beta = take();
            b.fuse_w = take();
            b.fuse_b = take();
            b.mlp_w1 = take();
            b.mlp_b1 = take();
            b.mlp_w2 = take();
            b.mlp_b2 = take();
        };
        rebuild_block(lp.a1);
        rebuild_block(lp.a2);
        rebuild_block(lp.b1);
        rebuild_block(lp.b2);
        lp.fuse_w = take();
        lp.fuse_b = take();
        if (lp.se) {
            lp.se->fc1_w = take();
            lp.se->fc1_b = take();
            lp.se->fc2_w = take();
            lp.se->fc2_b = take();
        }
        lp.fc_w = take();
        lp.fc_b = take();
    }
    p.motion_w = take();
    p.motion_b = take();
    p.head_w = take();
    p.head_b = take();
    auto pred = forward(leaves[0], p, s.config, s.a_hat);
    return total_loss(pred, s.target, s.config.lambda_delta, s.config.loss_reduction);
}

}  // namespace

double model_grad_check(const ModelConfig& config, std::uint64_t seed) {
    auto setup = make_model_check(config, seed);
    return fd_worst([&](const std::vector<Tensor>& l) { return model_loss_of(setup, l); },
                    setup.leaves, false);
}

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, const std::string& corrupt) {
    std::vector<GradSuiteEntry> results;
    Rng rng(seed);
    auto check = [&](const std::string& name, double tolerance, const LossFn& loss_of,
                     std::vector<Tensor> leaves) {
        GradSuiteEntry e{name, tolerance, fd_worst(loss_of, std::move(leaves), corrupt == name)};
        results.push_back(e);
    };
    auto rt = [&](Shape shape, double lo = -2.0, double hi = 2.0) {
        return Tensor::uniform(std::move(shape), lo, hi, rng, true);
    };
    auto rw = [&](Shape shape) { return Tensor::uniform(std::move(shape), -1.0, 1.0, rng); };

    // ---- primitives, 1e-5 ----
    {
        auto w = rw({2, 3, 4});
        check("matmul", 1e-5,
              [w](const std::vector<Tensor>& l) { return weighted(matmul(l[0], l[1]), w); },
              {rt({2, 3, 5}), rt({5, 4})});
    }
    {
        auto w = rw({4, 3, 2});
        check("transpose", 1e-5,
              [w](const std::vector<Tensor>& l) { return weighted(transpose(l[0], 0, 2), w); },
              {rt({2, 3, 4})});
        auto w2 = rw({6, 4});
        check("reshape", 1e-5,
              [w2](const std::vector<Tensor>& l) { return weighted(reshape(l[0], {6, 4}), w2); },
              {rt({2, 3, 4})});
    }
    {
        auto w = rw({2, 3, 4});
        check("add", 1e-5,
              [w](const std::vector<Tensor>& l) { return weighted(add(l[0], l[1]), w); },
              {rt({2, 3, 4}), rt({3, 1})});
        check("sub", 1e-5,
              [w](const std::vector<Tensor>& l) { return weighted(sub(l[0], l[1]), w); },
              {rt({2, 3, 4}), rt({4})});
        check("mul", 1e-5,
              [w](const std::vector<Tensor>& l) { return weighted(mul(l[0], l[1]), w); },
              {rt({2, 3, 4}), rt({1, 3, 1})});
        check("scale", 1e-5,
              [w](const std::vector<Tensor>& l) { return weighted(scale(l[0], -1.75), w); },
              {rt({2, 3, 4})});
    }
    {
        auto w = rw({3, 5});
        check("softmax_lastdim", 1e-5,
              [w](const std::vector<Tensor>& l) { return weighted(softmax_lastdim(l[0]), w); },
              {rt({3, 5})});
        auto mask = Tensor::from_data({3, 5}, {1, 0, 1, 1, 0, 0, 1, 1, 0, 1, 1, 1, 0, 0, 1});
        check("masked_softmax_lastdim", 1e-5,
              [w, mask](const std::vector<Tensor>& l) {
                  return weighted(masked_softmax_lastdim(l[0], mask), w);
              },
              {rt({3, 5})});
    }
    {
        auto w = rw({4, 6});
        check("layer_norm", 1e-5,
              [w](const std::vector<Tensor>& l) {
                  return weighted(layer_norm(l[0], l[1], l[2]), w);
              },
              {rt({4, 6}), rt({6}), rt({6})});
        auto w2 = rw({4, 3});
        check("linear", 1e-5,
              [w2](const std::vector<Tensor>& l) { return weighted(linear(l[0], l[1], l[2]), w2); },
              {rt({4, 6}), rt({6, 3}), rt({3})});
    }
    for (Act kind : {Act::Relu, Act::Tanh, Act::Sigmoid, Act::Gelu}) {
        auto x = rt({12});
        if (kind == Act::Relu) {  // keep the finite difference off the kink
            for (auto& v : x.raw_data()) {
                if (std::abs(v) < 0.05) v += 0.2;
            }
        }
        auto w = rw({12});
        check("activation_" + act_name(kind), 1e-5,
              [w, kind](const std::vector<Tensor>& l) {
                  return weighted(activation(kind, l[0]), w);
              },
              {x});
    }
    {
        auto w = rw({2, 1, 1});
        check("sum_mean_axes", 1e-5,
              [w](const std::vector<Tensor>& l) {
                  return weighted(add(sum_axes(l[0], {1, 2}), mean_axes(l[0], {1, 2})), w);
              },
              {rt({2, 3, 4})});
        check("sqrt", 1e-5,
              [](const std::vector<Tensor>& l) { return sum_all(sqrt_elem(l[0])); },
              {rt({8}, 0.5, 3.0)});
        auto w2 = rw({2, 7});
        check("concat_slice", 1e-5,
              [w2](const std::vector<Tensor>& l) {
                  return weighted(concat_lastdim({l[0], slice_axis(l[1], 1, 1, 3)}), w2);
              },
              {rt({2, 4}), rt({2, 5})});
    }

    // ---- attention and graph conv, 1e-5 ----
    for (AttnMode mode : {AttnMode::Spatial, AttnMode::Temporal}) {
        auto p = MhsaParams::init(8, 2, rng, true);
        auto f = rt({1, 2, 3, 8});
        auto w = rw({1, 2, 3, 8});
        std::vector<Tensor> leaves{f};
        for (auto& t : p.w_q) leaves.push_back(t);
        for (auto& t : p.w_k) leaves.push_back(t);
        for (auto& t : p.w_v) leaves.push_back(t);
        leaves.push_back(p.w_out);
        leaves.push_back(p.b_out);
        check(mode == AttnMode::Spatial ? "mhsa_spatial" : "mhsa_temporal", 1e-5,
              [p, w, mode](const std::vector<Tensor>& l) {
                  MhsaParams q = p;
                  std::size_t k = 1;
                  for (auto& t : q.w_q) t = l[k++];
                  for (auto& t : q.w_k) t = l[k++];
                  for (auto& t : q.w_v) t = l[k++];
                  q.w_out = l[k++];
                  q.b_out = l[k++];
                  return weighted(mhsa(l[0], q, mode), w);
              },
              leaves);
    }
    {
        auto a_hat = normalized_adjacency(chain_topology(2));
        auto p = GcnParams::init(4, rng, Act::Gelu, true);
        auto f = rt({1, 3, 2, 4});
        auto w = rw({1, 3, 2, 4});
        check("spatial_gcn", 1e-5,
              [p, w, a_hat](const std::vector<Tensor>& l) {
                  GcnParams q = p;
                  q.w1 = l[1];
                  q.w2 = l[2];
                  q.gamma = l[3];
                  q.beta = l[4];
                  return weighted(spatial_gcn(l[0], a_hat, q), w);
              },
              {f, p.w1, p.w2, p.gamma, p.beta});
    }
    {
        auto p = GcnParams::init(4, rng, Act::Gelu, true);
        auto f = rt({1, 3, 2, 4});
        auto w = rw({1, 3, 2, 4});
        const TemporalAdjacencySpec spec{2, true};
        check("temporal_gcn", 1e-5,
              [p, w, spec](const std::vector<Tensor>& l) {
                  GcnParams q = p;
                  q.w1 = l[1];
                  q.w2 = l[2];
                  q.gamma = l[3];
                  q.beta = l[4];
                  return weighted(temporal_gcn(l[0], temporal_adjacency(l[0], spec), q), w);
              },
              {f, p.w1, p.w2, p.gamma, p.beta});
    }
    {
        auto w = rw({1, 2, 2, 3});
        check("adaptive_fuse", 1e-5,
              [w](const std::vector<Tensor>& l) {
                  return weighted(adaptive_fuse(l[0], l[1], l[2], l[3]), w);
              },
              {rt({1, 2, 2, 3}), rt({1, 2, 2, 3}), rt({6, 2}, -1, 1), rt({2}, -1, 1)});
    }
    {
        auto p = SeParams::init(8, 4, rng, true);
        auto x = rt({1, 2, 3, 8});
        auto w = rw({1, 2, 3, 8});
        check("se_layer", 1e-5,
              [p, w](const std::vector<Tensor>& l) {
                  SeParams q = p;
                  q.fc1_w = l[1];
                  q.fc1_b = l[2];
                  q.fc2_w = l[3];
                  q.fc2_b = l[4];
                  return weighted(se_layer(l[0], q), w);
              },
              {x, p.fc1_w, p.fc1_b, p.fc2_w, p.fc2_b});
    }

    // ---- block, layer, model, 1e-4 ----
    {
        auto a_hat = normalized_adjacency(chain_topology(4));
        for (BlockMode mode : {BlockMode::Spatial, BlockMode::Temporal}) {
            auto p = MixformerBlockParams::init(mode, BranchComposition::AttentionGcn, 8, 2, 2, 2,
                                                Act::Gelu, rng, true);
            auto f = rt({1, 3, 4, 8});
            auto w = rw({1, 3, 4, 8});
            std::vector<Tensor> leaves{f};
            for (auto& t : block_leaves(p)) leaves.push_back(t);
            check(mode == BlockMode::Spatial ? "mixformer_block_spatial"
                                             : "mixformer_block_temporal",
                  1e-4,
                  [p, w, a_hat](const std::vector<Tensor>& l) {
                      MixformerBlockParams q = p;
                      std::size_t k = 1;
                      auto& a = *q.attn1;
                      for (auto& t : a.w_q) t = l[k++];
                      for (auto& t : a.w_k) t = l[k++];
                      for (auto& t : a.w_v) t = l[k++];
                      a.w_out = l[k++];
                      a.b_out = l[k++];
                      auto& g = *q.gcn1;
                      g.w1 = l[k++];
                      g.w2 = l[k++];
                      g.gamma = l[k++];
                      g.beta = l[k++];
                      q.norm1_gamma = l[k++];
                      q.norm1_beta = l[k++];
                      q.norm2_gamma = l[k++];
                      q.norm2_beta = l[k++];
                      q.fuse_w = l[k++];
                      q.fuse_b = l[k++];
                      q.mlp_w1 = l[k++];
                      q.mlp_b1 = l[k++];
                      q.mlp_w2 = l[k++];
                      q.mlp_b2 = l[k++];
                      return weighted(mixformer_block(l[0], q, a_hat), w);
                  },
                  leaves);
        }
    }
    {
        // Full layer and full model share the setup machinery.
        ModelConfig layer_cfg = ModelConfig::gradcheck_tiny();
        layer_cfg.layers = 1;
        auto setup = make_model_check(layer_cfg, seed + 1);
        check("mixformer_layer", 1e-4,
              [&setup](const std::vector<Tensor>& l) { return model_loss_of(setup, l); },
              setup.leaves);
    }
    {
        auto setup = make_model_check(ModelConfig::gradcheck_tiny(), seed + 2);
        check("model_loss", 1e-4,
              [&setup](const std::vector<Tensor>& l) { return model_loss_of(setup, l); },
              setup.leaves);
    }
    return results;
}

}  // namespace mixtg
