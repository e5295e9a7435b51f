#include "mixtg/graph_conv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

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

GcnParams GcnParams::init(std::int64_t embed_dim, Rng& rng, Act act, bool requires_grad) {
    GcnParams p;
    p.w1 = xavier({embed_dim, embed_dim}, rng, requires_grad);
    p.w2 = xavier({embed_dim, embed_dim}, rng, requires_grad);
    p.gamma = Tensor::full({embed_dim}, 1.0, requires_grad);
    p.beta = Tensor::zeros({embed_dim}, requires_grad);
    p.act = act;
    return p;
}

void GcnParams::validate() const {
    const std::int64_t d = embed_dim();
    if (w1.shape() != Shape{d, d} || w2.shape() != Shape{d, d}) {
        throw ConfigError("gcn: W1/W2 must be square of matching size");
    }
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
        throw ConfigError("gcn: norm affine parameters must have size d");
    }
}

namespace {

// Shared body of the spatial and temporal variants: x is token-major
// [..., tokens, d] and adj maps token to token.
Tensor gcn_body(const Tensor& x, const Tensor& adj, const GcnParams& params) {
    auto aggregated = matmul(adj, x);
    auto inner = add(matmul(aggregated, params.w1), matmul(x, params.w2));
    auto normed = layer_norm(inner, params.gamma, params.beta, params.ln_eps);
    return activation(params.act, add(x, normed));
}

}  // namespace

Tensor spatial_gcn(const Tensor& f, const Tensor& a_hat, const GcnParams& params) {
    params.validate();
    if (f.ndim() != 4) {
        throw DimensionError("spatial_gcn: expected [B, T, J, d], got " + shape_str(f.shape()));
    }
    const std::int64_t joints = f.dim(2);
    if (a_hat.ndim() != 2 || a_hat.dim(0) != joints || a_hat.dim(1) != joints) {
        throw DimensionError("spatial_gcn: adjacency " + shape_str(a_hat.shape()) +
                             " does not match joint count " + std::to_string(joints));
    }
    if (f.dim(3) != params.embed_dim()) {
        throw DimensionError("spatial_gcn: feature dim mismatch");
    }
    return gcn_body(f, a_hat, params);
}

Tensor temporal_adjacency(const Tensor& f, const TemporalAdjacencySpec& spec) {
    if (!spec.include_self) throw ConfigError("temporal_adjacency: include_self is fixed true");
    if (f.ndim() != 4) {
        throw DimensionError("temporal_adjacency: expected [B, T, J, d], got " +
                             shape_str(f.shape()));
    }
    const std::int64_t frames = f.dim(1);
    const std::int64_t k = spec.neighbor_count;
    if (k < 1 || k > frames) {
        throw ConfigError("temporal_adjacency: neighbor count " + std::to_string(k) +
                          " must be in [1, T] with T = " + std::to_string(frames));
    }
    auto per_joint = transpose(f, 1, 2);  // [B, J, T, d]
    auto scores = matmul(per_joint, transpose(per_joint, -1, -2));  // [B, J, T, T]

    // Keep-set selection happens on forward values; the mask carries no
    // gradient, the kept similarities do.
    const auto& s = scores.data();
    std::vector<double> mask(s.size(), 0.0);
    const std::int64_t rows = scores.numel() / (frames * frames);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(frames));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* srow_base = s.data() + r * frames * frames;
        double* mrow_base = mask.data() + r * frames * frames;
        for (std::int64_t t = 0; t < frames; ++t) {
            const double* srow = srow_base + t * frames;
            double* mrow = mrow_base + t * frames;
            mrow[t] = 1.0;  // own frame always kept
            if (k == 1) continue;
            idx.clear();
            for (std::int64_t j = 0; j < frames; ++j) {
                if (j != t) idx.push_back(j);
            }
            std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
                if (srow[a] != srow[b]) return srow[a] > srow[b];
                return a < b;  // ties to the lower frame index
            });
            for (std::int64_t j = 0; j < k - 1; ++j) {
                mrow[idx[static_cast<std::size_t>(j)]] = 1.0;
            }
        }
    }
    return masked_softmax_lastdim(scores, Tensor::from_data(scores.shape(), std::move(mask)));
}

Tensor temporal_gcn(const Tensor& f, const Tensor& adj, const GcnParams& params) {
    params.validate();
    if (f.ndim() != 4) {
        throw DimensionError("temporal_gcn: expected [B, T, J, d], got " + shape_str(f.shape()));
    }
    const std::int64_t frames = f.dim(1);
    const Shape want{f.dim(0), f.dim(2), frames, frames};
    if (adj.shape() != want) {
        throw DimensionError("temporal_gcn: adjacency " + shape_str(adj.shape()) +
                             " does not match expected " + shape_str(want));
    }
    if (f.dim(3) != params.embed_dim()) {
        throw DimensionError("temporal_gcn: feature dim mismatch");
    }
    auto per_joint = transpose(f, 1, 2);  // [B, J, T, d]
    return transpose(gcn_body(per_joint, adj, params), 1, 2);
}

}  // namespace mixtg
