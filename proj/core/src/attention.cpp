#include "mixtg/attention.hpp"

#include <cmath>
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

MhsaParams MhsaParams::init(std::int64_t embed_dim, std::int64_t heads, Rng& rng,
                            bool requires_grad) {
    if (heads <= 0 || embed_dim % heads != 0) {
        throw ConfigError("mhsa: head count " + std::to_string(heads) +
                          " must divide embed dim " + std::to_string(embed_dim));
    }
    MhsaParams p;
    p.heads = heads;
    const std::int64_t dk = embed_dim / heads;
    for (std::int64_t h = 0; h < heads; ++h) {
        p.w_q.push_back(xavier({embed_dim, dk}, rng, requires_grad));
        p.w_k.push_back(xavier({embed_dim, dk}, rng, requires_grad));
        p.w_v.push_back(xavier({embed_dim, dk}, rng, requires_grad));
    }
    p.w_out = xavier({embed_dim, embed_dim}, rng, requires_grad);
    p.b_out = Tensor::zeros({embed_dim}, requires_grad);
    return p;
}

std::int64_t MhsaParams::embed_dim() const { return w_out.dim(0); }
std::int64_t MhsaParams::head_dim() const { return w_q.empty() ? 0 : w_q[0].dim(1); }

void MhsaParams::validate() const {
    if (heads <= 0 || static_cast<std::int64_t>(w_q.size()) != heads ||
        static_cast<std::int64_t>(w_k.size()) != heads ||
        static_cast<std::int64_t>(w_v.size()) != heads) {
        throw ConfigError("mhsa: per-head projection count does not match head count");
    }
    const std::int64_t d = embed_dim();
    if (d % heads != 0) {
        throw ConfigError("mhsa: head count " + std::to_string(heads) + " must divide embed dim " +
                          std::to_string(d));
    }
    const std::int64_t dk = d / heads;
    for (std::int64_t h = 0; h < heads; ++h) {
        const auto& q = w_q[static_cast<std::size_t>(h)];
        const auto& k = w_k[static_cast<std::size_t>(h)];
        const auto& v = w_v[static_cast<std::size_t>(h)];
        if (q.shape() != Shape{d, dk} || k.shape() != Shape{d, dk} || v.shape() != Shape{d, dk}) {
            throw ConfigError("mhsa: head projection shape mismatch");
        }
    }
    if (w_out.shape() != Shape{d, d} || b_out.shape() != Shape{d}) {
        throw ConfigError("mhsa: output projection shape mismatch");
    }
}

Tensor mhsa(const Tensor& f, const MhsaParams& params, AttnMode mode, AttentionDebug* debug) {
    params.validate();
    if (f.ndim() != 4) {
        throw DimensionError("mhsa: expected [B, T, J, d] input, got " + shape_str(f.shape()));
    }
    if (f.dim(3) != params.embed_dim()) {
        throw DimensionError("mhsa: feature dim " + std::to_string(f.dim(3)) +
                             " does not match params dim " + std::to_string(params.embed_dim()));
    }
    // Spatial: tokens are joints within a frame. Temporal: tokens are frames
    // of one joint's trajectory, so swap T and J first.
    const Tensor x = mode == AttnMode::Temporal ? transpose(f, 1, 2) : f;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.head_dim()));

    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(params.heads));
    for (std::int64_t h = 0; h < params.heads; ++h) {
        const auto& wq = params.w_q[static_cast<std::size_t>(h)];
        const auto& wk = params.w_k[static_cast<std::size_t>(h)];
        const auto& wv = params.w_v[static_cast<std::size_t>(h)];
        auto q = matmul(x, wq);
        auto k = matmul(x, wk);
        auto v = matmul(x, wv);
        auto scores = scale(matmul(q, transpose(k, -1, -2)), inv_sqrt_dk);
        auto attn = softmax_lastdim(scores);
        if (debug) debug->head_attention.push_back(attn);
        heads.push_back(matmul(attn, v));
    }
    auto out = add(matmul(concat_lastdim(heads), params.w_out), params.b_out);
    return mode == AttnMode::Temporal ? transpose(out, 1, 2) : out;
}

}  // namespace mixtg
