#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mixtg/attention.hpp"
#include "mixtg/gradcheck.hpp"
#include "mixtg/rng.hpp"
#include "oracles.hpp"

using namespace mixtg;

namespace {

// Brute-force reference: materializes every per-head attention matrix with
// plain loops over raw arrays.
std::vector<double> mhsa_oracle(const std::vector<double>& x, std::int64_t tokens, std::int64_t d,
                                const MhsaParams& p) {
    const std::int64_t h = p.heads;
    const std::int64_t dk = d / h;
    std::vector<double> concat(static_cast<std::size_t>(tokens * d), 0.0);
    for (std::int64_t head = 0; head < h; ++head) {
        const auto& wq = p.w_q[static_cast<std::size_t>(head)].data();
        const auto& wk = p.w_k[static_cast<std::size_t>(head)].data();
        const auto& wv = p.w_v[static_cast<std::size_t>(head)].data();
        auto q = oracle::matmul2d(x, tokens, d, wq, dk);
        auto k = oracle::matmul2d(x, tokens, d, wk, dk);
        auto v = oracle::matmul2d(x, tokens, d, wv, dk);
        for (std::int64_t i = 0; i < tokens; ++i) {
            std::vector<double> row(static_cast<std::size_t>(tokens));
            for (std::int64_t j = 0; j < tokens; ++j) {
                double dot = 0.0;
                for (std::int64_t c = 0; c < dk; ++c) {
                    dot += q[static_cast<std::size_t>(i * dk + c)] *
                           k[static_cast<std::size_t>(j * dk + c)];
                }
                row[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(dk));
            }
            auto attn = oracle::softmax_row(row);
            for (std::int64_t c = 0; c < dk; ++c) {
                double acc = 0.0;
                for (std::int64_t j = 0; j < tokens; ++j) {
                    acc += attn[static_cast<std::size_t>(j)] *
                           v[static_cast<std::size_t>(j * dk + c)];
                }
                concat[static_cast<std::size_t>(i * d + head * dk + c)] = acc;
            }
        }
    }
    auto out = oracle::matmul2d(concat, tokens, d, p.w_out.data(), d);
    for (std::int64_t i = 0; i < tokens; ++i) {
        for (std::int64_t c = 0; c < d; ++c) {
            out[static_cast<std::size_t>(i * d + c)] += p.b_out.data()[static_cast<std::size_t>(c)];
        }
    }
    return out;
}

std::vector<Tensor> all_params(MhsaParams& p) {
    std::vector<Tensor> out;
    for (auto& t : p.w_q) out.push_back(t);
    for (auto& t : p.w_k) out.push_back(t);
    for (auto& t : p.w_v) out.push_back(t);
    out.push_back(p.w_out);
    out.push_back(p.b_out);
    return out;
}

}  // namespace

TEST_CASE("single-token spatial attention collapses to V then output projection") {
    Rng rng(1);
    auto p = MhsaParams::init(4, 2, rng, false);
    auto f = Tensor::uniform({1, 3, 1, 4}, -1, 1, rng);
    auto out = mhsa(f, p, AttnMode::Spatial);
    CHECK(out.shape() == Shape{1, 3, 1, 4});
    // With one token, softmax over the singleton is 1: out = (V heads)·W_o + b.
    std::vector<Tensor> heads;
    for (std::int64_t h = 0; h < 2; ++h) {
        heads.push_back(matmul(f, p.w_v[static_cast<std::size_t>(h)]));
    }
    auto expect = add(matmul(concat_lastdim(heads), p.w_out), p.b_out);
    CHECK(oracle::max_abs_diff(out.data(), expect.data()) < 1e-15);
}

TEST_CASE("identical tokens produce identical output rows") {
    Rng rng(2);
    auto p = MhsaParams::init(6, 3, rng, false);
    std::vector<double> row{0.3, -1.2, 0.8, 2.0, -0.4, 0.05};
    std::vector<double> data;
    for (int t = 0; t < 4; ++t) data.insert(data.end(), row.begin(), row.end());
    auto f = Tensor::from_data({1, 1, 4, 6}, data);
    auto out = mhsa(f, p, AttnMode::Spatial);
    for (int t = 1; t < 4; ++t) {
        for (int c = 0; c < 6; ++c) {
            CHECK(out.at({0, 0, t, c}) == doctest::Approx(out.at({0, 0, 0, c})).epsilon(1e-14));
        }
    }
}

TEST_CASE("mhsa matches the brute-force oracle") {
    Rng rng(3);
    auto p = MhsaParams::init(4, 2, rng, false);
    SUBCASE("spatial B=1 T=1 J=3") {
        auto f = Tensor::uniform({1, 1, 3, 4}, -2, 2, rng);
        auto out = mhsa(f, p, AttnMode::Spatial);
        auto expect = mhsa_oracle(f.data(), 3, 4, p);
        CHECK(oracle::max_abs_diff(out.data(), expect) < 1e-13);
    }
    SUBCASE("temporal B=1 T=3 J=1") {
        auto f = Tensor::uniform({1, 3, 1, 4}, -2, 2, rng);
        auto out = mhsa(f, p, AttnMode::Temporal);
        auto expect = mhsa_oracle(f.data(), 3, 4, p);  // J=1: layout already token-major
        CHECK(oracle::max_abs_diff(out.data(), expect) < 1e-13);
    }
    SUBCASE("batched spatial matches per-slice oracle") {
        auto f = Tensor::uniform({2, 2, 3, 4}, -2, 2, rng);
        auto out = mhsa(f, p, AttnMode::Spatial);
        for (std::int64_t b = 0; b < 2; ++b) {
            for (std::int64_t t = 0; t < 2; ++t) {
                const auto off = static_cast<std::size_t>(((b * 2) + t) * 3 * 4);
                std::vector<double> slice(f.data().begin() + off, f.data().begin() + off + 12);
                auto expect = mhsa_oracle(slice, 3, 4, p);
                std::vector<double> got(out.data().begin() + off, out.data().begin() + off + 12);
                CHECK(oracle::max_abs_diff(got, expect) < 1e-13);
            }
        }
    }
}

TEST_CASE("attention rows sum to 1 via the debug hook") {
    Rng rng(4);
    auto p = MhsaParams::init(8, 2, rng, false);
    auto f = Tensor::uniform({2, 3, 5, 8}, -2, 2, rng);
    AttentionDebug dbg;
    mhsa(f, p, AttnMode::Spatial, &dbg);
    REQUIRE(dbg.head_attention.size() == 2);
    for (const auto& attn : dbg.head_attention) {
        CHECK(attn.shape() == Shape{2, 3, 5, 5});
        const auto& a = attn.data();
        for (std::size_t r = 0; r < a.size() / 5; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 5; ++j) sum += a[r * 5 + j];
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("permutation equivariance") {
    Rng rng(5);
    auto p = MhsaParams::init(8, 2, rng, false);
    auto f = Tensor::uniform({1, 4, 5, 8}, -2, 2, rng);

    SUBCASE("spatial commutes with joint permutations") {
        const std::vector<std::int64_t> perm{3, 0, 4, 1, 2};
        auto permuted = Tensor::zeros({1, 4, 5, 8});
        for (std::int64_t t = 0; t < 4; ++t) {
            for (std::int64_t j = 0; j < 5; ++j) {
                for (std::int64_t c = 0; c < 8; ++c) {
                    permuted.raw_data()[static_cast<std::size_t>(((t * 5) + perm[static_cast<std::size_t>(j)]) * 8 + c)] =
                        f.at({0, t, j, c});
                }
            }
        }
        auto out = mhsa(f, p, AttnMode::Spatial);
        auto out_p = mhsa(permuted, p, AttnMode::Spatial);
        for (std::int64_t t = 0; t < 4; ++t) {
            for (std::int64_t j = 0; j < 5; ++j) {
                for (std::int64_t c = 0; c < 8; ++c) {
                    CHECK(std::abs(out_p.at({0, t, perm[static_cast<std::size_t>(j)], c}) -
                                   out.at({0, t, j, c})) < 1e-12);
                }
            }
        }
    }
    SUBCASE("temporal commutes with frame permutations") {
        const std::vector<std::int64_t> perm{2, 3, 1, 0};
        auto permuted = Tensor::zeros({1, 4, 5, 8});
        for (std::int64_t t = 0; t < 4; ++t) {
            for (std::int64_t j = 0; j < 5; ++j) {
                for (std::int64_t c = 0; c < 8; ++c) {
                    permuted.raw_data()[static_cast<std::size_t>(((perm[static_cast<std::size_t>(t)] * 5) + j) * 8 + c)] =
                        f.at({0, t, j, c});
                }
            }
        }
        auto out = mhsa(f, p, AttnMode::Temporal);
        auto out_p = mhsa(permuted, p, AttnMode::Temporal);
        for (std::int64_t t = 0; t < 4; ++t) {
            for (std::int64_t j = 0; j < 5; ++j) {
                for (std::int64_t c = 0; c < 8; ++c) {
                    CHECK(std::abs(out_p.at({0, perm[static_cast<std::size_t>(t)], j, c}) -
                                   out.at({0, t, j, c})) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("mhsa gradient vs finite differences at (1,2,3,8) h=2") {
    Rng rng(6);
    for (AttnMode mode : {AttnMode::Spatial, AttnMode::Temporal}) {
        auto p = MhsaParams::init(8, 2, rng, true);
        auto f = Tensor::uniform({1, 2, 3, 8}, -2, 2, rng, true);
        auto w = Tensor::uniform({1, 2, 3, 8}, -1, 1, rng);
        auto leaves = all_params(p);
        leaves.push_back(f);
        auto loss_of = [&](const std::vector<Tensor>& l) {
            MhsaParams q;
            q.heads = 2;
            q.w_q = {l[0], l[1]};
            q.w_k = {l[2], l[3]};
            q.w_v = {l[4], l[5]};
            q.w_out = l[6];
            q.b_out = l[7];
            return sum_all(mul(mhsa(l[8], q, mode), w));
        };
        for (auto& t : leaves) t.zero_grad();
        loss_of(leaves).backward();
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            auto fd = finite_diff_grad(
                [&](const Tensor& x) {
                    auto probe = leaves;
                    probe[i] = Tensor::from_data(x.shape(), x.data());
                    return loss_of(probe).item();
                },
                leaves[i]);
            CHECK(max_rel_error(leaves[i].grad(), fd.data()) < 1e-5);
        }
    }
}

TEST_CASE("configuration errors") {
    Rng rng(7);
    CHECK_THROWS_AS(MhsaParams::init(8, 3, rng), ConfigError);  // 3 does not divide 8
    auto p = MhsaParams::init(8, 2, rng, false);
    auto bad = Tensor::zeros({1, 2, 3, 6});
    CHECK_THROWS_AS(mhsa(bad, p, AttnMode::Spatial), DimensionError);
    p.heads = 3;
    CHECK_THROWS_AS(mhsa(Tensor::zeros({1, 2, 3, 8}), p, AttnMode::Spatial), ConfigError);
}
