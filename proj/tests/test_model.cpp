#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mixtg/checkpoint.hpp"
#include "mixtg/model.hpp"
#include "mixtg/optimizer.hpp"
#include "mixtg/rng.hpp"
#include "mixtg/synth.hpp"
#include "mixtg/train.hpp"
#include "oracles.hpp"

using namespace mixtg;

namespace {

ModelConfig tiny_config() {
    auto c = ModelConfig::gradcheck_tiny();
    c.joints = 5;
    return c;
}

Tensor chain_adjacency(std::int64_t joints) {
    SkeletonTopology topo;
    topo.joint_count = joints;
    topo.root_index = 0;
    for (std::int64_t j = 1; j < joints; ++j) topo.edges.push_back({j - 1, j});
    return normalized_adjacency(topo);
}

std::filesystem::path temp_file(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "mixtg_test_model";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("config text roundtrip and validation") {
    auto c = ModelConfig::toy_default();
    c.lambda_delta = 0.75;
    c.stream_order = StreamOrder::TsTs;
    c.augment_flip = true;
    auto back = ModelConfig::from_kv_text(c.to_kv_text());
    CHECK(back == c);

    CHECK_THROWS_AS(ModelConfig::from_kv_text("frames = 9\nnope = 1\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_kv_text("embed_dim = 30\nheads = 4\n"), ConfigError);
    auto parsed = ModelConfig::from_kv_text("# comment\nembed_dim = 16\n heads = 2 \n");
    CHECK(parsed.embed_dim == 16);
    CHECK(parsed.heads == 2);

    auto bad = ModelConfig::toy_default();
    bad.temporal_neighbors = 99;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("forward shape, tanh range, and batching independence") {
    auto cfg = tiny_config();
    auto params = ModelParams::init(cfg, false);
    auto a_hat = chain_adjacency(cfg.joints);
    Rng rng(3);

    std::vector<double> x1(static_cast<std::size_t>(cfg.frames * cfg.joints * 3));
    std::vector<double> x2(x1.size());
    for (std::size_t i = 0; i < x1.size(); ++i) {
        x1[i] = (i % 3 == 2) ? rng.uniform(0, 1) : rng.uniform(-400, 400);
        x2[i] = (i % 3 == 2) ? rng.uniform(0, 1) : rng.uniform(-400, 400);
    }
    auto single1 = forward(Tensor::from_data({1, cfg.frames, cfg.joints, 3}, x1), params, cfg, a_hat);
    auto single2 = forward(Tensor::from_data({1, cfg.frames, cfg.joints, 3}, x2), params, cfg, a_hat);
    CHECK(single1.shape() == Shape{1, cfg.frames, cfg.joints, 3});

    // The motion representation is strictly inside (-1, 1): the head output
    // magnitude is bounded by output_scale * sum |head_w| + |head_b|.
    auto motion = activation(
        Act::Tanh, linear(Tensor::uniform({2, 3, 4}, -10, 10, rng), Tensor::uniform({4, 5}, -1, 1, rng),
                          Tensor::zeros({5})));
    for (double v : motion.data()) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }

    std::vector<double> both = x1;
    both.insert(both.end(), x2.begin(), x2.end());
    auto batched = forward(Tensor::from_data({2, cfg.frames, cfg.joints, 3}, both), params, cfg, a_hat);
    for (std::int64_t i = 0; i < single1.numel(); ++i) {
        CHECK(std::abs(batched.data()[static_cast<std::size_t>(i)] -
                       single1.data()[static_cast<std::size_t>(i)]) < 1e-12);
        CHECK(std::abs(batched.data()[static_cast<std::size_t>(single1.numel() + i)] -
                       single2.data()[static_cast<std::size_t>(i)]) < 1e-12);
    }

    CHECK_THROWS_AS(forward(Tensor::zeros({1, cfg.frames + 1, cfg.joints, 3}), params, cfg, a_hat),
                    DimensionError);
}

TEST_CASE("forward embedding modes change parameter sets consistently") {
    for (EmbeddingMode mode : {EmbeddingMode::Spatial, EmbeddingMode::Temporal, EmbeddingMode::Both}) {
        auto cfg = tiny_config();
        cfg.embedding_mode = mode;
        auto params = ModelParams::init(cfg, false);
        CHECK(params.pos_spatial.defined() == (mode != EmbeddingMode::Temporal));
        CHECK(params.pos_temporal.defined() == (mode != EmbeddingMode::Spatial));
        CHECK(param_count(params) == param_count_closed_form(cfg));
        auto out = forward(Tensor::zeros({1, cfg.frames, cfg.joints, 3}), params, cfg,
                           chain_adjacency(cfg.joints));
        CHECK(out.all_finite());
    }
}

TEST_CASE("loss oracles") {
    SUBCASE("zero for equal inputs; Pythagorean hand case") {
        auto p = Tensor::from_data({1, 1, 1, 3}, {3, 4, 0});
        auto g = Tensor::zeros({1, 1, 1, 3});
        CHECK(loss_position(p, p, LossReduction::Sum).item() == 0.0);
        CHECK(loss_position(p, g, LossReduction::Sum).item() == doctest::Approx(5.0).epsilon(1e-15));
        CHECK(loss_position(p, g, LossReduction::Mean).item() == doctest::Approx(5.0).epsilon(1e-15));
    }
    SUBCASE("delta: vacuous at T=1, translation invariant") {
        Rng rng(5);
        auto p = Tensor::uniform({2, 1, 3, 3}, -2, 2, rng);
        auto g = Tensor::uniform({2, 1, 3, 3}, -2, 2, rng);
        CHECK(loss_delta(p, g, LossReduction::Sum).item() == 0.0);

        auto pred = Tensor::uniform({1, 4, 2, 3}, -2, 2, rng);
        auto offset = pred.data();
        for (auto& v : offset) v += 17.25;  // constant offset per sequence
        auto shifted = Tensor::from_data({1, 4, 2, 3}, offset);
        CHECK(loss_delta(shifted, pred, LossReduction::Sum).item() < 1e-12);
    }
    SUBCASE("random case matches a per-joint loop oracle") {
        Rng rng(6);
        auto p = Tensor::uniform({2, 3, 4, 3}, -2, 2, rng);
        auto g = Tensor::uniform({2, 3, 4, 3}, -2, 2, rng);
        double expect = 0.0;
        for (std::int64_t i = 0; i < 2 * 3 * 4; ++i) {
            double d2 = 0.0;
            for (std::int64_t c = 0; c < 3; ++c) {
                const double d = p.data()[static_cast<std::size_t>(i * 3 + c)] -
                                 g.data()[static_cast<std::size_t>(i * 3 + c)];
                d2 += d * d;
            }
            expect += std::sqrt(d2);
        }
        CHECK(loss_position(p, g, LossReduction::Sum).item() ==
              doctest::Approx(expect).epsilon(1e-13));
        CHECK(loss_position(p, g, LossReduction::Mean).item() ==
              doctest::Approx(expect / 24.0).epsilon(1e-13));
    }
    SUBCASE("total loss combines the two terms") {
        Rng rng(7);
        auto p = Tensor::uniform({1, 3, 2, 3}, -2, 2, rng);
        auto g = Tensor::uniform({1, 3, 2, 3}, -2, 2, rng);
        const double lp = loss_position(p, g, LossReduction::Mean).item();
        const double ld = loss_delta(p, g, LossReduction::Mean).item();
        CHECK(total_loss(p, g, 0.0, LossReduction::Mean).item() ==
              doctest::Approx(lp).epsilon(1e-15));
        CHECK(total_loss(p, g, 0.6, LossReduction::Mean).item() ==
              doctest::Approx(lp + 0.6 * ld).epsilon(1e-13));
        CHECK(total_loss(p, p, 1.0, LossReduction::Mean).item() == 0.0);
        CHECK_THROWS_AS(total_loss(p, g, -1.0, LossReduction::Mean), ConfigError);
    }
}

TEST_CASE("adamw: decay-only path, first-step closed form, determinism") {
    SUBCASE("zero gradient applies exactly the decoupled decay") {
        auto p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
        AdamW opt({p}, {5e-4, 0.01, 0.9, 0.999, 1e-8});
        opt.step();
        const double shrink = 1.0 - 5e-4 * 0.01;
        CHECK(p.data()[0] == 1.0 * shrink);
        CHECK(p.data()[1] == -2.0 * shrink);
        CHECK(p.data()[2] == 0.5 * shrink);
    }
    SUBCASE("first step without decay matches the closed form") {
        auto p = Tensor::from_data({2}, {0.4, -1.2}, true);
        p.raw_grad() = {0.03, -2.0};
        AdamW opt({p}, {5e-4, 0.0, 0.9, 0.999, 1e-8});
        opt.step();
        // m_hat = g, v_hat = g^2: update = -lr * g / (|g| + eps).
        const double u0 = 0.4 - 5e-4 * 0.03 / (std::abs(0.03) + 1e-8);
        const double u1 = -1.2 - 5e-4 * -2.0 / (std::abs(-2.0) + 1e-8);
        CHECK(p.data()[0] == doctest::Approx(u0).epsilon(1e-15));
        CHECK(p.data()[1] == doctest::Approx(u1).epsilon(1e-15));
    }
    SUBCASE("identical seeds give identical trajectories") {
        auto run = [](std::uint64_t seed) {
            Rng rng(seed);
            auto p = Tensor::uniform({4}, -1, 1, rng, true);
            AdamW opt({p}, {});
            for (int s = 0; s < 25; ++s) {
                // grad of 0.5*||p||^2 is p.
                p.raw_grad() = p.data();
                opt.step();
                opt.zero_grad();
            }
            return p.data();
        };
        CHECK(run(11) == run(11));
        CHECK(run(11) != run(12));
    }
    SUBCASE("one step on a quadratic reduces the loss") {
        auto p = Tensor::from_data({3}, {0.8, -0.6, 0.4}, true);
        AdamW opt({p}, {5e-4, 0.0, 0.9, 0.999, 1e-8});
        auto loss = [&]() {
            double acc = 0.0;
            for (double v : p.data()) acc += v * v;
            return acc;
        };
        const double before = loss();
        p.raw_grad() = {2 * 0.8, 2 * -0.6, 2 * 0.4};
        opt.step();
        CHECK(loss() < before);
    }
}

TEST_CASE("param_count: trivial, monotone, enumerated == closed form") {
    auto cfg = tiny_config();
    auto params = ModelParams::init(cfg, false);
    CHECK(param_count(params) == param_count_closed_form(cfg));

    // Single linear layer with bias.
    CHECK(Tensor::zeros({7, 11}).numel() + Tensor::zeros({11}).numel() == 7 * 11 + 11);

    // Strictly increasing in depth.
    auto deeper = cfg;
    deeper.layers = cfg.layers + 1;
    CHECK(param_count_closed_form(deeper) > param_count_closed_form(cfg));

    // Ten random configurations.
    Rng rng(21);
    for (int i = 0; i < 10; ++i) {
        ModelConfig c;
        c.heads = rng.uniform_int(1, 4);
        c.embed_dim = c.heads * rng.uniform_int(1, 4) * 4;
        c.se_reduction = (c.embed_dim % 4 == 0) ? 4 : 1;
        c.frames = rng.uniform_int(2, 6);
        c.joints = rng.uniform_int(2, 8);
        c.motion_dim = rng.uniform_int(2, 12);
        c.layers = rng.uniform_int(1, 3);
        c.mlp_ratio = rng.uniform_int(1, 4);
        c.temporal_neighbors = rng.uniform_int(1, c.frames);
        c.embedding_mode = static_cast<EmbeddingMode>(rng.uniform_int(0, 2));
        c.branch_composition = static_cast<BranchComposition>(rng.uniform_int(0, 2));
        c.stream_order = static_cast<StreamOrder>(rng.uniform_int(0, 4));
        c.se_position = static_cast<SePosition>(rng.uniform_int(0, 3));
        c.validate();
        CHECK(param_count(ModelParams::init(c, false)) == param_count_closed_form(c));
    }

    // Paper-shape budget: within 16M +/- 1M.
    const auto paper = param_count_closed_form(ModelConfig::paper_shape());
    CHECK(paper >= 15'000'000);
    CHECK(paper <= 17'000'000);
}

TEST_CASE("checkpoint roundtrip is bitwise; corruption rejected") {
    auto cfg = tiny_config();
    auto params = ModelParams::init(cfg);
    const auto path = temp_file("model.mtgc");
    save_checkpoint(path.string(), cfg, params);
    auto loaded = load_checkpoint(path.string());
    CHECK(loaded.config == cfg);
    auto a = params.named_tensors();
    auto b = loaded.params.named_tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second.data() == b[i].second.data());
    }

    const auto full = std::filesystem::file_size(path);
    for (std::uintmax_t keep : {std::uintmax_t{3}, std::uintmax_t{7}, std::uintmax_t{40}, full - 5}) {
        std::filesystem::resize_file(path, keep);
        CHECK_THROWS_AS(load_checkpoint(path.string()), FormatError);
        save_checkpoint(path.string(), cfg, params);
    }
}

TEST_CASE("train_loop: determinism and loss reduction on a toy problem") {
    auto topo = human36m_topology();
    ModelConfig cfg = ModelConfig::toy_default();
    cfg.frames = 5;
    cfg.embed_dim = 16;
    cfg.motion_dim = 24;
    cfg.layers = 1;
    cfg.heads = 2;
    CameraModel cam;
    std::vector<TrainSample> data;
    for (std::uint64_t i = 0; i < 2; ++i) {
        auto r = synth_sequence(300 + i, topo, cfg.frames, cam, 0.0);
        data.push_back({std::move(r.input2d), std::move(r.gt3d)});
    }
    auto params1 = ModelParams::init(cfg);
    auto trace1 = train_loop(data, topo, cfg, params1, 60);
    auto params2 = ModelParams::init(cfg);
    auto trace2 = train_loop(data, topo, cfg, params2, 60);
    REQUIRE(trace1.size() == 60);
    for (std::size_t i = 0; i < trace1.size(); ++i) {
        CHECK(trace1[i].total == trace2[i].total);
        CHECK(trace1[i].position == trace2[i].position);
    }
    CHECK(trace1.back().position < trace1.front().position);

    // Flip augmentation keeps training finite and deterministic too.
    auto cfg_flip = cfg;
    cfg_flip.augment_flip = true;
    auto params3 = ModelParams::init(cfg_flip);
    auto trace3 = train_loop(data, topo, cfg_flip, params3, 20);
    auto params4 = ModelParams::init(cfg_flip);
    auto trace4 = train_loop(data, topo, cfg_flip, params4, 20);
    for (std::size_t i = 0; i < trace3.size(); ++i) CHECK(trace3[i].total == trace4[i].total);
}
