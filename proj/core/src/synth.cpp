#include "mixtg/synth.hpp"

#include <array>
#include <cmath>

#include "mixtg/errors.hpp"
#include "mixtg/rng.hpp"

namespace mixtg {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

using Vec3 = std::array<double, 3>;

Vec3 random_unit(Rng& rng) {
    while (true) {
        Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if (n > 1e-6) return {v[0] / n, v[1] / n, v[2] / n};
    }
}

// Rodrigues rotation of v around unit axis u; preserves |v|.
Vec3 rotate(const Vec3& v, const Vec3& u, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const Vec3 cross{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                     u[0] * v[1] - u[1] * v[0]};
    const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
        out[i] = v[i] * c + cross[i] * s + u[i] * dot * (1.0 - c);
    }
    return out;
}

struct BoneMotion {
    Vec3 base_dir;
    double length;
    Vec3 axis;
    double amplitude;
    double cycles;
    double phase;
};

}  // namespace

SynthResult synth_sequence(std::uint64_t seed, const SkeletonTopology& topo, std::int64_t frames,
                           const CameraModel& cam, double noise_std) {
    topo.validate();
    if (frames < 1) throw DimensionError("synth_sequence: frames must be >= 1");
    if (noise_std < 0.0) throw ConfigError("synth_sequence: noise_std must be >= 0");
    Rng rng(seed);

    // One motion record per edge, drawn in edge order.
    std::vector<BoneMotion> bones;
    bones.reserve(topo.edges.size());
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        BoneMotion m;
        m.base_dir = random_unit(rng);
        m.length = rng.uniform(200.0, 420.0);
        m.axis = random_unit(rng);
        m.amplitude = rng.uniform(0.05, 0.35);
        m.cycles = rng.uniform(0.5, 2.5);
        m.phase = rng.uniform(0.0, kTwoPi);
        bones.push_back(m);
    }
    // Root oscillates in y and z only; x stays at 0 exactly so that
    // reflection about the root is a pure negation.
    const double root_amp_y = rng.uniform(0.0, 100.0);
    const double root_amp_z = rng.uniform(0.0, 150.0);
    const double root_cycles = rng.uniform(0.5, 1.5);
    const double root_phase = rng.uniform(0.0, kTwoPi);

    auto gt3d = PoseSequence::make(SeqKind::Gt3d, frames, topo.joint_count);
    auto input2d = PoseSequence::make(SeqKind::Input2d, frames, topo.joint_count);

    // Edge indices in tree order so parents are placed before children.
    std::vector<std::size_t> order;
    order.reserve(topo.edges.size());
    {
        std::vector<std::int64_t> stack{topo.root_index};
        std::vector<std::vector<std::size_t>> out_edges(
            static_cast<std::size_t>(topo.joint_count));
        for (std::size_t e = 0; e < topo.edges.size(); ++e) {
            out_edges[static_cast<std::size_t>(topo.edges[e].first)].push_back(e);
        }
        while (!stack.empty()) {
            const auto j = stack.back();
            stack.pop_back();
            for (auto e : out_edges[static_cast<std::size_t>(j)]) {
                order.push_back(e);
                stack.push_back(topo.edges[e].second);
            }
        }
    }

    std::vector<Vec3> pos(static_cast<std::size_t>(topo.joint_count));
    for (std::int64_t t = 0; t < frames; ++t) {
        const double tau = frames > 1 ? static_cast<double>(t) / static_cast<double>(frames) : 0.0;
        pos[static_cast<std::size_t>(topo.root_index)] = {
            0.0, root_amp_y * std::sin(kTwoPi * root_cycles * tau + root_phase),
            cam.depth_mm + root_amp_z * std::sin(kTwoPi * root_cycles * tau + root_phase * 0.5)};
        for (auto e : order) {
            const auto& [parent, child] = topo.edges[e];
            const auto& m = bones[e];
            const double angle =
                m.amplitude * std::sin(kTwoPi * m.cycles * tau + m.phase);
            const Vec3 dir = rotate(m.base_dir, m.axis, angle);
            const auto& pp = pos[static_cast<std::size_t>(parent)];
            pos[static_cast<std::size_t>(child)] = {pp[0] + m.length * dir[0],
                                                    pp[1] + m.length * dir[1],
                                                    pp[2] + m.length * dir[2]};
        }
        for (std::int64_t j = 0; j < topo.joint_count; ++j) {
            const auto& p = pos[static_cast<std::size_t>(j)];
            if (p[2] <= 1.0) throw NumericError("synth_sequence: joint too close to the camera");
            gt3d.at(t, j, 0) = p[0];
            gt3d.at(t, j, 1) = p[1];
            gt3d.at(t, j, 2) = p[2];
            const auto [u, v] = project(cam, p[0], p[1], p[2]);
            const double nx = noise_std * rng.normal();
            const double ny = noise_std * rng.normal();
            input2d.at(t, j, 0) = u + nx;
            input2d.at(t, j, 1) = v + ny;
            const double conf = std::exp(-std::hypot(nx, ny));
            input2d.at(t, j, 2) = std::min(1.0, std::max(0.0, conf));
        }
    }
    return {std::move(input2d), std::move(gt3d)};
}

}  // namespace mixtg
