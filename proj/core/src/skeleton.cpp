#include "mixtg/skeleton.hpp"

#include <cmath>
#include <string>

#include "mixtg/errors.hpp"

namespace mixtg {

void SkeletonTopology::validate() const {
    if (joint_count <= 0) throw ConfigError("topology: joint_count must be positive");
    if (static_cast<std::int64_t>(edges.size()) != joint_count - 1) {
        throw ConfigError("topology: a tree over " + std::to_string(joint_count) +
                          " joints needs " + std::to_string(joint_count - 1) + " edges, got " +
                          std::to_string(edges.size()));
    }
    if (root_index < 0 || root_index >= joint_count) throw ConfigError("topology: root out of range");
    std::vector<int> parent_count(static_cast<std::size_t>(joint_count), 0);
    for (const auto& [p, c] : edges) {
        if (p < 0 || p >= joint_count || c < 0 || c >= joint_count) {
            throw ConfigError("topology: edge index out of range");
        }
        parent_count[static_cast<std::size_t>(c)]++;
    }
    if (parent_count[static_cast<std::size_t>(root_index)] != 0) {
        throw ConfigError("topology: root must not have a parent");
    }
    for (std::int64_t j = 0; j < joint_count; ++j) {
        if (j != root_index && parent_count[static_cast<std::size_t>(j)] != 1) {
            throw ConfigError("topology: joint " + std::to_string(j) +
                              " must have exactly one parent");
        }
    }
    // Edge count + unique parents imply acyclicity once everything is
    // reachable from the root.
    auto kids = children();
    std::vector<bool> seen(static_cast<std::size_t>(joint_count), false);
    std::vector<std::int64_t> stack{root_index};
    seen[static_cast<std::size_t>(root_index)] = true;
    std::int64_t reached = 1;
    while (!stack.empty()) {
        const auto j = stack.back();
        stack.pop_back();
        for (auto c : kids[static_cast<std::size_t>(j)]) {
            if (!seen[static_cast<std::size_t>(c)]) {
                seen[static_cast<std::size_t>(c)] = true;
                ++reached;
                stack.push_back(c);
            }
        }
    }
    if (reached != joint_count) throw ConfigError("topology: edges do not connect all joints");

    std::vector<int> used(static_cast<std::size_t>(joint_count), 0);
    for (const auto& [l, r] : lr_pairs) {
        if (l < 0 || l >= joint_count || r < 0 || r >= joint_count || l == r) {
            throw ConfigError("topology: invalid left/right pair");
        }
        if (used[static_cast<std::size_t>(l)]++ || used[static_cast<std::size_t>(r)]++) {
            throw ConfigError("topology: left/right pairs must be disjoint");
        }
    }
}

std::vector<std::vector<std::int64_t>> SkeletonTopology::children() const {
    std::vector<std::vector<std::int64_t>> kids(static_cast<std::size_t>(joint_count));
    for (const auto& [p, c] : edges) kids[static_cast<std::size_t>(p)].push_back(c);
    return kids;
}

SkeletonTopology human36m_topology() {
    SkeletonTopology topo;
    topo.joint_count = 17;
    topo.root_index = 0;  // pelvis
    // 0 pelvis, 1 r-hip, 2 r-knee, 3 r-ankle, 4 l-hip, 5 l-knee, 6 l-ankle,
    // 7 spine, 8 thorax, 9 neck, 10 head, 11 l-shoulder, 12 l-elbow,
    // 13 l-wrist, 14 r-shoulder, 15 r-elbow, 16 r-wrist
    topo.edges = {
        {0, 1}, {1, 2}, {2, 3},     // right leg
        {0, 4}, {4, 5}, {5, 6},     // left leg
        {0, 7}, {7, 8}, {8, 9}, {9, 10},  // spine to head
        {8, 11}, {11, 12}, {12, 13},      // left arm
        {8, 14}, {14, 15}, {15, 16},      // right arm
    };
    topo.lr_pairs = {{4, 1}, {5, 2}, {6, 3}, {11, 14}, {12, 15}, {13, 16}};
    topo.validate();
    return topo;
}

Tensor normalized_adjacency(const SkeletonTopology& topo) {
    topo.validate();
    const auto j = static_cast<std::size_t>(topo.joint_count);
    std::vector<double> a(j * j, 0.0);
    for (std::size_t i = 0; i < j; ++i) a[i * j + i] = 1.0;  // self-connections
    for (const auto& [p, c] : topo.edges) {
        a[static_cast<std::size_t>(p) * j + static_cast<std::size_t>(c)] = 1.0;
        a[static_cast<std::size_t>(c) * j + static_cast<std::size_t>(p)] = 1.0;
    }
    std::vector<double> inv_sqrt_deg(j);
    for (std::size_t r = 0; r < j; ++r) {
        double deg = 0.0;
        for (std::size_t c = 0; c < j; ++c) deg += a[r * j + c];
        inv_sqrt_deg[r] = 1.0 / std::sqrt(deg);
    }
    std::vector<double> out(j * j);
    for (std::size_t r = 0; r < j; ++r) {
        for (std::size_t c = 0; c < j; ++c) {
            out[r * j + c] = inv_sqrt_deg[r] * a[r * j + c] * inv_sqrt_deg[c];
        }
    }
    return Tensor::from_data({topo.joint_count, topo.joint_count}, std::move(out));
}

}  // namespace mixtg
