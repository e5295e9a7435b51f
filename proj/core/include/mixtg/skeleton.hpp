#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mixtg/tensor.hpp"

namespace mixtg {

/// Kinematic tree of a skeleton plus its left/right limb pairing.
struct SkeletonTopology {
    std::int64_t joint_count = 0;
    std::vector<std::pair<std::int64_t, std::int64_t>> edges;  // (parent, child)
    std::int64_t root_index = 0;
    std::vector<std::pair<std::int64_t, std::int64_t>> lr_pairs;  // (left, right)

    /// Spanning-tree and index-range checks; throws ConfigError.
    void validate() const;

    /// Children of each joint in edge order.
    std::vector<std::vector<std::int64_t>> children() const;
};

/// The conventional 17-joint skeleton: pelvis root, 16 tree edges,
/// 6 left/right limb pairs.
SkeletonTopology human36m_topology();

/// D^{-1/2} (A + I) D^{-1/2} over the undirected edge set; symmetric,
/// nonnegative, spectral radius 1.
Tensor normalized_adjacency(const SkeletonTopology& topo);

}  // namespace mixtg
