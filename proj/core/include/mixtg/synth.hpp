#pragma once

#include <cstdint>

#include "mixtg/sequence.hpp"
#include "mixtg/skeleton.hpp"

namespace mixtg {

struct SynthResult {
    PoseSequence input2d;
    PoseSequence gt3d;
};

/// Deterministic synthetic motion: a seed-drawn base skeleton animated by
/// per-bone harmonic joint angles (bone lengths are preserved by
/// construction), projected through the camera with optional Gaussian pixel
/// noise. Confidence is exp(-|noise|), clamped to [0, 1]. The 3D output is in
/// absolute camera coordinates, so with noise_std = 0 reprojecting it
/// reproduces the 2D channels exactly. The root travels only in y and z.
SynthResult synth_sequence(std::uint64_t seed, const SkeletonTopology& topo, std::int64_t frames,
                           const CameraModel& cam, double noise_std);

}  // namespace mixtg
