#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mixtg/skeleton.hpp"

namespace mixtg {

enum class SeqKind : std::uint32_t { Input2d = 0, Gt3d = 1, Pred3d = 2 };

/// T x J x 3 pose sequence. 2D sequences carry (x px, y px, confidence);
/// 3D sequences carry camera-space (x, y, z) in millimeters.
struct PoseSequence {
    SeqKind kind = SeqKind::Input2d;
    std::int64_t frames = 0;
    std::int64_t joints = 0;
    std::vector<double> values;  // row-major T*J*3

    static PoseSequence make(SeqKind kind, std::int64_t frames, std::int64_t joints);

    double& at(std::int64_t t, std::int64_t j, std::int64_t c);
    double at(std::int64_t t, std::int64_t j, std::int64_t c) const;

    /// Finiteness and, for 2D input, the confidence-channel range.
    void validate() const;
};

bool operator==(const PoseSequence& a, const PoseSequence& b);

/// Pinhole camera looking down +z; x/y/z in millimeters, outputs in pixels.
/// The principal point defaults to the origin (centered pixel coordinates),
/// which makes horizontal reflection an exact negation.
struct CameraModel {
    double focal_px = 1000.0;
    double cx_px = 0.0;
    double cy_px = 0.0;
    double depth_mm = 4000.0;  // subject distance; keeps all joints at z > 0
};

std::pair<double, double> project(const CameraModel& cam, double x_mm, double y_mm, double z_mm);

/// Mirror a sequence left/right: x reflected (about image_center_x for 2D
/// input, about the per-frame root x for 3D), paired joints swapped.
/// An involution: flip(flip(s)) == s.
PoseSequence flip_horizontal(const PoseSequence& seq, const SkeletonTopology& topo,
                             double image_center_x = 0.0);

}  // namespace mixtg
