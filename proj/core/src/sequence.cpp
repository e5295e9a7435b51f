#include "mixtg/sequence.hpp"

#include <cmath>
#include <string>

#include "mixtg/errors.hpp"

namespace mixtg {

PoseSequence PoseSequence::make(SeqKind kind, std::int64_t frames, std::int64_t joints) {
    if (frames <= 0 || joints <= 0) {
        throw DimensionError("PoseSequence: frames and joints must be positive");
    }
    PoseSequence s;
    s.kind = kind;
    s.frames = frames;
    s.joints = joints;
    s.values.assign(static_cast<std::size_t>(frames * joints * 3), 0.0);
    return s;
}

double& PoseSequence::at(std::int64_t t, std::int64_t j, std::int64_t c) {
    return values[static_cast<std::size_t>((t * joints + j) * 3 + c)];
}

double PoseSequence::at(std::int64_t t, std::int64_t j, std::int64_t c) const {
    return values[static_cast<std::size_t>((t * joints + j) * 3 + c)];
}

void PoseSequence::validate() const {
    if (static_cast<std::int64_t>(values.size()) != frames * joints * 3) {
        throw DimensionError("PoseSequence: value count does not match T*J*3");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError("PoseSequence: non-finite value");
    }
    if (kind == SeqKind::Input2d) {
        for (std::int64_t t = 0; t < frames; ++t) {
            for (std::int64_t j = 0; j < joints; ++j) {
                const double conf = at(t, j, 2);
                if (conf < 0.0 || conf > 1.0) {
                    throw NumericError("PoseSequence: confidence outside [0, 1]");
                }
            }
        }
    }
}

bool operator==(const PoseSequence& a, const PoseSequence& b) {
    return a.kind == b.kind && a.frames == b.frames && a.joints == b.joints &&
           a.values == b.values;
}

std::pair<double, double> project(const CameraModel& cam, double x_mm, double y_mm, double z_mm) {
    if (z_mm <= 0.0) throw NumericError("project: point behind the camera");
    return {cam.focal_px * x_mm / z_mm + cam.cx_px, cam.focal_px * y_mm / z_mm + cam.cy_px};
}

PoseSequence flip_horizontal(const PoseSequence& seq, const SkeletonTopology& topo,
                             double image_center_x) {
    if (seq.joints != topo.joint_count) {
        throw DimensionError("flip_horizontal: sequence joints do not match topology");
    }
    // Swap map from the left/right pairing; midline joints stay in place.
    std::vector<std::int64_t> dest(static_cast<std::size_t>(seq.joints));
    for (std::int64_t j = 0; j < seq.joints; ++j) dest[static_cast<std::size_t>(j)] = j;
    for (const auto& [l, r] : topo.lr_pairs) {
        dest[static_cast<std::size_t>(l)] = r;
        dest[static_cast<std::size_t>(r)] = l;
    }
    PoseSequence out = PoseSequence::make(seq.kind, seq.frames, seq.joints);
    for (std::int64_t t = 0; t < seq.frames; ++t) {
        const double center = seq.kind == SeqKind::Input2d
                                  ? image_center_x
                                  : seq.at(t, topo.root_index, 0);
        for (std::int64_t j = 0; j < seq.joints; ++j) {
            const auto d = dest[static_cast<std::size_t>(j)];
            out.at(t, d, 0) = 2.0 * center - seq.at(t, j, 0);
            out.at(t, d, 1) = seq.at(t, j, 1);
            out.at(t, d, 2) = seq.at(t, j, 2);
        }
    }
    return out;
}

}  // namespace mixtg
