#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mixtg/sequence.hpp"

namespace mixtg {

/// Pose-evaluation summary; pck150 and auc are percentages in [0, 100].
struct MetricsReport {
    double mpjpe_mm = 0.0;
    double p_mpjpe_mm = 0.0;
    double pck150_pct = 0.0;
    double auc_pct = 0.0;
    std::vector<double> per_sequence_mpjpe;
    std::vector<double> per_sequence_p_mpjpe;
};

/// Mean per-joint error after subtracting each sequence's root joint.
double mpjpe(const PoseSequence& pred, const PoseSequence& gt, std::int64_t root_index);

/// Least-squares similarity alignment (rotation + translation + uniform
/// scale; rotation kept proper via the determinant sign correction) of one
/// J x 3 frame onto another. with_scale = false restricts to a rigid
/// transform. Throws DegeneracyError when the target points coincide.
std::vector<double> procrustes_align_frame(const std::vector<double>& pred,
                                           const std::vector<double>& gt, std::int64_t joints,
                                           bool with_scale = true);

/// Mean per-joint error after per-frame Procrustes alignment.
double p_mpjpe(const PoseSequence& pred, const PoseSequence& gt, bool with_scale = true);

/// (PCK@150mm, AUC over thresholds 5,10,...,150mm), both percentages,
/// root-aligned as in mpjpe.
std::pair<double, double> pck_auc(const PoseSequence& pred, const PoseSequence& gt,
                                  std::int64_t root_index);

MetricsReport evaluate_metrics(const std::vector<PoseSequence>& preds,
                               const std::vector<PoseSequence>& gts, std::int64_t root_index,
                               bool p2_with_scale = true);

}  // namespace mixtg
