#pragma once

#include <cstdint>
#include <vector>

#include "mixtg/config.hpp"
#include "mixtg/model.hpp"
#include "mixtg/sequence.hpp"
#include "mixtg/skeleton.hpp"

namespace mixtg {

struct TrainSample {
    PoseSequence input2d;
    PoseSequence gt3d;
};

struct LossRecord {
    std::int64_t step = 0;
    double position = 0.0;
    double delta = 0.0;
    double total = 0.0;
};

/// Pack sequences into a [B, T, J, 3] tensor.
Tensor sequences_to_tensor(const std::vector<const PoseSequence*>& seqs);

/// Training target: per-frame root-relative coordinates, matching the
/// root-relative output convention of the regression head.
Tensor root_relative_target(const std::vector<const PoseSequence*>& gts, std::int64_t root_index);

/// Run the model over one sequence; the result is root-relative millimeters.
PoseSequence predict_sequence(const PoseSequence& input2d, const ModelParams& params,
                              const ModelConfig& config, const Tensor& a_hat);

/// Deterministic AdamW training. Batches cycle through the dataset in order;
/// with augment_flip each drawn sample is mirrored with probability 1/2
/// (input and target consistently). Aborts with NumericError naming the step
/// if the loss stops being finite.
std::vector<LossRecord> train_loop(const std::vector<TrainSample>& data,
                                   const SkeletonTopology& topo, const ModelConfig& config,
                                   ModelParams& params, std::int64_t steps);

}  // namespace mixtg
