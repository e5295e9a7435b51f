#include "mixtg/train.hpp"

#include <cmath>
#include <string>

#include "mixtg/errors.hpp"
#include "mixtg/optimizer.hpp"
#include "mixtg/rng.hpp"

namespace mixtg {

Tensor sequences_to_tensor(const std::vector<const PoseSequence*>& seqs) {
    if (seqs.empty()) throw DimensionError("sequences_to_tensor: empty batch");
    const std::int64_t t = seqs[0]->frames;
    const std::int64_t j = seqs[0]->joints;
    const auto b = static_cast<std::int64_t>(seqs.size());
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(b * t * j * 3));
    for (const auto* s : seqs) {
        if (s->frames != t || s->joints != j) {
            throw DimensionError("sequences_to_tensor: mixed sequence shapes in one batch");
        }
        data.insert(data.end(), s->values.begin(), s->values.end());
    }
    return Tensor::from_data({b, t, j, 3}, std::move(data));
}

Tensor root_relative_target(const std::vector<const PoseSequence*>& gts, std::int64_t root_index) {
    if (gts.empty()) throw DimensionError("root_relative_target: empty batch");
    const std::int64_t t_dim = gts[0]->frames;
    const std::int64_t j_dim = gts[0]->joints;
    const auto b_dim = static_cast<std::int64_t>(gts.size());
    if (root_index < 0 || root_index >= j_dim) {
        throw DimensionError("root_relative_target: root index out of range");
    }
    std::vector<double> data(static_cast<std::size_t>(b_dim * t_dim * j_dim * 3));
    std::size_t idx = 0;
    for (const auto* s : gts) {
        for (std::int64_t t = 0; t < t_dim; ++t) {
            for (std::int64_t j = 0; j < j_dim; ++j) {
                for (std::int64_t c = 0; c < 3; ++c) {
                    data[idx++] = s->at(t, j, c) - s->at(t, root_index, c);
                }
            }
        }
    }
    return Tensor::from_data({b_dim, t_dim, j_dim, 3}, std::move(data));
}

PoseSequence predict_sequence(const PoseSequence& input2d, const ModelParams& params,
                              const ModelConfig& config, const Tensor& a_hat) {
    auto x = sequences_to_tensor({&input2d});
    auto y = forward(x, params, config, a_hat);
    PoseSequence out = PoseSequence::make(SeqKind::Pred3d, input2d.frames, input2d.joints);
    out.values = y.data();
    return out;
}

std::vector<LossRecord> train_loop(const std::vector<TrainSample>& data,
                                   const SkeletonTopology& topo, const ModelConfig& config,
                                   ModelParams& params, std::int64_t steps) {
    config.validate();
    if (data.empty()) throw ConfigError("train_loop: dataset is empty");
    for (const auto& s : data) {
        if (s.input2d.frames != config.frames || s.input2d.joints != config.joints ||
            s.gt3d.frames != config.frames || s.gt3d.joints != config.joints) {
            throw DimensionError("train_loop: sample shape does not match config frames/joints");
        }
    }
    const auto a_hat = normalized_adjacency(topo);
    AdamW optimizer(params.all_tensors(),
                    {config.learning_rate, config.weight_decay, config.beta1, config.beta2,
                     config.adam_eps});
    optimizer.zero_grad();
    Rng augment_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    const auto n = static_cast<std::int64_t>(data.size());
    const std::int64_t batch = std::min<std::int64_t>(config.batch_size, n);
    const double image_center_x = 0.0;  // centered pixel convention

    std::vector<LossRecord> trace;
    trace.reserve(static_cast<std::size_t>(steps));
    std::int64_t last_finite = 0;
    // Flipped copies are deterministic; cache them per sample.
    std::vector<TrainSample> flipped;
    if (config.augment_flip) {
        flipped.reserve(data.size());
        for (const auto& s : data) {
            flipped.push_back({flip_horizontal(s.input2d, topo, image_center_x),
                               flip_horizontal(s.gt3d, topo)});
        }
    }

    for (std::int64_t step = 1; step <= steps; ++step) {
        std::vector<const PoseSequence*> inputs;
        std::vector<const PoseSequence*> targets;
        for (std::int64_t i = 0; i < batch; ++i) {
            const auto idx = static_cast<std::size_t>(((step - 1) * batch + i) % n);
            const bool flip = config.augment_flip && augment_rng.uniform01() < 0.5;
            const TrainSample& s = flip ? flipped[idx] : data[idx];
            inputs.push_back(&s.input2d);
            targets.push_back(&s.gt3d);
        }
        auto x = sequences_to_tensor(inputs);
        auto target = root_relative_target(targets, topo.root_index);
        auto pred = forward(x, params, config, a_hat);
        auto lpos = loss_position(pred, target, config.loss_reduction);
        auto ldelta = loss_delta(pred, target, config.loss_reduction);
        auto ltotal = add(lpos, scale(ldelta, config.lambda_delta));
        LossRecord rec{step, lpos.item(), ldelta.item(), ltotal.item()};
        if (!std::isfinite(rec.total)) {
            throw NumericError("train_loop: non-finite loss at step " + std::to_string(step) +
                               " (last finite step " + std::to_string(last_finite) + ")");
        }
        last_finite = step;
        trace.push_back(rec);
        ltotal.backward();
        optimizer.step();
        optimizer.zero_grad();
    }
    return trace;
}

}  // namespace mixtg
