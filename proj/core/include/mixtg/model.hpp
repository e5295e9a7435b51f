#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mixtg/config.hpp"
#include "mixtg/mixformer.hpp"
#include "mixtg/tensor.hpp"

namespace mixtg {

/// All trainable tensors of the lifting network. Construction order is fixed
/// so identical seeds give identical initializations.
struct ModelParams {
    Tensor input_proj_w;  // [3, d]
    Tensor input_proj_b;  // [d]
    Tensor pos_spatial;   // [1, J, d] when embedding_mode is spatial/both
    Tensor pos_temporal;  // [1, T, d] when embedding_mode is temporal/both
    std::vector<MixformerLayerParams> layer_params;
    Tensor motion_w;  // [d, d']
    Tensor motion_b;  // [d']
    Tensor head_w;    // [d', 3]
    Tensor head_b;    // [3]

    static ModelParams init(const ModelConfig& config, bool requires_grad = true);

    /// Every tensor exactly once, in a stable order with hierarchical names.
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    std::vector<Tensor> all_tensors() const;
    void zero_grad();
};

/// Full network: input normalization and projection, positional embeddings,
/// N Mixformer layers, tanh motion head, regression head scaled to
/// millimeters. Input [B, T, J, 3] (x px, y px, confidence), output
/// [B, T, J, 3] root-relative millimeters.
Tensor forward(const Tensor& x, const ModelParams& params, const ModelConfig& config,
               const Tensor& a_hat);

/// Sum over frames and joints of the per-joint Euclidean distance;
/// mean divides by B*T*J.
Tensor loss_position(const Tensor& pred, const Tensor& gt, LossReduction reduction);

/// Same norm applied to first frame differences; zero when T == 1.
Tensor loss_delta(const Tensor& pred, const Tensor& gt, LossReduction reduction);

Tensor total_loss(const Tensor& pred, const Tensor& gt, double lambda_delta,
                  LossReduction reduction);

/// Exact number of scalar parameters.
std::int64_t param_count(const ModelParams& params);

/// The same number as an analytic function of the configuration.
std::int64_t param_count_closed_form(const ModelConfig& config);

}  // namespace mixtg
