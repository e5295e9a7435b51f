#pragma once

#include <cstdint>
#include <vector>

#include "mixtg/tensor.hpp"

namespace mixtg {

struct AdamWOptions {
    double learning_rate = 5e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// AdamW with decoupled weight decay: the decay shrink is applied to the
/// parameter before the bias-corrected moment update.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWOptions options);

    void step();
    void zero_grad();
    std::int64_t step_count() const { return step_; }

private:
    std::vector<Tensor> params_;
    AdamWOptions opt_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::int64_t step_ = 0;
};

}  // namespace mixtg
