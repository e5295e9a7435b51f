#include "mixtg/optimizer.hpp"

#include <cmath>

#include "mixtg/errors.hpp"

namespace mixtg {

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options)
    : params_(std::move(params)), opt_(options) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        if (!p.requires_grad()) throw ConfigError("adamw: all parameters must require grad");
        m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
}

void AdamW::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    const double shrink = 1.0 - opt_.learning_rate * opt_.weight_decay;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& data = params_[i].raw_data();
        const auto& grad = params_[i].grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < data.size(); ++k) {
            data[k] *= shrink;  // decoupled decay before the update
            const double g = grad[k];
            m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * g;
            v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            data[k] -= opt_.learning_rate * mhat / (std::sqrt(vhat) + opt_.eps);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace mixtg
