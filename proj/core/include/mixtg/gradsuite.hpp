#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixtg/config.hpp"

namespace mixtg {

struct GradSuiteEntry {
    std::string name;
    double tolerance = 1e-5;
    double worst_rel_err = 0.0;
    bool passed() const { return worst_rel_err < tolerance; }
};

/// Central-difference verification of every differentiable primitive and of
/// the composed attention/GCN/block/layer/model paths. `corrupt_component`
/// (test fixture) perturbs the analytic gradient of the named component so
/// the failure path can be exercised.
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed,
                                           const std::string& corrupt_component = "");

/// Worst relative gradient error of the full-model loss under an arbitrary
/// configuration (used for the ablation grid).
double model_grad_check(const ModelConfig& config, std::uint64_t seed);

}  // namespace mixtg
