#pragma once

#include <string>

#include "mixtg/config.hpp"
#include "mixtg/model.hpp"

namespace mixtg {

// MTGC checkpoint container, all integers little-endian:
//   magic "MTGC", version u32,
//   config text length u32 + canonical key-value bytes,
//   tensor count u32, then per tensor:
//     name length u32 + bytes, ndim u32, dims u32 each,
//     payload of IEEE-754 doubles.
// load(save(p)) is a bitwise identity.

inline constexpr std::uint32_t kMtgcVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ModelParams& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mixtg
