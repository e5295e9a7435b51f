#pragma once

#include <string>

#include "mixtg/sequence.hpp"

namespace mixtg {

// MTGF sequence container, all integers little-endian:
//   offset 0: magic "MTGF"
//   offset 4: format version (u32, currently 1)
//   offset 8: kind tag (u32: 0 input2d, 1 gt3d, 2 pred3d)
//   offset 12: frames T (u32)
//   offset 16: joints J (u32)
//   offset 20: T*J*3 IEEE-754 doubles, little-endian
// load(save(s)) is a bitwise identity; malformed input raises FormatError
// carrying the offending byte offset.

inline constexpr std::uint32_t kMtgfVersion = 1;

void save_sequence(const std::string& path, const PoseSequence& seq);
PoseSequence load_sequence(const std::string& path);

}  // namespace mixtg
