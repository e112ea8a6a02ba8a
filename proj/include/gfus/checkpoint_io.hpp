#pragma once

#include <string>

#include "gfus/model.hpp"

namespace gfus {

/// Binary checkpoint format, little-endian throughout:
///   magic "GFUS", u32 version,
///   u32 config line count, per line { u32 byte length, "key=value" UTF-8 },
///   u32 tensor count, per tensor { u16 name length, name, u8 rank,
///   u64 dims..., f64 payload... }.
/// Round trips are bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace gfus
