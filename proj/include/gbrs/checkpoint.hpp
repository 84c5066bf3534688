#pragma once

#include "gbrs/network.hpp"

#include <string>

namespace gbrs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "GBRS", u32 version, length-prefixed spec text, u32 tensor count, then
/// per tensor: length-prefixed name, u32 rank, u64 dims, f64 payload.
std::string serialize_checkpoint(const Network& net);
Network deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

} // namespace gbrs
