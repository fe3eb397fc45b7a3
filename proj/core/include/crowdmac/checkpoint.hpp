#pragma once

#include <array>
#include <filesystem>

#include "crowdmac/model.hpp"

namespace crowdmac {

inline constexpr std::array<char, 8> kCheckpointMagic = {'C', 'M', 'C', 'K', 'P', 'T', '\0', '\1'};

// Layout: magic, u64 header length, JSON header (model config, step, epoch, tensor table),
// then every tensor listed in the table as little-endian f32. Tensors are stored under
// param/, adam_m/ and adam_v/ prefixes.
void save_checkpoint(const std::filesystem::path& path, const ModelState& state);

// Throws IntegrityError on a bad magic, truncated payload, or a tensor table that does not
// match the layout implied by the stored config.
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace crowdmac
