#pragma once

#include <filesystem>
#include <vector>

#include "svae/model.hpp"

namespace svae {

// A checkpoint is a pair of files sharing a stem:
//   <stem>.manifest  "svae-checkpoint 1", then one line per tensor:
//                    name rank extents... offset count   (offsets in values)
//   <stem>.bin       every tensor's values, little-endian float64, in order
void save_checkpoint(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& stem);

}  // namespace svae
