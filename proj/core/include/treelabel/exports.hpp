#pragma once

#include <filesystem>

#include "treelabel/volume.hpp"

namespace treelabel {

/// ASCII PLY with one colored vertex per foreground voxel. Colors come from
/// a fixed 19-entry palette indexed by class id (wrapping beyond 19).
void write_label_ply(const LabelVolume& vol, const std::filesystem::path& path);

/// CSV rows (x,y,z,true,pred) over every voxel that is foreground in either
/// volume.
void write_prediction_csv(const LabelVolume& pred, const LabelVolume& truth,
                          const std::filesystem::path& path);

}  // namespace treelabel
