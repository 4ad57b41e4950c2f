#pragma once

#include <string>

#include "muse/checkpoint.hpp"
#include "muse/kv_config.hpp"
#include "muse/multitask.hpp"

namespace muse {

/// Checkpoint whose config text is the encoder config plus `extra` keys
/// (training settings, provenance of the run).
Checkpoint to_checkpoint(const DualEncoderModel<float>& model, const KeyValueConfig& extra = {});

/// Rebuilds the model, checking every parameter name and shape against the
/// stored config. Throws DataError naming `source` on mismatch.
DualEncoderModel<float> from_checkpoint(const Checkpoint& checkpoint, const std::string& source = "<checkpoint>");

void save_model(const std::string& path, const DualEncoderModel<float>& model, const KeyValueConfig& extra = {});
DualEncoderModel<float> load_model(const std::string& path);

}  // namespace muse
