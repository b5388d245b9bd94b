#pragma once

// Model directory: config.json, one raw little-endian float64 blob per weight
// array (<name>.bin, plus output_shift.bin and output_scale.bin) and
// history.csv with columns epoch,train_loss,val_loss.

#include <filesystem>

#include "sftm/training.hpp"

namespace sftm {

inline constexpr int kModelFormatVersion = 1;

void save_model(const TrainedModel& model, const std::filesystem::path& dir);
/// Throws IoError, FormatError (including truncated blobs) or VersionError.
TrainedModel load_model(const std::filesystem::path& dir);

/// Scales a raw (forest, agriculture) series with the model's stored stats and
/// runs it through the network. Throws ConfigError when the stats are absent
/// and ShapeError when the series length differs from the model's.
std::vector<double> predict_series(const TrainedModel& model, std::span<const double> forest,
                                   std::span<const double> agriculture);

}  // namespace sftm
