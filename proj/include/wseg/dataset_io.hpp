#pragma once

// On-disk layout for datasets and checkpoints.
//
//   <dir>/dataset.json      label space and generation settings
//   <dir>/manifest.jsonl    one JSON object per record
//   <dir>/tensors/*.wst     images, ground truth and cue maps (WST1)
//
// Checkpoints are a rank-2 WST1 weight tensor plus a JSON sidecar with the
// same stem: {"d", "num_labels", "feature_version"}.

#include <filesystem>
#include <string>

#include "wseg/segmenter.hpp"
#include "wseg/synth_data.hpp"

namespace wseg {

/// Writes every split. Output bytes depend only on the dataset contents.
void save_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds,
                  const DatasetConfig& cfg);

/// Reads back a dataset written by save_dataset. Throws std::runtime_error
/// (or FormatError) on missing or malformed files.
SyntheticDataset load_dataset(const std::filesystem::path& dir);

void save_params(const std::filesystem::path& tensor_path, const SegmenterParams& params);
SegmenterParams load_params(const std::filesystem::path& tensor_path);

/// Sidecar path for a checkpoint tensor (same stem, .json).
std::filesystem::path sidecar_path(const std::filesystem::path& tensor_path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace wseg
