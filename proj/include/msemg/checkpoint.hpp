#pragma once

// Model checkpoint files.
//
//   "MSMG"            4 bytes magic
//   version           u8 (currently 1)
//   config_length     u32
//   config            UTF-8 JSON ModelConfig
//   count             u64 number of parameters
//   values            count x f32, little-endian, in Layout::tensors order
//
// save_checkpoint also writes `<path>.json` with the config and the tensor
// table for human inspection; load ignores it.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "msemg/nn.hpp"

namespace msemg::nn {

inline constexpr char kCheckpointMagic[4] = {'M', 'S', 'M', 'G'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
/// Throws FormatError on bad magic, version or size, ValidationError on a bad config.
ModelParams decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

nlohmann::json checkpoint_sidecar(const ModelParams& params);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace msemg::nn
