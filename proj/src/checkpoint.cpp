#include "msemg/checkpoint.hpp"

#include <algorithm>

#include "msemg/errors.hpp"
#include "msemg/signal_io.hpp"

namespace msemg::nn {

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
  require(params.values.size() == params.layout.total, "checkpoint: parameter array has the wrong size");
  const std::string config = nlohmann::json(params.config).dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  io::put_u8(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(config.size()));
  out.insert(out.end(), config.begin(), config.end());
  io::put_u64(out, params.values.size());
  for (float v : params.values) io::put_f32(out, v);
  return out;
}

ModelParams decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 5 || !std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin())) {
    throw FormatError(origin + ": not a checkpoint (bad magic)");
  }
  io::ByteReader r(bytes, origin);
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion) {
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::string config_text = r.text(r.u32());
  ModelConfig config;
  try {
    config = nlohmann::json::parse(config_text).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": corrupt checkpoint config: " + e.what());
  }
  ModelParams p = zeros_like<float>(config);
  const std::uint64_t count = r.u64();
  if (count != p.values.size()) {
    throw FormatError(origin + ": checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                      std::to_string(p.values.size()));
  }
  for (float& v : p.values) v = r.f32();
  if (r.remaining() != 0) throw FormatError(origin + ": trailing bytes after checkpoint payload");
  return p;
}

nlohmann::json checkpoint_sidecar(const ModelParams& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : params.layout.tensors) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  }
  return {{"format", "MSMG"},
          {"version", kCheckpointVersion},
          {"config", params.config},
          {"parameter_count", params.layout.total},
          {"tensors", tensors}};
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  io::write_file_atomic(path, encode_checkpoint(params));
  std::filesystem::path sidecar = path;
  sidecar += ".json";
  io::write_file_atomic(sidecar, checkpoint_sidecar(params).dump(2) + "\n");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file_bytes(path), path.string());
}

}  // namespace msemg::nn
