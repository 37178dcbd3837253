#pragma once

// Canonical signal files.
//
// Binary layout (all integers and floats little-endian):
//   "MSG1"              4 bytes magic
//   version             u8  (currently 1)
//   fs                  u32 Hz
//   count               u64 sample count
//   samples             count x f64
//   provenance_length   u32 byte length of the JSON blob that follows
//   provenance          UTF-8 JSON object of string -> string
//
// A plain-text CSV is also accepted on read: first line holds the sampling
// rate ("1000", "fs=1000" or "fs,1000"), then one sample per line.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msemg/signal.hpp"

namespace msemg::io {

inline constexpr char kSignalMagic[4] = {'M', 'S', 'G', '1'};
inline constexpr std::uint8_t kSignalVersion = 1;

std::vector<std::uint8_t> encode_signal(const Signal& s);
Signal decode_signal(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void write_signal(const std::filesystem::path& path, const Signal& s);
void write_signal_csv(const std::filesystem::path& path, const Signal& s);
/// Reads either format, chosen by the leading magic bytes.
Signal read_signal(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& contents);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

// Little-endian byte packing shared with the checkpoint format.
void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
void put_f64(std::vector<std::uint8_t>& out, double v);

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string text(std::size_t length);
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  const std::vector<std::uint8_t>& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace msemg::io
