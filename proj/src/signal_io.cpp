#include "msemg/signal_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "msemg/errors.hpp"

namespace msemg {

void Signal::validate() const {
  require(fs > 0 && std::isfinite(fs), "signal sampling rate must be positive");
  require(!samples.empty(), "signal is empty");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw ValidationError("signal sample " + std::to_string(i) + " is not finite");
    }
  }
}

double mean_power(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

double rms(const std::vector<double>& x) { return std::sqrt(mean_power(x)); }

}  // namespace msemg

namespace msemg::io {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) throw FormatError(origin_ + ": truncated file");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::text(std::size_t length) {
  need(length);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), length);
  pos_ += length;
  return s;
}

std::vector<std::uint8_t> encode_signal(const Signal& s) {
  s.validate();
  const double fs_int = std::round(s.fs);
  require(fs_int == s.fs && fs_int <= 4294967295.0,
          "canonical signal files store integer sampling rates; got " + std::to_string(s.fs));
  std::vector<std::uint8_t> out;
  out.reserve(4 + 1 + 4 + 8 + 8 * s.samples.size() + 64);
  out.insert(out.end(), kSignalMagic, kSignalMagic + 4);
  put_u8(out, kSignalVersion);
  put_u32(out, static_cast<std::uint32_t>(fs_int));
  put_u64(out, s.samples.size());
  for (double v : s.samples) put_f64(out, v);
  const std::string prov = nlohmann::json(s.provenance).dump();
  put_u32(out, static_cast<std::uint32_t>(prov.size()));
  out.insert(out.end(), prov.begin(), prov.end());
  return out;
}

Signal decode_signal(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  if (r.text(4) != std::string(kSignalMagic, 4)) throw FormatError(origin + ": not an MSG1 signal file");
  const auto version = r.u8();
  if (version != kSignalVersion) {
    throw FormatError(origin + ": unsupported signal file version " + std::to_string(version));
  }
  Signal s;
  s.fs = r.u32();
  const std::uint64_t count = r.u64();
  if (count > r.remaining() / 8) throw FormatError(origin + ": sample count exceeds file size");
  s.samples.resize(count);
  for (auto& v : s.samples) v = r.f64();
  const std::uint32_t prov_len = r.u32();
  const std::string prov = r.text(prov_len);
  try {
    s.provenance = nlohmann::json::parse(prov).get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": bad provenance blob: " + e.what());
  }
  return s;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  write_file_atomic(path, std::vector<std::uint8_t>(contents.begin(), contents.end()));
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& contents) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError(path.parent_path().string(), "cannot create directory: " + ec.message());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(std::random_device{}());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(tmp.string(), "cannot open for writing");
    f.write(reinterpret_cast<const char*>(contents.data()), static_cast<std::streamsize>(contents.size()));
    if (!f) throw IoError(tmp.string(), "write failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError(path.string(), "cannot move temporary file into place");
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string(), "cannot open for reading");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string read_file_text(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_signal(const std::filesystem::path& path, const Signal& s) {
  write_file_atomic(path, encode_signal(s));
}

void write_signal_csv(const std::filesystem::path& path, const Signal& s) {
  s.validate();
  std::ostringstream out;
  out.precision(17);
  out << "fs=" << s.fs << '\n';
  for (double v : s.samples) out << v << '\n';
  write_file_atomic(path, out.str());
}

namespace {

Signal parse_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(origin + ": empty CSV");
  std::string head = line;
  for (const char* prefix : {"fs=", "fs,"}) {
    if (head.rfind(prefix, 0) == 0) head = head.substr(3);
  }
  Signal s;
  try {
    s.fs = std::stod(head);
  } catch (const std::exception&) {
    throw FormatError(origin + ": CSV header must hold the sampling rate");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    try {
      s.samples.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw FormatError(origin + ": bad sample on line " + std::to_string(lineno));
    }
  }
  s.provenance["source"] = origin;
  return s;
}

}  // namespace

Signal read_signal(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::equal(kSignalMagic, kSignalMagic + 4, bytes.begin())) {
    return decode_signal(bytes, path.string());
  }
  return parse_csv(std::string(bytes.begin(), bytes.end()), path.string());
}

}  // namespace msemg::io
