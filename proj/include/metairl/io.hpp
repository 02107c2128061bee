#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "metairl/error.hpp"

namespace metairl::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::size_t kDigestSize = 32;

inline std::array<std::uint8_t, kDigestSize> sha256(std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, kDigestSize> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != kDigestSize) {
    throw std::runtime_error("sha256 failed");
  }
  return out;
}

inline std::string to_hex(std::span<const std::uint8_t> data) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(data.size() * 2);
  for (auto b : data) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

inline std::string sha256_hex(std::span<const std::uint8_t> data) {
  const auto d = sha256(data);
  return to_hex(d);
}

/// Append-only little-endian encoder.
class Writer {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_bytes(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }

  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  void put_doubles(std::span<const double> values) {
    put<std::uint64_t>(values.size());
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size() * sizeof(double));
  }

  const Bytes& bytes() const { return bytes_; }
  Bytes take() { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

/// Bounds-checked decoder; every short read is reported as truncation.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    auto s = get_bytes(n);
    return {s.begin(), s.end()};
  }

  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    if (n > remaining() / sizeof(double)) {
      throw FormatError(FormatError::Kind::Truncated, "truncated file: array of " + std::to_string(n) + " values");
    }
    std::vector<double> out(n);
    std::memcpy(out.data(), data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return out;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) {
      throw FormatError(FormatError::Kind::Truncated,
                        "truncated file: needed " + std::to_string(n) + " bytes at offset " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

/// Container shared by datasets and checkpoints:
///   magic(8) | u32 header length | JSON header | u64 payload length | payload | sha256(all previous bytes)
inline Bytes seal(const std::string& magic, const std::string& header_json, const Bytes& payload) {
  Writer w;
  require(magic.size() == 8, "container magic must be 8 bytes");
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(magic.data()), magic.size()});
  w.put<std::uint32_t>(static_cast<std::uint32_t>(header_json.size()));
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(header_json.data()), header_json.size()});
  w.put<std::uint64_t>(payload.size());
  w.put_bytes(payload);
  const auto digest = sha256(w.bytes());
  w.put_bytes(digest);
  return w.take();
}

struct Unsealed {
  std::string header_json;
  Bytes payload;
};

inline Unsealed unseal(const std::string& magic, std::span<const std::uint8_t> file) {
  Reader r(file);
  auto m = r.get_bytes(8);
  if (std::string(m.begin(), m.end()) != magic) {
    throw FormatError(FormatError::Kind::BadMagic, "not a " + magic.substr(0, 7) + " file (bad magic)");
  }
  const auto header_len = r.get<std::uint32_t>();
  auto header = r.get_bytes(header_len);
  const auto payload_len = r.get<std::uint64_t>();
  if (payload_len > r.remaining()) {
    throw FormatError(FormatError::Kind::Truncated, "truncated file: payload shorter than declared");
  }
  auto payload = r.get_bytes(payload_len);
  const std::size_t body = r.position();
  auto stored = r.get_bytes(kDigestSize);
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::Malformed, "trailing bytes after checksum");
  }
  const auto digest = sha256(file.subspan(0, body));
  if (!std::equal(digest.begin(), digest.end(), stored.begin())) {
    throw FormatError(FormatError::Kind::Checksum, "checksum mismatch: file is corrupted");
  }
  return {std::string(header.begin(), header.end()), Bytes(payload.begin(), payload.end())};
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partially written artifact.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::random_device rd;
  const fs::path tmp = path.string() + ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw FormatError(FormatError::Kind::Io, "short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace metairl::io
