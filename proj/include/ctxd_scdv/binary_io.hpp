#pragma once

// Little-endian primitive encoding shared by the CEB1/DVB1/GMB1/ATB1 formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace ctxd::binio {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

/// Append-only byte buffer.
class Writer {
 public:
  void bytes(std::string_view b) { buf_.append(b); }

  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    v = to_little(v);
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf_.append(raw, sizeof(T));
  }

  const std::string& data() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw DataError("write failed for '" + path + "'");
  }

 private:
  std::string buf_;
};

/// Bounds-checked cursor over a byte buffer. Every failed read reports the
/// byte offset at which the record started being read.
class Reader {
 public:
  Reader(std::string data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  static Reader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return Reader(std::move(data), path);
  }

  std::size_t offset() const { return pos_; }
  std::size_t size() const { return data_.size(); }
  bool at_end() const { return pos_ >= data_.size(); }
  const std::string& source() const { return source_; }

  std::string_view bytes(std::size_t n, std::string_view what) {
    require(n, what);
    std::string_view out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T get(std::string_view what) {
    static_assert(std::is_arithmetic_v<T>);
    require(sizeof(T), what);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }

 private:
  void require(std::size_t n, std::string_view what) const {
    if (data_.size() - pos_ < n || pos_ > data_.size()) {
      throw FormatError(source_ + ": truncated " + std::string(what) +
                        " at byte offset " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " bytes, " +
                        std::to_string(data_.size() - pos_) + " available)");
    }
  }

  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace ctxd::binio
