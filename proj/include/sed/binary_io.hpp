#pragma once

// Little-endian readers/writers shared by the sedf/SEDC/SEDP formats.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "sed/error.hpp"

namespace sed::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::byte>& bytes);

class ByteWriter {
 public:
  void magic(std::string_view tag) {
    for (char ch : tag) buffer_.push_back(static_cast<std::byte>(ch));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* raw = reinterpret_cast<const std::byte*>(&value);
    buffer_.insert(buffer_.end(), raw, raw + sizeof(T));
  }

  void zeros(std::size_t count) { buffer_.insert(buffer_.end(), count, std::byte{0}); }

  std::vector<std::byte>& bytes() { return buffer_; }

 private:
  std::vector<std::byte> buffer_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::byte>& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  void expect_magic(std::string_view tag) {
    require(tag.size(), "magic");
    if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
      throw ParseError(source_ + ": bad magic, expected '" + std::string(tag) + "'", pos_);
    }
    pos_ += tag.size();
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get(std::string_view field) {
    require(sizeof(T), field);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void get_array(std::vector<T>& out, std::size_t count, std::string_view field) {
    if (count > (bytes_.size() - pos_) / sizeof(T)) {
      throw ParseError(source_ + ": truncated while reading " + std::string(field), pos_);
    }
    out.resize(count);
    std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(T));
    pos_ += count * sizeof(T);
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

  void expect_end() {
    if (pos_ != bytes_.size()) {
      throw ParseError(source_ + ": " + std::to_string(bytes_.size() - pos_) +
                           " unexpected trailing bytes",
                       pos_);
    }
  }

 private:
  void require(std::size_t count, std::string_view field) {
    if (bytes_.size() - pos_ < count) {
      throw ParseError(source_ + ": truncated while reading " + std::string(field), pos_);
    }
  }

  const std::vector<std::byte>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace sed::io
