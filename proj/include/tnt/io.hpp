#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tnt/tensor.hpp"

namespace tnt {

// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File opened but its contents are malformed (bad magic, version,
// truncation, inconsistent shapes).
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

namespace binary {

// Little-endian primitives over a byte buffer.
class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> values);
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}
  std::string bytes(std::size_t n);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t n);
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  void need(std::size_t n) const;
  std::vector<char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& data);

}  // namespace binary

// Raw tensor file: "TNTT", u32 version, u32 rank, u64 extents, f64 data.
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

// Binary PPM (P6, maxval <= 255) as a raw [H, W, 3] tensor.
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& image);

// Reads either a PPM (by magic "P6") or a raw tensor file.
Tensor read_image(const std::string& path);

}  // namespace tnt
