#include "tnt/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace tnt {

namespace {

constexpr std::string_view kTensorMagic = "TNTT";
constexpr std::uint32_t kTensorVersion = 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::vector<char>& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>(static_cast<std::uint8_t>(v >> (8 * i))));
  }
}

}  // namespace

namespace binary {

void Writer::u32(std::uint32_t v) { put_le(buf_, v); }
void Writer::u64(std::uint64_t v) { put_le(buf_, v); }
void Writer::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }
void Writer::f64s(std::span<const double> values) {
  buf_.reserve(buf_.size() + values.size() * 8);
  for (double v : values) f64(v);
}

void Reader::fail(const std::string& what) const { throw FormatError(source_ + ": " + what); }

void Reader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) fail("truncated file (needed " + std::to_string(n) + " more bytes)");
}

std::string Reader::bytes(std::size_t n) {
  need(n);
  std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return s;
}

std::uint8_t Reader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> Reader::f64s(std::size_t n) {
  if (n > remaining() / 8) fail("truncated file (value block longer than the file)");
  std::vector<double> out(n);
  for (auto& v : out) v = f64();
  return out;
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace binary

void write_tensor_file(const std::string& path, const Tensor& t) {
  binary::Writer w;
  w.bytes(kTensorMagic);
  w.u32(kTensorVersion);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) w.u64(static_cast<std::uint64_t>(e));
  w.f64s(t.data());
  binary::write_file(path, w.buffer());
}

Tensor read_tensor_file(const std::string& path) {
  binary::Reader r(binary::read_file(path), path);
  if (r.bytes(4) != kTensorMagic) r.fail("not a raw tensor file (bad magic)");
  if (const auto v = r.u32(); v != kTensorVersion) r.fail("unsupported tensor file version " + std::to_string(v));
  const auto rank = r.u32();
  if (rank > 16) r.fail("implausible rank " + std::to_string(rank));
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto e = r.u64();
    if (e == 0 || e > (std::uint64_t{1} << 40)) r.fail("invalid extent");
    shape.push_back(static_cast<std::int64_t>(e));
    count *= e;
  }
  auto data = r.f64s(count);
  if (!r.at_end()) r.fail("trailing bytes after tensor data");
  return Tensor::from_data(std::move(shape), std::move(data));
}

Tensor read_ppm(const std::string& path) {
  auto raw = binary::read_file(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) -> void { throw FormatError(path + ": " + what); };
  auto token = [&]() {
    // Whitespace and '#' comments separate header fields.
    for (;;) {
      while (pos < raw.size() && std::isspace(static_cast<unsigned char>(raw[pos]))) ++pos;
      if (pos < raw.size() && raw[pos] == '#') {
        while (pos < raw.size() && raw[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string t;
    while (pos < raw.size() && !std::isspace(static_cast<unsigned char>(raw[pos]))) t.push_back(raw[pos++]);
    return t;
  };
  if (token() != "P6") fail("not a binary PPM (expected P6)");
  long width = 0, height = 0, maxval = 0;
  try {
    width = std::stol(token());
    height = std::stol(token());
    maxval = std::stol(token());
  } catch (...) {
    fail("malformed PPM header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) fail("unsupported PPM geometry or maxval");
  ++pos;  // single whitespace byte before the raster
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  if (raw.size() < pos + count) fail("truncated PPM raster");
  std::vector<double> data(count);
  const double scale = 255.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<std::uint8_t>(raw[pos + i]) * scale;
  return Tensor::from_data({height, width, 3}, std::move(data));
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("write_ppm: expected [H, W, 3], got " + shape_str(image.shape()));
  }
  std::ostringstream header;
  header << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  const std::string h = header.str();
  std::vector<char> out(h.begin(), h.end());
  for (double v : image.data()) {
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L))));
  }
  binary::write_file(path, out);
}

Tensor read_image(const std::string& path) {
  auto head = binary::read_file(path);
  if (head.size() >= 2 && head[0] == 'P' && head[1] == '6') return read_ppm(path);
  return read_tensor_file(path);
}

}  // namespace tnt
