#pragma once

// Dense tensor container and the "AUED" binary file format.
//
// Layout on disk (all integers little-endian):
//   bytes 0..3   magic "AUED"
//   byte  4      format version (1)
//   byte  5      dtype code (1 = f32, 2 = u8)
//   byte  6      rank r (1..255)
//   next 4*r     dimension sizes, u32 each
//   payload      product(dims) elements, row-major, little-endian

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "auedit/core/error.hpp"

namespace auedit {

enum class DType : std::uint8_t { f32 = 1, u8 = 2 };

inline constexpr std::array<char, 4> kTensorMagic = {'A', 'U', 'E', 'D'};
inline constexpr std::uint8_t kTensorVersion = 1;

class DenseTensor {
 public:
  DenseTensor() = default;

  static DenseTensor f32(std::vector<std::size_t> shape, std::vector<float> data) {
    return DenseTensor(std::move(shape), Payload(std::move(data)));
  }
  static DenseTensor u8(std::vector<std::size_t> shape, std::vector<std::uint8_t> data) {
    return DenseTensor(std::move(shape), Payload(std::move(data)));
  }
  static DenseTensor zeros_f32(std::vector<std::size_t> shape) {
    const auto n = element_count(shape);
    return f32(std::move(shape), std::vector<float>(n, 0.0f));
  }

  DType dtype() const { return std::holds_alternative<std::vector<float>>(data_) ? DType::f32 : DType::u8; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return element_count(shape_); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<const float> f32_data() const { return std::get<std::vector<float>>(data_); }
  std::span<float> f32_data() { return std::get<std::vector<float>>(data_); }
  std::span<const std::uint8_t> u8_data() const { return std::get<std::vector<std::uint8_t>>(data_); }
  std::span<std::uint8_t> u8_data() { return std::get<std::vector<std::uint8_t>>(data_); }

  // Bitwise equality: NaN payloads compare by bit pattern.
  friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
    if (a.shape_ != b.shape_ || a.dtype() != b.dtype()) return false;
    if (a.dtype() == DType::f32) {
      auto x = a.f32_data();
      auto y = b.f32_data();
      return std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
    }
    return std::ranges::equal(a.u8_data(), b.u8_data());
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

 private:
  using Payload = std::variant<std::vector<float>, std::vector<std::uint8_t>>;

  DenseTensor(std::vector<std::size_t> shape, Payload data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(!shape_.empty(), ErrorKind::dimension, "tensor rank must be >= 1");
    require(shape_.size() <= 255, ErrorKind::dimension, "tensor rank must be <= 255");
    for (auto d : shape_) {
      require(d >= 1, ErrorKind::dimension, "tensor dimensions must be >= 1");
      require(d <= 0xFFFFFFFFull, ErrorKind::dimension, "tensor dimension exceeds u32");
    }
    const auto n = std::visit([](const auto& v) { return v.size(); }, data_);
    require(n == element_count(shape_), ErrorKind::dimension,
            "payload has " + std::to_string(n) + " elements, shape needs " + std::to_string(element_count(shape_)));
  }

  std::vector<std::size_t> shape_;
  Payload data_ = std::vector<float>{};
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Writes bytes to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open for writing: " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      fail(ErrorKind::io, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::io, "cannot rename into place: " + path.string());
  }
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_tensor(const DenseTensor& t) {
  require(t.rank() >= 1, ErrorKind::dimension, "cannot encode rank-0 tensor");
  std::vector<std::uint8_t> out;
  const std::size_t elem = t.dtype() == DType::f32 ? 4 : 1;
  out.reserve(7 + 4 * t.rank() + elem * t.size());
  out.insert(out.end(), kTensorMagic.begin(), kTensorMagic.end());
  out.push_back(kTensorVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
  if (t.dtype() == DType::f32) {
    for (float f : t.f32_data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  } else {
    auto d = t.u8_data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

inline DenseTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 7) fail(ErrorKind::truncated, "tensor header shorter than 7 bytes");
  if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin()))
    fail(ErrorKind::format, "bad magic, expected \"AUED\"");
  if (bytes[4] != kTensorVersion)
    fail(ErrorKind::version, "unsupported tensor version " + std::to_string(bytes[4]));
  const auto code = bytes[5];
  if (code != static_cast<std::uint8_t>(DType::f32) && code != static_cast<std::uint8_t>(DType::u8))
    fail(ErrorKind::format, "unknown dtype code " + std::to_string(code));
  const std::size_t rank = bytes[6];
  if (rank == 0) fail(ErrorKind::format, "rank-0 tensor in file");
  if (bytes.size() < 7 + 4 * rank) fail(ErrorKind::truncated, "tensor header truncated in dimension list");
  std::vector<std::size_t> shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = detail::get_u32(bytes.data() + 7 + 4 * i);
    if (shape[i] == 0) fail(ErrorKind::format, "zero-sized dimension in file");
  }
  const std::size_t n = DenseTensor::element_count(shape);
  const std::size_t offset = 7 + 4 * rank;
  const auto dtype = static_cast<DType>(code);
  const std::size_t elem = dtype == DType::f32 ? 4 : 1;
  const std::size_t have = bytes.size() - offset;
  if (have < n * elem)
    fail(ErrorKind::truncated, "payload has " + std::to_string(have) + " bytes, expected " + std::to_string(n * elem));
  if (have > n * elem) fail(ErrorKind::format, "trailing bytes after payload");
  if (dtype == DType::f32) {
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + offset + 4 * i));
    return DenseTensor::f32(std::move(shape), std::move(data));
  }
  return DenseTensor::u8(std::move(shape), std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end()));
}

inline void save_tensor(const DenseTensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  detail::write_file_atomic(path, bytes);
}

inline DenseTensor load_tensor(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::missing_artifact, "no such tensor file: " + path.string());
  const auto bytes = detail::read_file(path);
  return decode_tensor(bytes);
}

}  // namespace auedit
