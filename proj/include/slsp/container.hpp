#pragma once

// Self-describing binary tensor container.
//
// Layout, all multi-byte integers little-endian:
//   offset 0   magic "SLSP"
//   offset 4   u16 version (= 1)
//   offset 6   u8  kind    (0 dense, 1 slided, 2 compressed, 3 quantized-lifted)
//   offset 7   u8  dtype   (0 int8, 1 int32, 2 fp32, 3 fp64, 4 fp8e4m3)
//   offset 8   u16 z, u16 l, u16 hw_m, u16 hw_n   (all zero for kind 0)
//   offset 16  u64 rows
//   offset 24  u64 cols    (cols, cols_expanded, or windows_per_row)
//   offset 32  payload sections, each u64 length + raw bytes:
//                values; then metadata (kind 2 only, 2-bit codes packed four
//                per byte, low bits first); then scales (kind 3 only, fp32)
//   tail       u32 CRC-32 over everything above
//
// Quantized-lifted values are 32-bit words, four quantized bytes each; their
// dtype says how to read the bytes (int8 or fp8e4m3) and implies qmax.

#include "slsp/gemm.hpp"
#include "slsp/matrix.hpp"
#include "slsp/pattern.hpp"
#include "slsp/quantize.hpp"

#include <unistd.h>
#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace slsp {

enum class Kind : std::uint8_t { dense = 0, slided = 1, compressed = 2, quantized_lifted = 3 };
enum class Dtype : std::uint8_t { int8 = 0, int32 = 1, fp32 = 2, fp64 = 3, fp8e4m3 = 4 };

inline constexpr char kContainerMagic[4] = {'S', 'L', 'S', 'P'};
inline constexpr std::uint16_t kContainerVersion = 1;

inline std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::int8:
    case Dtype::fp8e4m3:
      return 1;
    case Dtype::int32:
    case Dtype::fp32:
      return 4;
    case Dtype::fp64:
      return 8;
  }
  throw ContainerError("unknown dtype");
}

struct Container {
  Kind kind = Kind::dense;
  Dtype dtype = Dtype::int8;
  std::uint16_t z = 0, l = 0, hw_m = 0, hw_n = 0;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<std::uint8_t> values;
  std::vector<std::uint8_t> metadata;
  std::vector<float> scales;

  SparsityPattern pattern() const {
    if (kind == Kind::dense) throw ContainerError("dense container carries no pattern");
    return SparsityPattern(z, l, hw_m, hw_n);
  }
};

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct Reader {
  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw ContainerError("container truncated");
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos]) |
                      static_cast<std::uint16_t>(buf[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::vector<std::uint8_t> block() {
    const std::uint64_t len = u64();
    need(len);
    std::vector<std::uint8_t> out(buf.begin() + pos, buf.begin() + pos + len);
    pos += len;
    return out;
  }
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline void validate_payload(const Container& c);

inline std::vector<std::uint8_t> serialize(const Container& c) {
  validate_payload(c);
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  detail::put_u16(out, kContainerVersion);
  out.push_back(static_cast<std::uint8_t>(c.kind));
  out.push_back(static_cast<std::uint8_t>(c.dtype));
  detail::put_u16(out, c.z);
  detail::put_u16(out, c.l);
  detail::put_u16(out, c.hw_m);
  detail::put_u16(out, c.hw_n);
  detail::put_u64(out, c.rows);
  detail::put_u64(out, c.cols);
  detail::put_u64(out, c.values.size());
  out.insert(out.end(), c.values.begin(), c.values.end());
  if (c.kind == Kind::compressed) {
    detail::put_u64(out, c.metadata.size());
    out.insert(out.end(), c.metadata.begin(), c.metadata.end());
  }
  if (c.kind == Kind::quantized_lifted) {
    detail::put_u64(out, c.scales.size() * 4);
    for (const float s : c.scales) detail::put_u32(out, std::bit_cast<std::uint32_t>(s));
  }
  detail::put_u32(out, detail::crc32_of(out));
  return out;
}

inline void validate_payload(const Container& c) {
  const std::size_t elem = dtype_size(c.dtype);
  switch (c.kind) {
    case Kind::dense:
    case Kind::slided:
      if (c.values.size() != c.rows * c.cols * elem) {
        throw ContainerError("values payload does not match shape");
      }
      break;
    case Kind::compressed: {
      if (c.hw_m == 0 || c.hw_n == 0) throw ContainerError("compressed container needs a pattern");
      const std::uint64_t codes = c.rows * c.cols * c.hw_m;
      if (c.values.size() != codes * elem) {
        throw ContainerError("values payload does not match shape");
      }
      if (c.metadata.size() != (codes + 3) / 4) {
        throw ContainerError("metadata payload does not match shape");
      }
      break;
    }
    case Kind::quantized_lifted:
      if (c.values.size() != c.rows * c.cols * 4) {
        throw ContainerError("word payload does not match shape");
      }
      if (c.scales.size() != c.rows) throw ContainerError("scale count does not match rows");
      if (c.dtype != Dtype::int8 && c.dtype != Dtype::fp8e4m3) {
        throw ContainerError("quantized container must be int8 or fp8e4m3");
      }
      break;
  }
  if (c.kind == Kind::dense) {
    if (c.z || c.l || c.hw_m || c.hw_n) throw ContainerError("dense container must zero pattern");
  } else if (c.z == 0 || c.l == 0 || c.hw_m == 0 || c.hw_n == 0) {
    throw ContainerError("transformed container needs a pattern");
  }
}

inline Container deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 36) throw ContainerError("container truncated");
  if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0) {
    throw ContainerError("bad magic; not a tensor container");
  }
  const auto body = bytes.subspan(0, bytes.size() - 4);
  detail::Reader tail{bytes.subspan(bytes.size() - 4), 0};
  if (detail::crc32_of(body) != tail.u32()) throw ContainerError("checksum mismatch");

  detail::Reader r{body, 4};
  const std::uint16_t version = r.u16();
  if (version != kContainerVersion) {
    throw ContainerError("unsupported container version " + std::to_string(version));
  }
  Container c;
  const std::uint8_t kind = r.u8();
  if (kind > 3) throw ContainerError("unknown kind");
  c.kind = static_cast<Kind>(kind);
  const std::uint8_t dtype = r.u8();
  if (dtype > 4) throw ContainerError("unknown dtype");
  c.dtype = static_cast<Dtype>(dtype);
  c.z = r.u16();
  c.l = r.u16();
  c.hw_m = r.u16();
  c.hw_n = r.u16();
  c.rows = r.u64();
  c.cols = r.u64();
  c.values = r.block();
  if (c.kind == Kind::compressed) c.metadata = r.block();
  if (c.kind == Kind::quantized_lifted) {
    const auto raw = r.block();
    if (raw.size() % 4 != 0) throw ContainerError("scale payload not a multiple of 4 bytes");
    c.scales.resize(raw.size() / 4);
    for (std::size_t i = 0; i < c.scales.size(); ++i) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
      c.scales[i] = std::bit_cast<float>(v);
    }
  }
  if (r.pos != body.size()) throw ContainerError("trailing bytes after payload");
  validate_payload(c);
  return c;
}

inline void save_container(const std::filesystem::path& path, const Container& c) {
  const auto bytes = serialize(c);
  const std::filesystem::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContainerError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ContainerError("cannot move " + tmp.string() + " into place: " + ec.message());
}

inline Container load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ContainerError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw ContainerError("short read from " + path.string());
  return deserialize(bytes);
}

// --- typed element encoding -------------------------------------------------

template <typename T>
constexpr Dtype dtype_of() {
  if constexpr (std::is_same_v<T, std::int8_t>) {
    return Dtype::int8;
  } else if constexpr (std::is_same_v<T, std::int32_t>) {
    return Dtype::int32;
  } else if constexpr (std::is_same_v<T, float>) {
    return Dtype::fp32;
  } else {
    static_assert(std::is_same_v<T, double>, "unsupported element type");
    return Dtype::fp64;
  }
}

namespace detail {

template <typename T>
std::vector<std::uint8_t> encode_values(const std::vector<T>& v) {
  std::vector<std::uint8_t> out;
  out.reserve(v.size() * sizeof(T));
  for (const T x : v) {
    if constexpr (sizeof(T) == 1) {
      out.push_back(static_cast<std::uint8_t>(x));
    } else if constexpr (std::is_same_v<T, std::int32_t>) {
      put_u32(out, static_cast<std::uint32_t>(x));
    } else if constexpr (std::is_same_v<T, float>) {
      put_u32(out, std::bit_cast<std::uint32_t>(x));
    } else {
      put_u64(out, std::bit_cast<std::uint64_t>(x));
    }
  }
  return out;
}

template <typename T>
std::vector<T> decode_values(const std::vector<std::uint8_t>& raw) {
  if (raw.size() % sizeof(T) != 0) throw ContainerError("payload size not a dtype multiple");
  std::vector<T> out(raw.size() / sizeof(T));
  Reader r{raw, 0};
  for (auto& x : out) {
    if constexpr (sizeof(T) == 1) {
      x = static_cast<T>(r.u8());
    } else if constexpr (std::is_same_v<T, std::int32_t>) {
      x = static_cast<std::int32_t>(r.u32());
    } else if constexpr (std::is_same_v<T, float>) {
      x = std::bit_cast<float>(r.u32());
    } else {
      x = std::bit_cast<double>(r.u64());
    }
  }
  return out;
}

inline std::vector<std::uint8_t> pack_codes(const std::vector<std::uint8_t>& codes) {
  std::vector<std::uint8_t> out((codes.size() + 3) / 4, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out[i / 4] |= static_cast<std::uint8_t>((codes[i] & 0x3) << (2 * (i % 4)));
  }
  return out;
}

inline std::vector<std::uint8_t> unpack_codes(const std::vector<std::uint8_t>& bytes,
                                              std::size_t count) {
  std::vector<std::uint8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<std::uint8_t>((bytes[i / 4] >> (2 * (i % 4))) & 0x3);
  }
  return out;
}

inline void set_pattern(Container& c, const SparsityPattern& p) {
  c.z = static_cast<std::uint16_t>(p.z);
  c.l = static_cast<std::uint16_t>(p.l);
  c.hw_m = static_cast<std::uint16_t>(p.hw_m);
  c.hw_n = static_cast<std::uint16_t>(p.hw_n);
}

}  // namespace detail

template <typename T>
Container to_container(const Matrix<T>& m) {
  Container c;
  c.kind = Kind::dense;
  c.dtype = dtype_of<T>();
  c.rows = m.rows;
  c.cols = m.cols;
  c.values = detail::encode_values(m.data);
  return c;
}

template <typename T>
Container to_container(const SlidedMatrix<T>& s) {
  Container c;
  c.kind = Kind::slided;
  c.dtype = dtype_of<T>();
  detail::set_pattern(c, s.pattern);
  c.rows = s.rows;
  c.cols = s.cols_expanded;
  c.values = detail::encode_values(s.data);
  return c;
}

template <typename T>
Container to_container(const CompressedSparseMatrix<T>& cm) {
  Container c;
  c.kind = Kind::compressed;
  c.dtype = dtype_of<T>();
  detail::set_pattern(c, cm.pattern);
  c.rows = cm.rows;
  c.cols = cm.windows_per_row;
  c.values = detail::encode_values(cm.values);
  c.metadata = detail::pack_codes(cm.metadata);
  return c;
}

inline Container to_container(const QuantizedLiftedActivation& a) {
  Container c;
  c.kind = Kind::quantized_lifted;
  c.dtype = a.kind == QuantKind::int8 ? Dtype::int8 : Dtype::fp8e4m3;
  detail::set_pattern(c, a.pattern);
  c.rows = a.rows;
  c.cols = a.words_per_row;
  c.values.reserve(a.payload.size() * 4);
  for (const std::uint32_t w : a.payload) detail::put_u32(c.values, w);
  c.scales = a.scales;
  return c;
}

template <typename T>
Matrix<T> dense_from(const Container& c) {
  if (c.kind != Kind::dense) throw ContainerError("expected a dense container");
  if (c.dtype != dtype_of<T>()) throw ContainerError("container dtype mismatch");
  return Matrix<T>(c.rows, c.cols, detail::decode_values<T>(c.values));
}

template <typename T>
SlidedMatrix<T> slided_from(const Container& c) {
  if (c.kind != Kind::slided) throw ContainerError("expected a slided container");
  if (c.dtype != dtype_of<T>()) throw ContainerError("container dtype mismatch");
  SlidedMatrix<T> s;
  s.rows = c.rows;
  s.cols_expanded = c.cols;
  s.pattern = c.pattern();
  s.data = detail::decode_values<T>(c.values);
  return s;
}

template <typename T>
CompressedSparseMatrix<T> compressed_from(const Container& c) {
  if (c.kind != Kind::compressed) throw ContainerError("expected a compressed container");
  if (c.dtype != dtype_of<T>()) throw ContainerError("container dtype mismatch");
  CompressedSparseMatrix<T> cm;
  cm.rows = c.rows;
  cm.windows_per_row = c.cols;
  cm.pattern = c.pattern();
  cm.values = detail::decode_values<T>(c.values);
  cm.metadata = detail::unpack_codes(c.metadata, c.rows * c.cols * c.hw_m);
  return cm;
}

inline QuantizedLiftedActivation quantized_from(const Container& c) {
  if (c.kind != Kind::quantized_lifted) throw ContainerError("expected a quantized container");
  QuantizedLiftedActivation a;
  a.rows = c.rows;
  a.words_per_row = c.cols;
  a.pattern = c.pattern();
  a.kind = c.dtype == Dtype::int8 ? QuantKind::int8 : QuantKind::fp8e4m3;
  a.payload.resize(c.rows * c.cols);
  detail::Reader r{c.values, 0};
  for (auto& w : a.payload) w = r.u32();
  a.scales = c.scales;
  return a;
}

}  // namespace slsp
