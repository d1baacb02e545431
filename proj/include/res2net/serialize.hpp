#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "res2net/params.hpp"

namespace res2net {

// "R2NW" weight file, version 1, little-endian throughout:
//   magic "R2NW" (4 bytes)
//   version u32 = 1
//   tensor count u32
//   per tensor: name length u16, UTF-8 name, rank u8, each dim u32,
//               dtype u8 (0 = binary32), raw payload
struct WeightRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                              static_cast<unsigned char>((v >> 8) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  static_assert(sizeof(v) == sizeof(f));
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

inline bool get_bytes(std::istream& is, void* dst, std::size_t n) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

inline bool get_u16(std::istream& is, std::uint16_t& v) {
  unsigned char b[2];
  if (!get_bytes(is, b, 2)) return false;
  v = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  return true;
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!get_bytes(is, b, 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) |
      (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace detail

inline void write_weight_file(const std::string& path,
                              const std::vector<WeightRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("R2NW", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) {
    detail::put_u16(os, static_cast<std::uint16_t>(rec.name.size()));
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    os.put(static_cast<char>(rec.dims.size()));
    std::size_t numel = 1;
    for (std::uint32_t d : rec.dims) {
      detail::put_u32(os, d);
      numel *= d;
    }
    os.put(0);  // dtype: binary32
    if (numel != rec.data.size()) {
      throw Error("record " + rec.name + " dims do not match payload");
    }
    for (float f : rec.data) detail::put_f32(os, f);
  }
  if (!os) throw IoError("write failure: " + path);
}

inline std::vector<WeightRecord> read_weight_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  if (!detail::get_bytes(is, magic, 4)) {
    throw TruncatedFile("file shorter than the magic: " + path);
  }
  if (std::string(magic, 4) != "R2NW") {
    throw BadMagic("not an R2NW weight file: " + path);
  }
  std::uint32_t version = 0;
  if (!detail::get_u32(is, version)) throw TruncatedFile("missing version");
  if (version != 1) {
    throw UnsupportedVersion("R2NW version " + std::to_string(version));
  }
  std::uint32_t count = 0;
  if (!detail::get_u32(is, count)) throw TruncatedFile("missing tensor count");
  std::vector<WeightRecord> records;
  records.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    WeightRecord rec;
    std::uint16_t name_len = 0;
    if (!detail::get_u16(is, name_len)) throw TruncatedFile("missing name length");
    rec.name.resize(name_len);
    if (!detail::get_bytes(is, rec.name.data(), name_len)) {
      throw TruncatedFile("missing name bytes");
    }
    unsigned char rank = 0;
    if (!detail::get_bytes(is, &rank, 1)) throw TruncatedFile("missing rank");
    rec.dims.resize(rank);
    std::size_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      if (!detail::get_u32(is, rec.dims[d])) throw TruncatedFile("missing dim");
      numel *= rec.dims[d];
    }
    unsigned char dtype = 0;
    if (!detail::get_bytes(is, &dtype, 1)) throw TruncatedFile("missing dtype");
    if (dtype != 0) {
      throw UnsupportedVersion("unsupported dtype code " +
                               std::to_string(static_cast<int>(dtype)));
    }
    rec.data.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) {
      std::uint32_t bits = 0;
      if (!detail::get_u32(is, bits)) throw TruncatedFile("missing payload");
      std::memcpy(&rec.data[i], &bits, 4);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// ---- ParamStore round trip ----

inline void save_weights(const ParamStore<float>& store,
                         const std::string& path) {
  std::vector<WeightRecord> records;
  records.reserve(store.size());
  for (const auto& e : store.entries()) {
    WeightRecord rec;
    rec.name = e.name;
    const Shape4 s = e.value.shape();
    rec.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    rec.data = e.value.vec();
    records.push_back(std::move(rec));
  }
  write_weight_file(path, records);
}

// Loads weights into an already initialized store; every store entry must be
// present with matching element count.
inline void load_weights(ParamStore<float>& store, const std::string& path) {
  const std::vector<WeightRecord> records = read_weight_file(path);
  std::size_t used = 0;
  for (auto& e : store.entries()) {
    const WeightRecord* found = nullptr;
    for (const auto& rec : records) {
      if (rec.name == e.name) {
        found = &rec;
        break;
      }
    }
    if (!found) throw Error("weight file is missing tensor: " + e.name);
    if (found->data.size() != e.value.numel()) {
      throw ShapeMismatch("weight " + e.name + " has " +
                          std::to_string(found->data.size()) +
                          " elements, expected " +
                          std::to_string(e.value.numel()));
    }
    e.value.vec() = found->data;
    ++used;
  }
  (void)used;
}

}  // namespace res2net
