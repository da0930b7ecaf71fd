#pragma once

// Field checkpoint format, magic "HEFLOW1": header of little-endian 64-bit
// integers/floats, then the row-major grid of row-major r x r matrices, each
// entry (re, im) as 64-bit floats. Round-trips are bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "heflow/field.hpp"

namespace heflow {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace io_detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
inline void put_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
inline void put_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
inline std::int64_t get_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline double get_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace io_detail

inline constexpr char kCheckpointMagic[8] = {'H', 'E', 'F', 'L', 'O', 'W', '1', '\0'};

inline void write_field(const std::string& path, const TwistedMatrixField& f) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("write_field: cannot open " + path);
  os.write(kCheckpointMagic, 8);
  const int n = f.grid_n(), r = f.rank();
  io_detail::put_i64(os, n);
  io_detail::put_i64(os, r);
  io_detail::put_i64(os, static_cast<std::int64_t>(f.form()));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) io_detail::put_i64(os, f.twist(i, j));
  io_detail::put_f64(os, f.geom().tau().real());
  io_detail::put_f64(os, f.geom().tau().imag());
  io_detail::put_f64(os, f.geom().area_scale());
  os.write(reinterpret_cast<const char*>(f.data()), std::streamsize(f.values() * sizeof(cplx)));
  if (!os) throw Error("write_field: write failed for " + path);
}

// Reads a checkpoint. The geometry is reconstructed from the header and must
// outlive the field, so the caller supplies storage for it.
inline TwistedMatrixField read_field(const std::string& path, TorusGeometry& geom_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("read_field: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw Error("read_field: bad magic in " + path);
  const auto n = io_detail::get_i64(is);
  const auto r = io_detail::get_i64(is);
  const auto form = io_detail::get_i64(is);
  if (n < 8 || n > 4096 || r < 1 || r > kMaxRank || form < 0 || form > 3)
    throw Error("read_field: corrupt header in " + path);
  std::vector<int> twist(size_t(r) * r);
  for (auto& t : twist) t = int(io_detail::get_i64(is));
  const double tr = io_detail::get_f64(is);
  const double ti = io_detail::get_f64(is);
  const double c = io_detail::get_f64(is);
  geom_out = TorusGeometry(cplx(tr, ti), c, int(n));
  TwistedMatrixField f(geom_out, int(r), static_cast<FormType>(form), twist);
  is.read(reinterpret_cast<char*>(f.data()), std::streamsize(f.values() * sizeof(cplx)));
  if (!is) throw Error("read_field: truncated data in " + path);
  return f;
}

// FNV-1a 64-bit content hash, used to reference artifacts from reports.
inline std::uint64_t fnv1a64(const void* data, size_t len, std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("hash_file: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    const std::streamsize got = is.gcount();
    if (got > 0) h = fnv1a64(buf, size_t(got), h);
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace heflow
