#include "mmpoe/sidecar.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "mmpoe/error.hpp"

namespace mmpoe {

void write_u32_le(std::ostream& out, std::uint32_t value) {
  const std::array<char, 4> bytes = {
      static_cast<char>(value & 0xFFu), static_cast<char>((value >> 8) & 0xFFu),
      static_cast<char>((value >> 16) & 0xFFu), static_cast<char>((value >> 24) & 0xFFu)};
  out.write(bytes.data(), bytes.size());
}

std::uint32_t read_u32_le(std::istream& in) {
  std::array<unsigned char, 4> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != 4) throw ManifestError(0, "sidecar: truncated u32");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void write_sidecar_block(std::ostream& out, std::uint32_t dim, std::uint32_t count,
                         std::span<const double> values) {
  if (values.size() != static_cast<std::size_t>(dim) * count) {
    throw DimensionError("sidecar: expected " + std::to_string(dim * count) +
                         " values, got " + std::to_string(values.size()));
  }
  out.write(kSidecarMagic, 4);
  write_u32_le(out, kSidecarVersion);
  write_u32_le(out, dim);
  write_u32_le(out, count);
  for (double v : values) {
    write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

SidecarBlock read_sidecar_block(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kSidecarMagic, 4) != 0) {
    throw ManifestError(0, "sidecar: bad magic (expected POEF)");
  }
  const std::uint32_t version = read_u32_le(in);
  if (version != kSidecarVersion) {
    throw ManifestError(0, "sidecar: unsupported version " + std::to_string(version));
  }
  SidecarBlock block;
  block.dim = read_u32_le(in);
  block.count = read_u32_le(in);
  const std::size_t total = static_cast<std::size_t>(block.dim) * block.count;
  block.values.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    block.values[i] = static_cast<double>(std::bit_cast<float>(read_u32_le(in)));
  }
  return block;
}

void write_sidecar(const std::filesystem::path& path, std::uint32_t dim,
                   std::span<const std::vector<double>> rows) {
  std::vector<double> flat;
  flat.reserve(rows.size() * dim);
  for (const auto& row : rows) {
    if (row.size() != dim) {
      throw DimensionError("sidecar: row of dim " + std::to_string(row.size()) +
                           ", expected " + std::to_string(dim));
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_sidecar_block(out, dim, static_cast<std::uint32_t>(rows.size()), flat);
  if (!out) throw Error("failed writing " + path.string());
}

SidecarBlock read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError(0, "cannot open sidecar " + path.string());
  try {
    return read_sidecar_block(in);
  } catch (const ManifestError& e) {
    throw ManifestError(0, path.string() + ": " + e.what());
  }
}

}  // namespace mmpoe
