#pragma once

// Sidecar binary blocks: a 16-byte header (magic "POEF", u32 version = 1,
// u32 dim, u32 count) followed by count * dim little-endian float32 values.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace mmpoe {

inline constexpr char kSidecarMagic[4] = {'P', 'O', 'E', 'F'};
inline constexpr std::uint32_t kSidecarVersion = 1;
inline constexpr std::size_t kSidecarHeaderBytes = 16;

/// Row-major block of float32 rows, widened to double on read.
struct SidecarBlock {
  std::uint32_t dim = 0;
  std::uint32_t count = 0;
  std::vector<double> values;  // count * dim

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
};

void write_u32_le(std::ostream& out, std::uint32_t value);
std::uint32_t read_u32_le(std::istream& in);

/// Narrows every value to float32. Throws DimensionError when
/// values.size() != dim * count.
void write_sidecar_block(std::ostream& out, std::uint32_t dim, std::uint32_t count,
                         std::span<const double> values);
SidecarBlock read_sidecar_block(std::istream& in);

void write_sidecar(const std::filesystem::path& path, std::uint32_t dim,
                   std::span<const std::vector<double>> rows);
SidecarBlock read_sidecar(const std::filesystem::path& path);

}  // namespace mmpoe
