#pragma once

#include "chirpjoint/synth.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace chirpjoint {

/// Datacube file layout (all fields little-endian):
///
///   offset  size  field
///        0     8  magic "CJCUBE\0\1"
///        8     4  format version (1)
///       12     4  L  sequences
///       16     4  M  chirps per sequence
///       20     4  N  fast-time samples per chirp
///       24     8  f_s  sample rate [Hz]        (float64)
///       32     8  T_ri repetition interval [s] (float64)
///       40     8  byte offset of the sequence-offset table
///       48     8  byte offset of the payload
///       56     8  payload length in complex samples (L*M*N)
///
/// The offset table holds L float64 values T_l. The payload is interleaved
/// float32 I/Q, ordered l-major, then m, then n.
inline constexpr std::array<unsigned char, 8> kCubeMagic{'C', 'J', 'C', 'U', 'B', 'E', 0, 1};
inline constexpr std::uint32_t kCubeVersion = 1;
inline constexpr std::size_t kCubeHeaderSize = 64;

struct CubeHeader {
    std::uint32_t version = kCubeVersion;
    std::uint32_t sequences = 0;
    std::uint32_t chirps = 0;
    std::uint32_t samples_per_chirp = 0;
    double sample_rate_hz = 0.0;
    double chirp_repetition_interval_s = 0.0;
    std::uint64_t offsets_pos = 0;
    std::uint64_t payload_pos = 0;
    std::uint64_t payload_count = 0;
    std::vector<double> sequence_offsets_s;
};

void store_cube(const RawDataCube& c, const std::filesystem::path& path);

/// Reads the header and offset table only.
CubeHeader read_cube_header(const std::filesystem::path& path);

/// Loads a cube and checks its header against the scenario. Samples are
/// widened from float32, so store -> load -> store reproduces the file.
RawDataCube load_cube(const std::filesystem::path& path, const RadarScenario& s);

/// Scenario with the dimensions and timing found in a cube header; all other
/// fields come from `base`.
RadarScenario scenario_from_header(const CubeHeader& h, RadarScenario base);

} // namespace chirpjoint
