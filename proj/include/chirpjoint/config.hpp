#pragma once

#include "chirpjoint/scenario.hpp"
#include "chirpjoint/synth.hpp"

#include <json.hpp>

#include <filesystem>

namespace chirpjoint {

// Scenario file schema (SI units):
//
//   {
//     "waveform": {"bandwidth_hz": 150e6, "carrier_hz": 76.5e9,
//                  "sample_rate_hz": 20e6, "fast_time_samples": 256,
//                  "chirp_repetition_interval_s": 65.1e-6,
//                  "chirp_slope_hz_per_s": <optional, B / T_c if absent>},
//     "plan": {"chirps_per_sequence": 256, "sequence_offsets_s": [0, 34e-6]},
//     "ddm": {"ddm_freqs_hz": [...], "tx_positions_m": [...]}
//        or  {"uniform": {"num_tx": 4, "tx_spacing_m": 0.0078}},
//     "num_rx": 4,
//     "noise_variance": 1.0
//   }
//
// Target file: {"targets": [{"range_m": 80, "velocity_mps": 10 | "velocity_kmh": 36,
//               "dod_angle_rad": 0.1 | "dod_angle_deg": 5, "amplitude": [re, im]}]}
// Amplitude defaults to [1, 0] and the angle to 0.

nlohmann::json scenario_to_json(const RadarScenario& s);
RadarScenario scenario_from_json(const nlohmann::json& j);

nlohmann::json targets_to_json(const TargetSet& t);
TargetSet targets_from_json(const nlohmann::json& j);

/// Parses a JSON file; errors name the file and the offending field.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

RadarScenario load_scenario(const std::filesystem::path& path);
TargetSet load_targets(const std::filesystem::path& path);

} // namespace chirpjoint
