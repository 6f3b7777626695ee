#pragma once

#include <optional>
#include <string>
#include <vector>

namespace chirpjoint {

inline constexpr double kSpeedOfLight = 299'792'458.0;

inline constexpr double kmh_to_mps(double v) { return v / 3.6; }
inline constexpr double mps_to_kmh(double v) { return v * 3.6; }

/// Chirp waveform. Only the acquisition time T_c = N / f_s and the repetition
/// interval T_ri enter the signal model; dwell/set/reset are folded into T_ri.
struct WaveformConfig {
    double bandwidth_hz = 0.0;
    double carrier_hz = 0.0;
    double sample_rate_hz = 0.0;
    int fast_time_samples = 0;
    double chirp_slope_hz_per_s = 0.0;
    double chirp_repetition_interval_s = 0.0;

    /// Builds a config with the slope derived from B / T_c.
    static WaveformConfig make(double bandwidth_hz, double carrier_hz, double sample_rate_hz,
                               int fast_time_samples, double chirp_repetition_interval_s);

    double chirp_duration_s() const { return fast_time_samples / sample_rate_hz; }
    double wavelength_m() const { return kSpeedOfLight / carrier_hz; }
};

struct SequencePlan {
    int chirps_per_sequence = 0;
    /// T_l relative to the first sequence; the first entry is 0.
    std::vector<double> sequence_offsets_s;

    int num_sequences() const { return static_cast<int>(sequence_offsets_s.size()); }
};

/// Doppler-division multiplexing: transmitter k modulates its chirps with a
/// known slow-time frequency f_ddm,k.
struct DdmScheme {
    std::vector<double> ddm_freqs_hz;
    std::vector<double> tx_positions_m;

    int num_tx() const { return static_cast<int>(ddm_freqs_hz.size()); }

    /// f_ddm,k = k / (K_Tx T_ri), Tx positions k * spacing.
    static DdmScheme uniform(int num_tx, double chirp_repetition_interval_s, double tx_spacing_m);
};

struct RadarScenario {
    WaveformConfig waveform;
    SequencePlan plan;
    DdmScheme ddm;
    int num_rx = 1;
    /// Complex noise variance per fast-time sample.
    double noise_variance = 0.0;

    int num_sequences() const { return plan.num_sequences(); }
    int chirps() const { return plan.chirps_per_sequence; }
    int fast_time_samples() const { return waveform.fast_time_samples; }
    int num_tx() const { return ddm.num_tx(); }
    double tri() const { return waveform.chirp_repetition_interval_s; }
};

/// Two-sequence, four-transmitter automotive configuration used throughout the
/// benchmarks: M = 256, T_ri = 65.1 us, T_2 = 34 us, K_Tx = K_Rx = 4.
/// Carrier 76.5 GHz, B = 150 MHz, f_s = 20 MHz, N = 256 are defaults of this
/// project and can be overridden from a scenario file.
RadarScenario default_scenario();

struct RangeLimits {
    double delta_r_m;
    double r_max_m;
};

/// Range resolution c / 2B and maximum range c f_s T_c / 4B.
RangeLimits range_limits(const WaveformConfig& w);

/// Maximum unambiguous |v| of a single sequence: lambda / (4 K_Tx T_ri).
double unambiguous_velocity(const WaveformConfig& w, const DdmScheme& d);

/// v = f_d * lambda / 2.
double doppler_to_velocity(double doppler_hz, const WaveformConfig& w);
double velocity_to_doppler(double velocity_mps, const WaveformConfig& w);

/// Closed velocity interval in m/s.
struct VelocityInterval {
    double lo_mps;
    double hi_mps;

    static VelocityInterval from_kmh(double lo_kmh, double hi_kmh) {
        return {kmh_to_mps(lo_kmh), kmh_to_mps(hi_kmh)};
    }
    double width() const { return hi_mps - lo_mps; }
    bool contains(double v) const { return v >= lo_mps && v <= hi_mps; }
};

enum class Severity { Error, Warning };

struct Diagnostic {
    std::string field;
    std::string constraint;
    double observed;
    Severity severity;
};

/// Checks every configuration invariant. Errors make the scenario unusable;
/// warnings flag e.g. a requested velocity interval wider than the extended
/// unambiguous span.
std::vector<Diagnostic> validate_scenario(const RadarScenario& s,
                                          std::optional<VelocityInterval> requested = std::nullopt);

bool has_errors(const std::vector<Diagnostic>& diagnostics);

std::string format_diagnostics(const std::vector<Diagnostic>& diagnostics);

/// Throws InvalidArgument listing all error diagnostics, if any.
void require_valid(const RadarScenario& s);

} // namespace chirpjoint
