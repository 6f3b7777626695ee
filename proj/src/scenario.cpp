#include "chirpjoint/scenario.hpp"

#include "chirpjoint/ambiguity.hpp"
#include "chirpjoint/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace chirpjoint {

WaveformConfig WaveformConfig::make(double bandwidth_hz, double carrier_hz, double sample_rate_hz,
                                    int fast_time_samples, double chirp_repetition_interval_s) {
    WaveformConfig w;
    w.bandwidth_hz = bandwidth_hz;
    w.carrier_hz = carrier_hz;
    w.sample_rate_hz = sample_rate_hz;
    w.fast_time_samples = fast_time_samples;
    w.chirp_repetition_interval_s = chirp_repetition_interval_s;
    w.chirp_slope_hz_per_s = bandwidth_hz / w.chirp_duration_s();
    return w;
}

DdmScheme DdmScheme::uniform(int num_tx, double chirp_repetition_interval_s, double tx_spacing_m) {
    DdmScheme d;
    for (int k = 0; k < num_tx; ++k) {
        d.ddm_freqs_hz.push_back(k / (num_tx * chirp_repetition_interval_s));
        d.tx_positions_m.push_back(k * tx_spacing_m);
    }
    return d;
}

RadarScenario default_scenario() {
    constexpr double tri = 65.1e-6;
    constexpr int num_tx = 4;
    constexpr int num_rx = 4;
    RadarScenario s;
    s.waveform = WaveformConfig::make(150e6, 76.5e9, 20e6, 256, tri);
    s.plan.chirps_per_sequence = 256;
    s.plan.sequence_offsets_s = {0.0, 34e-6};
    // Tx spacing K_Rx * lambda / 2 gives a filled virtual array.
    s.ddm = DdmScheme::uniform(num_tx, tri, num_rx * s.waveform.wavelength_m() / 2.0);
    s.num_rx = num_rx;
    s.noise_variance = 1.0;
    return s;
}

RangeLimits range_limits(const WaveformConfig& w) {
    return {kSpeedOfLight / (2.0 * w.bandwidth_hz),
            kSpeedOfLight * w.sample_rate_hz * w.chirp_duration_s() / (4.0 * w.bandwidth_hz)};
}

double unambiguous_velocity(const WaveformConfig& w, const DdmScheme& d) {
    return w.wavelength_m() / (4.0 * d.num_tx() * w.chirp_repetition_interval_s);
}

double doppler_to_velocity(double doppler_hz, const WaveformConfig& w) {
    return doppler_hz * w.wavelength_m() / 2.0;
}

double velocity_to_doppler(double velocity_mps, const WaveformConfig& w) {
    return 2.0 * velocity_mps / w.wavelength_m();
}

namespace {

void check(std::vector<Diagnostic>& out, bool ok, std::string field, std::string constraint, double observed,
           Severity severity = Severity::Error) {
    if (!ok) out.push_back({std::move(field), std::move(constraint), observed, severity});
}

double wrap_unit(double x) { return x - std::round(x); }

} // namespace

std::vector<Diagnostic> validate_scenario(const RadarScenario& s, std::optional<VelocityInterval> requested) {
    std::vector<Diagnostic> out;
    const auto& w = s.waveform;
    check(out, w.bandwidth_hz > 0, "waveform.bandwidth_hz", "> 0", w.bandwidth_hz);
    check(out, w.carrier_hz > 0, "waveform.carrier_hz", "> 0", w.carrier_hz);
    check(out, w.sample_rate_hz > 0, "waveform.sample_rate_hz", "> 0", w.sample_rate_hz);
    check(out, w.fast_time_samples >= 2, "waveform.fast_time_samples", ">= 2", w.fast_time_samples);
    if (w.sample_rate_hz > 0 && w.fast_time_samples >= 2) {
        const double tc = w.chirp_duration_s();
        check(out, w.chirp_repetition_interval_s >= tc, "waveform.chirp_repetition_interval_s",
              ">= T_c = N / f_s", w.chirp_repetition_interval_s);
        const double slope = w.bandwidth_hz / tc;
        check(out, std::abs(w.chirp_slope_hz_per_s - slope) <= 1e-12 * std::abs(slope),
              "waveform.chirp_slope_hz_per_s", "== B / T_c (1e-12 relative)", w.chirp_slope_hz_per_s);
    }

    const auto& p = s.plan;
    check(out, p.num_sequences() >= 1, "plan.num_sequences", ">= 1", p.num_sequences());
    check(out, p.chirps_per_sequence >= 4, "plan.chirps_per_sequence", ">= 4", p.chirps_per_sequence);
    if (!p.sequence_offsets_s.empty()) {
        check(out, p.sequence_offsets_s[0] == 0.0, "plan.sequence_offsets_s[0]", "== 0", p.sequence_offsets_s[0]);
        for (std::size_t l = 1; l < p.sequence_offsets_s.size(); ++l) {
            check(out, p.sequence_offsets_s[l] > p.sequence_offsets_s[l - 1],
                  "plan.sequence_offsets_s[" + std::to_string(l) + "]", "strictly increasing and >= 0",
                  p.sequence_offsets_s[l]);
        }
    }

    const auto& d = s.ddm;
    check(out, d.num_tx() >= 1, "ddm.num_tx", ">= 1", d.num_tx());
    check(out, d.tx_positions_m.size() == d.ddm_freqs_hz.size(), "ddm.tx_positions_m", "length == num_tx",
          static_cast<double>(d.tx_positions_m.size()));
    if (!d.ddm_freqs_hz.empty()) {
        check(out, d.ddm_freqs_hz[0] == 0.0, "ddm.ddm_freqs_hz[0]", "== 0 (reference transmitter)",
              d.ddm_freqs_hz[0]);
        const double tri = w.chirp_repetition_interval_s;
        for (std::size_t a = 0; a < d.ddm_freqs_hz.size(); ++a) {
            for (std::size_t b = a + 1; b < d.ddm_freqs_hz.size(); ++b) {
                const double diff = wrap_unit((d.ddm_freqs_hz[b] - d.ddm_freqs_hz[a]) * tri);
                check(out, std::abs(diff) > 1e-9, "ddm.ddm_freqs_hz[" + std::to_string(b) + "]",
                      "phase step distinct modulo 2pi from tx " + std::to_string(a), d.ddm_freqs_hz[b]);
            }
        }
    }

    check(out, s.num_rx >= 1, "num_rx", ">= 1", s.num_rx);
    check(out, s.noise_variance >= 0, "noise_variance", ">= 0", s.noise_variance);

    if (requested && !has_errors(out) && p.num_sequences() >= 2) {
        const auto span = ambiguity_span(s);
        check(out, requested->width() <= span.extended_mps, "requested_velocity_interval",
              "width <= extended unambiguous span (m/s)", requested->width(), Severity::Warning);
    }
    return out;
}

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
    for (const auto& d : diagnostics) {
        if (d.severity == Severity::Error) return true;
    }
    return false;
}

std::string format_diagnostics(const std::vector<Diagnostic>& diagnostics) {
    std::ostringstream os;
    for (const auto& d : diagnostics) {
        os << (d.severity == Severity::Error ? "error: " : "warning: ") << d.field << " must be " << d.constraint
           << " (observed " << d.observed << ")\n";
    }
    return os.str();
}

void require_valid(const RadarScenario& s) {
    const auto diags = validate_scenario(s);
    if (has_errors(diags)) throw InvalidArgument("invalid scenario:\n" + format_diagnostics(diags));
}

} // namespace chirpjoint
