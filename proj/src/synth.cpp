#include "chirpjoint/synth.hpp"

#include "chirpjoint/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>

namespace chirpjoint {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// exp(j 2 pi x), reducing x to [-1/2, 1/2] first to keep the phase accurate.
cd cis_cycles(double cycles) {
    const double frac = cycles - std::round(cycles);
    return std::polar(1.0, kTwoPi * frac);
}

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double to_unit_open(std::uint64_t bits) {
    // (0, 1]: 53 random mantissa bits, shifted away from zero.
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

} // namespace

cd counter_normal(std::uint64_t seed, std::uint64_t counter) {
    const std::uint64_t h1 = splitmix(seed ^ splitmix(counter));
    const std::uint64_t h2 = splitmix(h1);
    const double u1 = to_unit_open(h1);
    const double u2 = to_unit_open(h2);
    const double r = std::sqrt(-std::log(u1));
    return std::polar(r, kTwoPi * u2);
}

std::vector<Diagnostic> validate_targets(const TargetSet& t, const RadarScenario& s) {
    std::vector<Diagnostic> out;
    for (std::size_t p = 0; p < t.targets.size(); ++p) {
        const auto& tg = t.targets[p];
        const std::string prefix = "targets[" + std::to_string(p) + "].";
        if (!(tg.range_m > 0)) out.push_back({prefix + "range_m", "> 0", tg.range_m, Severity::Error});
        if (!(std::abs(tg.dod_angle_rad) < std::numbers::pi / 2))
            out.push_back({prefix + "dod_angle_rad", "|angle| < pi/2", tg.dod_angle_rad, Severity::Error});
        if (tg.amplitude == cd{}) out.push_back({prefix + "amplitude", "!= 0", 0.0, Severity::Error});
    }

    // Slow-time phase steps (f_d + f_ddm,k) T_ri, in cycles modulo 1.
    const double tri = s.tri();
    std::vector<double> steps;
    for (const auto& tg : t.targets) {
        const double fd = velocity_to_doppler(tg.velocity_mps, s.waveform);
        for (double fk : s.ddm.ddm_freqs_hz) steps.push_back((fd + fk) * tri);
    }
    for (std::size_t a = 0; a < steps.size(); ++a) {
        for (std::size_t b = a + 1; b < steps.size(); ++b) {
            const double diff = steps[b] - steps[a];
            if (std::abs(diff - std::round(diff)) < 1e-9) {
                out.push_back({"targets", "distinct slow-time phase steps across (target, tx) pairs",
                               static_cast<double>(b), Severity::Warning});
            }
        }
    }
    return out;
}

RawDataCube::RawDataCube(std::shared_ptr<const RadarScenario> scenario, std::vector<cd> samples)
    : scenario_(std::move(scenario)),
      sequences_(scenario_->num_sequences()),
      chirps_(scenario_->chirps()),
      samples_per_chirp_(scenario_->fast_time_samples()),
      samples_(std::move(samples)) {
    const std::size_t expected = static_cast<std::size_t>(sequences_) * chirps_ * samples_per_chirp_;
    if (samples_.size() != expected) {
        throw InvalidArgument("RawDataCube: expected " + std::to_string(expected) + " samples, got " +
                              std::to_string(samples_.size()));
    }
}

double RangeBinSnapshot::aggregate_power() const {
    double total = 0.0;
    for (const auto& v : vectors) total += v.squaredNorm();
    return total;
}

RawDataCube synthesize_cube(const RadarScenario& s, const TargetSet& t, std::uint64_t seed,
                            const SynthOptions& options) {
    require_valid(s);
    const auto target_diags = validate_targets(t, s);
    if (has_errors(target_diags)) throw InvalidArgument("invalid targets:\n" + format_diagnostics(target_diags));

    const int L = s.num_sequences();
    const int M = s.chirps();
    const int N = s.fast_time_samples();
    const std::size_t total = static_cast<std::size_t>(L) * M * N;
    if (static_cast<double>(L) * M * N > static_cast<double>(options.max_samples)) {
        throw CapacityError("synthesize_cube: L*M*N = " + std::to_string(total) + " exceeds budget of " +
                            std::to_string(options.max_samples) + " samples");
    }

    const auto& w = s.waveform;
    const double tri = s.tri();
    const int P = static_cast<int>(t.targets.size());
    const int K = s.num_tx();

    // Fast-time tone per target (independent of m and l).
    std::vector<std::vector<cd>> fast(P, std::vector<cd>(N));
    std::vector<double> doppler(P);
    std::vector<std::vector<double>> dod_cycles(P, std::vector<double>(K));
    for (int p = 0; p < P; ++p) {
        const auto& tg = t.targets[p];
        doppler[p] = velocity_to_doppler(tg.velocity_mps, w);
        const double fb = beat_frequency_hz(tg, w);
        for (int n = 0; n < N; ++n) fast[p][n] = cis_cycles(fb * n / w.sample_rate_hz);
        for (int k = 0; k < K; ++k) {
            dod_cycles[p][k] = w.carrier_hz * s.ddm.tx_positions_m[k] * std::sin(tg.dod_angle_rad) / kSpeedOfLight;
        }
    }

    std::vector<cd> samples(total);
    const double sigma = std::sqrt(s.noise_variance);
    std::vector<cd> slow(P);
    for (int l = 0; l < L; ++l) {
        const double tl = s.plan.sequence_offsets_s[l];
        for (int m = 0; m < M; ++m) {
            for (int p = 0; p < P; ++p) {
                cd acc{};
                for (int k = 0; k < K; ++k) {
                    const double cycles = (doppler[p] + s.ddm.ddm_freqs_hz[k]) * m * tri + doppler[p] * tl +
                                          dod_cycles[p][k];
                    acc += cis_cycles(cycles);
                }
                slow[p] = t.targets[p].amplitude * acc;
            }
            const std::size_t base = (static_cast<std::size_t>(l) * M + m) * N;
            for (int n = 0; n < N; ++n) {
                cd v{};
                for (int p = 0; p < P; ++p) v += slow[p] * fast[p][n];
                if (sigma > 0) v += sigma * counter_normal(seed, base + n);
                samples[base + n] = v;
            }
        }
    }
    return RawDataCube(std::make_shared<const RadarScenario>(s), std::move(samples));
}

std::vector<double> make_window(WindowKind kind, int length) {
    std::vector<double> w(length, 1.0);
    if (kind == WindowKind::Hann && length > 1) {
        for (int n = 0; n < length; ++n) w[n] = 0.5 - 0.5 * std::cos(kTwoPi * n / (length - 1));
    }
    return w;
}

double window_noise_gain(WindowKind window, int length) {
    double g = 0.0;
    for (double v : make_window(window, length)) g += v * v;
    return g;
}

std::vector<RangeBinSnapshot> range_compress(const RawDataCube& c, WindowKind window) {
    const int L = c.sequences();
    const int M = c.chirps();
    const int N = c.samples_per_chirp();
    const auto win = make_window(window, N);

    std::vector<RangeBinSnapshot> bins(N);
    for (int n = 0; n < N; ++n) {
        bins[n].bin_index = n;
        bins[n].scenario = c.scenario_ptr();
        bins[n].vectors.assign(L, Eigen::VectorXcd::Zero(M));
    }

    Eigen::FFT<double> fft;
    std::vector<cd> in(N), out(N);
    for (int l = 0; l < L; ++l) {
        for (int m = 0; m < M; ++m) {
            const auto row = c.row(l, m);
            for (int n = 0; n < N; ++n) in[n] = row[n] * win[n];
            fft.fwd(out, in);
            for (int n = 0; n < N; ++n) bins[n].vectors[l](m) = out[n];
        }
    }
    return bins;
}

RangeBinSnapshot compress_bin(const RawDataCube& c, WindowKind window, int bin) {
    const int L = c.sequences();
    const int M = c.chirps();
    const int N = c.samples_per_chirp();
    if (bin < 0 || bin >= N) throw InvalidArgument("compress_bin: bin out of range");
    const auto win = make_window(window, N);
    std::vector<cd> kernel(N);
    for (int n = 0; n < N; ++n) {
        const long long idx = (static_cast<long long>(bin) * n) % N;
        kernel[n] = win[n] * std::polar(1.0, -kTwoPi * static_cast<double>(idx) / N);
    }

    RangeBinSnapshot snap;
    snap.bin_index = bin;
    snap.scenario = c.scenario_ptr();
    snap.vectors.assign(L, Eigen::VectorXcd::Zero(M));
    for (int l = 0; l < L; ++l) {
        for (int m = 0; m < M; ++m) {
            const auto row = c.row(l, m);
            cd acc{};
            for (int n = 0; n < N; ++n) acc += row[n] * kernel[n];
            snap.vectors[l](m) = acc;
        }
    }
    return snap;
}

const RangeBinSnapshot& select_detection_bin(std::span<const RangeBinSnapshot> bins) {
    if (bins.empty()) throw InvalidArgument("select_detection_bin: no bins");
    std::size_t best = 0;
    double best_power = bins[0].aggregate_power();
    for (std::size_t i = 1; i < bins.size(); ++i) {
        const double p = bins[i].aggregate_power();
        if (p > best_power || (p == best_power && bins[i].bin_index < bins[best].bin_index)) {
            best = i;
            best_power = p;
        }
    }
    return bins[best];
}

double beat_frequency_hz(const Target& t, const WaveformConfig& w) {
    return 2.0 * w.chirp_slope_hz_per_s * t.range_m / kSpeedOfLight + velocity_to_doppler(t.velocity_mps, w);
}

int nearest_bin(const Target& t, const WaveformConfig& w) {
    const int N = w.fast_time_samples;
    const long long b = std::llround(beat_frequency_hz(t, w) * N / w.sample_rate_hz);
    return static_cast<int>(((b % N) + N) % N);
}

double bin_gain(const Target& t, const WaveformConfig& w, WindowKind window, int bin) {
    const int N = w.fast_time_samples;
    const auto win = make_window(window, N);
    const double rel = beat_frequency_hz(t, w) / w.sample_rate_hz - static_cast<double>(bin) / N;
    cd acc{};
    for (int n = 0; n < N; ++n) acc += win[n] * cis_cycles(rel * n);
    return std::abs(acc);
}

} // namespace chirpjoint
