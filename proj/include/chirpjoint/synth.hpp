#pragma once

#include "chirpjoint/scenario.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace chirpjoint {

using cd = std::complex<double>;

struct Target {
    double range_m = 0.0;
    /// Signed radial velocity, positive = receding.
    double velocity_mps = 0.0;
    /// Direction of departure; only enters through the DDM transmit phases.
    double dod_angle_rad = 0.0;
    cd amplitude{1.0, 0.0};
};

struct TargetSet {
    std::vector<Target> targets;
};

/// Checks target invariants. Coincident slow-time phase steps across
/// (target, transmitter) pairs are reported as warnings: the model is then
/// not identifiable.
std::vector<Diagnostic> validate_targets(const TargetSet& t, const RadarScenario& s);

/// Complex samples indexed [l][m][n] (sequence, chirp, fast-time sample).
class RawDataCube {
public:
    RawDataCube(std::shared_ptr<const RadarScenario> scenario, std::vector<cd> samples);

    const RadarScenario& scenario() const { return *scenario_; }
    std::shared_ptr<const RadarScenario> scenario_ptr() const { return scenario_; }

    int sequences() const { return sequences_; }
    int chirps() const { return chirps_; }
    int samples_per_chirp() const { return samples_per_chirp_; }

    std::size_t index(int l, int m, int n) const {
        return (static_cast<std::size_t>(l) * chirps_ + m) * samples_per_chirp_ + n;
    }
    const cd& at(int l, int m, int n) const { return samples_[index(l, m, n)]; }
    cd& at(int l, int m, int n) { return samples_[index(l, m, n)]; }

    std::span<const cd> row(int l, int m) const {
        return {samples_.data() + index(l, m, 0), static_cast<std::size_t>(samples_per_chirp_)};
    }
    const std::vector<cd>& samples() const { return samples_; }

private:
    std::shared_ptr<const RadarScenario> scenario_;
    int sequences_;
    int chirps_;
    int samples_per_chirp_;
    std::vector<cd> samples_;
};

/// Slow-time vectors s_l (length M, one per sequence) of one range bin.
struct RangeBinSnapshot {
    int bin_index = 0;
    std::vector<Eigen::VectorXcd> vectors;
    std::shared_ptr<const RadarScenario> scenario;

    int sequences() const { return static_cast<int>(vectors.size()); }
    int chirps() const { return vectors.empty() ? 0 : static_cast<int>(vectors.front().size()); }
    double aggregate_power() const;
};

struct SynthOptions {
    /// Upper bound on L * M * N complex samples.
    std::size_t max_samples = std::size_t{1} << 27;
};

/// Beat-signal synthesis: sum over transmitters and targets of the FMCW
/// beat tone plus circular complex Gaussian noise of variance sigma^2.
/// Noise is drawn from a counter-based generator keyed on (seed, l, m, n), so
/// the cube is a pure function of its inputs.
RawDataCube synthesize_cube(const RadarScenario& s, const TargetSet& t, std::uint64_t seed,
                            const SynthOptions& options = {});

enum class WindowKind { Rectangular, Hann };

/// Symmetric window of the given length.
std::vector<double> make_window(WindowKind kind, int length);

/// Windowed length-N DFT over fast time for every (l, m); returns all N bins.
std::vector<RangeBinSnapshot> range_compress(const RawDataCube& c, WindowKind window);

/// Same as range_compress but for a single bin (direct DFT at that bin).
RangeBinSnapshot compress_bin(const RawDataCube& c, WindowKind window, int bin);

/// Bin with the largest sum_l ||s_l||^2; ties go to the lower bin index.
const RangeBinSnapshot& select_detection_bin(std::span<const RangeBinSnapshot> bins);

/// Fast-time beat frequency 2 eta R / c + f_d of a target.
double beat_frequency_hz(const Target& t, const WaveformConfig& w);

/// Bin nearest to the target's beat frequency.
int nearest_bin(const Target& t, const WaveformConfig& w);

/// |sum_n w_n exp(j 2 pi (f_b / f_s - bin / N) n)|: magnitude of one replica
/// of the target in the given range bin per unit amplitude.
double bin_gain(const Target& t, const WaveformConfig& w, WindowKind window, int bin);

/// sum_n w_n^2, the noise power gain of the range DFT.
double window_noise_gain(WindowKind window, int length);

/// Counter-based standard circular complex normal (E|z|^2 = 1).
cd counter_normal(std::uint64_t seed, std::uint64_t counter);

} // namespace chirpjoint
