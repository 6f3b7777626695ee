#pragma once

#include "chirpjoint/jdear.hpp"
#include "chirpjoint/scenario.hpp"
#include "chirpjoint/synth.hpp"

#include <Eigen/Dense>

#include <vector>

namespace chirpjoint {

/// Spectral peak of one slow-time sequence.
struct FftDopplerEstimate {
    int peak_bin = 0;
    /// Peak frequency after 3-point parabolic interpolation on |X|, in
    /// [-1 / (2 T_ri), 1 / (2 T_ri)).
    double interpolated_frequency_hz = 0.0;
    /// Angle of X[peak_bin], referred to the middle chirp of the sequence so it
    /// does not depend on where the peak falls between bins.
    double peak_phase_rad = 0.0;
    int spectrum_length = 0;
    double peak_magnitude = 0.0;
};

/// Strongest peak of the windowed, zero-padded slow-time spectrum.
FftDopplerEstimate fft_doppler(const Eigen::VectorXcd& s, int fft_size, double tri,
                               WindowKind window = WindowKind::Hann);

/// The `count` strongest circular local maxima, strongest first.
/// Throws DetectionError for all-zero input or when fewer maxima exist.
std::vector<FftDopplerEstimate> fft_doppler_peaks(const Eigen::VectorXcd& s, int count, int fft_size, double tri,
                                                  WindowKind window = WindowKind::Hann);

struct UnfoldCandidate {
    /// q_1 for the first sequence, then the integer of each inter-sequence phase.
    std::vector<long long> integers;
    /// Transmitter hypothesized for this replica.
    int ddm_index = 0;
    /// f_d implied by sequence 1 and by each inter-sequence phase.
    std::vector<double> unfolded_frequencies_hz;
    double spread_hz = 0.0;
    /// Unfolded Doppler f_d (mean of the per-sequence spectral estimates).
    double doppler_hz = 0.0;
};

/// All unfolding hypotheses for one replica observed in every sequence:
/// f_d = f_1 - f_ddm,k + q_1 / T_ri inside `window`, each inter-sequence
/// phase unfolded to the integer closest to that hypothesis.
std::vector<UnfoldCandidate> enumerate_unfoldings(const std::vector<FftDopplerEstimate>& replica,
                                                  const RadarScenario& s, const VelocityInterval& window);

/// The candidate with the smallest spread. Throws InvalidArgument for L < 2
/// and DetectionError when no candidate lies inside the window.
UnfoldCandidate resolve_by_unfolding(const std::vector<FftDopplerEstimate>& replica, const RadarScenario& s,
                                     const VelocityInterval& window);

struct ReferenceSettings {
    /// Slow-time FFT length; 0 selects M (no zero padding).
    int fft_size = 0;
    WindowKind window = WindowKind::Hann;
    VelocityInterval search_window = VelocityInterval::from_kmh(-300.0, 300.0);
    RotationConvention rotation = RotationConvention::Compensating;
    /// 0 selects a quarter of 1 / (M T_ri).
    double grouping_tolerance_hz = 0.0;
};

/// Per-sequence FFT, K_Tx * P strongest peaks, cross-sequence peak
/// association, per-replica integer unfolding, replica grouping and DDM
/// combining. Throws DetectionError when too few distinct peaks are found.
VelocityReport reference_pipeline(const RangeBinSnapshot& snap, const ReferenceSettings& settings = {},
                                  int num_targets = 1);

} // namespace chirpjoint
