#include "chirpjoint/errors.hpp"
#include "chirpjoint/reference.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace chirpjoint;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kTri = 65.1e-6;

Eigen::VectorXcd tone(int m, double f, double phase = 0.0) {
    Eigen::VectorXcd v(m);
    for (int i = 0; i < m; ++i) v(i) = std::polar(1.0, kTwoPi * f * i * kTri + phase);
    return v;
}

RangeBinSnapshot snapshot_for(const RadarScenario& s, const Target& t) {
    const auto cube = synthesize_cube(s, {{t}}, 1);
    return compress_bin(cube, WindowKind::Hann, nearest_bin(t, s.waveform));
}

} // namespace

TEST(FftDoppler, OnBinToneIsExact) {
    const int m = 64;
    const double f = 5.0 / (m * kTri);
    for (auto w : {WindowKind::Rectangular, WindowKind::Hann}) {
        const auto e = fft_doppler(tone(m, f, 0.4), m, kTri, w);
        EXPECT_EQ(e.peak_bin, 5);
        EXPECT_NEAR(e.interpolated_frequency_hz, f, 1e-9 * f);
    }
}

TEST(FftDoppler, NegativeFrequenciesMapBelowZero) {
    const int m = 64;
    const double f = -7.0 / (m * kTri);
    EXPECT_NEAR(fft_doppler(tone(m, f), m, kTri).interpolated_frequency_hz, f, 1e-9 * std::abs(f));
}

TEST(FftDoppler, ZeroPaddedOffBinErrorBelowTwentiethOfABin) {
    const int m = 128;
    const int fft = 4 * m;
    const double bin = 1.0 / (fft * kTri);
    for (double frac : {0.1, 0.37, 0.5, 0.81}) {
        const double f = (17.0 + frac) / (m * kTri);
        const auto e = fft_doppler(tone(m, f), fft, kTri);
        EXPECT_LT(std::abs(e.interpolated_frequency_hz - f), 0.05 * bin) << frac;
    }
}

TEST(FftDoppler, InterpolationBiasShrinksWithPadding) {
    const int m = 128;
    const double f = 10.3 / (m * kTri);
    double previous = std::numeric_limits<double>::infinity();
    for (int factor : {1, 2, 4, 8}) {
        const double err = std::abs(fft_doppler(tone(m, f), factor * m, kTri).interpolated_frequency_hz - f);
        EXPECT_LT(err, previous) << "padding " << factor;
        EXPECT_GT(err, 0.0) << "padding " << factor;
        previous = err;
    }
}

TEST(FftDoppler, PeakPhaseIsCentreReferenced) {
    const int m = 64;
    const double f = 9.0 / (m * kTri);
    const double phase = 0.9;
    const auto e = fft_doppler(tone(m, f, phase), m, kTri, WindowKind::Rectangular);
    const double centre = phase + kTwoPi * f * kTri * 0.5 * (m - 1);
    EXPECT_NEAR(std::remainder(e.peak_phase_rad - centre, kTwoPi), 0.0, 1e-9);
}

TEST(FftDoppler, SubRayleighTonesMerge) {
    const int m = 64;
    const double f = 12.0 / (m * kTri);
    const Eigen::VectorXcd x = tone(m, f) + tone(m, f + 0.5 / (m * kTri), 1.0);
    // Without padding the Hann spectrum has a single maximum.
    EXPECT_THROW(fft_doppler_peaks(x, 2, m, kTri), DetectionError);
    const auto peaks = fft_doppler_peaks(x, 2, 4 * m, kTri);
    // The second strongest maximum is a sidelobe, not the second tone.
    EXPECT_GT(std::abs(peaks[1].interpolated_frequency_hz - peaks[0].interpolated_frequency_hz), 1.5 / (m * kTri));
}

TEST(FftDoppler, PeaksAreOrderedAndDistinct) {
    const int m = 64;
    const Eigen::VectorXcd x = tone(m, 3.0 / (m * kTri)) + 0.5 * tone(m, -20.0 / (m * kTri));
    const auto peaks = fft_doppler_peaks(x, 2, m, kTri);
    EXPECT_EQ(peaks[0].peak_bin, 3);
    EXPECT_EQ(peaks[1].peak_bin, m - 20);
    EXPECT_GT(peaks[0].peak_magnitude, peaks[1].peak_magnitude);
}

TEST(FftDoppler, Failures) {
    EXPECT_THROW(fft_doppler(Eigen::VectorXcd::Zero(32), 32, kTri), DetectionError);
    EXPECT_THROW(fft_doppler_peaks(Eigen::VectorXcd::Ones(32), 32, 32, kTri), DetectionError);
    EXPECT_THROW(fft_doppler(Eigen::VectorXcd::Ones(32), 16, kTri), InvalidArgument);
}

TEST(Unfolding, EnumeratesEveryHypothesisInTheWindow) {
    const auto s = default_scenario();
    const auto window = VelocityInterval::from_kmh(-300, 150);
    const double f_lo = velocity_to_doppler(window.lo_mps, s.waveform);
    const double f_hi = velocity_to_doppler(window.hi_mps, s.waveform);
    std::vector<FftDopplerEstimate> replica(2);
    replica[0].interpolated_frequency_hz = 2100.0;
    replica[0].peak_phase_rad = 0.3;
    replica[1].interpolated_frequency_hz = 2104.0;
    replica[1].peak_phase_rad = -2.0;
    const auto candidates = enumerate_unfoldings(replica, s, window);

    std::size_t expected = 0;
    for (int k = 0; k < s.num_tx(); ++k) {
        for (long long q = -100000; q <= 100000; ++q) {
            const double fd = 2100.0 - s.ddm.ddm_freqs_hz[k] + q / s.tri();
            if (fd >= f_lo && fd <= f_hi) ++expected;
        }
    }
    EXPECT_EQ(candidates.size(), expected);

    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
        const double fd = c.unfolded_frequencies_hz[0];
        EXPECT_GE(fd, f_lo);
        EXPECT_LE(fd, f_hi);
        // The second-sequence integer is the one closest to the hypothesis.
        const double dt = s.plan.sequence_offsets_s[1];
        const double turns = (replica[1].peak_phase_rad - replica[0].peak_phase_rad) / kTwoPi;
        for (long long q2 = c.integers[1] - 3; q2 <= c.integers[1] + 3; ++q2) {
            EXPECT_LE(std::abs((turns + c.integers[1]) / dt - fd), std::abs((turns + q2) / dt - fd) + 1e-9);
        }
        EXPECT_NEAR(c.spread_hz, std::abs(c.unfolded_frequencies_hz[1] - fd), 1e-9);
        best = std::min(best, c.spread_hz);
    }
    EXPECT_EQ(resolve_by_unfolding(replica, s, window).spread_hz, best);
}

TEST(Unfolding, InsideTheSingleSequenceSpanNeedsNoIntegers) {
    auto s = oracle::make_scenario(1, 256, 256, {0.0, 34.0 / 65.1});
    Target t;
    t.range_m = 50;
    t.velocity_mps = kmh_to_mps(5.0);
    const auto snap = snapshot_for(s, t);
    std::vector<FftDopplerEstimate> replica;
    for (const auto& v : snap.vectors) replica.push_back(fft_doppler(v, 256, s.tri()));
    const auto best = resolve_by_unfolding(replica, s, VelocityInterval::from_kmh(-300, 300));
    EXPECT_EQ(best.integers, (std::vector<long long>{0, 0}));
    EXPECT_EQ(best.ddm_index, 0);
}

TEST(Unfolding, Failures) {
    const auto s = default_scenario();
    std::vector<FftDopplerEstimate> one(1);
    EXPECT_THROW(resolve_by_unfolding(one, s, VelocityInterval::from_kmh(-300, 300)), InvalidArgument);
    std::vector<FftDopplerEstimate> two(2);
    two[0].interpolated_frequency_hz = 100.0;
    // Window narrower than one integer step that excludes every hypothesis.
    const double f0 = 100.0 + 0.5 / s.tri();
    const double v0 = doppler_to_velocity(f0, s.waveform);
    const double dv = doppler_to_velocity(0.01 / s.tri(), s.waveform);
    auto narrow = default_scenario();
    narrow.ddm = DdmScheme::uniform(1, narrow.tri(), 0.0);
    EXPECT_THROW(resolve_by_unfolding(two, narrow, {v0 - dv, v0 + dv}), DetectionError);
}

TEST(ReferencePipeline, OnGridVelocityIsExact) {
    auto s = default_scenario();
    s.noise_variance = 0.0;
    Target t;
    t.range_m = 60;
    // Three FFT bins plus one repetition rate.
    const double fd = 3.0 / (s.chirps() * s.tri()) + 1.0 / s.tri();
    t.velocity_mps = doppler_to_velocity(fd, s.waveform);
    t.dod_angle_rad = 0.4;
    const auto r = reference_pipeline(snapshot_for(s, t));
    ASSERT_EQ(r.targets.size(), 1u);
    EXPECT_NEAR(r.targets[0].velocity_mps, t.velocity_mps, 1e-9);
    EXPECT_TRUE(r.grouping_consistent);
}

TEST(ReferencePipeline, NoiselessErrorIsInterpolationLimited) {
    auto s = default_scenario();
    s.noise_variance = 0.0;
    for (double v : {-287.3, -100.0, 0.4, 100.0, 149.9}) {
        Target t;
        t.range_m = 60;
        t.velocity_mps = kmh_to_mps(v);
        const auto r = reference_pipeline(snapshot_for(s, t));
        ASSERT_EQ(r.targets.size(), 1u);
        EXPECT_NEAR(r.targets[0].velocity_kmh(), v, 0.05) << v;
    }
}

TEST(ReferencePipeline, NeedsEnoughPeaks) {
    auto s = default_scenario();
    s.plan.chirps_per_sequence = 8;
    s.noise_variance = 0.0;
    Target t;
    t.range_m = 60;
    t.velocity_mps = 1.0;
    EXPECT_THROW(reference_pipeline(snapshot_for(s, t), {}, 3), DetectionError);
}
