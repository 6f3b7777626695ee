#include "chirpjoint/config.hpp"
#include "chirpjoint/errors.hpp"
#include "chirpjoint/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace chirpjoint;
namespace fs = std::filesystem;

namespace {

SweepSpec small_accuracy() {
    SweepSpec spec;
    spec.snr_grid_db = {0.0, 20.0};
    spec.include_noiseless = true;
    spec.trials_per_cell = 6;
    spec.seed = 42;
    spec.workers = 1;
    return spec;
}

SweepSpec small_resolution() {
    SweepSpec spec;
    spec.kind = SweepKind::Resolution;
    spec.snr_grid_db = {20.0};
    spec.fixed_second_target_kmh = 40.0;
    spec.separation_grid_kmh = {0.0, 0.3, 2.0};
    spec.trials_per_cell = 3;
    spec.workers = 1;
    return spec;
}

const CellResult& find(const SweepResult& r, Method m, double snr) {
    for (const auto& c : r.cells) {
        if (c.method == m && (c.snr_db == snr)) return c;
    }
    throw std::runtime_error("cell not found");
}

} // namespace

TEST(Harness, CsvIdenticalAcrossWorkerCounts) {
    auto spec = small_accuracy();
    const auto s = default_scenario();
    spec.workers = 1;
    const auto one = run_sweep(spec, s);
    spec.workers = 3;
    const auto three = run_sweep(spec, s);
    EXPECT_EQ(results_csv(one), results_csv(three));
}

TEST(Harness, RowPerMethodAndCell) {
    const auto s = default_scenario();
    const auto acc = run_sweep(small_accuracy(), s);
    EXPECT_EQ(acc.cells.size(), 2u * 3u);
    const auto res = run_sweep(small_resolution(), s);
    EXPECT_EQ(res.cells.size(), 2u * 3u);
    std::size_t lines = 0;
    for (char ch : results_csv(res)) lines += ch == '\n';
    EXPECT_EQ(lines, 2u + res.cells.size());
}

TEST(Harness, InvalidSpecsFailBeforeRunning) {
    const auto s = default_scenario();
    auto spec = small_accuracy();
    spec.methods.clear();
    EXPECT_THROW(run_sweep(spec, s), InvalidArgument);
    spec = small_accuracy();
    spec.snr_grid_db.clear();
    spec.include_noiseless = false;
    EXPECT_THROW(run_sweep(spec, s), InvalidArgument);
    spec = small_accuracy();
    spec.velocity_lo_kmh = -20000;
    spec.velocity_hi_kmh = 20000;
    EXPECT_THROW(run_sweep(spec, s), InvalidArgument);
    spec = small_resolution();
    spec.fixed_second_target_kmh.reset();
    EXPECT_THROW(run_sweep(spec, s), InvalidArgument);
}

TEST(Harness, MethodsSeeTheSameSnapshot) {
    const auto spec = small_accuracy();
    const auto s = default_scenario();
    for (int trial = 0; trial < 3; ++trial) {
        const auto t = run_trial(spec, s, 0, trial);
        ASSERT_EQ(t.methods.size(), 2u);
        EXPECT_EQ(t.methods[0].snapshot_checksum, t.methods[1].snapshot_checksum);
        EXPECT_EQ(t.methods[0].truths_kmh, t.methods[1].truths_kmh);
    }
    EXPECT_EQ(run_sweep(spec, s).checksum_mismatches, 0);
}

TEST(Harness, TrialsAreReproducibleAndDistinct) {
    const auto spec = small_accuracy();
    const auto s = default_scenario();
    const auto a = run_trial(spec, s, 1, 2);
    const auto b = run_trial(spec, s, 1, 2);
    const auto c = run_trial(spec, s, 1, 3);
    EXPECT_EQ(a.methods[0].snapshot_checksum, b.methods[0].snapshot_checksum);
    EXPECT_EQ(a.methods[0].estimates_kmh, b.methods[0].estimates_kmh);
    EXPECT_NE(a.methods[0].snapshot_checksum, c.methods[0].snapshot_checksum);
}

TEST(Harness, RmseDecomposesIntoBiasAndSpread) {
    const auto r = run_sweep(small_accuracy(), default_scenario());
    for (const auto& c : r.cells) {
        if (c.valid == 0) continue;
        const double lhs = c.rmse_kmh * c.rmse_kmh;
        const double rhs = c.bias_kmh * c.bias_kmh + c.std_kmh * c.std_kmh;
        EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(lhs, 1e-30)) << method_name(c.method) << " " << c.snr_db;
    }
}

TEST(Harness, NoiselessCellIsExactForJointEstimator) {
    const auto r = run_sweep(small_accuracy(), default_scenario());
    const auto& c = find(r, Method::Jdear, std::numeric_limits<double>::infinity());
    EXPECT_EQ(c.valid, c.trials);
    EXPECT_LT(c.rmse_kmh, 1e-6);
}

TEST(Harness, ZeroSeparationIsDegenerate) {
    const auto spec = small_resolution();
    const auto s = default_scenario();
    const auto t = run_trial(spec, s, 0, 0);
    for (const auto& m : t.methods) {
        EXPECT_FALSE(m.failed) << m.failure;
        EXPECT_EQ(m.estimates_kmh.size(), 1u) << method_name(m.method);
    }
    const auto r = run_sweep(spec, s);
    for (const auto& c : r.cells) EXPECT_EQ(c.degenerate, c.parameter_kmh == 0.0);
}

TEST(Harness, RerunFromManifestReproducesCsv) {
    const auto dir = fs::temp_directory_path() / "chirpjoint_harness_rerun";
    fs::create_directories(dir);
    const auto first = run_sweep(small_resolution(), default_scenario());
    emit_results(first, dir / "a.csv");
    const auto manifest = read_manifest(dir / "a.csv");
    EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), small_resolution().seed);
    const auto again = run_sweep(spec_from_json(manifest.at("spec")), scenario_from_json(manifest.at("scenario")));
    EXPECT_EQ(results_csv(again), results_csv(first));
    fs::remove_all(dir);
}

TEST(Harness, UnwritableOutputIsAnError) {
    SweepResult r;
    r.scenario = default_scenario();
    EXPECT_THROW(emit_results(r, "/nonexistent-dir/x/results.csv"), InvalidArgument);
}

TEST(Harness, SpecJsonRoundTrip) {
    auto spec = small_resolution();
    spec.methods = {Method::Reference};
    spec.snr_reference = SnrReference::Sample;
    spec.snr_power = SnrPower::Replica;
    spec.known_order = false;
    spec.solver.jacobian = JacobianKind::VariableProjection;
    spec.reference.fft_size = 1024;
    spec.thresholds.push_back({Method::Jdear, 20.0, std::nullopt, 0.5, std::nullopt, 0.9});
    const auto j = spec_to_json(spec);
    EXPECT_EQ(spec_to_json(spec_from_json(j)), j);
}

TEST(Harness, TrackShorthand) {
    const auto spec = spec_from_json(nlohmann::json::parse(
        R"({"kind": "track", "fixed_second_target_kmh": 10, "track_sweep_kmh": {"from": 6, "to": 14, "step": 0.1}})"));
    ASSERT_EQ(spec.track_velocities_kmh.size(), 81u);
    EXPECT_NEAR(spec.track_velocities_kmh.front(), 6.0, 1e-12);
    EXPECT_NEAR(spec.track_velocities_kmh.back(), 14.0, 1e-9);
}

TEST(Harness, ThresholdViolationsAreReported) {
    auto spec = small_accuracy();
    spec.snr_grid_db = {0.0};
    spec.include_noiseless = false;
    spec.thresholds.push_back({Method::Reference, 0.0, std::nullopt, 1e-12, std::nullopt, std::nullopt});
    const auto r = run_sweep(spec, default_scenario());
    EXPECT_EQ(check_thresholds(r).size(), 1u);
    spec.thresholds = {{Method::Reference, 0.0, std::nullopt, 1e9, std::nullopt, std::nullopt}};
    EXPECT_TRUE(check_thresholds(run_sweep(spec, default_scenario())).empty());
}

TEST(Harness, SnrConventions) {
    const auto s = default_scenario();
    Target t;
    t.range_m = 50;
    t.amplitude = {0.0, 2.0};
    const int bin = nearest_bin(t, s.waveform);
    const double total = noise_variance_for_snr(s, t, bin, 10.0, SnrReference::Sample, SnrPower::Total, WindowKind::Hann);
    const double replica =
        noise_variance_for_snr(s, t, bin, 10.0, SnrReference::Sample, SnrPower::Replica, WindowKind::Hann);
    EXPECT_NEAR(total, 4.0 * 4.0 / 10.0, 1e-12);
    EXPECT_NEAR(total, 4.0 * replica, 1e-12);
    const double g = bin_gain(t, s.waveform, WindowKind::Hann, bin);
    const double in_bin =
        noise_variance_for_snr(s, t, bin, 10.0, SnrReference::Bin, SnrPower::Replica, WindowKind::Hann);
    EXPECT_NEAR(in_bin * window_noise_gain(WindowKind::Hann, 256) * 10.0, 4.0 * g * g, 1e-9 * g * g);
}

TEST(Harness, CrossingIsLowestQualifyingSnr) {
    std::vector<CellResult> cells(4);
    const double snr[] = {-5.0, 0.0, 5.0, std::numeric_limits<double>::infinity()};
    const double rmse[] = {0.3, 0.05, 0.2, 0.0};
    for (int i = 0; i < 4; ++i) {
        cells[i].snr_db = snr[i];
        cells[i].rmse_kmh = rmse[i];
        cells[i].valid = 10;
    }
    EXPECT_EQ(crossing_snr(cells, Method::Jdear, 0.1), 0.0);
    EXPECT_FALSE(crossing_snr(cells, Method::Reference, 0.1).has_value());
    cells[1].valid = 0;
    EXPECT_FALSE(crossing_snr(cells, Method::Jdear, 0.1).has_value());
}
