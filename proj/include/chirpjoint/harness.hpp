#pragma once

#include "chirpjoint/jdear.hpp"
#include "chirpjoint/reference.hpp"
#include "chirpjoint/scenario.hpp"
#include "chirpjoint/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace chirpjoint {

enum class Method { Jdear, Reference };
std::string method_name(Method m);
Method parse_method(const std::string& name);

enum class SweepKind { Accuracy, Resolution, Track };
std::string sweep_kind_name(SweepKind k);
SweepKind parse_sweep_kind(const std::string& name);

/// Where the SNR is measured: in the detection range bin after the windowed
/// range DFT, or per complex fast-time sample before it.
enum class SnrReference { Bin, Sample };

/// Signal power counted in the SNR: the sum over the K_Tx transmitter
/// replicas of a target, or one replica.
enum class SnrPower { Total, Replica };

/// Exit-code gate of the bench CLI. Applies to every matching row; unset
/// selectors match everything.
struct Threshold {
    Method method = Method::Jdear;
    std::optional<double> snr_db;
    std::optional<double> separation_kmh;
    std::optional<double> max_rmse_kmh;
    std::optional<double> max_outlier_rate;
    std::optional<double> min_resolved_rate;
};

struct SweepSpec {
    SweepKind kind = SweepKind::Accuracy;
    std::vector<double> snr_grid_db{-10, -5, 0, 4, 8, 12, 20};
    /// Adds a noise-free cell (reported with snr_db = inf).
    bool include_noiseless = false;
    double velocity_lo_kmh = -300.0;
    double velocity_hi_kmh = 150.0;
    int trials_per_cell = 100;
    /// Resolution: velocity of the fixed target. Track: the fixed target.
    std::optional<double> fixed_second_target_kmh;
    /// Resolution: offsets of the moving target from the fixed one.
    std::vector<double> separation_grid_kmh;
    /// Track: velocities of the swept target.
    std::vector<double> track_velocities_kmh;
    std::uint64_t seed = 1;
    std::vector<Method> methods{Method::Jdear, Method::Reference};
    SnrReference snr_reference = SnrReference::Bin;
    SnrPower snr_power = SnrPower::Total;
    WindowKind range_window = WindowKind::Hann;
    /// Target ranges are drawn uniformly from this interval (accuracy) or set
    /// to its midpoint (resolution and track).
    double range_lo_m = 20.0;
    double range_hi_m = 100.0;
    /// Half-width of the DOD angle draw.
    double max_dod_rad = 1.0471975511965976;
    /// Estimators search the velocity interval widened by this margin.
    double search_margin_kmh = 10.0;
    /// Give J-DEAR the true model order; otherwise it is detected (MDL).
    bool known_order = true;
    /// Resolution: a trial resolves both targets if each error is below this.
    double resolve_tolerance_kmh = 0.15;
    /// Velocity bins for the per-velocity RMSE spread of accuracy cells.
    int velocity_bins = 10;
    /// Worker threads; 0 uses the hardware concurrency.
    int workers = 0;
    SolverSettings solver;
    ReferenceSettings reference;
    std::vector<Threshold> thresholds;
};

/// Throws InvalidArgument when the sweep cannot run (empty methods or grids,
/// missing resolution fields, interval beyond the ambiguity span, ...).
void validate_spec(const SweepSpec& spec, const RadarScenario& s);

nlohmann::json spec_to_json(const SweepSpec& spec);
SweepSpec spec_from_json(const nlohmann::json& j);
SweepSpec load_spec(const std::filesystem::path& path);

/// Noise variance giving `snr_db` for a target of amplitude |alpha| in bin `bin`.
double noise_variance_for_snr(const RadarScenario& s, const Target& t, int bin, double snr_db, SnrReference ref,
                              SnrPower power, WindowKind window);

struct Cell {
    double snr_db = 0.0;
    /// Resolution: separation. Track: swept velocity. Otherwise NaN.
    double parameter_kmh = 0.0;
};

/// Outcome of one method on one trial.
struct MethodOutcome {
    Method method = Method::Jdear;
    bool failed = false;
    std::string failure;
    /// Per ground-truth target (matched estimate minus truth).
    std::vector<double> errors_kmh;
    std::vector<double> truths_kmh;
    std::vector<double> estimates_kmh;
    int iterations = 0;
    /// FNV-1a over the snapshot this method consumed.
    std::uint64_t snapshot_checksum = 0;
};

struct TrialOutcome {
    std::size_t cell = 0;
    int trial = 0;
    std::vector<MethodOutcome> methods;
};

std::vector<Cell> sweep_cells(const SweepSpec& spec);
/// Synthesizes one realization and runs every method on it.
TrialOutcome run_trial(const SweepSpec& spec, const RadarScenario& s, std::size_t cell, int trial);
std::uint64_t snapshot_checksum(const RangeBinSnapshot& snap);

struct CellResult {
    Method method = Method::Jdear;
    SweepKind kind = SweepKind::Accuracy;
    double snr_db = 0.0;
    double parameter_kmh = 0.0;
    int trials = 0;
    int valid = 0;
    double rmse_kmh = 0.0;
    double bias_kmh = 0.0;
    double std_kmh = 0.0;
    double outlier_rate = 0.0;
    double resolved_rate = 0.0;
    /// Per-target RMSE (resolution and track; target 1 is the moving one).
    double rmse_target1_kmh = 0.0;
    double rmse_target2_kmh = 0.0;
    /// Standard deviation of the RMSE across velocity bins.
    double rmse_spread_kmh = 0.0;
    double mean_iterations = 0.0;
    double mean_estimate_kmh = 0.0;
    double max_abs_error_kmh = 0.0;
    /// Zero separation: one effective target.
    bool degenerate = false;
};

struct SweepResult {
    SweepSpec spec;
    RadarScenario scenario;
    std::vector<CellResult> cells;
    double wall_time_s = 0.0;
    /// Trials in which the methods did not see identical snapshots (must be 0).
    int checksum_mismatches = 0;
};

SweepResult run_sweep(const SweepSpec& spec, const RadarScenario& s);
SweepResult run_accuracy_sweep(SweepSpec spec, const RadarScenario& s);
SweepResult run_resolution_sweep(SweepSpec spec, const RadarScenario& s);
SweepResult run_track_sweep(SweepSpec spec, const RadarScenario& s);

/// Reduces trial outcomes (in trial order) to one row per method and cell.
std::vector<CellResult> aggregate(const SweepSpec& spec, const RadarScenario& s,
                                  const std::vector<TrialOutcome>& trials);

/// Everything needed to repeat a run: scenario, spec, seed, code version and
/// the SNR convention with the range-DFT processing gain.
nlohmann::json run_manifest(const SweepSpec& spec, const RadarScenario& s);

/// CSV with a "# manifest <json>" header line and one row per method and cell.
void emit_results(const SweepResult& r, const std::filesystem::path& path);
std::string results_csv(const SweepResult& r);

/// Manifest embedded in a results file.
nlohmann::json read_manifest(const std::filesystem::path& csv_path);

/// Human-readable threshold violations; empty when every gate passes.
std::vector<std::string> check_thresholds(const SweepResult& r);

/// Lowest finite grid SNR whose cell has RMSE below `limit_kmh` (at least
/// one valid trial required). Empty if no cell qualifies.
std::optional<double> crossing_snr(const std::vector<CellResult>& cells, Method m, double limit_kmh);

} // namespace chirpjoint
