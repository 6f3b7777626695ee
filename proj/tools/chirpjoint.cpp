// chirpjoint command line: synthesis, subspace inspection, estimation and
// Monte Carlo benchmarks.

#include "chirpjoint/ambiguity.hpp"
#include "chirpjoint/config.hpp"
#include "chirpjoint/datacube_io.hpp"
#include "chirpjoint/errors.hpp"
#include "chirpjoint/hankel.hpp"
#include "chirpjoint/harness.hpp"
#include "chirpjoint/jdear.hpp"
#include "chirpjoint/reference.hpp"
#include "chirpjoint/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace chirpjoint;

namespace {

RadarScenario scenario_or_default(const std::string& path) {
    return path.empty() ? default_scenario() : load_scenario(path);
}

/// Scenario for a cube file: dimensions and timing always come from the header.
RadarScenario scenario_for_cube(const std::string& cube, const std::string& scenario_path) {
    const CubeHeader h = read_cube_header(cube);
    return scenario_from_header(h, scenario_or_default(scenario_path));
}

RangeBinSnapshot pick_bin(const RawDataCube& cube, const std::string& bin, WindowKind window) {
    if (bin == "auto") {
        const auto bins = range_compress(cube, window);
        return select_detection_bin(bins);
    }
    std::size_t used = 0;
    const int n = std::stoi(bin, &used);
    if (used != bin.size() || n < 0 || n >= cube.samples_per_chirp()) {
        throw InvalidArgument("--bin must be 'auto' or an index in [0, " + std::to_string(cube.samples_per_chirp()) +
                              ")");
    }
    return compress_bin(cube, window, n);
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw InvalidArgument("cannot write " + path);
    return file;
}

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

int print_info(const RadarScenario& s) {
    const auto diags = validate_scenario(s);
    const auto limits = range_limits(s.waveform);
    std::cout << "range resolution [m]      " << num(limits.delta_r_m) << '\n'
              << "maximum range [m]         " << num(limits.r_max_m) << '\n'
              << "v_max single seq. [km/h]  " << num(mps_to_kmh(unambiguous_velocity(s.waveform, s.ddm))) << '\n'
              << "Rayleigh limit [km/h]     "
              << num(mps_to_kmh(doppler_to_velocity(1.0 / (s.chirps() * s.tri()), s.waveform))) << '\n';
    if (s.num_sequences() >= 2 && !has_errors(diags)) {
        const auto span = ambiguity_span(s);
        std::cout << "extended span [km/h]      " << num(mps_to_kmh(span.extended_mps)) << " (" << span.multiple
                  << " x " << num(mps_to_kmh(span.single_sequence_mps)) << ")\n";
    }
    if (!diags.empty()) std::cout << format_diagnostics(diags);
    return has_errors(diags) ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint multi-sequence Doppler estimation for DDM-MIMO FMCW radar"};
    app.set_version_flag("--version", std::string(CHIRPJOINT_VERSION));
    app.require_subcommand(1);

    // info
    std::string info_scenario;
    auto* info = app.add_subcommand("info", "Print derived limits and validate a scenario");
    info->add_option("--scenario", info_scenario, "Scenario JSON (default: built-in)");

    // synth
    std::string synth_scenario, synth_targets, synth_out;
    std::uint64_t synth_seed = 1;
    std::optional<double> synth_noise;
    auto* synth = app.add_subcommand("synth", "Synthesize a datacube file");
    synth->add_option("--scenario", synth_scenario, "Scenario JSON (default: built-in)");
    synth->add_option("--targets", synth_targets, "Target JSON")->required();
    synth->add_option("--seed", synth_seed, "Noise seed");
    synth->add_option("--noise-variance", synth_noise, "Override the scenario noise variance");
    synth->add_option("--out", synth_out, "Output datacube")->required();

    // svd
    std::string svd_cube, svd_scenario, svd_bin = "auto", svd_out;
    std::optional<int> svd_q;
    auto* svd = app.add_subcommand("svd", "Singular spectrum of the block-Hankel matrix of one range bin");
    svd->add_option("--cube", svd_cube, "Datacube file")->required();
    svd->add_option("--scenario", svd_scenario, "Scenario JSON for non-header fields");
    svd->add_option("--bin", svd_bin, "Range bin index or 'auto'");
    svd->add_option("--q", svd_q, "Hankel Q (default M/3)");
    svd->add_option("--out", svd_out, "CSV output (default stdout)");

    // estimate
    std::string est_cube, est_scenario, est_bin = "auto", est_method = "jdear", est_out;
    int est_targets = 0;
    std::vector<double> est_window{-300.0, 300.0};
    auto* estimate = app.add_subcommand("estimate", "Estimate target velocities in one range bin");
    estimate->add_option("--cube", est_cube, "Datacube file")->required();
    estimate->add_option("--scenario", est_scenario, "Scenario JSON for non-header fields");
    estimate->add_option("--bin", est_bin, "Range bin index or 'auto'");
    estimate->add_option("--method", est_method, "jdear or reference")->check(CLI::IsMember({"jdear", "reference"}));
    estimate->add_option("--targets", est_targets, "Number of targets (0: detect; reference default 1)");
    estimate->add_option("--window-kmh", est_window, "Velocity search window lo hi")->expected(2);
    estimate->add_option("--out", est_out, "CSV report (default stdout)");

    // bench
    std::string bench_scenario, bench_spec, bench_out, bench_from;
    int bench_workers = -1;
    auto* bench = app.add_subcommand("bench", "Monte Carlo sweeps");
    bench->require_subcommand(1);
    std::vector<std::pair<CLI::App*, SweepKind>> kinds;
    for (auto [name, kind] : {std::pair{"accuracy", SweepKind::Accuracy}, std::pair{"resolution", SweepKind::Resolution},
                              std::pair{"track", SweepKind::Track}}) {
        auto* sub = bench->add_subcommand(name, std::string(name) + " sweep");
        sub->add_option("--scenario", bench_scenario, "Scenario JSON (default: built-in)");
        sub->add_option("--spec", bench_spec, "Sweep spec JSON")->required();
        sub->add_option("--out", bench_out, "Results CSV")->required();
        sub->add_option("--workers", bench_workers, "Worker threads (overrides the sweep file)");
        kinds.emplace_back(sub, kind);
    }
    auto* rerun = bench->add_subcommand("rerun", "Repeat a run from the manifest of a results CSV");
    rerun->add_option("--from", bench_from, "Results CSV with manifest")->required();
    rerun->add_option("--out", bench_out, "Results CSV")->required();
    rerun->add_option("--workers", bench_workers, "Worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*info) return print_info(scenario_or_default(info_scenario));

        if (*synth) {
            RadarScenario s = scenario_or_default(synth_scenario);
            if (synth_noise) s.noise_variance = *synth_noise;
            const TargetSet t = load_targets(synth_targets);
            for (const auto& d : validate_targets(t, s)) {
                std::cerr << (d.severity == Severity::Error ? "error: " : "warning: ") << d.field << ": "
                          << d.constraint << '\n';
            }
            store_cube(synthesize_cube(s, t, synth_seed), synth_out);
            return 0;
        }

        if (*svd) {
            const RadarScenario s = scenario_for_cube(svd_cube, svd_scenario);
            const RawDataCube cube = load_cube(svd_cube, s);
            const RangeBinSnapshot snap = pick_bin(cube, svd_bin, WindowKind::Hann);
            const auto params = HankelParams::for_length(snap.chirps(), svd_q);
            const auto sub = estimate_subspace(stack_blocks(snap, params));
            std::ofstream file;
            std::ostream& os = open_out(svd_out, file);
            os << "# bin " << snap.bin_index << ", mdl order " << sub.model_order << '\n' << "index,singular_value\n";
            for (Eigen::Index i = 0; i < sub.singular_values.size(); ++i) {
                os << i << ',' << num(sub.singular_values(i)) << '\n';
            }
            return 0;
        }

        if (*estimate) {
            const RadarScenario s = scenario_for_cube(est_cube, est_scenario);
            const RawDataCube cube = load_cube(est_cube, s);
            const RangeBinSnapshot snap = pick_bin(cube, est_bin, WindowKind::Hann);
            const auto window = VelocityInterval::from_kmh(est_window[0], est_window[1]);
            VelocityReport report;
            if (est_method == "jdear") {
                SolverSettings st;
                st.search_window = window;
                std::optional<int> order;
                if (est_targets > 0) order = est_targets * s.num_tx();
                report = solve(snap, st, order);
            } else {
                ReferenceSettings rs;
                rs.search_window = window;
                report = reference_pipeline(snap, rs, std::max(1, est_targets));
            }
            std::ofstream file;
            std::ostream& os = open_out(est_out, file);
            os << "# method " << report.method << ", bin " << snap.bin_index << ", model order "
               << report.model_order << ", iterations " << report.iterations << '\n';
            os << "target_id,velocity_kmh,doppler_hz,residual,coherence,converged\n";
            for (std::size_t i = 0; i < report.targets.size(); ++i) {
                const auto& t = report.targets[i];
                os << i << ',' << num(t.velocity_kmh()) << ',' << num(t.doppler_hz) << ',' << num(t.residual_cost)
                   << ',' << num(t.coherence()) << ',' << (report.converged ? 1 : 0) << '\n';
            }
            if (!report.grouping_consistent || report.grouping_tie) {
                std::cerr << "warning: replica grouping " << (report.grouping_tie ? "is ambiguous" : "is inconsistent")
                          << '\n';
            }
            return 0;
        }

        if (*bench) {
            SweepSpec spec;
            RadarScenario s;
            if (*rerun) {
                const auto manifest = read_manifest(bench_from);
                spec = spec_from_json(manifest.at("spec"));
                s = scenario_from_json(manifest.at("scenario"));
            } else {
                spec = load_spec(bench_spec);
                s = scenario_or_default(bench_scenario);
                for (const auto& [sub, kind] : kinds) {
                    if (*sub) spec.kind = kind;
                }
            }
            if (bench_workers >= 0) spec.workers = bench_workers;
            const SweepResult r = run_sweep(spec, s);
            emit_results(r, bench_out);
            std::cerr << "wall time " << num(r.wall_time_s) << " s, " << r.cells.size() << " rows -> " << bench_out
                      << '\n';
            const auto violations = check_thresholds(r);
            for (const auto& v : violations) std::cerr << "threshold violated: " << v << '\n';
            return violations.empty() ? 0 : 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
