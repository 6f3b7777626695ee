// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// if any criterion fails.

#include "chirpjoint/ambiguity.hpp"
#include "chirpjoint/datacube_io.hpp"
#include "chirpjoint/hankel.hpp"
#include "chirpjoint/harness.hpp"
#include "chirpjoint/jdear.hpp"

#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

using namespace chirpjoint;
namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

std::string fmt_snr(const std::optional<double>& x) { return x ? fmt(*x) + " dB" : "none"; }

const CellResult& cell(const SweepResult& r, Method m, double snr) {
    for (const auto& c : r.cells) {
        if (c.method == m && c.snr_db == snr) return c;
    }
    throw std::runtime_error("missing cell");
}

void save(const SweepResult& r, const fs::path& dir, const std::string& name) {
    emit_results(r, dir / name);
}

// 1. Crossing of RMSE = 0.1 km/h on the coarse SNR grid.
Outcome criterion1(const fs::path& out) {
    SweepSpec spec;
    spec.snr_grid_db = {-10, -5, 0, 4, 8, 12, 20};
    spec.trials_per_cell = 100;
    spec.seed = 1;
    const auto r = run_sweep(spec, default_scenario());
    save(r, out, "accuracy.csv");
    const auto j = crossing_snr(r.cells, Method::Jdear, 0.1);
    const auto ref = crossing_snr(r.cells, Method::Reference, 0.1);
    Outcome o;
    o.pass = j && *j <= 2.0 && ref && *ref >= 6.0;
    o.detail = "crossing of 0.1 km/h: jdear " + fmt_snr(j) + " (need <= 2), reference " + fmt_snr(ref) +
               " (need >= 6)";
    return o;
}

// 2. High-SNR floor of the reference and the joint estimator below it.
Outcome criterion2(const fs::path& out) {
    SweepSpec spec;
    spec.snr_grid_db = {20, 30};
    spec.trials_per_cell = 100;
    spec.seed = 2;
    const auto r = run_sweep(spec, default_scenario());
    save(r, out, "floor.csv");
    const double ref20 = cell(r, Method::Reference, 20).rmse_kmh;
    const double ref30 = cell(r, Method::Reference, 30).rmse_kmh;
    const double j30 = cell(r, Method::Jdear, 30).rmse_kmh;
    auto in_band = [](double x) { return x >= 3e-3 && x <= 3e-2; };
    Outcome o;
    o.pass = in_band(ref20) && in_band(ref30) && j30 < ref30 && j30 < 3e-3;
    o.detail = "reference rmse " + fmt(ref20) + " / " + fmt(ref30) + " km/h at 20 / 30 dB (band [3e-3, 3e-2]); jdear " +
               fmt(j30) + " km/h at 30 dB (need < 3e-3 and < reference)";
    return o;
}

// 3. Velocities far outside the single-sequence interval.
Outcome criterion3(const fs::path& out) {
    SweepSpec spec;
    spec.snr_grid_db = {10};
    spec.include_noiseless = true;
    spec.velocity_lo_kmh = -200;
    spec.velocity_hi_kmh = 200;
    spec.trials_per_cell = 100;
    spec.methods = {Method::Jdear};
    spec.seed = 3;
    const auto r = run_sweep(spec, default_scenario());
    save(r, out, "ambiguity.csv");
    const auto& clean = cell(r, Method::Jdear, kInf);
    const auto& noisy = cell(r, Method::Jdear, 10);
    const bool clean_ok = clean.outlier_rate == 0.0 && clean.max_abs_error_kmh < 1e-6;
    Outcome o;
    o.pass = clean_ok && noisy.outlier_rate < 0.02 && noisy.rmse_kmh < 0.1;
    o.detail = "noiseless max error " + fmt(clean.max_abs_error_kmh) + " km/h (need < 1e-6 on every draw); 10 dB outliers " +
               fmt(100 * noisy.outlier_rate) + "% (need < 2%), rmse " + fmt(noisy.rmse_kmh) + " km/h (need < 0.1)";
    return o;
}

// 4. Two targets 0.25 km/h apart.
Outcome criterion4(const fs::path& out) {
    SweepSpec spec;
    spec.kind = SweepKind::Resolution;
    spec.snr_grid_db = {20};
    spec.fixed_second_target_kmh = 40.0;
    spec.separation_grid_kmh = {0.25};
    spec.trials_per_cell = 100;
    spec.resolve_tolerance_kmh = 0.15;
    spec.seed = 4;
    const auto r = run_sweep(spec, default_scenario());
    save(r, out, "resolution.csv");
    const double j = cell(r, Method::Jdear, 20).resolved_rate;
    const double ref = cell(r, Method::Reference, 20).resolved_rate;
    Outcome o;
    o.pass = j >= 0.9 && ref <= 0.2;
    o.detail = "resolved both targets: jdear " + fmt(100 * j) + "% (need >= 90%), reference " + fmt(100 * ref) +
               "% (need <= 20%)";
    return o;
}

// 5. Four DDM replicas against one at the same per-replica SNR.
Outcome criterion5(const fs::path& out) {
    SweepSpec spec;
    spec.snr_grid_db.clear();
    for (int snr = -14; snr <= 8; ++snr) spec.snr_grid_db.push_back(snr);
    spec.trials_per_cell = 100;
    spec.methods = {Method::Jdear};
    spec.snr_power = SnrPower::Replica;
    spec.seed = 5;
    const auto four = default_scenario();
    auto one = four;
    one.ddm = DdmScheme::uniform(1, one.tri(), 0.0);
    const auto r4 = run_sweep(spec, four);
    const auto r1 = run_sweep(spec, one);
    save(r4, out, "ddm_gain_k4.csv");
    save(r1, out, "ddm_gain_k1.csv");
    const auto c4 = crossing_snr(r4.cells, Method::Jdear, 0.1);
    const auto c1 = crossing_snr(r1.cells, Method::Jdear, 0.1);
    Outcome o;
    const double gain = (c4 && c1) ? *c1 - *c4 : std::numeric_limits<double>::quiet_NaN();
    o.pass = gain >= 5.0 && gain <= 7.0;
    o.detail = "crossing K=1 " + fmt_snr(c1) + ", K=4 " + fmt_snr(c4) + ", gain " + fmt(gain) + " dB (need 5..7)";
    return o;
}

// 6. Structural properties on noise-free data.
Outcome criterion6() {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::string> failed;
    auto check = [&](bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    };
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    auto random_matrix = [&](int r, int c) {
        Eigen::MatrixXcd x(r, c);
        for (auto& v : x.reshaped()) v = {g(rng), g(rng)};
        return x;
    };

    // Hankel structure.
    {
        Eigen::VectorXcd s = random_matrix(50, 1);
        const auto p = HankelParams::for_length(50);
        const auto h = build_hankel(s, p);
        bool ok = true;
        for (int i = 0; i < p.rows; ++i) {
            for (int j = 0; j < p.cols(); ++j) ok = ok && h(i, j) == s(i + j);
        }
        check(ok, "hankel structure");
    }

    auto s = default_scenario();
    s.noise_variance = 0.0;
    const auto p = HankelParams::for_length(s.chirps());
    std::vector<Target> targets(2);
    targets[0].range_m = targets[1].range_m = 60.0;
    targets[0].velocity_mps = kmh_to_mps(-123.4);
    targets[1].velocity_mps = kmh_to_mps(56.7);
    targets[0].dod_angle_rad = 0.3;
    targets[1].amplitude = {0.4, -0.8};
    const TargetSet set{targets};
    const auto cube = synthesize_cube(s, set, 1);
    const auto snap = compress_bin(cube, WindowKind::Hann, nearest_bin(targets[0], s.waveform));

    std::vector<double> phases;
    std::vector<int> ddm;
    for (const auto& t : targets) {
        for (int k = 0; k < 4; ++k) {
            phases.push_back(kTwoPi * (velocity_to_doppler(t.velocity_mps, s.waveform) + s.ddm.ddm_freqs_hz[k]) * s.tri());
            ddm.push_back(k);
        }
    }
    ManifoldModel model;
    model.scenario = std::make_shared<RadarScenario>(s);
    model.params = p;
    model.ddm_index = ddm;
    model.set_values(phases);

    // Rank of the noiseless block-Hankel matrix.
    const auto bh = stack_blocks(snap, p);
    const auto sub = estimate_subspace(bh, 8);
    check(sub.singular_values(8) / sub.singular_values(0) < 1e-8, "block-hankel rank P*K");

    // Projector: idempotent and self-adjoint (through the residual map).
    {
        auto unflatten = [](const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
            const Eigen::Index n = rows * cols;
            Eigen::MatrixXcd m(rows, cols);
            for (Eigen::Index i = 0; i < n; ++i) m.reshaped()(i) = {v(i), v(n + i)};
            return m;
        };
        const Eigen::Index rows = 2 * p.rows;
        const auto x = random_matrix(static_cast<int>(rows), 8);
        const auto y = random_matrix(static_cast<int>(rows), 8);
        const auto px = unflatten(snls_residual(model, x), rows, 8);
        const auto ppx = unflatten(snls_residual(model, px), rows, 8);
        const auto py = unflatten(snls_residual(model, y), rows, 8);
        check((ppx - px).norm() < 1e-10 * x.norm(), "projector idempotence");
        const cd lhs = (px.adjoint() * y).trace();
        const cd rhs = (x.adjoint() * py).trace();
        check(std::abs(lhs - rhs) < 1e-10 * x.norm() * y.norm(), "projector self-adjointness");
    }

    // Cost range, zero at truth, gauge invariance.
    {
        const double at_truth = snls_cost(model, sub.basis);
        check(at_truth >= 0.0 && at_truth < 1e-12, "snls_cost zero at truth");
        bool in_range = true;
        for (int trial = 0; trial < 20; ++trial) {
            ManifoldModel m = model;
            auto v = phases;
            for (auto& ph : v) ph += 0.3 * g(rng);
            m.set_values(v);
            const double c = snls_cost(m, oracle::orthonormal_basis(random_matrix(2 * p.rows, 8), 8));
            in_range = in_range && c >= 0.0 && c <= 8.0;
        }
        check(in_range, "snls_cost in [0, d]");
        const auto w = oracle::orthonormal_basis(random_matrix(8, 8), 8);
        ManifoldModel m = model;
        auto v = phases;
        v[3] += 0.01;
        m.set_values(v);
        check(std::abs(snls_cost(m, sub.basis) - snls_cost(m, sub.basis * w)) < 1e-12, "gauge invariance");
    }

    // Exhaustive cost minimization for one mode, K = 1, M = 32.
    {
        auto small = oracle::make_scenario(1, 32, 16, {0.0, 0.6});
        const double span_hz = 5.0 / small.tri();
        const auto sp = HankelParams::for_length(32);
        SolverSettings st;
        const double span_mps = doppler_to_velocity(span_hz, small.waveform);
        st.search_window = {-0.5 * span_mps, 0.5 * span_mps};
        bool ok = true;
        for (double fd : {-0.41 * span_hz, 0.123 * span_hz, 0.37 * span_hz}) {
            Target t;
            t.range_m = 20.0;
            t.velocity_mps = doppler_to_velocity(fd, small.waveform);
            const auto c = synthesize_cube(small, {{t}}, 1);
            const auto sn = compress_bin(c, WindowKind::Hann, nearest_bin(t, small.waveform));
            const auto basis = estimate_subspace(stack_blocks(sn, sp), 1).basis;
            auto cost = [&](double f) {
                return oracle::projection_cost(oracle::manifold(small, {kTwoPi * f * small.tri()}, {0}, sp.rows), basis);
            };
            const int grid = 50'000;
            const double step = span_hz / grid;
            double best_f = 0.0, best_c = kInf;
            for (int i = 0; i < grid; ++i) {
                const double f = -0.5 * span_hz + i * step;
                const double v = cost(f);
                if (v < best_c) {
                    best_c = v;
                    best_f = f;
                }
            }
            double a = best_f - step, b = best_f + step;
            const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
            for (int it = 0; it < 80; ++it) {
                const double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
                if (cost(x1) < cost(x2)) b = x2; else a = x1;
            }
            const auto r = solve(sn, st, 1);
            ok = ok && r.targets.size() == 1 && std::abs(r.targets[0].doppler_hz - 0.5 * (a + b)) < 1e-6 * span_hz;
        }
        check(ok, "grid-search oracle equivalence");
    }

    // Slow-time model of the compressed bin against the steering matrix.
    {
        auto on = oracle::make_scenario(4, 64, 64, {0.0, 34.0 / 65.1});
        Target t;
        t.velocity_mps = kmh_to_mps(-71.0);
        t.dod_angle_rad = 0.25;
        t.amplitude = {0.6, 0.3};
        const double fd = velocity_to_doppler(t.velocity_mps, on.waveform);
        t.range_m = (12.0 * on.waveform.sample_rate_hz / 64 - fd) * kSpeedOfLight / (2.0 * on.waveform.chirp_slope_hz_per_s);
        const auto c = synthesize_cube(on, {{t}}, 1);
        const auto sn = compress_bin(c, WindowKind::Rectangular, 12);
        ManifoldModel full;
        full.scenario = std::make_shared<RadarScenario>(on);
        full.params = HankelParams{on.chirps(), 0};
        full.ddm_index = {0, 1, 2, 3};
        std::vector<double> ph;
        Eigen::VectorXcd x(4);
        for (int k = 0; k < 4; ++k) {
            ph.push_back(kTwoPi * (fd + on.ddm.ddm_freqs_hz[k]) * on.tri());
            const double dod = on.waveform.carrier_hz * on.ddm.tx_positions_m[k] * std::sin(t.dod_angle_rad) / kSpeedOfLight;
            x(k) = t.amplitude * 64.0 * std::polar(1.0, kTwoPi * dod);
        }
        full.set_values(ph);
        const Eigen::VectorXcd model_s = build_manifold(full) * x;
        Eigen::VectorXcd data(2 * on.chirps());
        data << sn.vectors[0], sn.vectors[1];
        check((data - model_s).norm() < 1e-9 * data.norm(), "forward-model consistency");
    }

    // Rotating by +f_ddm leaves the K roots of unity of a static target.
    {
        std::vector<PhaseStep> group;
        for (int k = 0; k < 4; ++k) group.push_back({kTwoPi * s.ddm.ddm_freqs_hz[k] * s.tri(), false});
        check(std::abs(combine_ddm(group, s, RotationConvention::AsPrinted).combined_phasor) < 1e-12,
              "roots-of-unity null");
    }

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check(secs < 60.0, "runtime under 1 min");
    Outcome o;
    o.pass = failed.empty();
    o.detail = "9 properties in " + fmt(secs) + " s";
    for (const auto& f : failed) o.detail += "; failed: " + f;
    return o;
}

// 7. Datacube round trip and the two-target track sweep.
Outcome criterion7(const fs::path& out) {
    auto s = default_scenario();
    Target a, b;
    a.range_m = b.range_m = 80.0;
    a.velocity_mps = kmh_to_mps(10.0);
    b.velocity_mps = kmh_to_mps(12.3);
    b.amplitude = {0.0, 1.0};
    const auto cube = synthesize_cube(s, {{a, b}}, 7);
    store_cube(cube, out / "track_sample.cube");
    store_cube(load_cube(out / "track_sample.cube", s), out / "track_sample_copy.cube");
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const bool round_trip = slurp(out / "track_sample.cube") == slurp(out / "track_sample_copy.cube");

    SweepSpec spec;
    spec.kind = SweepKind::Track;
    spec.snr_grid_db = {30};
    spec.fixed_second_target_kmh = 10.0;
    for (int i = 0; i <= 80; ++i) spec.track_velocities_kmh.push_back(6.0 + 0.1 * i);
    spec.range_lo_m = spec.range_hi_m = 80.0;
    spec.trials_per_cell = 3;
    spec.known_order = false;
    spec.seed = 7;
    const auto r = run_sweep(spec, s);
    save(r, out, "track.csv");

    double j_max = 0.0, ref_max = 0.0, j_ss = 0.0, ref_ss = 0.0;
    int n = 0;
    for (const auto& c : r.cells) {
        if (c.method == Method::Jdear) {
            j_max = std::max(j_max, c.max_abs_error_kmh);
            j_ss += c.rmse_kmh * c.rmse_kmh;
            ++n;
        } else {
            ref_max = std::max(ref_max, c.max_abs_error_kmh);
            ref_ss += c.rmse_kmh * c.rmse_kmh;
        }
    }
    const double j_rmse = std::sqrt(j_ss / n), ref_rmse = std::sqrt(ref_ss / n);
    Outcome o;
    o.pass = round_trip && j_max < 0.2 && ref_rmse > 2.0 * j_rmse && ref_max > j_max;
    o.detail = std::string("cube round trip ") + (round_trip ? "bit-exact" : "DIFFERS") + "; swept target max error jdear " +
               fmt(j_max) + " km/h (need < 0.2), rmse jdear " + fmt(j_rmse) + " vs reference " + fmt(ref_rmse) +
               " km/h (reference max " + fmt(ref_max) + ")";
    return o;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance run"};
    std::string out_dir = "acceptance_out";
    std::vector<int> only;
    app.add_option("--out-dir", out_dir, "Directory for result CSVs");
    app.add_option("--only", only, "Run only these criteria");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(out_dir);
    const fs::path out(out_dir);

    const std::set<int> selected(only.begin(), only.end());
    bool all = true;
    for (int id = 1; id <= 7; ++id) {
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            switch (id) {
            case 1: o = criterion1(out); break;
            case 2: o = criterion2(out); break;
            case 3: o = criterion3(out); break;
            case 4: o = criterion4(out); break;
            case 5: o = criterion5(out); break;
            case 6: o = criterion6(); break;
            case 7: o = criterion7(out); break;
            }
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << "CRITERION " << id << ' ' << (o.pass ? "PASS" : "FAIL") << ": " << o.detail << " [" << fmt(secs)
                  << " s]" << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
