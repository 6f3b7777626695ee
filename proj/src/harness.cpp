#include "chirpjoint/harness.hpp"

#include "chirpjoint/ambiguity.hpp"
#include "chirpjoint/config.hpp"
#include "chirpjoint/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

namespace chirpjoint {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t cell, int trial) {
    return mix(mix(mix(seed) ^ static_cast<std::uint64_t>(cell)) ^ static_cast<std::uint64_t>(trial));
}

/// Compensated (Neumaier) summation.
class Sum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct Moments {
    double rmse = 0.0;
    double bias = 0.0;
    double std = 0.0;
};

Moments moments(const std::vector<double>& e) {
    if (e.empty()) return {kNaN, kNaN, kNaN};
    const double n = static_cast<double>(e.size());
    Sum sum, sq;
    for (double x : e) {
        sum.add(x);
        sq.add(x * x);
    }
    const double mean = sum.value() / n;
    Sum dev;
    for (double x : e) dev.add((x - mean) * (x - mean));
    return {std::sqrt(sq.value() / n), mean, std::sqrt(dev.value() / n)};
}

double rms(const std::vector<double>& e) {
    if (e.empty()) return kNaN;
    Sum sq;
    for (double x : e) sq.add(x * x);
    return std::sqrt(sq.value() / static_cast<double>(e.size()));
}

double span_kmh(const RadarScenario& s) {
    if (s.num_sequences() < 2) return mps_to_kmh(single_sequence_span_mps(s));
    return mps_to_kmh(ambiguity_span(s).extended_mps);
}

VelocityInterval search_window(const SweepSpec& spec) {
    return VelocityInterval::from_kmh(spec.velocity_lo_kmh - spec.search_margin_kmh,
                                      spec.velocity_hi_kmh + spec.search_margin_kmh);
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string_view window_name(WindowKind w) { return w == WindowKind::Hann ? "hann" : "rectangular"; }

WindowKind parse_window(const std::string& s) {
    if (s == "hann") return WindowKind::Hann;
    if (s == "rectangular" || s == "rect") return WindowKind::Rectangular;
    throw InvalidArgument("unknown window '" + s + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw InvalidArgument(std::string("sweep spec field '") + key + "': " + e.what());
        }
    }
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
    if (j.contains(key) && !j.at(key).is_null()) {
        T v{};
        read_opt(j, key, v);
        out = v;
    }
}

template <typename T>
json opt_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

/// Estimates matched to truths. One-to-one when `exclusive`, otherwise each
/// truth takes its nearest estimate. Unmatched truths get `penalty`.
std::vector<double> match_errors(const std::vector<double>& truths, const std::vector<double>& estimates,
                                 bool exclusive, double penalty) {
    const std::size_t n = truths.size();
    std::vector<double> errors(n, penalty);
    if (estimates.empty()) return errors;
    if (!exclusive || n == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = kInf;
            for (double e : estimates) {
                if (std::abs(e - truths[i]) < std::abs(best)) best = e - truths[i];
            }
            errors[i] = best;
        }
        return errors;
    }
    // Exhaustive one-to-one assignment (n is the number of targets, tiny).
    std::vector<int> slot(n, -1), best_slot;
    double best_cost = kInf;
    const std::size_t m = estimates.size();
    std::vector<char> used(m, 0);
    auto recurse = [&](auto&& self, std::size_t i, double cost) -> void {
        if (cost >= best_cost) return;
        if (i == n) {
            best_cost = cost;
            best_slot = slot;
            return;
        }
        bool any = false;
        for (std::size_t j = 0; j < m; ++j) {
            if (used[j]) continue;
            any = true;
            used[j] = 1;
            slot[i] = static_cast<int>(j);
            self(self, i + 1, cost + std::abs(estimates[j] - truths[i]));
            used[j] = 0;
        }
        if (!any || m < n) {
            slot[i] = -1;
            self(self, i + 1, cost + penalty);
        }
    };
    recurse(recurse, 0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (best_slot[i] >= 0) errors[i] = estimates[best_slot[i]] - truths[i];
    }
    return errors;
}

} // namespace

std::string method_name(Method m) { return m == Method::Jdear ? "jdear" : "reference"; }

Method parse_method(const std::string& name) {
    if (name == "jdear") return Method::Jdear;
    if (name == "reference") return Method::Reference;
    throw InvalidArgument("unknown method '" + name + "' (expected jdear or reference)");
}

std::string sweep_kind_name(SweepKind k) {
    switch (k) {
    case SweepKind::Accuracy: return "accuracy";
    case SweepKind::Resolution: return "resolution";
    case SweepKind::Track: return "track";
    }
    return "accuracy";
}

SweepKind parse_sweep_kind(const std::string& name) {
    if (name == "accuracy") return SweepKind::Accuracy;
    if (name == "resolution") return SweepKind::Resolution;
    if (name == "track") return SweepKind::Track;
    throw InvalidArgument("unknown sweep kind '" + name + "'");
}

void validate_spec(const SweepSpec& spec, const RadarScenario& s) {
    require_valid(s);
    if (spec.methods.empty()) throw InvalidArgument("sweep spec: no methods selected");
    if (spec.snr_grid_db.empty() && !spec.include_noiseless) throw InvalidArgument("sweep spec: empty SNR grid");
    if (spec.trials_per_cell < 1) throw InvalidArgument("sweep spec: trials_per_cell must be >= 1");
    if (!(spec.velocity_lo_kmh < spec.velocity_hi_kmh)) {
        throw InvalidArgument("sweep spec: velocity interval must satisfy lo < hi");
    }
    if (!(spec.range_lo_m > 0 && spec.range_lo_m <= spec.range_hi_m)) {
        throw InvalidArgument("sweep spec: range interval must satisfy 0 < lo <= hi");
    }
    if (spec.velocity_bins < 1) throw InvalidArgument("sweep spec: velocity_bins must be >= 1");
    if (spec.kind == SweepKind::Resolution) {
        if (!spec.fixed_second_target_kmh) throw InvalidArgument("resolution sweep: fixed_second_target_kmh missing");
        if (spec.separation_grid_kmh.empty()) throw InvalidArgument("resolution sweep: empty separation grid");
    }
    if (spec.kind == SweepKind::Track) {
        if (!spec.fixed_second_target_kmh) throw InvalidArgument("track sweep: fixed_second_target_kmh missing");
        if (spec.track_velocities_kmh.empty()) throw InvalidArgument("track sweep: empty track velocity list");
    }
    const auto window = search_window(spec);
    const double width = mps_to_kmh(window.width());
    const double span = span_kmh(s);
    if (width > span) {
        throw InvalidArgument("sweep spec: search interval of " + format_number(width) +
                              " km/h exceeds the unambiguous span of " + format_number(span) + " km/h");
    }
}

json spec_to_json(const SweepSpec& spec) {
    json methods = json::array();
    for (Method m : spec.methods) methods.push_back(method_name(m));
    json thresholds = json::array();
    for (const auto& t : spec.thresholds) {
        thresholds.push_back({{"method", method_name(t.method)},
                              {"snr_db", opt_json(t.snr_db)},
                              {"separation_kmh", opt_json(t.separation_kmh)},
                              {"max_rmse_kmh", opt_json(t.max_rmse_kmh)},
                              {"max_outlier_rate", opt_json(t.max_outlier_rate)},
                              {"min_resolved_rate", opt_json(t.min_resolved_rate)}});
    }
    const auto& so = spec.solver;
    json solver = {
        {"max_iterations", so.max_iterations},
        {"gradient_tolerance", so.gradient_tolerance},
        {"step_tolerance", so.step_tolerance},
        {"lm_damping_init", so.lm_damping_init},
        {"fd_step", so.fd_step},
        {"jacobian", so.jacobian == JacobianKind::CentralDifference ? "central" : "varpro"},
        {"hankel_q", opt_json(so.hankel_q)},
        {"order_criterion", so.order_criterion == OrderCriterion::Aic ? "aic" : "mdl"},
        {"grouping_tolerance_hz", so.grouping_tolerance_hz},
        {"rotation", so.rotation == RotationConvention::Compensating ? "compensating" : "as_printed"},
        {"hypothesis_passes", so.hypothesis_passes},
        {"research_rounds", so.research_rounds},
    };
    json reference = {{"fft_size", spec.reference.fft_size}, {"window", window_name(spec.reference.window)}};
    return {
        {"kind", sweep_kind_name(spec.kind)},
        {"snr_grid_db", spec.snr_grid_db},
        {"include_noiseless", spec.include_noiseless},
        {"velocity_interval_kmh", {spec.velocity_lo_kmh, spec.velocity_hi_kmh}},
        {"trials_per_cell", spec.trials_per_cell},
        {"fixed_second_target_kmh", opt_json(spec.fixed_second_target_kmh)},
        {"separation_grid_kmh", spec.separation_grid_kmh},
        {"track_velocities_kmh", spec.track_velocities_kmh},
        {"seed", spec.seed},
        {"methods", methods},
        {"snr_reference", spec.snr_reference == SnrReference::Bin ? "bin" : "sample"},
        {"snr_power", spec.snr_power == SnrPower::Total ? "total" : "replica"},
        {"range_window", window_name(spec.range_window)},
        {"range_interval_m", {spec.range_lo_m, spec.range_hi_m}},
        {"max_dod_rad", spec.max_dod_rad},
        {"search_margin_kmh", spec.search_margin_kmh},
        {"known_order", spec.known_order},
        {"resolve_tolerance_kmh", spec.resolve_tolerance_kmh},
        {"velocity_bins", spec.velocity_bins},
        {"workers", spec.workers},
        {"solver", solver},
        {"reference", reference},
        {"thresholds", thresholds},
    };
}

SweepSpec spec_from_json(const json& j) {
    if (!j.is_object()) throw InvalidArgument("sweep spec: expected a JSON object");
    SweepSpec spec;
    std::string text;
    if (j.contains("kind")) {
        read_opt(j, "kind", text);
        spec.kind = parse_sweep_kind(text);
    }
    read_opt(j, "snr_grid_db", spec.snr_grid_db);
    read_opt(j, "include_noiseless", spec.include_noiseless);
    if (j.contains("velocity_interval_kmh")) {
        std::vector<double> v;
        read_opt(j, "velocity_interval_kmh", v);
        if (v.size() != 2) throw InvalidArgument("sweep spec: velocity_interval_kmh must be [lo, hi]");
        spec.velocity_lo_kmh = v[0];
        spec.velocity_hi_kmh = v[1];
    }
    read_opt(j, "trials_per_cell", spec.trials_per_cell);
    read_opt(j, "fixed_second_target_kmh", spec.fixed_second_target_kmh);
    read_opt(j, "separation_grid_kmh", spec.separation_grid_kmh);
    read_opt(j, "track_velocities_kmh", spec.track_velocities_kmh);
    if (j.contains("track_sweep_kmh")) {
        // {"from": a, "to": b, "step": s} shorthand.
        const json& t = j.at("track_sweep_kmh");
        double from = 0, to = 0, step = 0;
        read_opt(t, "from", from);
        read_opt(t, "to", to);
        read_opt(t, "step", step);
        if (!(step > 0) || to < from) throw InvalidArgument("sweep spec: track_sweep_kmh needs step > 0, to >= from");
        const auto count = static_cast<long long>(std::floor((to - from) / step + 1e-9));
        spec.track_velocities_kmh.clear();
        for (long long i = 0; i <= count; ++i) spec.track_velocities_kmh.push_back(from + static_cast<double>(i) * step);
    }
    read_opt(j, "seed", spec.seed);
    if (j.contains("methods")) {
        std::vector<std::string> names;
        read_opt(j, "methods", names);
        spec.methods.clear();
        for (const auto& n : names) spec.methods.push_back(parse_method(n));
    }
    if (j.contains("snr_reference")) {
        read_opt(j, "snr_reference", text);
        if (text != "bin" && text != "sample") throw InvalidArgument("sweep spec: snr_reference must be bin or sample");
        spec.snr_reference = text == "bin" ? SnrReference::Bin : SnrReference::Sample;
    }
    if (j.contains("snr_power")) {
        read_opt(j, "snr_power", text);
        if (text != "total" && text != "replica") throw InvalidArgument("sweep spec: snr_power must be total or replica");
        spec.snr_power = text == "total" ? SnrPower::Total : SnrPower::Replica;
    }
    if (j.contains("range_window")) {
        read_opt(j, "range_window", text);
        spec.range_window = parse_window(text);
    }
    if (j.contains("range_interval_m")) {
        std::vector<double> v;
        read_opt(j, "range_interval_m", v);
        if (v.size() != 2) throw InvalidArgument("sweep spec: range_interval_m must be [lo, hi]");
        spec.range_lo_m = v[0];
        spec.range_hi_m = v[1];
    }
    read_opt(j, "max_dod_rad", spec.max_dod_rad);
    read_opt(j, "search_margin_kmh", spec.search_margin_kmh);
    read_opt(j, "known_order", spec.known_order);
    read_opt(j, "resolve_tolerance_kmh", spec.resolve_tolerance_kmh);
    read_opt(j, "velocity_bins", spec.velocity_bins);
    read_opt(j, "workers", spec.workers);

    if (j.contains("solver")) {
        const json& so = j.at("solver");
        auto& st = spec.solver;
        read_opt(so, "max_iterations", st.max_iterations);
        read_opt(so, "gradient_tolerance", st.gradient_tolerance);
        read_opt(so, "step_tolerance", st.step_tolerance);
        read_opt(so, "lm_damping_init", st.lm_damping_init);
        read_opt(so, "fd_step", st.fd_step);
        if (so.contains("jacobian")) {
            read_opt(so, "jacobian", text);
            if (text != "central" && text != "varpro") throw InvalidArgument("solver.jacobian must be central or varpro");
            st.jacobian = text == "central" ? JacobianKind::CentralDifference : JacobianKind::VariableProjection;
        }
        read_opt(so, "hankel_q", st.hankel_q);
        if (so.contains("order_criterion")) {
            read_opt(so, "order_criterion", text);
            if (text != "mdl" && text != "aic") throw InvalidArgument("solver.order_criterion must be mdl or aic");
            st.order_criterion = text == "mdl" ? OrderCriterion::Mdl : OrderCriterion::Aic;
        }
        read_opt(so, "grouping_tolerance_hz", st.grouping_tolerance_hz);
        if (so.contains("rotation")) {
            read_opt(so, "rotation", text);
            if (text != "compensating" && text != "as_printed") {
                throw InvalidArgument("solver.rotation must be compensating or as_printed");
            }
            st.rotation = text == "compensating" ? RotationConvention::Compensating : RotationConvention::AsPrinted;
        }
        read_opt(so, "hypothesis_passes", st.hypothesis_passes);
        read_opt(so, "research_rounds", st.research_rounds);
        if (!(st.gradient_tolerance > 0 && st.step_tolerance > 0 && st.lm_damping_init > 0 && st.fd_step > 0)) {
            throw InvalidArgument("solver: tolerances, damping and fd_step must be > 0");
        }
    }
    if (j.contains("reference")) {
        const json& r = j.at("reference");
        read_opt(r, "fft_size", spec.reference.fft_size);
        if (r.contains("window")) {
            read_opt(r, "window", text);
            spec.reference.window = parse_window(text);
        }
    }
    if (j.contains("thresholds")) {
        for (const json& t : j.at("thresholds")) {
            Threshold th;
            read_opt(t, "method", text);
            th.method = parse_method(text);
            read_opt(t, "snr_db", th.snr_db);
            read_opt(t, "separation_kmh", th.separation_kmh);
            read_opt(t, "max_rmse_kmh", th.max_rmse_kmh);
            read_opt(t, "max_outlier_rate", th.max_outlier_rate);
            read_opt(t, "min_resolved_rate", th.min_resolved_rate);
            spec.thresholds.push_back(th);
        }
    }
    return spec;
}

SweepSpec load_spec(const std::filesystem::path& path) {
    try {
        return spec_from_json(read_json_file(path));
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

double noise_variance_for_snr(const RadarScenario& s, const Target& t, int bin, double snr_db, SnrReference ref,
                              SnrPower power, WindowKind window) {
    const double ratio = std::pow(10.0, snr_db / 10.0);
    double signal = std::norm(t.amplitude);
    if (power == SnrPower::Total) signal *= s.num_tx();
    if (ref == SnrReference::Sample) return signal / ratio;
    const double gain = bin_gain(t, s.waveform, window, bin);
    return signal * gain * gain / (ratio * window_noise_gain(window, s.fast_time_samples()));
}

std::vector<Cell> sweep_cells(const SweepSpec& spec) {
    std::vector<double> snrs = spec.snr_grid_db;
    if (spec.include_noiseless) snrs.push_back(kInf);
    std::vector<Cell> cells;
    switch (spec.kind) {
    case SweepKind::Accuracy:
        for (double snr : snrs) cells.push_back({snr, kNaN});
        break;
    case SweepKind::Resolution:
        for (double sep : spec.separation_grid_kmh) {
            for (double snr : snrs) cells.push_back({snr, sep});
        }
        break;
    case SweepKind::Track:
        for (double snr : snrs) {
            for (double v : spec.track_velocities_kmh) cells.push_back({snr, v});
        }
        break;
    }
    return cells;
}

std::uint64_t snapshot_checksum(const RangeBinSnapshot& snap) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    feed(&snap.bin_index, sizeof snap.bin_index);
    for (const auto& v : snap.vectors) feed(v.data(), sizeof(cd) * static_cast<std::size_t>(v.size()));
    return h;
}

TrialOutcome run_trial(const SweepSpec& spec, const RadarScenario& base, std::size_t cell_index, int trial) {
    const auto cells = sweep_cells(spec);
    const Cell& cell = cells.at(cell_index);
    const std::uint64_t seed = trial_seed(spec.seed, cell_index, trial);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    auto random_target = [&](double v_kmh, double range_m) {
        Target t;
        t.range_m = range_m;
        t.velocity_mps = kmh_to_mps(v_kmh);
        t.amplitude = std::polar(1.0, uniform(0.0, 2.0 * std::numbers::pi));
        t.dod_angle_rad = uniform(-spec.max_dod_rad, spec.max_dod_rad);
        return t;
    };

    TargetSet targets;
    bool degenerate = false;
    if (spec.kind == SweepKind::Accuracy) {
        const double v = uniform(spec.velocity_lo_kmh, spec.velocity_hi_kmh);
        const double r = uniform(spec.range_lo_m, spec.range_hi_m);
        targets.targets.push_back(random_target(v, r));
    } else {
        const double r = 0.5 * (spec.range_lo_m + spec.range_hi_m);
        const double fixed = *spec.fixed_second_target_kmh;
        const double moving = spec.kind == SweepKind::Resolution ? fixed + cell.parameter_kmh : cell.parameter_kmh;
        targets.targets.push_back(random_target(moving, r));
        targets.targets.push_back(random_target(fixed, r));
        degenerate = moving == fixed;
    }

    auto scenario = std::make_shared<RadarScenario>(base);
    const Target& lead = targets.targets.front();
    const int bin = nearest_bin(lead, scenario->waveform);
    scenario->noise_variance =
        std::isinf(cell.snr_db)
            ? 0.0
            : noise_variance_for_snr(*scenario, lead, bin, cell.snr_db, spec.snr_reference, spec.snr_power,
                                     spec.range_window);
    const RawDataCube cube = synthesize_cube(*scenario, targets, seed);
    const RangeBinSnapshot snap = compress_bin(cube, spec.range_window, bin);

    std::vector<double> truths;
    for (const auto& t : targets.targets) truths.push_back(mps_to_kmh(t.velocity_mps));
    const int num_targets = degenerate ? 1 : static_cast<int>(targets.targets.size());
    const double penalty = spec.velocity_hi_kmh - spec.velocity_lo_kmh;
    const bool exclusive = spec.kind == SweepKind::Resolution && !degenerate;

    TrialOutcome out;
    out.cell = cell_index;
    out.trial = trial;
    for (Method m : spec.methods) {
        MethodOutcome mo;
        mo.method = m;
        mo.truths_kmh = truths;
        mo.snapshot_checksum = snapshot_checksum(snap);
        try {
            VelocityReport report;
            if (m == Method::Jdear) {
                SolverSettings st = spec.solver;
                st.search_window = search_window(spec);
                std::optional<int> order;
                if (spec.known_order && !degenerate) order = num_targets * base.num_tx();
                report = solve(snap, st, order);
            } else {
                ReferenceSettings rs = spec.reference;
                rs.search_window = search_window(spec);
                report = reference_pipeline(snap, rs, num_targets);
            }
            mo.iterations = report.iterations;
            for (const auto& t : report.targets) mo.estimates_kmh.push_back(t.velocity_kmh());
            mo.errors_kmh = match_errors(truths, mo.estimates_kmh, exclusive, penalty);
        } catch (const Error& e) {
            mo.failed = true;
            mo.failure = e.what();
            mo.errors_kmh.assign(truths.size(), penalty);
        }
        out.methods.push_back(std::move(mo));
    }
    return out;
}

std::vector<CellResult> aggregate(const SweepSpec& spec, const RadarScenario& s, const std::vector<TrialOutcome>& trials) {
    const auto cells = sweep_cells(spec);
    const double gross = 0.1 * span_kmh(s);
    std::vector<CellResult> out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
            CellResult r;
            r.method = spec.methods[mi];
            r.kind = spec.kind;
            r.snr_db = cells[c].snr_db;
            r.parameter_kmh = cells[c].parameter_kmh;
            r.degenerate = spec.kind == SweepKind::Resolution && cells[c].parameter_kmh == 0.0;

            std::vector<double> pooled, first, second, truth_of_first, estimates;
            int outliers = 0, resolved = 0, completed = 0;
            Sum iterations;
            double max_abs = 0.0;
            for (const auto& t : trials) {
                if (t.cell != c) continue;
                const MethodOutcome& mo = t.methods[mi];
                ++r.trials;
                if (!mo.failed) {
                    ++completed;
                    iterations.add(mo.iterations);
                }
                if (spec.kind == SweepKind::Accuracy) {
                    const double e = mo.errors_kmh.front();
                    if (mo.failed || !(std::abs(e) <= gross)) {
                        ++outliers;
                        continue;
                    }
                    pooled.push_back(e);
                    truth_of_first.push_back(mo.truths_kmh.front());
                    estimates.push_back(mo.truths_kmh.front() + e);
                    max_abs = std::max(max_abs, std::abs(e));
                    continue;
                }
                if (mo.failed) ++outliers;
                bool all_close = !mo.failed;
                for (double e : mo.errors_kmh) all_close = all_close && std::abs(e) < spec.resolve_tolerance_kmh;
                if (all_close) ++resolved;
                first.push_back(mo.errors_kmh[0]);
                second.push_back(mo.errors_kmh[1]);
                max_abs = std::max(max_abs, std::abs(mo.errors_kmh[0]));
                estimates.push_back(mo.truths_kmh[0] + mo.errors_kmh[0]);
                if (spec.kind == SweepKind::Resolution) {
                    pooled.push_back(mo.errors_kmh[0]);
                    pooled.push_back(mo.errors_kmh[1]);
                } else {
                    pooled.push_back(mo.errors_kmh[0]);
                }
            }
            r.valid = spec.kind == SweepKind::Accuracy ? static_cast<int>(pooled.size()) : completed;
            const Moments mom = moments(pooled);
            r.rmse_kmh = mom.rmse;
            r.bias_kmh = mom.bias;
            r.std_kmh = mom.std;
            r.outlier_rate = r.trials ? static_cast<double>(outliers) / r.trials : 0.0;
            r.resolved_rate = r.trials ? static_cast<double>(resolved) / r.trials : 0.0;
            r.mean_iterations = completed ? iterations.value() / completed : 0.0;
            r.max_abs_error_kmh = max_abs;
            if (!estimates.empty()) {
                Sum es;
                for (double e : estimates) es.add(e);
                r.mean_estimate_kmh = es.value() / static_cast<double>(estimates.size());
            } else {
                r.mean_estimate_kmh = kNaN;
            }
            if (spec.kind == SweepKind::Accuracy) {
                r.rmse_target1_kmh = r.rmse_kmh;
                r.rmse_target2_kmh = kNaN;
                // RMSE per velocity bin, then its spread over the bins.
                const int nb = spec.velocity_bins;
                std::vector<std::vector<double>> bins(nb);
                const double width = (spec.velocity_hi_kmh - spec.velocity_lo_kmh) / nb;
                for (std::size_t i = 0; i < pooled.size(); ++i) {
                    int b = static_cast<int>((truth_of_first[i] - spec.velocity_lo_kmh) / width);
                    bins[std::clamp(b, 0, nb - 1)].push_back(pooled[i]);
                }
                std::vector<double> per_bin;
                for (const auto& b : bins) {
                    if (!b.empty()) per_bin.push_back(rms(b));
                }
                r.rmse_spread_kmh = per_bin.empty() ? kNaN : moments(per_bin).std;
            } else {
                r.rmse_target1_kmh = rms(first);
                r.rmse_target2_kmh = rms(second);
                r.rmse_spread_kmh = kNaN;
            }
            out.push_back(r);
        }
    }
    return out;
}

SweepResult run_sweep(const SweepSpec& spec, const RadarScenario& s) {
    validate_spec(spec, s);
    const auto start = std::chrono::steady_clock::now();
    const auto cells = sweep_cells(spec);
    const std::size_t jobs = cells.size() * static_cast<std::size_t>(spec.trials_per_cell);
    std::vector<TrialOutcome> outcomes(jobs);

    unsigned workers = spec.workers > 0 ? static_cast<unsigned>(spec.workers) : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(jobs, 1))));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](unsigned id) {
        try {
            for (std::size_t j = next++; j < jobs; j = next++) {
                outcomes[j] = run_trial(spec, s, j / spec.trials_per_cell, static_cast<int>(j % spec.trials_per_cell));
            }
        } catch (...) {
            errors[id] = std::current_exception();
            next = jobs;
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work, w);
    work(0);
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    SweepResult result;
    result.spec = spec;
    result.scenario = s;
    for (const auto& t : outcomes) {
        for (const auto& m : t.methods) {
            if (m.snapshot_checksum != t.methods.front().snapshot_checksum) {
                ++result.checksum_mismatches;
                break;
            }
        }
    }
    result.cells = aggregate(spec, s, outcomes);
    result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

SweepResult run_accuracy_sweep(SweepSpec spec, const RadarScenario& s) {
    spec.kind = SweepKind::Accuracy;
    return run_sweep(spec, s);
}

SweepResult run_resolution_sweep(SweepSpec spec, const RadarScenario& s) {
    spec.kind = SweepKind::Resolution;
    return run_sweep(spec, s);
}

SweepResult run_track_sweep(SweepSpec spec, const RadarScenario& s) {
    spec.kind = SweepKind::Track;
    return run_sweep(spec, s);
}

json run_manifest(const SweepSpec& spec, const RadarScenario& s) {
    const auto w = make_window(spec.range_window, s.fast_time_samples());
    double sum = 0.0, sq = 0.0;
    for (double v : w) {
        sum += v;
        sq += v * v;
    }
    json m = {
        {"format", "chirpjoint-results"},
        {"code_version", CHIRPJOINT_VERSION},
        {"seed", spec.seed},
        {"scenario", scenario_to_json(s)},
        {"spec", [&] {
             // The worker count does not change results.
             SweepSpec copy = spec;
             copy.workers = 0;
             return spec_to_json(copy);
         }()},
        {"snr_convention",
         {{"reference", spec.snr_reference == SnrReference::Bin ? "bin" : "sample"},
          {"power", spec.snr_power == SnrPower::Total ? "total" : "replica"},
          {"range_dft_gain_db", 10.0 * std::log10(sum * sum / sq)}}},
        {"single_sequence_span_kmh", mps_to_kmh(single_sequence_span_mps(s))},
    };
    if (s.num_sequences() >= 2) m["ambiguity_span_kmh"] = span_kmh(s);
    return m;
}

std::string results_csv(const SweepResult& r) {
    std::ostringstream os;
    os << "# manifest " << run_manifest(r.spec, r.scenario).dump() << '\n';
    os << "method,kind,snr_db,parameter_kmh,trials,valid,rmse_kmh,bias_kmh,std_kmh,outlier_rate,resolved_rate,"
          "rmse_target1_kmh,rmse_target2_kmh,rmse_spread_kmh,mean_iterations,mean_estimate_kmh,max_abs_error_kmh,"
          "degenerate\n";
    for (const auto& c : r.cells) {
        os << method_name(c.method) << ',' << sweep_kind_name(c.kind) << ',' << format_number(c.snr_db) << ','
           << format_number(c.parameter_kmh) << ',' << c.trials << ',' << c.valid << ',' << format_number(c.rmse_kmh)
           << ',' << format_number(c.bias_kmh) << ',' << format_number(c.std_kmh) << ','
           << format_number(c.outlier_rate) << ',' << format_number(c.resolved_rate) << ','
           << format_number(c.rmse_target1_kmh) << ',' << format_number(c.rmse_target2_kmh) << ','
           << format_number(c.rmse_spread_kmh) << ',' << format_number(c.mean_iterations) << ','
           << format_number(c.mean_estimate_kmh) << ',' << format_number(c.max_abs_error_kmh) << ','
           << (c.degenerate ? 1 : 0) << '\n';
    }
    return os.str();
}

void emit_results(const SweepResult& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << results_csv(r);
    if (!out) throw InvalidArgument("write failed: " + path.string());
}

json read_manifest(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw InvalidArgument("cannot open " + csv_path.string());
    std::string line;
    const std::string prefix = "# manifest ";
    while (std::getline(in, line)) {
        if (line.rfind(prefix, 0) == 0) {
            try {
                return json::parse(line.substr(prefix.size()));
            } catch (const json::parse_error& e) {
                throw InvalidArgument(csv_path.string() + ": malformed manifest: " + e.what());
            }
        }
        if (!line.empty() && line[0] != '#') break;
    }
    throw InvalidArgument(csv_path.string() + ": no manifest line");
}

std::vector<std::string> check_thresholds(const SweepResult& r) {
    std::vector<std::string> violations;
    if (r.checksum_mismatches > 0) {
        violations.push_back(std::to_string(r.checksum_mismatches) + " trials fed different snapshots to the methods");
    }
    for (const auto& th : r.spec.thresholds) {
        for (const auto& c : r.cells) {
            if (c.method != th.method) continue;
            if (th.snr_db && !(std::abs(c.snr_db - *th.snr_db) < 1e-9)) continue;
            if (th.separation_kmh && !(std::abs(c.parameter_kmh - *th.separation_kmh) < 1e-9)) continue;
            const std::string where = method_name(c.method) + " at snr " + format_number(c.snr_db) + " dB" +
                                      (std::isnan(c.parameter_kmh) ? "" : ", " + format_number(c.parameter_kmh) + " km/h");
            if (th.max_rmse_kmh && !(c.rmse_kmh < *th.max_rmse_kmh)) {
                violations.push_back(where + ": rmse " + format_number(c.rmse_kmh) + " >= " +
                                     format_number(*th.max_rmse_kmh));
            }
            if (th.max_outlier_rate && !(c.outlier_rate <= *th.max_outlier_rate)) {
                violations.push_back(where + ": outlier rate " + format_number(c.outlier_rate) + " > " +
                                     format_number(*th.max_outlier_rate));
            }
            if (th.min_resolved_rate && !(c.resolved_rate >= *th.min_resolved_rate)) {
                violations.push_back(where + ": resolved rate " + format_number(c.resolved_rate) + " < " +
                                     format_number(*th.min_resolved_rate));
            }
        }
    }
    return violations;
}

std::optional<double> crossing_snr(const std::vector<CellResult>& cells, Method m, double limit_kmh) {
    std::optional<double> best;
    for (const auto& c : cells) {
        if (c.method != m || std::isinf(c.snr_db) || c.valid == 0) continue;
        if (c.rmse_kmh < limit_kmh && (!best || c.snr_db < *best)) best = c.snr_db;
    }
    return best;
}

} // namespace chirpjoint
