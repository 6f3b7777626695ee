#include "chirpjoint/reference.hpp"

#include "chirpjoint/assignment.hpp"
#include "chirpjoint/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace chirpjoint {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Spectrum {
    std::vector<cd> bins;
    std::vector<double> magnitude;
    int chirps = 0;
};

Spectrum slow_time_spectrum(const Eigen::VectorXcd& s, int fft_size, WindowKind window) {
    const int m = static_cast<int>(s.size());
    if (m < 1) throw InvalidArgument("fft_doppler: empty sequence");
    if (fft_size < m) {
        throw InvalidArgument("fft_doppler: fft_size " + std::to_string(fft_size) + " is shorter than M = " +
                              std::to_string(m));
    }
    const auto w = make_window(window, m);
    std::vector<cd> in(fft_size, cd{});
    for (int i = 0; i < m; ++i) in[i] = w[i] * s(i);
    Spectrum out;
    out.chirps = m;
    Eigen::FFT<double> fft;
    fft.fwd(out.bins, in);
    out.magnitude.resize(fft_size);
    for (int k = 0; k < fft_size; ++k) out.magnitude[k] = std::abs(out.bins[k]);
    return out;
}

FftDopplerEstimate describe_peak(const Spectrum& sp, int k, double tri) {
    const int f = static_cast<int>(sp.bins.size());
    const double a = sp.magnitude[(k - 1 + f) % f];
    const double b = sp.magnitude[k];
    const double c = sp.magnitude[(k + 1) % f];
    const double denom = a - 2.0 * b + c;
    const double delta = denom != 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;

    double pos = k + delta;
    if (pos >= 0.5 * f) pos -= f;
    if (pos < -0.5 * f) pos += f;

    FftDopplerEstimate e;
    e.peak_bin = k;
    e.spectrum_length = f;
    e.peak_magnitude = b;
    e.interpolated_frequency_hz = pos / (f * tri);
    const double omega = kTwoPi * k / f;
    e.peak_phase_rad = std::arg(sp.bins[k] * std::polar(1.0, omega * 0.5 * (sp.chirps - 1)));
    return e;
}

double circular_distance(double a, double b, double period) {
    return std::abs(std::remainder(a - b, period));
}

} // namespace

FftDopplerEstimate fft_doppler(const Eigen::VectorXcd& s, int fft_size, double tri, WindowKind window) {
    const Spectrum sp = slow_time_spectrum(s, fft_size, window);
    const auto it = std::max_element(sp.magnitude.begin(), sp.magnitude.end());
    if (!(*it > 0.0)) throw DetectionError("fft_doppler: all-zero input has no spectral peak");
    return describe_peak(sp, static_cast<int>(it - sp.magnitude.begin()), tri);
}

std::vector<FftDopplerEstimate> fft_doppler_peaks(const Eigen::VectorXcd& s, int count, int fft_size, double tri,
                                                  WindowKind window) {
    const Spectrum sp = slow_time_spectrum(s, fft_size, window);
    const int f = fft_size;
    const double top = *std::max_element(sp.magnitude.begin(), sp.magnitude.end());
    if (!(top > 0.0)) throw DetectionError("fft_doppler: all-zero input has no spectral peak");

    std::vector<int> maxima;
    for (int k = 0; k < f; ++k) {
        const double b = sp.magnitude[k];
        if (f == 1 || (b >= sp.magnitude[(k - 1 + f) % f] && b > sp.magnitude[(k + 1) % f])) maxima.push_back(k);
    }
    if (static_cast<int>(maxima.size()) < count) {
        throw DetectionError("fft_doppler: " + std::to_string(maxima.size()) + " distinct peaks found, " +
                             std::to_string(count) + " required");
    }
    std::stable_sort(maxima.begin(), maxima.end(),
                     [&](int x, int y) { return sp.magnitude[x] > sp.magnitude[y]; });
    std::vector<FftDopplerEstimate> out;
    for (int i = 0; i < count; ++i) out.push_back(describe_peak(sp, maxima[i], tri));
    return out;
}

std::vector<UnfoldCandidate> enumerate_unfoldings(const std::vector<FftDopplerEstimate>& replica,
                                                  const RadarScenario& s, const VelocityInterval& window) {
    const int L = static_cast<int>(replica.size());
    if (L < 2) throw InvalidArgument("resolve_by_unfolding: at least two sequences are required");
    if (L != s.num_sequences()) throw InvalidArgument("resolve_by_unfolding: one estimate per sequence required");
    const double tri = s.tri();
    const auto& offsets = s.plan.sequence_offsets_s;

    std::vector<UnfoldCandidate> out;
    for (int k = 0; k < s.num_tx(); ++k) {
        const double base = replica[0].interpolated_frequency_hz - s.ddm.ddm_freqs_hz[k];
        const IntegerRange range = candidate_integers(base, window, s);
        for (long long q = range.lo; q <= range.hi; ++q) {
            UnfoldCandidate c;
            c.ddm_index = k;
            c.integers.push_back(q);
            const double fd = base + static_cast<double>(q) / tri;
            c.unfolded_frequencies_hz.push_back(fd);

            // Spectral estimates of the other sequences unfolded next to fd.
            double sum = fd;
            for (int l = 1; l < L; ++l) {
                const double own = replica[l].interpolated_frequency_hz - s.ddm.ddm_freqs_hz[k];
                sum += own + std::round((fd - own) * tri) / tri;
            }
            c.doppler_hz = sum / L;

            for (int l = 1; l < L; ++l) {
                const double dt = offsets[l] - offsets[0];
                const double turns = (replica[l].peak_phase_rad - replica[0].peak_phase_rad) / kTwoPi;
                const long long ql = std::llround(fd * dt - turns);
                c.integers.push_back(ql);
                c.unfolded_frequencies_hz.push_back((turns + static_cast<double>(ql)) / dt);
            }
            const auto [lo, hi] =
                std::minmax_element(c.unfolded_frequencies_hz.begin(), c.unfolded_frequencies_hz.end());
            c.spread_hz = *hi - *lo;
            out.push_back(std::move(c));
        }
    }
    return out;
}

UnfoldCandidate resolve_by_unfolding(const std::vector<FftDopplerEstimate>& replica, const RadarScenario& s,
                                     const VelocityInterval& window) {
    const auto candidates = enumerate_unfoldings(replica, s, window);
    if (candidates.empty()) throw DetectionError("resolve_by_unfolding: no candidate inside the velocity window");
    return *std::min_element(candidates.begin(), candidates.end(),
                             [](const UnfoldCandidate& a, const UnfoldCandidate& b) {
                                 return a.spread_hz < b.spread_hz;
                             });
}

VelocityReport reference_pipeline(const RangeBinSnapshot& snap, const ReferenceSettings& settings, int num_targets) {
    if (!snap.scenario) throw InvalidArgument("reference_pipeline: snapshot without scenario");
    const RadarScenario& s = *snap.scenario;
    require_valid(s);
    if (num_targets < 1) throw InvalidArgument("reference_pipeline: at least one target required");
    const int L = snap.sequences();
    const int M = snap.chirps();
    const int K = s.num_tx();
    const int d = num_targets * K;
    const double tri = s.tri();
    const int fft_size = settings.fft_size > 0 ? settings.fft_size : M;

    std::vector<std::vector<FftDopplerEstimate>> peaks(L);
    for (int l = 0; l < L; ++l) peaks[l] = fft_doppler_peaks(snap.vectors[l], d, fft_size, tri, settings.window);

    // replicas[j][l]: peak j of sequence 1 and its nearest counterpart in sequence l.
    std::vector<std::vector<FftDopplerEstimate>> replicas(d, std::vector<FftDopplerEstimate>(L));
    for (int j = 0; j < d; ++j) replicas[j][0] = peaks[0][j];
    for (int l = 1; l < L; ++l) {
        Eigen::MatrixXd cost(d, d);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                cost(i, j) = circular_distance(peaks[0][i].interpolated_frequency_hz,
                                               peaks[l][j].interpolated_frequency_hz, 1.0 / tri);
            }
        }
        const auto assign = solve_assignment(cost);
        for (int i = 0; i < d; ++i) replicas[i][l] = peaks[l][assign[i]];
    }

    VelocityReport report;
    report.method = "reference";
    report.model_order = d;
    report.converged = true;

    std::vector<PhaseStep> steps;
    if (L < 2) {
        report.ambiguous = true;
        for (int j = 0; j < d; ++j) steps.push_back({kTwoPi * replicas[j][0].interpolated_frequency_hz * tri, true});
    } else {
        for (int j = 0; j < d; ++j) {
            const UnfoldCandidate best = resolve_by_unfolding(replicas[j], s, settings.search_window);
            report.cost += best.spread_hz;
            steps.push_back({kTwoPi * (best.doppler_hz + s.ddm.ddm_freqs_hz[best.ddm_index]) * tri, false});
        }
    }

    const double tol = settings.grouping_tolerance_hz > 0 ? settings.grouping_tolerance_hz : 0.25 / (M * tri);
    const GroupingResult grouping = group_replicas(steps, s, tol);
    report.grouping_consistent = grouping.consistent;
    report.grouping_tie = grouping.tie;
    for (const auto& g : grouping.groups) {
        TargetEstimate t;
        for (int k = 0; k < K; ++k) {
            t.replica_phases.push_back(steps[g.modes[k]]);
            t.replica_ddm.push_back(k);
        }
        const auto combined = combine_ddm(t.replica_phases, t.replica_ddm, s, settings.rotation);
        t.combined_phasor = combined.combined_phasor;
        t.doppler_hz = combined.doppler_hz;
        t.velocity_mps = doppler_to_velocity(t.doppler_hz, s.waveform);
        t.residual_cost = g.spread_hz;
        report.targets.push_back(std::move(t));
    }
    return report;
}

} // namespace chirpjoint
