#include "chirpjoint/jdear.hpp"

#include "chirpjoint/assignment.hpp"
#include "chirpjoint/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace chirpjoint {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

/// Wraps to [-pi, pi].
double wrap_phase(double x) { return std::remainder(x, kTwoPi); }

/// Columns of the steering matrix; rows are re-anchored with an exact
/// exponential every 32 steps of the recursion.
Eigen::MatrixXcd manifold_matrix(std::span<const double> phases, std::span<const int> ddm_index,
                                 const RadarScenario& s, int rows) {
    const int L = s.num_sequences();
    const int d = static_cast<int>(phases.size());
    const double tri = s.tri();
    const double t1 = s.plan.sequence_offsets_s[0];
    Eigen::MatrixXcd a(static_cast<Eigen::Index>(L) * rows, d);
    for (int i = 0; i < d; ++i) {
        const double phi = phases[i];
        const double fk = s.ddm.ddm_freqs_hz[ddm_index[i]];
        const cd step = std::polar(1.0, phi);
        for (int l = 0; l < L; ++l) {
            const double dt = s.plan.sequence_offsets_s[l] - t1;
            const double base = phi * dt / tri - kTwoPi * std::remainder(fk * dt, 1.0);
            const Eigen::Index off = static_cast<Eigen::Index>(l) * rows;
            cd v{};
            for (int b = 0; b < rows; ++b) {
                v = (b % 32 == 0) ? std::polar(1.0, phi * b + base) : v * step;
                a(off + b, i) = v;
            }
        }
    }
    return a;
}

/// d A / d phi_i for column i only.
Eigen::VectorXcd manifold_derivative(const Eigen::MatrixXcd& a, int i, const RadarScenario& s, int rows) {
    const int L = s.num_sequences();
    const double tri = s.tri();
    const double t1 = s.plan.sequence_offsets_s[0];
    Eigen::VectorXcd out(a.rows());
    for (int l = 0; l < L; ++l) {
        const double tau = (s.plan.sequence_offsets_s[l] - t1) / tri;
        for (int b = 0; b < rows; ++b) {
            const Eigen::Index r = static_cast<Eigen::Index>(l) * rows + b;
            out(r) = cd(0.0, b + tau) * a(r, i);
        }
    }
    return out;
}

void check_model(const ManifoldModel& m) {
    if (!m.scenario) throw InvalidArgument("ManifoldModel: missing scenario");
    if (m.ddm_index.size() != m.phase_steps.size())
        throw InvalidArgument("ManifoldModel: one DDM index per phase step required");
    for (int k : m.ddm_index) {
        if (k < 0 || k >= m.scenario->num_tx()) throw InvalidArgument("ManifoldModel: DDM index out of range");
    }
}

struct Projection {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr;
    Eigen::MatrixXcd qh_u; // Q^H U, all rows
};

Projection project(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& basis) {
    if (a.rows() != basis.rows()) {
        throw InvalidArgument("snls: manifold has " + std::to_string(a.rows()) + " rows, basis has " +
                              std::to_string(basis.rows()));
    }
    Projection p{Eigen::ColPivHouseholderQR<Eigen::MatrixXcd>(a), {}};
    const Eigen::Index d = a.cols();
    if (d > 0) {
        const auto& r = p.qr.matrixR();
        const double top = std::abs(r(0, 0));
        const double bottom = std::abs(r(d - 1, d - 1));
        if (!(bottom > 1e-12 * top)) {
            int best_a = 0, best_b = std::min<int>(1, static_cast<int>(d) - 1);
            double best = -1.0;
            for (Eigen::Index i = 0; i < d; ++i) {
                for (Eigen::Index j = i + 1; j < d; ++j) {
                    const double c = std::abs(a.col(i).dot(a.col(j))) / (a.col(i).norm() * a.col(j).norm());
                    if (c > best) {
                        best = c;
                        best_a = static_cast<int>(i);
                        best_b = static_cast<int>(j);
                    }
                }
            }
            throw DegeneracyError(best_a, best_b,
                                  "steering matrix is rank deficient: modes " + std::to_string(best_a) + " and " +
                                      std::to_string(best_b) + " coincide");
        }
    }
    p.qh_u = p.qr.householderQ().adjoint() * basis;
    return p;
}

Eigen::VectorXd flatten(const Eigen::MatrixXcd& m) {
    const Eigen::Index n = m.size();
    Eigen::VectorXd out(2 * n);
    const cd* data = m.data();
    for (Eigen::Index i = 0; i < n; ++i) {
        out(i) = data[i].real();
        out(n + i) = data[i].imag();
    }
    return out;
}

Eigen::MatrixXcd residual_matrix(const ManifoldModel& m, const Eigen::MatrixXcd& basis) {
    const Eigen::MatrixXcd a = build_manifold(m);
    Projection p = project(a, basis);
    Eigen::MatrixXcd tail = p.qh_u;
    tail.topRows(a.cols()).setZero();
    return p.qr.householderQ() * tail;
}

// Minimum-cost partition of modes into P groups of K replicas. `anchor_cost`
// is the cost of putting mode j in slot k of the group whose reference
// replica (k = 0) is mode a.
struct Partition {
    std::vector<std::vector<int>> slots; // [group][k] -> mode
    double cost = kInf;
};

template <typename CostFn>
void enumerate_partitions(int d, int P, int K, CostFn&& slot_cost, Partition& best, Partition& runner_up) {
    std::vector<int> anchors(P);
    std::iota(anchors.begin(), anchors.end(), 0);
    auto canonical = [](std::vector<std::vector<int>> slots) {
        for (auto& g : slots) std::sort(g.begin(), g.end());
        std::sort(slots.begin(), slots.end());
        return slots;
    };
    while (true) {
        std::vector<char> is_anchor(d, 0);
        for (int a : anchors) is_anchor[a] = 1;
        std::vector<int> rest;
        for (int j = 0; j < d; ++j) {
            if (!is_anchor[j]) rest.push_back(j);
        }
        Partition cand;
        cand.slots.assign(P, std::vector<int>(K, -1));
        for (int g = 0; g < P; ++g) cand.slots[g][0] = anchors[g];
        double total = 0.0;
        if (K > 1) {
            Eigen::MatrixXd cost(rest.size(), P * (K - 1));
            for (std::size_t r = 0; r < rest.size(); ++r) {
                for (int g = 0; g < P; ++g) {
                    for (int k = 1; k < K; ++k) cost(r, g * (K - 1) + (k - 1)) = slot_cost(rest[r], anchors[g], k);
                }
            }
            const auto assign = solve_assignment(cost);
            for (std::size_t r = 0; r < rest.size(); ++r) {
                const int col = assign[r];
                cand.slots[col / (K - 1)][col % (K - 1) + 1] = rest[r];
                total += cost(r, col);
            }
        }
        cand.cost = total;
        if (cand.cost < best.cost) {
            if (best.cost < kInf && canonical(best.slots) != canonical(cand.slots)) runner_up = best;
            best = cand;
        } else if (cand.cost < runner_up.cost && canonical(best.slots) != canonical(cand.slots)) {
            runner_up = cand;
        }

        // Next combination of P anchors out of d.
        int i = P - 1;
        while (i >= 0 && anchors[i] == d - P + i) --i;
        if (i < 0) break;
        ++anchors[i];
        for (int j = i + 1; j < P; ++j) anchors[j] = anchors[j - 1] + 1;
    }
}

struct Hypothesis {
    std::vector<int> members;   // mode indices of this target
    std::vector<int> ddm;       // transmitter per member
    double doppler_hz = 0.0;
};

void apply_hypothesis(const Hypothesis& h, std::span<const double> wrapped, const RadarScenario& s,
                      std::vector<double>& phases, std::vector<int>& ddm_index) {
    const double tri = s.tri();
    for (std::size_t i = 0; i < h.members.size(); ++i) {
        const int j = h.members[i];
        const double target = kTwoPi * (h.doppler_hz + s.ddm.ddm_freqs_hz[h.ddm[i]]) * tri;
        phases[j] = target + wrap_phase(wrapped[j] - target);
        ddm_index[j] = h.ddm[i];
    }
}

double circular_mean(std::span<const double> angles) {
    cd acc{};
    for (double a : angles) acc += std::polar(1.0, a);
    return std::arg(acc);
}

} // namespace

double PhaseStep::frequency_hz(double tri) const { return value / (kTwoPi * tri); }

std::vector<double> ManifoldModel::values() const {
    std::vector<double> v;
    v.reserve(phase_steps.size());
    for (const auto& p : phase_steps) v.push_back(p.value);
    return v;
}

void ManifoldModel::set_values(std::span<const double> phases) {
    phase_steps.resize(phases.size());
    for (std::size_t i = 0; i < phases.size(); ++i) phase_steps[i].value = phases[i];
}

Eigen::MatrixXcd build_manifold(const ManifoldModel& m) {
    check_model(m);
    const auto values = m.values();
    return manifold_matrix(values, m.ddm_index, *m.scenario, m.params.rows);
}

double snls_cost(const ManifoldModel& m, const Eigen::MatrixXcd& basis) {
    if (m.modes() != basis.cols()) {
        throw InvalidArgument("snls_cost: " + std::to_string(m.modes()) + " modes but basis has " +
                              std::to_string(basis.cols()) + " columns");
    }
    const Eigen::MatrixXcd a = build_manifold(m);
    const Projection p = project(a, basis);
    const double captured = p.qh_u.topRows(a.cols()).squaredNorm();
    const double cost = basis.squaredNorm() - captured;
    return std::clamp(cost, 0.0, static_cast<double>(basis.cols()));
}

Eigen::VectorXd snls_residual(const ManifoldModel& m, const Eigen::MatrixXcd& basis) {
    return flatten(residual_matrix(m, basis));
}

Eigen::MatrixXd snls_jacobian(const ManifoldModel& m, const Eigen::MatrixXcd& basis, JacobianKind kind,
                              double step) {
    const int d = m.modes();
    const Eigen::Index n = 2 * basis.size();
    Eigen::MatrixXd jac(n, d);

    if (kind == JacobianKind::CentralDifference) {
        ManifoldModel probe = m;
        const auto base = m.values();
        for (int i = 0; i < d; ++i) {
            auto plus = base, minus = base;
            plus[i] += step;
            minus[i] -= step;
            probe.set_values(plus);
            const Eigen::VectorXd rp = snls_residual(probe, basis);
            probe.set_values(minus);
            const Eigen::VectorXd rm = snls_residual(probe, basis);
            jac.col(i) = (rp - rm) / (2.0 * step);
        }
        return jac;
    }

    // d(P^perp U)/d phi_i = -(P^perp A_i' A^+ U + (A^+)^H A_i'^H P^perp U),
    // with only column i of A depending on phi_i.
    const Eigen::MatrixXcd a = build_manifold(m);
    (void)project(a, basis); // degeneracy check
    const Eigen::MatrixXcd gram_inv = (a.adjoint() * a).inverse();
    const Eigen::MatrixXcd pinv_u = gram_inv * (a.adjoint() * basis);
    const Eigen::MatrixXcd resid = basis - a * pinv_u;
    for (int i = 0; i < d; ++i) {
        const Eigen::VectorXcd da = manifold_derivative(a, i, *m.scenario, m.params.rows);
        const Eigen::VectorXcd perp_da = da - a * (gram_inv * (a.adjoint() * da));
        const Eigen::VectorXcd pinv_h_col = a * gram_inv.col(i);
        const Eigen::MatrixXcd deriv =
            -(perp_da * pinv_u.row(i) + pinv_h_col * (da.adjoint() * resid));
        jac.col(i) = flatten(deriv);
    }
    return jac;
}

double grouping_tolerance(const SolverSettings& settings, const RadarScenario& s) {
    if (settings.grouping_tolerance_hz > 0) return settings.grouping_tolerance_hz;
    return 0.25 / (s.chirps() * s.tri());
}

IntegerRange candidate_integers(double base_doppler_hz, const VelocityInterval& window, const RadarScenario& s) {
    const double tri = s.tri();
    const double f_lo = velocity_to_doppler(window.lo_mps, s.waveform);
    const double f_hi = velocity_to_doppler(window.hi_mps, s.waveform);
    return {static_cast<long long>(std::ceil((f_lo - base_doppler_hz) * tri)),
            static_cast<long long>(std::floor((f_hi - base_doppler_hz) * tri))};
}

std::vector<double> shift_invariance_phases(const Eigen::MatrixXcd& basis, int rows_per_block, int blocks) {
    const Eigen::Index d = basis.cols();
    if (rows_per_block - 1 < d) throw InvalidArgument("shift_invariance_phases: too few rows per block");
    const Eigen::Index shifted = static_cast<Eigen::Index>(rows_per_block - 1) * blocks;
    Eigen::MatrixXcd upper(shifted, d), lower(shifted, d);
    for (int l = 0; l < blocks; ++l) {
        const Eigen::Index src = static_cast<Eigen::Index>(l) * rows_per_block;
        const Eigen::Index dst = static_cast<Eigen::Index>(l) * (rows_per_block - 1);
        upper.middleRows(dst, rows_per_block - 1) = basis.middleRows(src, rows_per_block - 1);
        lower.middleRows(dst, rows_per_block - 1) = basis.middleRows(src + 1, rows_per_block - 1);
    }
    const Eigen::MatrixXcd rotation = upper.colPivHouseholderQr().solve(lower);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> eig(rotation, false);
    std::vector<double> out(d);
    for (Eigen::Index i = 0; i < d; ++i) out[i] = std::arg(eig.eigenvalues()(i));
    std::sort(out.begin(), out.end());
    return out;
}

InitialGuess initialize_phases(const SubspaceEstimate& subspace, const RadarScenario& s, const HankelParams& p,
                               const SolverSettings& settings) {
    if (subspace.model_order == 0) return {};
    const auto wrapped = shift_invariance_phases(subspace.basis, p.rows, s.num_sequences());
    return search_hypotheses(wrapped, subspace.basis, s, p, settings);
}

InitialGuess search_hypotheses(std::span<const double> wrapped_in, const Eigen::MatrixXcd& basis,
                               const RadarScenario& s, const HankelParams& p, const SolverSettings& settings) {
    const int L = s.num_sequences();
    const int K = s.num_tx();
    const int d = static_cast<int>(wrapped_in.size());
    if (d == 0) return {};
    if (d != basis.cols()) throw InvalidArgument("search_hypotheses: one phase per basis column required");
    if (d % K != 0) {
        throw InitializationError("model order " + std::to_string(d) + " is not a multiple of K_Tx = " +
                                  std::to_string(K));
    }
    const int P = d / K;
    const double tri = s.tri();

    std::vector<double> wrapped(d);
    for (int j = 0; j < d; ++j) wrapped[j] = wrap_phase(wrapped_in[j]);
    std::vector<double> ddm_phase(K);
    for (int k = 0; k < K; ++k) ddm_phase[k] = wrap_phase(kTwoPi * s.ddm.ddm_freqs_hz[k] * tri);

    // Targets: reference replica a, replica k expected at phi_a + ddm phase k.
    Partition best, runner_up;
    enumerate_partitions(
        d, P, K,
        [&](int j, int a, int k) {
            const double e = wrap_phase(wrapped[j] - wrapped[a] - ddm_phase[k]);
            return e * e;
        },
        best, runner_up);

    const double tol_phase = kTwoPi * grouping_tolerance(settings, s) * tri;
    std::vector<std::vector<Hypothesis>> options(P);
    for (int g = 0; g < P; ++g) {
        const auto& members = best.slots[g];
        struct Labelling {
            std::vector<int> ddm;
            double spread;
            double mean;
        };
        std::vector<Labelling> labellings;
        for (int a = 0; a < K; ++a) {
            // Member a as reference transmitter, the rest matched to k >= 1.
            std::vector<int> ddm(K, 0);
            if (K > 1) {
                std::vector<int> rest;
                for (int i = 0; i < K; ++i) {
                    if (i != a) rest.push_back(i);
                }
                Eigen::MatrixXd cost(K - 1, K - 1);
                for (int r = 0; r < K - 1; ++r) {
                    for (int k = 1; k < K; ++k) {
                        const double e =
                            wrap_phase(wrapped[members[rest[r]]] - wrapped[members[a]] - ddm_phase[k]);
                        cost(r, k - 1) = e * e;
                    }
                }
                const auto assign = solve_assignment(cost);
                for (int r = 0; r < K - 1; ++r) ddm[rest[r]] = assign[r] + 1;
            }
            std::vector<double> corrected(K);
            for (int i = 0; i < K; ++i) corrected[i] = wrap_phase(wrapped[members[i]] - ddm_phase[ddm[i]]);
            const double mean = circular_mean(corrected);
            double spread = 0.0;
            for (double c : corrected) spread = std::max(spread, std::abs(wrap_phase(c - mean)));
            const bool duplicate = std::any_of(labellings.begin(), labellings.end(),
                                               [&](const Labelling& l) { return l.ddm == ddm; });
            if (!duplicate) labellings.push_back({ddm, spread, mean});
        }
        std::vector<Labelling> accepted;
        for (const auto& l : labellings) {
            if (l.spread <= tol_phase) accepted.push_back(l);
        }
        if (accepted.empty()) {
            accepted.push_back(*std::min_element(labellings.begin(), labellings.end(),
                                                 [](const Labelling& x, const Labelling& y) {
                                                     return x.spread < y.spread;
                                                 }));
        }
        for (const auto& l : accepted) {
            const double base = l.mean / (kTwoPi * tri);
            const IntegerRange range = candidate_integers(base, settings.search_window, s);
            for (long long q = range.lo; q <= range.hi; ++q) {
                options[g].push_back({members, l.ddm, base + static_cast<double>(q) / tri});
            }
        }
        if (options[g].empty()) {
            throw InitializationError("no ambiguity hypothesis of target " + std::to_string(g) +
                                      " lies inside the velocity search window");
        }
    }

    InitialGuess out;
    out.num_targets = P;
    out.phases.assign(d, 0.0);
    out.ddm_index.assign(d, 0);
    out.group.assign(d, 0);
    for (int g = 0; g < P; ++g) {
        for (int j : best.slots[g]) out.group[j] = g;
    }

    std::vector<std::size_t> choice(P);
    for (int g = 0; g < P; ++g) {
        const auto& opts = options[g];
        choice[g] = static_cast<std::size_t>(
            std::min_element(opts.begin(), opts.end(),
                             [](const Hypothesis& x, const Hypothesis& y) {
                                 return std::abs(x.doppler_hz) < std::abs(y.doppler_hz);
                             }) -
            opts.begin());
        apply_hypothesis(opts[choice[g]], wrapped, s, out.phases, out.ddm_index);
    }

    ManifoldModel model;
    model.scenario = std::make_shared<const RadarScenario>(s);
    model.params = p;
    auto score = [&](const std::vector<double>& phases, const std::vector<int>& ddm) {
        model.set_values(phases);
        model.ddm_index = ddm;
        try {
            return snls_cost(model, basis);
        } catch (const DegeneracyError&) {
            return kInf;
        }
    };

    if (L < 2) {
        out.ambiguous = true;
        out.cost = score(out.phases, out.ddm_index);
        return out;
    }

    double current = score(out.phases, out.ddm_index);
    for (int pass = 0; pass < std::max(1, settings.hypothesis_passes); ++pass) {
        bool changed = false;
        for (int g = 0; g < P; ++g) {
            std::size_t best_h = choice[g];
            double best_cost = current;
            for (std::size_t h = 0; h < options[g].size(); ++h) {
                if (h == choice[g]) continue;
                auto phases = out.phases;
                auto ddm = out.ddm_index;
                apply_hypothesis(options[g][h], wrapped, s, phases, ddm);
                const double c = score(phases, ddm);
                if (c < best_cost) {
                    best_cost = c;
                    best_h = h;
                }
            }
            if (best_h != choice[g]) {
                choice[g] = best_h;
                apply_hypothesis(options[g][best_h], wrapped, s, out.phases, out.ddm_index);
                current = best_cost;
                changed = true;
            }
        }

        // Targets a few Doppler cells apart share their integer error; moving
        // one alone raises the cost, so they are also shifted together.
        const double near_hz = 4.0 / (s.chirps() * tri);
        for (int g = 0; g < P; ++g) {
            std::vector<int> cluster{g};
            for (int h = 0; h < P; ++h) {
                if (h != g && std::abs(options[h][choice[h]].doppler_hz - options[g][choice[g]].doppler_hz) < near_hz)
                    cluster.push_back(h);
            }
            if (cluster.size() < 2) continue;
            std::vector<std::size_t> best_choice;
            double best_cost = current;
            for (std::size_t h = 0; h < options[g].size(); ++h) {
                if (h == choice[g]) continue;
                const double shift = options[g][h].doppler_hz - options[g][choice[g]].doppler_hz;
                auto trial = choice;
                trial[g] = h;
                for (std::size_t c = 1; c < cluster.size(); ++c) {
                    const int m = cluster[c];
                    const double want = options[m][choice[m]].doppler_hz + shift;
                    trial[m] = static_cast<std::size_t>(
                        std::min_element(options[m].begin(), options[m].end(),
                                         [&](const Hypothesis& x, const Hypothesis& y) {
                                             return std::abs(x.doppler_hz - want) < std::abs(y.doppler_hz - want);
                                         }) -
                        options[m].begin());
                }
                auto phases = out.phases;
                auto ddm = out.ddm_index;
                for (int m : cluster) apply_hypothesis(options[m][trial[m]], wrapped, s, phases, ddm);
                const double c = score(phases, ddm);
                if (c < best_cost) {
                    best_cost = c;
                    best_choice = trial;
                }
            }
            if (!best_choice.empty()) {
                choice = best_choice;
                for (int m : cluster) apply_hypothesis(options[m][choice[m]], wrapped, s, out.phases, out.ddm_index);
                current = best_cost;
                changed = true;
            }
        }
        if (!changed || P == 1) break;
    }
    if (!std::isfinite(current)) throw InitializationError("every ambiguity hypothesis is degenerate");
    out.cost = current;
    return out;
}

LmResult refine_phases(const ManifoldModel& model, const Eigen::MatrixXcd& basis, const SolverSettings& settings) {
    ManifoldModel work = model;
    LmResult out;
    std::vector<double> phases = model.values();
    const int d = static_cast<int>(phases.size());
    if (d == 0) {
        out.converged = true;
        return out;
    }

    auto residual_at = [&](const std::vector<double>& x) {
        work.set_values(x);
        return snls_residual(work, basis);
    };
    auto jacobian_at = [&](const std::vector<double>& x) {
        work.set_values(x);
        return snls_jacobian(work, basis, settings.jacobian, settings.fd_step);
    };

    Eigen::VectorXd r = residual_at(phases);
    double cost = r.squaredNorm();
    out.cost_history.push_back(cost);
    Eigen::MatrixXd jac = jacobian_at(phases);
    Eigen::MatrixXd normal = jac.transpose() * jac;
    Eigen::VectorXd grad = jac.transpose() * r;
    double mu = settings.lm_damping_init * normal.diagonal().maxCoeff();
    double nu = 2.0;

    for (int it = 0; it < settings.max_iterations; ++it) {
        if (grad.lpNorm<Eigen::Infinity>() <= settings.gradient_tolerance) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = normal;
            for (int i = 0; i < d; ++i) damped(i, i) += mu * std::max(normal(i, i), 1e-300);
            const Eigen::VectorXd delta = damped.ldlt().solve(-grad);
            double phase_norm = 0.0;
            for (double v : phases) phase_norm += v * v;
            if (delta.norm() <= settings.step_tolerance * (std::sqrt(phase_norm) + settings.step_tolerance)) {
                out.converged = true;
                break;
            }
            std::vector<double> trial = phases;
            for (int i = 0; i < d; ++i) trial[i] += delta(i);
            double trial_cost = kInf;
            Eigen::VectorXd trial_r;
            try {
                trial_r = residual_at(trial);
                trial_cost = trial_r.squaredNorm();
            } catch (const DegeneracyError&) {
            }
            if (trial_cost < cost) {
                phases = std::move(trial);
                r = std::move(trial_r);
                cost = trial_cost;
                jac = jacobian_at(phases);
                normal = jac.transpose() * jac;
                grad = jac.transpose() * r;
                mu /= 3.0;
                nu = 2.0;
                accepted = true;
                ++out.iterations;
                out.cost_history.push_back(cost);
            } else {
                mu *= nu;
                nu *= 2.0;
                if (!(mu < 1e30)) {
                    // No representable descent step left.
                    out.converged = true;
                    break;
                }
            }
        }
        if (out.converged) break;
    }
    out.phases = std::move(phases);
    out.cost = std::clamp(cost, 0.0, static_cast<double>(basis.cols()));
    return out;
}

GroupingResult group_replicas(std::span<const PhaseStep> phases, const RadarScenario& s, double tolerance_hz) {
    const int K = s.num_tx();
    const int d = static_cast<int>(phases.size());
    if (d % K != 0) {
        throw GroupingError(kInf, std::to_string(d) + " modes cannot form groups of K_Tx = " + std::to_string(K));
    }
    const int P = d / K;
    GroupingResult out;
    if (P == 0) return out;

    const double tri = s.tri();
    std::vector<double> freq(d);
    for (int j = 0; j < d; ++j) freq[j] = phases[j].frequency_hz(tri);
    const auto& fk = s.ddm.ddm_freqs_hz;

    Partition best, runner_up;
    enumerate_partitions(
        d, P, K,
        [&](int j, int a, int k) {
            const double e = freq[j] - fk[k] - freq[a];
            return e * e;
        },
        best, runner_up);

    out.matching_cost = best.cost;
    for (const auto& slots : best.slots) {
        ReplicaGroup g;
        g.modes = slots;
        for (int k = 0; k < K; ++k) g.corrected_hz.push_back(freq[slots[k]] - fk[k]);
        const auto [lo, hi] = std::minmax_element(g.corrected_hz.begin(), g.corrected_hz.end());
        g.spread_hz = *hi - *lo;
        out.max_spread_hz = std::max(out.max_spread_hz, g.spread_hz);
        out.groups.push_back(std::move(g));
    }
    out.consistent = out.max_spread_hz <= tolerance_hz;

    if (runner_up.cost - best.cost <= 1e-6 * tolerance_hz * tolerance_hz) out.tie = true;
    for (int g1 = 0; g1 < P && !out.tie; ++g1) {
        for (int g2 = g1 + 1; g2 < P && !out.tie; ++g2) {
            for (int a : best.slots[g1]) {
                for (int b : best.slots[g2]) {
                    if (std::abs(freq[a] - freq[b]) <= 1e-3 * tolerance_hz) out.tie = true;
                }
            }
        }
    }

    auto mean = [](const ReplicaGroup& g) {
        return std::accumulate(g.corrected_hz.begin(), g.corrected_hz.end(), 0.0) / g.corrected_hz.size();
    };
    std::sort(out.groups.begin(), out.groups.end(),
              [&](const ReplicaGroup& x, const ReplicaGroup& y) { return mean(x) < mean(y); });
    return out;
}

CombinedReplicas combine_ddm(std::span<const PhaseStep> group, std::span<const int> ddm_index, const RadarScenario& s,
                             RotationConvention convention) {
    if (group.size() != ddm_index.size()) throw InvalidArgument("combine_ddm: one DDM index per replica required");
    const double tri = s.tri();
    cd sum{};
    double consensus = 0.0;
    bool wrapped = false;
    for (std::size_t i = 0; i < group.size(); ++i) {
        const double fk = s.ddm.ddm_freqs_hz.at(ddm_index[i]);
        const double ddm_phase = kTwoPi * fk * tri;
        const double sign = convention == RotationConvention::Compensating ? -1.0 : 1.0;
        sum += group[i].phasor() * std::polar(1.0, sign * ddm_phase);
        consensus += group[i].frequency_hz(tri) - fk;
        wrapped = wrapped || group[i].wrapped;
    }
    if (group.empty()) return {sum, 0.0};
    consensus /= static_cast<double>(group.size());

    const double angle = std::arg(sum);
    if (std::abs(sum) <= 1e-12 * static_cast<double>(group.size())) return {sum, consensus};
    if (wrapped) return {sum, angle / (kTwoPi * tri)};
    const double turns = std::round(consensus * tri - angle / kTwoPi);
    return {sum, (angle / kTwoPi + turns) / tri};
}

CombinedReplicas combine_ddm(std::span<const PhaseStep> group, const RadarScenario& s, RotationConvention convention) {
    std::vector<int> ddm(group.size());
    std::iota(ddm.begin(), ddm.end(), 0);
    return combine_ddm(group, ddm, s, convention);
}

double TargetEstimate::coherence() const {
    return replica_phases.empty() ? 0.0 : std::abs(combined_phasor) / static_cast<double>(replica_phases.size());
}

VelocityReport solve(const RangeBinSnapshot& snap, const SolverSettings& settings, std::optional<int> order) {
    if (!snap.scenario) throw InvalidArgument("solve: snapshot without scenario");
    const RadarScenario& s = *snap.scenario;
    require_valid(s);
    if (snap.sequences() != s.num_sequences() || snap.chirps() != s.chirps()) {
        throw InvalidArgument("solve: snapshot dimensions do not match the scenario");
    }
    const int K = s.num_tx();
    if (order && *order % K != 0) {
        throw InvalidArgument("solve: model order " + std::to_string(*order) + " is not a multiple of K_Tx");
    }

    const HankelParams params = HankelParams::for_length(s.chirps(), settings.hankel_q);
    const BlockHankel hankel = stack_blocks(snap, params);
    SubspaceEstimate subspace = estimate_subspace(hankel, order, settings.order_criterion);

    VelocityReport report;
    report.method = "jdear";
    if (!order) {
        const int detected = subspace.model_order;
        if (detected == 0) {
            report.converged = true;
            return report;
        }
        const int targets = std::max(1, static_cast<int>(std::lround(static_cast<double>(detected) / K)));
        if (targets * K != detected) {
            const auto criterion = subspace.criterion;
            subspace = estimate_subspace(hankel, targets * K);
            subspace.criterion = criterion;
        }
    }
    report.model_order = subspace.model_order;

    InitialGuess init = initialize_phases(subspace, s, params, settings);
    ManifoldModel model;
    model.scenario = snap.scenario;
    model.params = params;
    model.ddm_index = init.ddm_index;
    model.set_values(init.phases);

    LmResult lm = refine_phases(model, subspace.basis, settings);
    int iterations = lm.iterations;
    // Closely spaced modes make the coarse phases unreliable for scoring the
    // integer hypotheses; repeat the search from the refined phases.
    for (int round = 0; round < settings.research_rounds && !init.ambiguous; ++round) {
        InitialGuess again = search_hypotheses(lm.phases, subspace.basis, s, params, settings);
        bool moved = again.ddm_index != init.ddm_index;
        for (std::size_t j = 0; j < lm.phases.size() && !moved; ++j) {
            moved = std::abs(again.phases[j] - lm.phases[j]) > std::numbers::pi;
        }
        if (!moved) break;
        ManifoldModel retry = model;
        retry.ddm_index = again.ddm_index;
        retry.set_values(again.phases);
        LmResult lm2 = refine_phases(retry, subspace.basis, settings);
        iterations += lm2.iterations;
        if (!(lm2.cost < lm.cost)) break;
        lm = std::move(lm2);
        init = std::move(again);
    }
    report.iterations = iterations;
    report.converged = lm.converged;
    report.cost = lm.cost;
    report.ambiguous = init.ambiguous;

    std::vector<PhaseStep> steps;
    for (double v : lm.phases) steps.push_back({v, init.ambiguous});
    const GroupingResult grouping = group_replicas(steps, s, grouping_tolerance(settings, s));
    report.grouping_consistent = grouping.consistent;
    report.grouping_tie = grouping.tie;

    for (const auto& g : grouping.groups) {
        TargetEstimate t;
        for (int k = 0; k < K; ++k) {
            const int mode = g.modes[k];
            t.replica_phases.push_back(steps[mode]);
            t.replica_ddm.push_back(k);
            if (init.ddm_index[mode] != k) report.grouping_consistent = false;
        }
        const auto combined = combine_ddm(t.replica_phases, t.replica_ddm, s, settings.rotation);
        t.combined_phasor = combined.combined_phasor;
        t.doppler_hz = combined.doppler_hz;
        t.velocity_mps = doppler_to_velocity(t.doppler_hz, s.waveform);
        t.residual_cost = lm.cost;
        report.targets.push_back(std::move(t));
    }
    return report;
}

} // namespace chirpjoint
