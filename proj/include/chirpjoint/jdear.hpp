#pragma once

#include "chirpjoint/ambiguity.hpp"
#include "chirpjoint/hankel.hpp"
#include "chirpjoint/scenario.hpp"
#include "chirpjoint/synth.hpp"

#include <Eigen/Dense>

#include <complex>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chirpjoint {

/// Slow-time phase step of one mode, phi = 2 pi (f_d + f_ddm,k) T_ri.
/// Unwrapped steps carry the full Doppler; wrapped ones lie in (-pi, pi].
struct PhaseStep {
    double value = 0.0;
    bool wrapped = false;

    /// Chirp-to-chirp phasor of the mode, e^{j phi}.
    cd phasor() const { return std::polar(1.0, value); }
    double frequency_hz(double tri) const;
};

/// Multi-sequence steering model. Column i of block l, row b is
///   exp(j (phi_i (b + dT_l / T_ri) - 2 pi f_ddm,k(i) dT_l)),
/// i.e. the Vandermonde progression of the mode times the inter-sequence
/// phase of its Doppler f_d = phi_i / (2 pi T_ri) - f_ddm,k(i).
struct ManifoldModel {
    std::vector<PhaseStep> phase_steps;
    /// Transmitter whose DDM offset each mode carries.
    std::vector<int> ddm_index;
    std::shared_ptr<const RadarScenario> scenario;
    HankelParams params;

    int modes() const { return static_cast<int>(phase_steps.size()); }
    std::vector<double> values() const;
    void set_values(std::span<const double> phases);
};

Eigen::MatrixXcd build_manifold(const ManifoldModel& m);

/// tr(P_A^perp U U^H) = ||U||_F^2 - ||Q_A^H U||_F^2, clamped to [0, d].
/// Throws DegeneracyError (with the closest pair of modes) when A is
/// numerically rank deficient (condition number above 1e12).
double snls_cost(const ManifoldModel& m, const Eigen::MatrixXcd& basis);

/// Residual vec(P_A^perp U) as [Re; Im]; its squared norm is snls_cost.
Eigen::VectorXd snls_residual(const ManifoldModel& m, const Eigen::MatrixXcd& basis);

enum class JacobianKind { CentralDifference, VariableProjection };

/// d residual / d phi. Central differences use `step` radians; the
/// variable-projection form is the exact Golub-Pereyra derivative.
Eigen::MatrixXd snls_jacobian(const ManifoldModel& m, const Eigen::MatrixXcd& basis, JacobianKind kind,
                              double step = 1e-6);

enum class RotationConvention {
    /// Rotate replica k by e^{-j 2 pi f_ddm,k T_ri}: cancels the DDM offset.
    Compensating,
    /// Rotate by the DDM phase itself, as the combining sum is usually printed.
    AsPrinted,
};

struct SolverSettings {
    int max_iterations = 100;
    double gradient_tolerance = 1e-12;
    double step_tolerance = 1e-12;
    double lm_damping_init = 1e-3;
    double fd_step = 1e-6;
    JacobianKind jacobian = JacobianKind::CentralDifference;
    /// Ambiguity hypotheses are restricted to Doppler values inside this window;
    /// it defines the integer range searched at initialization.
    VelocityInterval search_window = VelocityInterval::from_kmh(-300.0, 300.0);
    std::optional<int> hankel_q;
    OrderCriterion order_criterion = OrderCriterion::Mdl;
    /// Replica agreement tolerance; 0 selects a quarter of 1 / (M T_ri).
    double grouping_tolerance_hz = 0.0;
    RotationConvention rotation = RotationConvention::Compensating;
    /// Coordinate-descent passes over targets when scoring hypotheses.
    int hypothesis_passes = 3;
    /// Hypothesis searches repeated from the LM solution; a new solution is
    /// kept only if it lowers the cost.
    int research_rounds = 1;
};

double grouping_tolerance(const SolverSettings& settings, const RadarScenario& s);

/// Integer q range such that f0 + q / T_ri stays inside the window.
struct IntegerRange {
    long long lo;
    long long hi;
};
IntegerRange candidate_integers(double base_doppler_hz, const VelocityInterval& window, const RadarScenario& s);

/// Wrapped chirp-to-chirp phases of the d dominant modes from the
/// shift invariance inside each block of the subspace basis (least squares
/// over all blocks, eigenvalues of the rotation operator).
std::vector<double> shift_invariance_phases(const Eigen::MatrixXcd& basis, int rows_per_block, int blocks);

struct InitialGuess {
    std::vector<double> phases;
    std::vector<int> ddm_index;
    /// Target group of each mode.
    std::vector<int> group;
    int num_targets = 0;
    double cost = 0.0;
    /// Single sequence: integers are not identifiable.
    bool ambiguous = false;
};

/// Two-scale initialization: wrapped phases from shift invariance, replicas
/// grouped into targets, then per target every (DDM labelling, integer)
/// hypothesis in the search window is scored with snls_cost and the best is
/// kept (coordinate descent over targets).
InitialGuess initialize_phases(const SubspaceEstimate& subspace, const RadarScenario& s, const HankelParams& p,
                               const SolverSettings& settings);

/// Hypothesis search from given phases (wrapped internally): replicas are
/// grouped into targets and every (DDM labelling, integer) hypothesis inside
/// the search window is scored with snls_cost.
InitialGuess search_hypotheses(std::span<const double> wrapped, const Eigen::MatrixXcd& basis,
                               const RadarScenario& s, const HankelParams& p, const SolverSettings& settings);

struct LmResult {
    std::vector<double> phases;
    double cost = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Cost of every accepted iterate, starting with the initial point.
    std::vector<double> cost_history;
};

/// Levenberg-Marquardt on the unwrapped phases of `model`, minimizing snls_cost.
LmResult refine_phases(const ManifoldModel& model, const Eigen::MatrixXcd& basis, const SolverSettings& settings);

struct ReplicaGroup {
    /// Mode index per transmitter k.
    std::vector<int> modes;
    /// Doppler f_mode - f_ddm,k implied by each replica.
    std::vector<double> corrected_hz;
    double spread_hz = 0.0;
};

struct GroupingResult {
    std::vector<ReplicaGroup> groups;
    double matching_cost = 0.0;
    double max_spread_hz = 0.0;
    /// Every group agrees within the tolerance.
    bool consistent = true;
    /// Another partition fits equally well or replicas of different targets
    /// coincide: the grouping is not identifiable.
    bool tie = false;
};

/// Partitions d = P K_Tx unwrapped modes into P targets, each using every
/// transmitter once, minimizing the squared disagreement of DDM-corrected
/// frequencies (enumeration of reference replicas + Hungarian matching).
/// Groups are sorted by Doppler.
GroupingResult group_replicas(std::span<const PhaseStep> phases, const RadarScenario& s, double tolerance_hz);

struct CombinedReplicas {
    cd combined_phasor;
    double doppler_hz;
};

/// Sum of the K_Tx replica phasors after DDM rotation. The Doppler is the
/// angle of the combined phasor, unwrapped to the replicas' consensus.
CombinedReplicas combine_ddm(std::span<const PhaseStep> group, std::span<const int> ddm_index, const RadarScenario& s,
                             RotationConvention convention = RotationConvention::Compensating);

/// Replica k is transmitter k.
CombinedReplicas combine_ddm(std::span<const PhaseStep> group, const RadarScenario& s,
                             RotationConvention convention = RotationConvention::Compensating);

struct TargetEstimate {
    double velocity_mps = 0.0;
    double doppler_hz = 0.0;
    std::vector<PhaseStep> replica_phases;
    std::vector<int> replica_ddm;
    cd combined_phasor{};
    double residual_cost = 0.0;

    double velocity_kmh() const { return mps_to_kmh(velocity_mps); }
    /// |combined| / K_Tx, 1 for perfectly aligned replicas.
    double coherence() const;
};

struct VelocityReport {
    std::string method;
    std::vector<TargetEstimate> targets;
    int model_order = 0;
    int iterations = 0;
    bool converged = false;
    double cost = 0.0;
    bool ambiguous = false;
    bool grouping_consistent = true;
    bool grouping_tie = false;
};

/// Joint estimation: block Hankel -> subspace -> initialization -> LM ->
/// replica grouping -> DDM combining -> velocities.
VelocityReport solve(const RangeBinSnapshot& snap, const SolverSettings& settings = {},
                     std::optional<int> order = std::nullopt);

} // namespace chirpjoint
