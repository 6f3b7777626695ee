#pragma once

// Straightforward re-derivations used as oracles by the tests. Nothing here
// calls into the library's numerical kernels; only data types are shared.

#include "chirpjoint/scenario.hpp"
#include "chirpjoint/synth.hpp"

#include <Eigen/Dense>

#include <vector>

namespace oracle {

using chirpjoint::cd;

/// Scenario with `num_tx` uniform DDM transmitters, M chirps, N fast-time
/// samples and sequence offsets given as multiples of T_ri.
chirpjoint::RadarScenario make_scenario(int num_tx, int chirps, int samples, std::vector<double> offsets_in_tri,
                                        double tri = 65.1e-6);

/// Noise-free beat sample of the analytic model, evaluated term by term.
cd beat_sample(const chirpjoint::RadarScenario& s, const chirpjoint::TargetSet& t, int l, int m, int n);

/// Steering matrix with entries written out one exponential at a time.
Eigen::MatrixXcd manifold(const chirpjoint::RadarScenario& s, const std::vector<double>& phases,
                          const std::vector<int>& ddm_index, int rows);

/// tr((I - A A^+) U U^H) with the pseudoinverse from a full SVD.
double projection_cost(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& u);

/// Minimum total cost over all injective row -> column maps (brute force).
double brute_force_assignment_cost(const Eigen::MatrixXd& cost);

/// Smallest Doppler shift r / (K T_ri), r >= 1, that leaves every
/// inter-sequence phase unchanged; converted to velocity [m/s].
double collision_span_mps(const chirpjoint::RadarScenario& s, long long max_r = 1'000'000);

/// Orthonormal basis of the column space of x, by SVD.
Eigen::MatrixXcd orthonormal_basis(const Eigen::MatrixXcd& x, int d);

/// DTFT of x at frequency f [Hz] for sample spacing dt.
cd dtft(const Eigen::VectorXcd& x, double f, double dt);

/// Noise-free slow-time vector of one sequence in a bin where every replica
/// falls exactly on the bin centre with a rectangular window.
Eigen::VectorXcd on_bin_slow_time(const chirpjoint::RadarScenario& s, const chirpjoint::Target& t, int l);

} // namespace oracle
