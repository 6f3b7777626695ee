#pragma once

#include <Eigen/Dense>

#include <vector>

namespace chirpjoint {

/// Minimum-cost assignment of every row to a distinct column
/// (Hungarian algorithm, rows <= cols). Returns the column of each row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

} // namespace chirpjoint
