#pragma once

#include <vector>

namespace gpcd {

// Exact minimum-cost perfect matching on a dense n x n cost matrix
// (row-major), via shortest augmenting paths with dual potentials.
// Returns column assigned to each row. O(n^3) worst case.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n);

}  // namespace gpcd
