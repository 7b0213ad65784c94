#pragma once

#include <vector>

#include "qsrnet/matrix.hpp"

namespace qsrnet {

/// Sampled trajectory on a uniform time grid.  Row k of each matrix is the
/// sample at t[k].  `mode` holds the active mode index per sample; leave it
/// empty for unswitched records.
struct TrajectoryRecord {
    std::vector<double> t;
    Matrix x;  ///< states,  N x n
    Matrix u;  ///< inputs,  N x m
    Matrix y;  ///< outputs, N x p
    std::vector<int> mode;

    int samples() const { return static_cast<int>(t.size()); }
};

/// Grid spacing, validating uniformity to relative 1e-9.
double grid_step(const TrajectoryRecord& traj);

}  // namespace qsrnet
