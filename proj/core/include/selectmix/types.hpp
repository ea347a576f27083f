#pragma once

#include <Eigen/Dense>

namespace selectmix {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Argmax with ties broken toward the lowest index.
inline int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    int best = 0;
    for (int k = 1; k < row.size(); ++k) {
        if (row[k] > row[best]) best = k;
    }
    return best;
}

}  // namespace selectmix
