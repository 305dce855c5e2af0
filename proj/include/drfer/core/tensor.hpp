#pragma once

#include <Eigen/Dense>

namespace drfer {

// Dense matrices parameterized on scalar type. Training runs in float for
// speed; gradient verification and all geometry kernels run in double.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Matf = Mat<float>;
using Vecd = Vec<double>;
using Vecf = Vec<float>;

// Point clouds are stored as N x 3 double matrices (millimeters).
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

}  // namespace drfer
