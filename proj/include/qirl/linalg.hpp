#pragma once

#include <Eigen/Dense>

namespace qirl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

}  // namespace qirl
