#pragma once

#include <Eigen/Dense>

namespace fplan {

using Vec2 = Eigen::Vector2d;
using VecX = Eigen::VectorXd;
using Mat2X = Eigen::Matrix2Xd;
using MatX = Eigen::MatrixXd;
using ArrXb = Eigen::Array<bool, Eigen::Dynamic, 1>;
using ArrXXb = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace fplan
