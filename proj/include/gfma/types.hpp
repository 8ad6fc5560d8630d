#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace gfma {

using cxd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using IVec = Eigen::VectorXi;
using BoolMat = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Third-order tensors are kept as vectors of matrix slices. The slice axis
// differs per field and is stated where the tensor is declared (e.g. the
// received tensor is sliced per antenna, the channel tensor per UE).
using CTensor = std::vector<CMat>;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double db2lin(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm2watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

}  // namespace gfma
