#pragma once

#include <array>

namespace psi::actioncore {

/// 3x3 rotation matrix, row-major.
using Mat3 = std::array<double, 9>;
using Rot6d = std::array<double, 6>;

/// First two columns of R, concatenated column-major:
/// [R00, R10, R20, R01, R11, R21]. R must be orthonormal within 1e-6.
Rot6d rot6d_from_matrix(const Mat3& R);

/// Gram-Schmidt reconstruction: b1 = normalize(a1),
/// b2 = normalize(a2 - (b1.a2) b1), b3 = b1 x b2. The result is orthonormal
/// with determinant +1 within 1e-9. Near-zero or near-parallel inputs are an
/// error ("degenerate 6D rotation").
Mat3 matrix_from_rot6d(const Rot6d& v);

bool is_rotation_matrix(const Mat3& R, double tol);

}  // namespace psi::actioncore
