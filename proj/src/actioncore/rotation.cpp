#include "psi/actioncore/rotation.hpp"

#include <cmath>

#include "psi/common/errors.hpp"

namespace psi::actioncore {

namespace {

double dot3(const double* a, const double* b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

double norm3(const double* a) {
    return std::sqrt(dot3(a, a));
}

}  // namespace

bool is_rotation_matrix(const Mat3& R, double tol) {
    // Columns orthonormal and det +1.
    double c[3][3];
    for (int j = 0; j < 3; ++j) {
        for (int i = 0; i < 3; ++i) {
            c[j][i] = R[static_cast<size_t>(3 * i + j)];
        }
    }
    for (int j = 0; j < 3; ++j) {
        if (std::abs(norm3(c[j]) - 1.0) > tol) {
            return false;
        }
        for (int k = j + 1; k < 3; ++k) {
            if (std::abs(dot3(c[j], c[k])) > tol) {
                return false;
            }
        }
    }
    const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                       R[2] * (R[3] * R[7] - R[4] * R[6]);
    return std::abs(det - 1.0) <= 10.0 * tol;
}

Rot6d rot6d_from_matrix(const Mat3& R) {
    require_data(is_rotation_matrix(R, 1e-6), "invalid rotation");
    return {R[0], R[3], R[6], R[1], R[4], R[7]};
}

Mat3 matrix_from_rot6d(const Rot6d& v) {
    const double* a1 = v.data();
    const double* a2 = v.data() + 3;
    const double n1 = norm3(a1);
    require_data(n1 > 1e-9, "degenerate 6D rotation");

    double b1[3] = {a1[0] / n1, a1[1] / n1, a1[2] / n1};
    const double proj = dot3(b1, a2);
    double u2[3] = {a2[0] - proj * b1[0], a2[1] - proj * b1[1], a2[2] - proj * b1[2]};
    const double n2 = norm3(u2);
    require_data(n2 > 1e-9, "degenerate 6D rotation");
    double b2[3] = {u2[0] / n2, u2[1] / n2, u2[2] / n2};

    double b3[3] = {
        b1[1] * b2[2] - b1[2] * b2[1],
        b1[2] * b2[0] - b1[0] * b2[2],
        b1[0] * b2[1] - b1[1] * b2[0],
    };

    return {b1[0], b2[0], b3[0], b1[1], b2[1], b3[1], b1[2], b2[2], b3[2]};
}

}  // namespace psi::actioncore
