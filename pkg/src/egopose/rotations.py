"""Small quaternion / SO(3) toolbox used by the camera and skeleton code.

Quaternions are stored as (x, y, z, w) numpy arrays and are kept unit-norm.
Tangent-space vectors are axis-angle increments applied on the left:
q' = exp(delta) * q.
"""

import numpy as np

_EPS = 1e-12


def normalize_quat(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < _EPS:
        raise ValueError("cannot normalize zero quaternion")
    return q / n


def quat_to_matrix(q):
    """Rotation matrix of a unit quaternion (x, y, z, w)."""
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_multiply(a, b):
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


def quat_conjugate(q):
    return np.array([-q[0], -q[1], -q[2], q[3]])


def axis_angle_to_quat(v):
    """exp map: rotation vector -> unit quaternion."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < _EPS:
        q = np.array([v[0] / 2, v[1] / 2, v[2] / 2, 1.0])
        return normalize_quat(q)
    axis = v / angle
    s = np.sin(angle / 2)
    return np.array([axis[0] * s, axis[1] * s, axis[2] * s, np.cos(angle / 2)])


def quat_to_axis_angle(q):
    """log map: unit quaternion -> rotation vector in (-pi, pi]."""
    q = np.asarray(q, dtype=float)
    if q[3] < 0:
        q = -q
    s = np.linalg.norm(q[:3])
    if s < _EPS:
        return 2.0 * q[:3]
    angle = 2.0 * np.arctan2(s, q[3])
    return q[:3] * (angle / s)


def apply_tangent(q, delta):
    """Left-multiplicative update q' = exp(delta) * q, renormalized."""
    return normalize_quat(quat_multiply(axis_angle_to_quat(delta), q))


def skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]], dtype=float)


def axis_angle_matrix(axis, angle):
    """Rodrigues rotation about a unit axis."""
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def so3_left_jacobian_inverse(r):
    """Inverse left Jacobian of the SO(3) log map at rotation vector r.

    Satisfies d/d(delta) log(exp(delta) exp(r)) |_{delta=0} = J_l^{-1}(r),
    which makes gradients of tangent-space differences exact.
    """
    r = np.asarray(r, dtype=float)
    theta = np.linalg.norm(r)
    K = skew(r)
    if theta < 1e-6:
        # series: I - K/2 + K^2 / 12
        return np.eye(3) - 0.5 * K + (K @ K) / 12.0
    coef = (1.0 / theta**2) - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * K + coef * (K @ K)
