"""Rotation helpers and the sinusoidal time encoding.

Conventions
-----------
- Quaternions are ``(w, x, y, z)`` numpy arrays; batches stack along axis 0.
- Axis-angle vectors are 3-vectors whose norm is the angle in radians.
- Rotation matrices act on column vectors: ``x' = R @ x``.
- Everything is float64.
"""
import numpy as np

EPS = 1e-8
N_BANDS = 6
TIME_ENC_DIM = 1 + 2 * N_BANDS

# below this angle the Rodrigues coefficients switch to their Taylor series
_SMALL_ANGLE = 1e-2


def normalize(v, eps=EPS):
    v = np.asarray(v, dtype=np.float64)
    return v / (np.linalg.norm(v, axis=-1, keepdims=True) + eps)


def aa_to_quat(w):
    """Axis-angle to unit quaternion.

    ``normalize([cos(θ/2), w / (θ + ε) · sin(θ/2)])`` with ``θ = ‖w‖``; the
    ε keeps the zero rotation well defined. Accepts ``(3,)`` or ``(n, 3)``.
    """
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w, axis=-1, keepdims=True)
    q = np.concatenate([np.cos(theta / 2.0), w / (theta + EPS) * np.sin(theta / 2.0)], axis=-1)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_compose(a, b):
    """Hamilton product ``a ⊗ b``, renormalized."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    q = np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_conj(q):
    q = np.array(q, dtype=np.float64)
    q[..., 1:] *= -1.0
    return q


def quat_rotate(q, v):
    """Rotate vector(s) ``v`` by unit quaternion(s) ``q``."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    qv = q[..., 1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[..., :1] * t + np.cross(qv, t)


def quat_to_matrix(q):
    w, x, y, z = np.asarray(q, dtype=np.float64)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _rodrigues_coeffs(theta):
    """Return A = sinθ/θ, B = (1-cosθ)/θ², and their radial derivative factors.

    C = (θcosθ - sinθ)/θ³ and D = (θsinθ - 2(1-cosθ))/θ⁴ satisfy
    ∇A = C·ω and ∇B = D·ω.
    """
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        t4 = t2 * t2
        return (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0,
        )
    s, c = np.sin(theta), np.cos(theta)
    return (
        s / theta,
        (1.0 - c) / (theta * theta),
        (theta * c - s) / theta**3,
        (theta * s - 2.0 * (1.0 - c)) / theta**4,
    )


def rodrigues(w):
    """Rotation matrix ``exp([w]×)`` for an axis-angle vector."""
    w = np.asarray(w, dtype=np.float64)
    A, B, _, _ = _rodrigues_coeffs(float(np.linalg.norm(w)))
    K = skew(w)
    return np.eye(3) + A * K + B * (K @ K)


def rodrigues_vjp(w, v, g):
    """Gradient w.r.t. ``w`` of ``Σ_i g_i · (rodrigues(w) @ v_i)``.

    ``v`` and ``g`` are ``(n, 3)``. Uses ``R v = v + A (w×v) + B w×(w×v)``
    differentiated term by term.
    """
    w = np.asarray(w, dtype=np.float64)
    A, B, C, D = _rodrigues_coeffs(float(np.linalg.norm(w)))
    wxv = np.cross(w, v)
    wwxv = np.cross(w, wxv)
    wv = v @ w
    wg = g @ w
    vg = np.einsum("ij,ij->i", v, g)
    out = A * np.cross(v, g).sum(axis=0)
    out = out + C * w * np.einsum("ij,ij->", wxv, g)
    out = out + B * ((wv[:, None] * g).sum(axis=0) + (v * wg[:, None]).sum(axis=0) - 2.0 * w * vg.sum())
    out = out + D * w * np.einsum("ij,ij->", wwxv, g)
    return out


def matrix_to_aa(R):
    """Axis-angle vector of a rotation matrix (angle in [0, π])."""
    R = np.asarray(R, dtype=np.float64)
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    if theta < 1e-12:
        return np.zeros(3)
    if np.pi - theta < 1e-6:
        # near a half turn the antisymmetric part vanishes; read the axis off R + I
        M = (R + np.eye(3)) / 2.0
        axis = M[np.argmax(np.diag(M))]
        return normalize(axis, eps=0.0) * theta
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / (2.0 * np.sin(theta))
    return axis * theta


def rotation_angle(R):
    """Geodesic angle of a rotation matrix, in radians."""
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))


def posenc(t):
    """``[t, sin(2⁰πt), cos(2⁰πt), ..., sin(2⁵πt), cos(2⁵πt)]``.

    Scalar ``t`` gives a ``(13,)`` vector, an array gives ``(..., 13)``.
    Values outside [0, 1] are encoded the same way.
    """
    t = np.asarray(t, dtype=np.float64)
    freqs = (2.0 ** np.arange(N_BANDS)) * np.pi
    ang = t[..., None] * freqs
    sc = np.stack([np.sin(ang), np.cos(ang)], axis=-1).reshape(*t.shape, 2 * N_BANDS)
    return np.concatenate([t[..., None], sc], axis=-1)
