"""Exact 2x2 spin algebra.

Basis convention used everywhere in the package: index 0 is |up>, index 1 is
|down>, so ``SZ @ [1, 0] == +[1, 0]``.  Joint spaces are ordered
``electron (x) nucleus_1 (x) nucleus_2 ...``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

ID2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SX, SY, SZ)

UP = np.array([1, 0], dtype=complex)
DOWN = np.array([0, 1], dtype=complex)

UNIT_TOL = 1e-9
IDENTITY_ANGLE = 1e-9


class NormalizationError(ValueError):
    """Raised when a rotation axis is not a unit vector."""


class BlochVector(NamedTuple):
    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.x**2 + self.y**2 + self.z**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class AxisAngle:
    """Canonical SU(2) summary: angle in [0, pi], unit axis, global phase."""

    axis: tuple[float, float, float]
    angle: float
    global_phase: float = 0.0

    @property
    def axis_array(self) -> np.ndarray:
        return np.asarray(self.axis, dtype=float)


def _check_axis(axis) -> np.ndarray:
    n = np.asarray(axis, dtype=float).reshape(3)
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > UNIT_TOL:
        raise NormalizationError(f"rotation axis must be a unit vector, |n| = {norm!r}")
    return n


def su2_from_axis_angle(axis, angle: float) -> np.ndarray:
    """exp(-i angle (n . sigma) / 2) in closed (Rodrigues) form."""
    n = _check_axis(axis)
    if not math.isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle!r}")
    c = math.cos(angle / 2)
    s = math.sin(angle / 2)
    return np.array(
        [
            [c - 1j * s * n[2], -1j * s * n[0] - s * n[1]],
            [-1j * s * n[0] + s * n[1], c + 1j * s * n[2]],
        ]
    )


def precession(field_mhz, t_us: float) -> np.ndarray:
    """Propagator for precession at frequency vector ``field_mhz`` (MHz) for ``t_us``.

    The spin rotates at 2*pi*|f| rad/us about f/|f|.
    """
    f = np.asarray(field_mhz, dtype=float)
    w = float(np.linalg.norm(f))
    if w == 0.0:
        return ID2.copy()
    return su2_from_axis_angle(f / w, 2 * math.pi * w * t_us)


def precession_batch(field_mhz, t_us) -> np.ndarray:
    """Vectorized :func:`precession` over an array of durations; shape (T, 2, 2)."""
    f = np.asarray(field_mhz, dtype=float)
    t = np.atleast_1d(np.asarray(t_us, dtype=float))
    w = float(np.linalg.norm(f))
    out = np.zeros(t.shape + (2, 2), dtype=complex)
    if w == 0.0:
        out[..., 0, 0] = 1
        out[..., 1, 1] = 1
        return out
    n = f / w
    half = math.pi * w * t
    c = np.cos(half)
    s = np.sin(half)
    out[..., 0, 0] = c - 1j * s * n[2]
    out[..., 0, 1] = -1j * s * n[0] - s * n[1]
    out[..., 1, 0] = -1j * s * n[0] + s * n[1]
    out[..., 1, 1] = c + 1j * s * n[2]
    return out


def axis_angle_from_su2(u) -> AxisAngle:
    """Decompose a 2x2 unitary as ``exp(i*g) * su2_from_axis_angle(n, a)``.

    The angle is folded into [0, pi] with the axis sign absorbing the rest.
    Rotations with angle below 1e-9 report the +z axis.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {u.shape}")
    if not np.allclose(u.conj().T @ u, ID2, atol=UNIT_TOL, rtol=0):
        raise ValueError("matrix is not unitary within 1e-9")
    phase = np.angle(np.linalg.det(u)) / 2
    v = u * np.exp(-1j * phase)
    c = float(np.real(v[0, 0] + v[1, 1])) / 2
    sn = np.array(
        [
            -np.imag(v[0, 1] + v[1, 0]) / 2,
            np.real(v[1, 0] - v[0, 1]) / 2,
            np.imag(v[1, 1] - v[0, 0]) / 2,
        ]
    )
    s = float(np.linalg.norm(sn))
    angle = 2 * math.atan2(s, c)
    if angle > math.pi:
        # R(n, a) = -R(-n, 2pi - a)
        angle = 2 * math.pi - angle
        sn = -sn
        phase += math.pi
    if angle < IDENTITY_ANGLE:
        axis = np.array([0.0, 0.0, 1.0])
    else:
        axis = sn / s
    recon = su2_from_axis_angle(axis, angle)
    # recover the global phase from the best-conditioned entry
    k = np.unravel_index(np.argmax(np.abs(recon)), recon.shape)
    g = float(np.angle(u[k] / recon[k]))
    return AxisAngle(axis=tuple(float(a) for a in axis), angle=float(angle), global_phase=g)


def kron(*ops) -> np.ndarray:
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def bloch_from_density(rho) -> BlochVector:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 density matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > UNIT_TOL:
        raise ValueError("density matrix is not Hermitian within 1e-9")
    return BlochVector(*(float(np.real(np.trace(rho @ p))) for p in PAULI))


def density_from_bloch(r) -> np.ndarray:
    x, y, z = (float(v) for v in r)
    return 0.5 * (ID2 + x * SX + y * SY + z * SZ)


def bloch_from_state(psi) -> BlochVector:
    psi = np.asarray(psi, dtype=complex)
    return bloch_from_density(np.outer(psi, psi.conj()))


def partial_trace(rho, dims: tuple[int, ...], keep: int) -> np.ndarray:
    """Reduced density matrix of subsystem ``keep`` in a tensor space with ``dims``."""
    rho = np.asarray(rho)
    n = len(dims)
    t = rho.reshape(dims + dims)
    for idx in reversed(range(n)):
        if idx == keep:
            continue
        t = np.trace(t, axis1=idx, axis2=idx + t.ndim // 2)
    return t


def is_density_matrix(rho, tol: float = 1e-9) -> bool:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        return False
    if abs(np.trace(rho) - 1) > tol:
        return False
    return bool(np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2)) >= -tol)
