"""Spatial algebra on SE(3): poses, twists, wrenches, inertias, adjoints.

Six-vectors stack angular on top of linear. All values here are immutable
and every operation is a pure function, so instances can be shared freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInertia

_ORTHO_TOL = 1e-12


def _freeze(a, shape) -> np.ndarray:
    out = np.array(a, dtype=float).reshape(shape)
    out.setflags(write=False)
    return out


def skew(v) -> np.ndarray:
    """3x3 cross-product matrix: skew(a) @ b == np.cross(a, b)."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_about(axis, angle: float) -> np.ndarray:
    # Euler-Rodrigues, unit axis assumed
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis XYZ rotation, the URDF rpy convention: Rz(yaw) Ry(pitch) Rx(roll)."""
    return (
        rotation_about((0.0, 0.0, 1.0), yaw)
        @ rotation_about((0.0, 1.0, 0.0), pitch)
        @ rotation_about((1.0, 0.0, 0.0), roll)
    )


def rotation_to_rpy(r: np.ndarray) -> tuple[float, float, float]:
    """Inverse of rpy_matrix. Returns one branch; near pitch = +-pi/2 roll is folded into yaw."""
    sy = math.hypot(r[0, 0], r[1, 0])
    if sy < 1e-9:
        return math.atan2(-r[1, 2], r[1, 1]), math.atan2(-r[2, 0], sy), 0.0
    return math.atan2(r[2, 1], r[2, 2]), math.atan2(-r[2, 0], sy), math.atan2(r[1, 0], r[0, 0])


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: ``rotation`` in SO(3) plus ``translation``.

    A Pose written T_ab is the pose of frame b expressed in frame a; it maps
    b-coordinates into a-coordinates.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _freeze(self.rotation, (3, 3))
        p = _freeze(self.translation, (3,))
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(r) < 0.0:
            raise ValueError("rotation is a reflection, det must be +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", p)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_xyz_rpy(cls, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(rpy_matrix(*rpy), np.asarray(xyz, dtype=float))

    @classmethod
    def from_matrix(cls, t: np.ndarray) -> "Pose":
        t = np.asarray(t, dtype=float)
        return cls(t[:3, :3], t[:3, 3])

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def transform_point(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def matrix(self) -> np.ndarray:
        t = np.eye(4)
        t[:3, :3] = self.rotation
        t[:3, 3] = self.translation
        return t


class _Vec6:
    """Shared behaviour of the (angular; linear) six-vector value types."""

    angular: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angular", _freeze(self.angular, (3,)))
        object.__setattr__(self, "linear", _freeze(self.linear, (3,)))

    @classmethod
    def zero(cls):
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])


@dataclass(frozen=True, eq=False)
class Twist(_Vec6):
    """Body velocity (omega; v) of a frame, expressed in that frame."""

    angular: np.ndarray
    linear: np.ndarray


@dataclass(frozen=True, eq=False)
class Accel(_Vec6):
    """Time derivative of a body twist, expressed in the body frame."""

    angular: np.ndarray
    linear: np.ndarray


@dataclass(frozen=True, eq=False)
class Wrench(_Vec6):
    """Moment and force (m; f), expressed in the frame that carries it."""

    angular: np.ndarray
    linear: np.ndarray


@dataclass(frozen=True, eq=False)
class ScrewAxis:
    """Unit joint screw (omega_hat; v), expressed in the child body frame."""

    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", _freeze(self.vector, (6,)))

    @property
    def angular(self) -> np.ndarray:
        return self.vector[:3]

    @property
    def linear(self) -> np.ndarray:
        return self.vector[3:]

    def transformed(self, pose: Pose) -> "ScrewAxis":
        """Re-express the screw in frame a given ``pose`` = T_ab."""
        return ScrewAxis(big_adjoint(pose) @ self.vector)


@dataclass(frozen=True, eq=False)
class SpatialInertia:
    """Rigid-body inertia about the body frame, which must sit at the COM.

    With the frame at the COM the 6x6 matrix is block diagonal:
    diag(rotational_inertia, mass * I3).
    """

    mass: float
    rotational_inertia: np.ndarray

    def __post_init__(self):
        i = _freeze(self.rotational_inertia, (3, 3))
        if not self.mass > 0.0:
            raise InvalidInertia(f"mass must be positive, got {self.mass}")
        if np.max(np.abs(i - i.T)) > 1e-12:
            raise InvalidInertia("rotational inertia must be symmetric")
        if np.linalg.eigvalsh(i)[0] <= 0.0:
            raise InvalidInertia("rotational inertia must be positive definite")
        object.__setattr__(self, "rotational_inertia", i)

    def matrix(self) -> np.ndarray:
        g = np.zeros((6, 6))
        g[:3, :3] = self.rotational_inertia
        g[3:, 3:] = self.mass * np.eye(3)
        return g


def big_adjoint(pose: Pose) -> np.ndarray:
    """6x6 adjoint of T_ab: maps twists expressed in b to twists in a.

    Its transpose maps wrenches the opposite way, from a to b.
    """
    r = pose.rotation
    ad = np.zeros((6, 6))
    ad[:3, :3] = r
    ad[3:, 3:] = r
    ad[3:, :3] = skew(pose.translation) @ r
    return ad


def little_adjoint(twist) -> np.ndarray:
    """6x6 Lie bracket matrix [ad_V]: little_adjoint(V) @ W = [V, W]."""
    v = twist.as_vector() if isinstance(twist, _Vec6) else np.asarray(twist, dtype=float)
    ad = np.zeros((6, 6))
    ad[:3, :3] = skew(v[:3])
    ad[3:, 3:] = skew(v[:3])
    ad[3:, :3] = skew(v[3:])
    return ad


def exp_screw(axis: ScrewAxis, angle: float) -> Pose:
    """Exponential of a screw: the pose reached after ``angle`` along ``axis``."""
    w = axis.angular
    v = axis.linear
    if np.linalg.norm(w) < 1e-12:
        return Pose(np.eye(3), v * angle)
    k = skew(w)
    r = rotation_about(w, angle)
    g = (np.eye(3) * angle
         + (1.0 - math.cos(angle)) * k
         + (angle - math.sin(angle)) * (k @ k))
    return Pose(r, g @ v)


def joint_transform(rest_offset: Pose, axis: ScrewAxis | None, angle: float) -> Pose:
    """Child-frame-from-parent-frame transform of a joint at ``angle``.

    ``rest_offset`` is the child pose in the parent frame at zero angle,
    ``axis`` the joint screw in the child frame (None for a fixed joint).
    """
    if axis is None:
        return rest_offset.inverse()
    return exp_screw(axis, -angle) @ rest_offset.inverse()
