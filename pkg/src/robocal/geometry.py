"""Rigid-body math shared by every other module.

Conventions
-----------
Column vectors, left multiplication. A :class:`Pose` ``T_ab`` with rotation
``R`` and translation ``t`` maps a point expressed in frame ``b`` into frame
``a``::

    p_a = R @ p_b + t

``pose_compose(a, b)`` is the 4x4 matrix product ``a @ b``: first ``b``, then
``a``. Chains therefore read left to right from the outer frame inwards, e.g.
``M_sd = M_head @ X``.

Vectors are plain ``numpy`` arrays of shape ``(3,)``. Rotations are stored as
orthonormal matrices; axis-angle and quaternions are conversion views only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

NEAR_IDENTITY_ANGLE = 1e-6
NEAR_PI_TOL = 1e-6
ORTHO_TOL = 1e-9
PARALLEL_TOL = 1e-9


class GeometryError(ValueError):
    pass


class NearIdentity(GeometryError):
    """The rotation angle is too small for its axis to be meaningful."""

    def __init__(self, angle: float, threshold: float):
        super().__init__(f"rotation angle {angle:.3g} rad is below threshold {threshold:.3g} rad")
        self.angle = angle
        self.threshold = threshold


class DegenerateAntiparallel(GeometryError):
    """Vectors point in opposite directions, so the rotation axis is ambiguous.

    ``rotation`` holds one valid answer (a half turn about an arbitrary
    perpendicular axis) for callers that can live with the ambiguity.
    """

    def __init__(self, rotation: "Rotation"):
        super().__init__("vectors are antiparallel; rotation axis is ambiguous")
        self.rotation = rotation


class DegenerateGeometry(GeometryError):
    pass


def as_vec3(v: Iterable[float]) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise GeometryError(f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("vector has non-finite components")
    return arr


def unit(v: Iterable[float]) -> np.ndarray:
    arr = as_vec3(v)
    n = np.linalg.norm(arr)
    if n == 0.0:
        raise GeometryError("zero-length vector has no direction")
    return arr / n


def skew(v: Iterable[float]) -> np.ndarray:
    x, y, z = as_vec3(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def orthonormality_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m @ m.T - np.eye(3))))


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest proper rotation to ``m`` (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _canonical_axis_sign(axis: np.ndarray) -> np.ndarray:
    for c in axis:
        if abs(c) > 1e-12:
            return axis if c > 0 else -axis
    return axis


@dataclass(frozen=True)
class AxisAngle:
    """Canonical axis-angle view: unit axis, angle in (0, pi].

    ``near_pi`` marks angles within 1e-6 of pi, where the axis sign was fixed
    by the first-nonzero-component-positive rule rather than by the data.
    """

    axis: np.ndarray
    angle: float
    near_pi: bool = False

    @property
    def rotvec(self) -> np.ndarray:
        return self.axis * self.angle


@dataclass(frozen=True, eq=False)
class Rotation:
    """Proper rotation stored as a 3x3 orthonormal matrix."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise GeometryError(f"rotation matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise GeometryError("rotation matrix has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    @classmethod
    def from_matrix(cls, m, tol: float = 1e-6) -> "Rotation":
        """Build from a matrix that should already be a rotation.

        Small defects (up to ``tol``) are projected away; anything larger is
        rejected.
        """
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise GeometryError(f"rotation matrix must be 3x3, got {m.shape}")
        if orthonormality_defect(m) > tol or np.linalg.det(m) < 0:
            raise GeometryError("matrix is not a proper rotation")
        if orthonormality_defect(m) > ORTHO_TOL:
            m = project_to_so3(m)
        return cls(m)

    @classmethod
    def from_rotvec(cls, rotvec) -> "Rotation":
        w = as_vec3(rotvec)
        theta = float(np.linalg.norm(w))
        k = skew(w)
        if theta < 1e-8:
            # second-order Taylor expansion of Rodrigues
            return cls(np.eye(3) + k + 0.5 * k @ k)
        return cls(
            np.eye(3)
            + (math.sin(theta) / theta) * k
            + ((1.0 - math.cos(theta)) / theta**2) * k @ k
        )

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        return cls.from_rotvec(unit(axis) * float(angle))

    @classmethod
    def about_x(cls, angle: float) -> "Rotation":
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]))

    @classmethod
    def about_y(cls, angle: float) -> "Rotation":
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]))

    @classmethod
    def about_z(cls, angle: float) -> "Rotation":
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]))

    @classmethod
    def from_quaternion(cls, q) -> "Rotation":
        """Quaternion in (w, x, y, z) order; normalized before use."""
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape != (4,):
            raise GeometryError("quaternion must have 4 components (w, x, y, z)")
        n = np.linalg.norm(q)
        if n == 0.0 or not np.isfinite(n):
            raise GeometryError("quaternion has zero or non-finite norm")
        w, x, y, z = q / n
        return cls(
            np.array(
                [
                    [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                    [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                    [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
                ]
            )
        )

    def as_quaternion(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) with w >= 0."""
        m = self.matrix
        tr = np.trace(m)
        if tr > 0:
            s = 2.0 * math.sqrt(tr + 1.0)
            q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
        else:
            i = int(np.argmax(np.diag(m)))
            j, k = (i + 1) % 3, (i + 2) % 3
            s = 2.0 * math.sqrt(1.0 + m[i, i] - m[j, j] - m[k, k])
            q = np.empty(4)
            q[0] = (m[k, j] - m[j, k]) / s
            q[1 + i] = 0.25 * s
            q[1 + j] = (m[j, i] + m[i, j]) / s
            q[1 + k] = (m[k, i] + m[i, k]) / s
        q /= np.linalg.norm(q)
        return -q if q[0] < 0 else q

    def angle(self) -> float:
        """Geodesic angle in [0, pi]."""
        return float(np.linalg.norm(self.as_rotvec()))

    def as_rotvec(self) -> np.ndarray:
        """Rotation vector (axis * angle) with angle in [0, pi]."""
        m = self.matrix
        vee = 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
        s = float(np.linalg.norm(vee))
        c = 0.5 * (np.trace(m) - 1.0)
        theta = math.atan2(s, c)
        if theta < 1e-8:
            return vee
        if math.pi - theta > 1e-3:
            return vee * (theta / s)
        # near pi the antisymmetric part vanishes; take the axis from the
        # symmetric part, whose largest column is best conditioned
        b = 0.5 * (m + m.T) - c * np.eye(3)
        col = b[:, int(np.argmax(np.diag(b)))]
        axis = col / np.linalg.norm(col)
        if np.dot(axis, vee) < 0:
            axis = -axis
        return axis * theta

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            m = self.matrix @ other.matrix
            if orthonormality_defect(m) > ORTHO_TOL:
                m = project_to_so3(m)
            return Rotation(m)
        return self.matrix @ np.asarray(other, dtype=float)

    def __repr__(self) -> str:
        aa = self.as_rotvec()
        return f"Rotation(rotvec={np.array2string(aa, precision=6)})"


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``p_parent = rotation @ p_child + translation``."""

    rotation: Rotation = field(default_factory=Rotation.identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not isinstance(self.rotation, Rotation):
            object.__setattr__(self, "rotation", Rotation.from_matrix(self.rotation))
        t = as_vec3(self.translation).copy()
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise GeometryError(f"pose matrix must be 4x4, got {m.shape}")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise GeometryError("pose matrix must have a homogeneous last row")
        return cls(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(Rotation.identity(), t)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.inverse()
        return Pose(rt, -(rt.matrix @ self.translation))

    def apply(self, p) -> np.ndarray:
        return self.rotation.matrix @ as_vec3(p) + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation.matrix @ other.translation + self.translation,
        )

    def __repr__(self) -> str:
        return f"Pose({self.rotation!r}, t={np.array2string(self.translation, precision=6)})"


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Return ``a @ b``: apply ``b`` first, then ``a``."""
    return a @ b


def pose_inverse(p: Pose) -> Pose:
    return p.inverse()


def rotation_distance(a: Rotation, b: Rotation) -> float:
    """Geodesic angle between two rotations, in radians."""
    return (a.inverse() @ b).angle()


def to_axis_angle(r: Rotation, threshold: float = NEAR_IDENTITY_ANGLE) -> AxisAngle:
    """Canonical axis-angle form of ``r``.

    Raises :class:`NearIdentity` when the angle is below ``threshold``. At a
    half turn the axis sign is ambiguous; the first nonzero axis component is
    made positive and ``near_pi`` is set.
    """
    w = r.as_rotvec()
    angle = float(np.linalg.norm(w))
    if angle < threshold:
        raise NearIdentity(angle, threshold)
    axis = w / angle
    near_pi = math.pi - angle < NEAR_PI_TOL
    if near_pi:
        axis = _canonical_axis_sign(axis)
        angle = min(angle, math.pi)
    return AxisAngle(axis, angle, near_pi)


def from_axis_angle(aa: AxisAngle) -> Rotation:
    return Rotation.from_axis_angle(aa.axis, aa.angle)


def any_perpendicular(v) -> np.ndarray:
    v = unit(v)
    helper = np.eye(3)[int(np.argmin(np.abs(v)))]
    p = np.cross(v, helper)
    return p / np.linalg.norm(p)


def rotation_between_vectors(src, dst) -> Rotation:
    """Smallest rotation taking direction ``src`` onto direction ``dst``.

    The rotation axis is ``src x dst`` and the angle is the angle between the
    vectors. Antiparallel inputs raise :class:`DegenerateAntiparallel` whose
    ``rotation`` attribute is a half turn about an arbitrary perpendicular.
    """
    u = unit(src)
    v = unit(dst)
    axis = np.cross(u, v)
    s = float(np.linalg.norm(axis))
    c = float(np.dot(u, v))
    if s < PARALLEL_TOL and c < 0:
        raise DegenerateAntiparallel(Rotation.from_axis_angle(any_perpendicular(u), math.pi))
    if s < PARALLEL_TOL:
        return Rotation.identity()
    return Rotation.from_axis_angle(axis / s, math.atan2(s, c))


def mean_rotation(rotations: Iterable[Rotation]) -> Rotation:
    """Chordal L2 mean: projection of the arithmetic mean matrix onto SO(3)."""
    ms = [r.matrix for r in rotations]
    if not ms:
        raise GeometryError("cannot average an empty set of rotations")
    return Rotation(project_to_so3(np.mean(ms, axis=0)))


def mean_pose(poses: Iterable[Pose]) -> Pose:
    poses = list(poses)
    return Pose(
        mean_rotation(p.rotation for p in poses),
        np.mean([p.translation for p in poses], axis=0),
    )


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Uniformly distributed rotation (normalized Gaussian quaternion)."""
    return Rotation.from_quaternion(rng.normal(size=4))
