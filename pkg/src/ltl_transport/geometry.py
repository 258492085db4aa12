"""Workspace, regions of interest and sphere-decomposed rigid bodies.

All bodies are unions of spheres. Orientation uses intrinsic Z-Y-X Euler
angles stored as ``(yaw, pitch, roll)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an operation receives malformed input."""


DEFAULT_EPSILON = 0.01  # m


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(euler) -> np.ndarray:
    yaw, pitch, roll = euler
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def matrix_to_euler(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix` (pitch restricted to [-pi/2, pi/2])."""
    pitch = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    if abs(R[2, 0]) < 1.0 - 1e-12:
        yaw = np.arctan2(R[1, 0], R[0, 0])
        roll = np.arctan2(R[2, 1], R[2, 2])
    else:
        # gimbal lock: fold roll into yaw
        yaw = np.arctan2(-R[0, 1], R[1, 1])
        roll = 0.0
    return wrap_angle(np.array([yaw, pitch, roll]))


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(-1)
        e = np.asarray(self.orientation, dtype=float).reshape(-1)
        if p.shape != (3,) or e.shape != (3,):
            raise InvalidInputError("pose needs a 3-vector position and 3 Euler angles")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", wrap_angle(e))

    @property
    def rotation(self) -> np.ndarray:
        return euler_to_matrix(self.orientation)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])


@dataclass(frozen=True)
class Region:
    id: int
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        if c.shape != (3,):
            raise InvalidInputError(f"region {self.id}: center must be a 3-vector")
        if not self.radius > 0:
            raise InvalidInputError(f"region {self.id}: radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class Workspace:
    center: np.ndarray
    radius: float
    regions: tuple[Region, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "regions", tuple(self.regions))

    def violations(self) -> list[str]:
        """Return a message for every violated separation inequality."""
        out = []
        if not self.radius > 0:
            out.append("workspace radius must be positive")
        if not self.regions:
            return out
        rmax = max(r.radius for r in self.regions)
        for reg in self.regions:
            d = np.linalg.norm(reg.center - self.center)
            if not d < self.radius - 3.0 * reg.radius:
                out.append(
                    f"region {reg.id}: distance to workspace center {d:.3f} m "
                    f"is not below r_0 - 3 r_k = {self.radius - 3.0 * reg.radius:.3f} m"
                )
        for a_idx, a in enumerate(self.regions):
            for b in self.regions[a_idx + 1:]:
                d = np.linalg.norm(a.center - b.center)
                if not d > 4.0 * rmax:
                    out.append(
                        f"regions {a.id} and {b.id}: center distance {d:.3f} m "
                        f"is not above 4 max r = {4.0 * rmax:.3f} m"
                    )
        return out

    def validate(self) -> "Workspace":
        problems = self.violations()
        if problems:
            raise InvalidInputError("; ".join(problems))
        return self

    def region(self, k: int) -> Region:
        for r in self.regions:
            if r.id == k:
                return r
        raise KeyError(k)

    @property
    def region_ids(self) -> list[int]:
        return [r.id for r in self.regions]


@dataclass(frozen=True)
class Sphere:
    """A sphere fixed in a named body frame."""

    frame: str
    offset: np.ndarray
    radius: float

    def __post_init__(self):
        o = np.asarray(self.offset, dtype=float).reshape(-1)
        if o.shape != (3,):
            raise InvalidInputError("sphere offset must be a 3-vector")
        if not self.radius > 0:
            raise InvalidInputError("sphere radius must be positive")
        object.__setattr__(self, "offset", o)
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class BodyGeometry:
    spheres: tuple[Sphere, ...]

    def __post_init__(self):
        object.__setattr__(self, "spheres", tuple(self.spheres))
        if not self.spheres:
            raise InvalidInputError("a body needs at least one sphere")

    @property
    def radii(self) -> np.ndarray:
        return np.array([s.radius for s in self.spheres])

    def in_frame(self, frame: str) -> list[int]:
        return [i for i, s in enumerate(self.spheres) if s.frame == frame]


def world_spheres(model, config) -> tuple[np.ndarray, np.ndarray]:
    """World-frame sphere centers ``(k, 3)`` and radii ``(k,)`` of a body.

    ``model`` is an agent model (``config`` = joint vector) or an object
    model (``config`` = :class:`Pose`).
    """
    return model.world_spheres(config)


def in_region(model, config, region: Region, eps: float = DEFAULT_EPSILON) -> bool:
    if not eps > 0:
        raise InvalidInputError("epsilon must be positive")
    centers, radii = world_spheres(model, config)
    return spheres_in_region(centers, radii, region, eps)


def spheres_in_region(centers, radii, region: Region, eps: float = DEFAULT_EPSILON) -> bool:
    d = np.linalg.norm(np.asarray(centers) - region.center, axis=-1)
    return bool(np.all(d + np.asarray(radii) <= region.radius - eps))


def min_clearance(centers_a, radii_a, centers_b, radii_b) -> float:
    """Smallest surface gap between two sphere sets; negative on penetration."""
    ca = np.atleast_2d(np.asarray(centers_a, dtype=float))
    cb = np.atleast_2d(np.asarray(centers_b, dtype=float))
    ra = np.atleast_1d(np.asarray(radii_a, dtype=float))
    rb = np.atleast_1d(np.asarray(radii_b, dtype=float))
    if ca.size == 0 or cb.size == 0:
        raise InvalidInputError("min_clearance needs two non-empty sphere lists")
    d = np.linalg.norm(ca[:, None, :] - cb[None, :, :], axis=-1)
    return float(np.min(d - ra[:, None] - rb[None, :]))
