"""Reference-frame algebra: power-invariant Park transform and dq/DQ rotations.

Conventions used throughout the package::

    J = [[0, 1], [-1, 0]]      e = [1, 0]
    rot(delta) = [[cos, -sin], [sin, cos]]      x_DQ = rot(delta) @ x_dq

so that ``J @ rot(d) == rot(d) @ J`` and ``d rot / d delta == -J @ rot``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

J = np.array([[0.0, 1.0], [-1.0, 0.0]])
E = np.array([1.0, 0.0])

_SHIFTS = np.array([0.0, -TWO_PI / 3.0, TWO_PI / 3.0])


class FrameMismatchError(ValueError):
    pass


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    w = float(np.mod(theta, TWO_PI))
    # np.mod can return exactly 2*pi for tiny negative inputs
    return 0.0 if w >= TWO_PI else w


@dataclass(frozen=True)
class Angle:
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"angle must be finite, got {self.value}")
        object.__setattr__(self, "value", wrap_angle(self.value))

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class AbcSignal:
    a: float
    b: float
    c: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=float)

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        scale = max(1.0, abs(self.a), abs(self.b), abs(self.c))
        return abs(self.a + self.b + self.c) <= tol * scale

    @classmethod
    def symmetric(cls, amplitude: float, theta: float) -> "AbcSignal":
        """Balanced signal ``X sin(theta + shift)`` for the three phases."""
        a, b, c = amplitude * np.sin(theta + _SHIFTS)
        return cls(float(a), float(b), float(c))


@dataclass(frozen=True)
class DqVector:
    d: float
    q: float
    frame: str = "dq"  # "dq" (local) or "DQ" (synchronous)

    def __post_init__(self):
        if self.frame not in ("dq", "DQ"):
            raise ValueError(f"unknown frame tag {self.frame!r}")
        if not (np.isfinite(self.d) and np.isfinite(self.q)):
            raise ValueError("dq components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.d, self.q])

    def _check(self, other: "DqVector"):
        if self.frame != other.frame:
            raise FrameMismatchError(f"cannot combine {self.frame} and {other.frame} vectors")

    def __add__(self, other: "DqVector") -> "DqVector":
        self._check(other)
        return DqVector(self.d + other.d, self.q + other.q, self.frame)

    def __sub__(self, other: "DqVector") -> "DqVector":
        self._check(other)
        return DqVector(self.d - other.d, self.q - other.q, self.frame)

    def dot(self, other: "DqVector") -> float:
        self._check(other)
        return self.d * other.d + self.q * other.q


def _theta(theta) -> float:
    return float(theta.value) if isinstance(theta, Angle) else float(theta)


def park_matrix(theta) -> np.ndarray:
    """3x3 power-invariant Park matrix T(theta)."""
    th = _theta(theta) + _SHIFTS
    k = np.sqrt(2.0 / 3.0)
    return k * np.vstack([np.sin(th), np.cos(th), np.full(3, 1.0 / np.sqrt(2.0))])


def park(theta, x: AbcSignal, frame: str = "dq") -> tuple[DqVector, float]:
    """Map an abc signal to (dq vector, zero-sequence component)."""
    d, q, z = park_matrix(theta) @ x.as_array()
    return DqVector(float(d), float(q), frame), float(z)


def inverse_park(theta, x: DqVector, zero_component: float = 0.0) -> AbcSignal:
    # T is orthogonal, so its inverse is the transpose
    a, b, c = park_matrix(theta).T @ np.array([x.d, x.q, zero_component])
    return AbcSignal(float(a), float(b), float(c))


def rotation(delta) -> np.ndarray:
    """Rotation taking local dq quantities into the synchronous DQ frame."""
    d = _theta(delta)
    c, s = np.cos(d), np.sin(d)
    return np.array([[c, -s], [s, c]])


def rotation_derivative(delta) -> np.ndarray:
    return -J @ rotation(delta)


def to_synchronous(delta, x: DqVector) -> DqVector:
    if x.frame != "dq":
        raise FrameMismatchError("expected a local dq vector")
    d, q = rotation(delta) @ x.as_array()
    return DqVector(float(d), float(q), "DQ")


def to_local(delta, x: DqVector) -> DqVector:
    if x.frame != "DQ":
        raise FrameMismatchError("expected a synchronous DQ vector")
    d, q = rotation(delta).T @ x.as_array()
    return DqVector(float(d), float(q), "dq")
