"""Smooth synthetic conductivities built from C2 bump functions.

The default test phantom has a uniform background of 1 and three
inclusions: two discs with plateau values 2 and 1.3 and a crescent with
plateau 1.7, all ramped to the background with a quintic smoothstep so
the field is twice continuously differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import NodalField
from .mesh import Mesh


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.hypot(points[..., 0] - self.center[0], points[..., 1] - self.center[1])


@dataclass(frozen=True)
class Crescent:
    """Outer disc with a second disc cut out of it."""

    outer: Disc
    cut: Disc


@dataclass(frozen=True)
class Inclusion:
    shape: Disc | Crescent
    plateau: float
    ramp_width: float

    def __post_init__(self):
        if self.ramp_width <= 0.0:
            raise ValueError("ramp_width must be positive")
        discs = (
            (self.shape,) if isinstance(self.shape, Disc) else (self.shape.outer, self.shape.cut)
        )
        for d in discs:
            if self.ramp_width >= d.radius:
                raise ValueError("ramp_width must be smaller than the disc radius")


@dataclass(frozen=True)
class PhantomSpec:
    background: float
    inclusions: tuple[Inclusion, ...]

    def __post_init__(self):
        if self.background <= 0.0:
            raise ValueError("background conductivity must be positive")


def c2_ramp(t):
    """Quintic smoothstep: 0 for t <= 0, 1 for t >= 1, C2 at both joins."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _disc_bump(disc: Disc, width: float, points: np.ndarray) -> np.ndarray:
    return c2_ramp((disc.radius - disc.distance(points)) / width)


def evaluate_phantom(spec: PhantomSpec, points) -> np.ndarray:
    """Evaluate the phantom at one point (2,) or many points (N, 2)."""
    pts = np.asarray(points, dtype=np.float64)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = np.full(pts.shape[0], spec.background)
    for inc in spec.inclusions:
        if isinstance(inc.shape, Disc):
            bump = _disc_bump(inc.shape, inc.ramp_width, pts)
        else:
            bump = _disc_bump(inc.shape.outer, inc.ramp_width, pts) * (
                1.0 - _disc_bump(inc.shape.cut, inc.ramp_width, pts)
            )
        out += (inc.plateau - spec.background) * bump
    return float(out[0]) if scalar else out


def phantom_field(spec: PhantomSpec, mesh: Mesh) -> NodalField:
    """Phantom sampled at the mesh vertices."""
    return NodalField(mesh, evaluate_phantom(spec, mesh.vertices))


def default_phantom() -> PhantomSpec:
    """Background 1 with plateau-2 and plateau-1.3 discs and a plateau-1.7 crescent.

    The large disc sits in the quadrant adjacent to the accessible arc
    {theta in [0, alpha]} so that limited-angle runs degrade the far
    inclusions first. All geometry can be overridden via a custom
    ``PhantomSpec`` (only the plateau values 1, 1.3, 1.7, 2 are canonical).
    """
    return PhantomSpec(
        background=1.0,
        inclusions=(
            Inclusion(Disc((0.4, 0.25), 0.25), plateau=2.0, ramp_width=0.06),
            Inclusion(Disc((-0.1, -0.45), 0.15), plateau=1.3, ramp_width=0.06),
            Inclusion(
                Crescent(Disc((-0.35, 0.3), 0.3), Disc((-0.2, 0.35), 0.25)),
                plateau=1.7,
                ramp_width=0.06,
            ),
        ),
    )
