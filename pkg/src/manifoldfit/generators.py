"""Deterministic generators for the worked example sets, plus analytic
tangent-plane oracles for the smooth-graph generators.

Every generated point satisfies its defining equations to 1e-12; densities
are controlled per parameter dimension and duplicates are merged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bundles import SampledSet
from .geometry import GrPlane

__all__ = [
    "GeneratorSpec",
    "generate",
    "generator_names",
    "analytic_tangent",
    "MIN_LOOP_SAMPLES",
]

MIN_LOOP_SAMPLES = 64

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


class UnknownGeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    """Named sample-set recipe: generator name, per-dimension densities,
    and a seed for any randomized fill."""

    name: str
    density: dict = field(default_factory=dict)
    seed: int = 0
    params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "density": dict(self.density),
                "seed": self.seed, "params": dict(self.params)}


def _dedup(points: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Merge points closer than tol; keeps first occurrences, stable order."""
    kept: list[np.ndarray] = []
    cells: dict[tuple, list[int]] = {}
    out_idx = []
    for i, p in enumerate(points):
        key = tuple(np.round(p / tol).astype(np.int64) // 4)
        dup = False
        for kk in _neighbor_keys(key):
            for j in cells.get(kk, ()):
                if np.linalg.norm(points[j] - p) <= tol:
                    dup = True
                    break
            if dup:
                break
        if not dup:
            cells.setdefault(key, []).append(i)
            out_idx.append(i)
    return points[out_idx]


def _neighbor_keys(key: tuple):
    deltas = [(-1, 0, 1)] * len(key)
    import itertools
    for off in itertools.product(*deltas):
        yield tuple(k + o for k, o in zip(key, off))


def _disk(count: int, radius: float = 1.0) -> np.ndarray:
    """Concentric-ring sample of the closed disk, interior only; ring angle
    grids are offset so no two rings align."""
    if count <= 0:
        return np.zeros((0, 2))
    n_rings = max(1, round(math.sqrt(count / math.pi)))
    raw = []
    weights = [(j + 0.5) for j in range(n_rings)]
    total_w = sum(weights)
    for j, w in enumerate(weights):
        r = radius * (j + 0.5) / n_rings
        n_j = max(1, round(count * w / total_w))
        offset = 2.0 * math.pi * ((j * _GOLDEN) % 1.0)
        ang = offset + 2.0 * math.pi * np.arange(n_j) / n_j
        raw.append(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1))
    return np.vstack(raw)


def _strip(t_count: int, s_count: int, height) -> np.ndarray:
    t = 2.0 * math.pi * np.arange(t_count) / t_count
    s = np.linspace(0.0, 1.0, s_count)
    tt, ss = np.meshgrid(t, s, indexing="ij")
    tt, ss = tt.ravel(), ss.ravel()
    h1, h2 = height(tt, ss)
    return np.stack([np.cos(tt), np.sin(tt), h1, h2], axis=1)


def _e_family(density: dict, half_angle: bool) -> np.ndarray:
    t_count = int(density.get("t", 128))
    s_count = int(density.get("s", 8))
    disk_count = int(density.get("disk", 400))
    if half_angle:
        height = lambda tt, ss: (ss * np.cos(tt / 2.0), ss * np.sin(tt / 2.0))
    else:
        height = lambda tt, ss: (ss * np.cos(tt), ss * np.sin(tt))
    strip = _strip(t_count, s_count, height)
    disk = _disk(disk_count)
    disk4 = np.hstack([disk, np.zeros((len(disk), 2))])
    return _dedup(np.vstack([strip, disk4]))


def _iota(points: np.ndarray) -> np.ndarray:
    return np.hstack([points, np.zeros((len(points), 1))])


def _farey(max_den: int) -> list[Fraction]:
    out = set()
    for q in range(1, max_den + 1):
        for p in range(0, q + 1):
            out.add(Fraction(p, q))
    return sorted(out)


def _dirichlet_graph(density: dict) -> np.ndarray:
    max_den = int(density.get("max_denominator", 50))
    irr_count = int(density.get("irrationals", 800))
    rationals = np.array([float(f) for f in _farey(max_den)])
    # golden-ratio low-discrepancy points standing in for the irrationals
    irr = ((np.arange(1, irr_count + 1) * (_GOLDEN - 1.0)) % 1.0)
    irr = np.setdiff1d(irr, rationals)
    top = np.stack([rationals, np.ones_like(rationals)], axis=1)
    bottom = np.stack([irr, np.zeros_like(irr)], axis=1)
    return _dedup(np.vstack([top, bottom]))


def _circle(density: dict, params: dict) -> np.ndarray:
    count = int(density.get("t", 100))
    radius = float(params.get("radius", 1.0))
    t = 2.0 * math.pi * np.arange(count) / count
    return np.stack([radius * np.cos(t), radius * np.sin(t)], axis=1)


def _grid2(count: int, lo, hi) -> np.ndarray:
    side = max(2, round(math.sqrt(count)))
    u = np.linspace(lo[0], hi[0], side)
    v = np.linspace(lo[1], hi[1], side)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    return np.stack([uu.ravel(), vv.ravel()], axis=1)


def _graph_points(name: str, density: dict, params: dict) -> np.ndarray:
    count = int(density.get("t", 400))
    if name == "line":
        slope = np.asarray(params.get("slope", [1.0]), dtype=float)
        t = np.linspace(-1.0, 1.0, count)
        return np.hstack([t[:, None], t[:, None] * slope[None, :]])
    if name == "rotated_plane":
        angle = float(params.get("angle", 0.35))
        uv = _grid2(count, (-1.0, -1.0), (1.0, 1.0))
        z = math.tan(angle) * uv[:, 0]
        return np.hstack([uv, z[:, None]])
    if name == "parabola_sheet":
        a = float(params.get("a", 0.5))
        b = float(params.get("b", 0.25))
        uv = _grid2(count, (-1.0, -1.0), (1.0, 1.0))
        z = a * uv[:, 0] ** 2 + b * uv[:, 1] ** 2
        return np.hstack([uv, z[:, None]])
    if name == "helix":
        radius = float(params.get("radius", 1.0))
        pitch = float(params.get("pitch", 0.3))
        span = float(params.get("span", 4.0 * math.pi))
        t = np.linspace(0.0, span, count)
        return np.stack([radius * np.cos(t), radius * np.sin(t), pitch * t], axis=1)
    if name == "torus_patch":
        big = float(params.get("R", 6.0))
        small = float(params.get("r", 3.0))
        u_half = float(params.get("u_half", 0.35))
        v_half = float(params.get("v_half", 0.35))
        uv = _grid2(count, (-u_half, -v_half), (u_half, v_half))
        u, v = uv[:, 0], uv[:, 1]
        x = (big + small * np.cos(v)) * np.cos(u)
        y = (big + small * np.cos(v)) * np.sin(u)
        z = small * np.sin(v)
        return np.stack([x, y, z], axis=1)
    raise UnknownGeneratorError(f"unknown generator '{name}'")


_NAMES = ("E1", "E2", "iota_E1", "iota_E2", "dirichlet_graph", "circle",
          "line", "rotated_plane", "parabola_sheet", "helix", "torus_patch")


def generator_names() -> tuple[str, ...]:
    return _NAMES


def generate(spec: GeneratorSpec) -> SampledSet:
    """Deterministic sample of the named set at the requested density."""
    name, density, params = spec.name, spec.density, spec.params
    if name == "E1":
        pts = _e_family(density, half_angle=True)
    elif name == "E2":
        pts = _e_family(density, half_angle=False)
    elif name == "iota_E1":
        pts = _iota(_e_family(density, half_angle=True))
    elif name == "iota_E2":
        pts = _iota(_e_family(density, half_angle=False))
    elif name == "dirichlet_graph":
        pts = _dirichlet_graph(density)
    elif name == "circle":
        pts = _circle(density, params)
    elif name in _NAMES:
        pts = _graph_points(name, density, params)
    else:
        raise UnknownGeneratorError(f"unknown generator '{spec.name}'")
    return SampledSet(pts, descriptor=spec.as_dict())


def analytic_tangent(descriptor: dict, point: np.ndarray) -> GrPlane:
    """The true tangent plane at a sample of a smooth-graph generator."""
    name = descriptor["name"]
    params = descriptor.get("params", {})
    x = np.asarray(point, dtype=float)
    if name == "line":
        slope = np.asarray(params.get("slope", [1.0]), dtype=float)
        return GrPlane.from_basis(np.concatenate([[1.0], slope])[:, None])
    if name == "rotated_plane":
        angle = float(params.get("angle", 0.35))
        basis = np.array([[1.0, 0.0], [0.0, 1.0], [math.tan(angle), 0.0]]).T
        return GrPlane.from_basis(basis.T)
    if name == "parabola_sheet":
        a = float(params.get("a", 0.5))
        b = float(params.get("b", 0.25))
        basis = np.array([[1.0, 0.0, 2.0 * a * x[0]], [0.0, 1.0, 2.0 * b * x[1]]]).T
        return GrPlane.from_basis(basis)
    if name == "helix":
        radius = float(params.get("radius", 1.0))
        pitch = float(params.get("pitch", 0.3))
        t = math.atan2(x[1], x[0])
        # recover the branch of t from the height coordinate
        t = t + 2.0 * math.pi * round((x[2] / pitch - t) / (2.0 * math.pi))
        tangent = np.array([-radius * math.sin(t), radius * math.cos(t), pitch])
        return GrPlane.from_basis(tangent[:, None])
    if name == "torus_patch":
        big = float(params.get("R", 6.0))
        small = float(params.get("r", 3.0))
        u = math.atan2(x[1], x[0])
        rho = math.hypot(x[0], x[1])
        v = math.atan2(x[2], rho - big)
        du = np.array([-(big + small * math.cos(v)) * math.sin(u),
                       (big + small * math.cos(v)) * math.cos(u), 0.0])
        dv = np.array([-small * math.sin(v) * math.cos(u),
                       -small * math.sin(v) * math.sin(u), small * math.cos(v)])
        return GrPlane.from_basis(np.stack([du, dv], axis=1))
    if name == "circle":
        tangent = np.array([-x[1], x[0]])
        return GrPlane.from_basis(tangent[:, None])
    raise UnknownGeneratorError(f"no analytic tangent for generator '{name}'")
