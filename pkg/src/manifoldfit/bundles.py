"""Sampled sets, affine jet fibers, M-bundles, and Gr-fiber extraction.

Fibers are affine subspaces of coefficient space attached to a (sample,
frame) pair; EMPTY is a first-class fiber value.  Bundle generations are
immutable snapshots.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Frame, GrPlane, grass_dist
from .jets import JetPoly, alpha_index, jet_space_dim, multi_indices

__all__ = [
    "EMPTY",
    "is_empty",
    "DuplicatePointError",
    "SampledSet",
    "AffineJetFiber",
    "MBundle",
    "GrFiber",
    "default_frames",
    "initial_bundle",
    "gr_fiber",
    "intersect_fiber",
]

DUPLICATE_TOL = 1e-12
FORCED_SV_CUT = 1e-7          # singular values below cut * sigma_max are pinned
FORCED_GAP_RATIO = 1e3
CROSS_FRAME_TOL = 1e-6


class DuplicatePointError(ValueError):
    """Two samples coincide within the duplicate tolerance."""


class _EmptyFiber:
    """Singleton marker for an empty fiber."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EMPTY"

    def __bool__(self) -> bool:
        return False


EMPTY = _EmptyFiber()


def is_empty(fiber) -> bool:
    return fiber is EMPTY


class _GridIndex:
    """Uniform grid hashing supporting exact metric-ball queries."""

    def __init__(self, points: np.ndarray, cell: float):
        self.points = points
        self.cell = float(cell)
        self.cells: dict[tuple, list[int]] = {}
        keys = np.floor(points / self.cell).astype(int)
        for i, key in enumerate(map(tuple, keys)):
            self.cells.setdefault(key, []).append(i)

    def ball(self, x: np.ndarray, r: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.floor((x - r) / self.cell).astype(int)
        hi = np.floor((x + r) / self.cell).astype(int)
        hits: list[int] = []
        for key in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))):
            hits.extend(self.cells.get(key, ()))
        if not hits:
            return np.empty(0, dtype=int)
        idx = np.array(sorted(hits), dtype=int)
        d = np.linalg.norm(self.points[idx] - x, axis=1)
        keep = d <= r
        idx, d = idx[keep], d[keep]
        order = np.lexsort((idx, d))
        return idx[order]


class SampledSet:
    """A finite sample of a compact subset of R^n with a neighborhood index."""

    def __init__(self, points: np.ndarray, descriptor: dict | None = None,
                 cell_size: float | None = None):
        pts = np.array(np.asarray(points, dtype=float), copy=True)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (N, n) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite sample coordinates")
        self._check_duplicates(pts)
        pts.flags.writeable = False
        self.points = pts
        self.descriptor = dict(descriptor) if descriptor else None
        span = pts.max(axis=0) - pts.min(axis=0)
        self.diameter = float(np.linalg.norm(span)) or 1.0
        if cell_size is None:
            cell_size = self.diameter / max(8.0, round(len(pts) ** (1.0 / pts.shape[1])) * 2.0)
        self.cell_size = float(cell_size)
        self._index = _GridIndex(pts, self.cell_size)

    @staticmethod
    def _check_duplicates(pts: np.ndarray) -> None:
        key = np.round(pts / max(DUPLICATE_TOL, 1e-12)).astype(np.int64)
        seen: dict[tuple, int] = {}
        for i, k in enumerate(map(tuple, key)):
            j = seen.get(k)
            if j is not None and np.linalg.norm(pts[i] - pts[j]) <= DUPLICATE_TOL:
                raise DuplicatePointError(f"samples {j} and {i} coincide")
            seen[k] = i

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    def ball(self, x: np.ndarray, r: float) -> np.ndarray:
        """Indices of all samples within distance r of x, nearest first."""
        return self._index.ball(x, r)

    def neighbors_within(self, i: int, r: float) -> np.ndarray:
        """Ball around sample i, excluding i itself."""
        idx = self.ball(self.points[i], r)
        return idx[idx != i]


@dataclass(frozen=True)
class AffineJetFiber:
    """One fiber H^Q(x): an affine subspace of jet-coefficient space.

    ``base`` has shape (K, codim); ``basis`` has shape (r, K, codim) with
    rows orthonormal in the flattened coefficient inner product.
    """

    frame: Frame
    frame_index: int
    anchor: int
    center: np.ndarray
    base: np.ndarray
    basis: np.ndarray
    d: int
    m: int
    proper: bool = True

    def __post_init__(self):
        k = jet_space_dim(self.d, self.m)
        base = np.array(np.asarray(self.base, dtype=float), copy=True)
        basis = np.array(np.asarray(self.basis, dtype=float), copy=True)
        center = np.array(np.asarray(self.center, dtype=float), copy=True)
        if base.shape[0] != k or basis.ndim != 3 or basis.shape[1:] != base.shape:
            raise ValueError("fiber coefficient arrays have inconsistent shapes")
        r = basis.shape[0]
        if r:
            flat = basis.reshape(r, -1)
            if np.linalg.norm(flat @ flat.T - np.eye(r), 2) > 1e-10:
                raise ValueError("fiber basis is not orthonormal")
        if self.proper:
            if np.linalg.norm(basis[:, 0, :]) > 1e-10:
                raise ValueError("proper fiber directions must vanish at the anchor")
        for a in (base, basis, center):
            a.flags.writeable = False
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "center", center)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def codim(self) -> int:
        return self.base.shape[1]

    def base_poly(self) -> JetPoly:
        return JetPoly(self.base, self.d, self.m, self.center)

    def basis_polys(self) -> tuple[JetPoly, ...]:
        return tuple(JetPoly(b, self.d, self.m, self.center) for b in self.basis)

    def coordinate_slices(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per output coordinate, (base column, (r_l, K) basis rows).

        Requires every basis direction to live in a single output
        coordinate, which holds for all engine-constructed fibers.
        """
        out = []
        norms = np.linalg.norm(self.basis, axis=1)          # (r, codim)
        active = norms > 1e-12
        if np.any(active.sum(axis=1) > 1):
            raise ValueError("fiber basis mixes output coordinates")
        for l in range(self.codim):
            rows = self.basis[active[:, l], :, l]
            out.append((self.base[:, l], rows))
        return out

    def membership_residual(self, coeffs: np.ndarray) -> float:
        """Distance from a coefficient array to this affine set."""
        delta = (np.asarray(coeffs, dtype=float) - self.base).ravel()
        if self.dim:
            flat = self.basis.reshape(self.dim, -1)
            delta = delta - flat.T @ (flat @ delta)
        return float(np.linalg.norm(delta))

    def contains(self, coeffs: np.ndarray, tol: float = 1e-8) -> bool:
        scale = 1.0 + float(np.linalg.norm(self.base))
        return self.membership_residual(coeffs) <= tol * scale


def default_frames(n: int, d: int) -> list[Frame]:
    """Permutation frames deduplicated by their first-d-column span: one
    frame per coordinate d-plane, C(n, d) in total."""
    if not 1 <= d < n:
        raise ValueError(f"need 1 <= d < n, got d={d}, n={n}")
    eye = np.eye(n)
    frames = []
    for combo in itertools.combinations(range(n), d):
        rest = [j for j in range(n) if j not in combo]
        frames.append(Frame(eye[:, list(combo) + rest], d))
    return frames


class MBundle:
    """A generation snapshot of fibers over (sample, frame) pairs."""

    def __init__(self, samples: SampledSet, frames: tuple[Frame, ...],
                 fibers: dict, d: int, m: int, generation: int = 0,
                 diagnostics: tuple[str, ...] = ()):
        self.samples = samples
        self.frames = tuple(frames)
        self.fibers = dict(fibers)
        self.d = int(d)
        self.m = int(m)
        self.generation = int(generation)
        self.diagnostics = tuple(diagnostics)
        self._proj = []
        for fr in self.frames:
            t = samples.points @ fr.q[:, :d]
            h = samples.points @ fr.q[:, d:]
            t.flags.writeable = False
            h.flags.writeable = False
            self._proj.append((t, h))

    def projection(self, frame_index: int) -> tuple[np.ndarray, np.ndarray]:
        """Split coordinates (t, heights) of every sample under one frame."""
        return self._proj[frame_index]

    def fiber(self, sample: int, frame_index: int):
        return self.fibers[(sample, frame_index)]

    def nonempty_frames(self, sample: int) -> list[int]:
        return [f for f in range(len(self.frames))
                if not is_empty(self.fibers[(sample, f)])]

    def dim_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for fib in self.fibers.values():
            key = -1 if is_empty(fib) else fib.dim
            hist[key] = hist.get(key, 0) + 1
        return dict(sorted(hist.items()))

    def empty_count(self) -> int:
        return sum(1 for fib in self.fibers.values() if is_empty(fib))

    def to_json(self) -> dict:
        out = {
            "schema_version": "manifoldfit/1",
            "kind": "bundle_snapshot",
            "generation": self.generation,
            "d": self.d,
            "m": self.m,
            "n": self.samples.ambient_dim,
            "n_samples": self.samples.n_points,
            "frames": [fr.q.tolist() for fr in self.frames],
            "fibers": [],
            "diagnostics": list(self.diagnostics),
        }
        for (i, f), fib in sorted(self.fibers.items()):
            if is_empty(fib):
                out["fibers"].append({"sample": i, "frame": f, "empty": True})
            else:
                out["fibers"].append({
                    "sample": i,
                    "frame": f,
                    "empty": False,
                    "dimension": fib.dim,
                    "base": fib.base.tolist(),
                    "basis": fib.basis.tolist(),
                })
        return out

    @classmethod
    def from_json(cls, payload: dict, samples: SampledSet) -> "MBundle":
        if payload.get("schema_version") != "manifoldfit/1":
            raise ValueError("unsupported bundle schema version")
        d, m = payload["d"], payload["m"]
        frames = tuple(Frame(np.array(q), d) for q in payload["frames"])
        proj = [samples.points @ fr.q[:, :d] for fr in frames]
        fibers = {}
        for rec in payload["fibers"]:
            key = (rec["sample"], rec["frame"])
            if rec["empty"]:
                fibers[key] = EMPTY
            else:
                fibers[key] = AffineJetFiber(
                    frame=frames[rec["frame"]],
                    frame_index=rec["frame"],
                    anchor=rec["sample"],
                    center=proj[rec["frame"]][rec["sample"]],
                    base=np.array(rec["base"]),
                    basis=np.array(rec["basis"]).reshape(rec["dimension"],
                                                         jet_space_dim(d, m), -1),
                    d=d,
                    m=m,
                )
        return cls(samples, frames, fibers, d, m, payload["generation"],
                   tuple(payload.get("diagnostics", ())))


def initial_bundle(samples: SampledSet, frames: list[Frame], d: int, m: int) -> MBundle:
    """The starting bundle: at each (x, Q) the affine set of polynomials
    passing through the sample, {P : P(x_Q) = x_Q^perp}."""
    n = samples.ambient_dim
    if any(fr.n != n or fr.d != d for fr in frames):
        raise ValueError("frames do not match the sampled set and split index")
    k = jet_space_dim(d, m)
    codim = n - d
    # shared orthonormal basis template: one direction per (alpha != 0, coord)
    template = np.zeros(((k - 1) * codim, k, codim))
    r = 0
    for l in range(codim):
        for a in range(1, k):
            template[r, a, l] = 1.0
            r += 1
    template.flags.writeable = False
    fibers = {}
    bundle_frames = tuple(frames)
    for f, fr in enumerate(bundle_frames):
        t = samples.points @ fr.q[:, :d]
        h = samples.points @ fr.q[:, d:]
        for i in range(samples.n_points):
            base = np.zeros((k, codim))
            base[0] = h[i]
            fibers[(i, f)] = AffineJetFiber(
                frame=fr, frame_index=f, anchor=i, center=t[i],
                base=base, basis=template, d=d, m=m,
            )
    return MBundle(samples, bundle_frames, fibers, d, m, generation=0)


@dataclass(frozen=True)
class GrFiber:
    """A sub-Grassmannian {W : v_1, ..., v_l in W} of candidate tangent planes."""

    forced: np.ndarray          # (l, n), orthonormal rows
    witness_frame: int
    d: int
    consistency: float = 0.0    # worst cross-frame containment residual

    def __post_init__(self):
        forced = np.array(np.asarray(self.forced, dtype=float), copy=True)
        if forced.ndim != 2:
            raise ValueError("forced vectors must form an (l, n) array")
        l = forced.shape[0]
        if l > self.d:
            raise ValueError(f"l={l} forced vectors exceed plane dimension d={self.d}")
        if l and np.linalg.norm(forced @ forced.T - np.eye(l), 2) > 1e-10:
            raise ValueError("forced vectors are not orthonormal")
        forced.flags.writeable = False
        object.__setattr__(self, "forced", forced)

    @property
    def l(self) -> int:
        return self.forced.shape[0]

    @property
    def n(self) -> int:
        return self.forced.shape[1]

    def is_singleton(self) -> bool:
        return self.l == self.d

    def span_projection(self) -> np.ndarray:
        return self.forced.T @ self.forced

    def plane(self) -> GrPlane:
        if not self.is_singleton():
            raise ValueError("only a singleton fiber determines a unique plane")
        return GrPlane(self.span_projection(), self.d)

    def to_json(self) -> dict:
        return {
            "l": self.l,
            "forced": self.forced.tolist(),
            "witness_frame": self.witness_frame,
            "consistency": self.consistency,
        }


def _frame_forced_vectors(fiber: AffineJetFiber) -> tuple[np.ndarray, np.ndarray]:
    """Forced directions contributed by one frame fiber.

    The gradient map over the affine fiber sweeps an affine set of
    (codim, d) matrices; input directions annihilated by every variation
    are pinned, and each pinned direction w forces the ambient vector
    Q [w; grad_base w].
    """
    d = fiber.d
    index = alpha_index(d, fiber.m)
    lin_rows = [index[tuple(np.eye(d, dtype=int)[j])] for j in range(d)]
    g0 = fiber.base[lin_rows, :].T                       # (codim, d)
    variations = fiber.basis[:, lin_rows, :]             # (r, d, codim)
    rows = variations.transpose(0, 2, 1).reshape(-1, d)  # stacked (codim*r, d)
    rows = rows[np.linalg.norm(rows, axis=1) > 1e-13]
    if rows.shape[0] == 0:
        kernel = np.eye(d)
    else:
        _, s, vt = np.linalg.svd(rows)
        smax = s.max(initial=0.0)
        small = s < FORCED_SV_CUT * max(smax, 1.0)
        pinned, free = s[~small], s[small]
        if pinned.size and free.size and pinned.min() < FORCED_GAP_RATIO * max(free.max(), 1e-300):
            raise RuntimeError(
                "forced-vector singular spectrum has no clear gap "
                f"(pinned {pinned.min():.3e} vs free {free.max():.3e})")
        null_rows = np.concatenate([small, np.ones(d - len(s), dtype=bool)])
        kernel = vt[null_rows].T
    if kernel.shape[1] == 0:
        return np.zeros((0, fiber.frame.n)), g0
    ambient = fiber.frame.q @ np.vstack([kernel, g0 @ kernel])
    q, _ = np.linalg.qr(ambient)
    return q.T[: kernel.shape[1]], g0


def gr_fiber(bundle: MBundle, sample: int):
    """Candidate-tangent-plane fiber at one sample, merged across frames.

    Returns EMPTY when every frame fiber is empty.  Frames with steeper
    base gradients are down-weighted in the merge; cross-frame span
    disagreement is recorded on the result as a consistency residual
    rather than raised, since it signals resolution limits.
    """
    contributions = []
    for f in range(len(bundle.frames)):
        fib = bundle.fibers[(sample, f)]
        if is_empty(fib):
            continue
        forced, g0 = _frame_forced_vectors(fib)
        weight = (1.0 + np.linalg.norm(g0, 2)) ** (-(bundle.m + 1))
        contributions.append((f, forced, weight))
    if not contributions:
        return EMPTY
    l_merged = max(forced.shape[0] for _, forced, _ in contributions)
    witness = next(f for f, forced, _ in contributions if forced.shape[0] == l_merged)
    if l_merged == 0:
        return GrFiber(np.zeros((0, bundle.samples.ambient_dim)), witness, bundle.d)
    stacked = np.vstack([w * forced for _, forced, w in contributions
                         if forced.shape[0]])
    _, _, vt = np.linalg.svd(stacked)
    merged = vt[:l_merged]
    proj = merged.T @ merged
    worst = 0.0
    for _, forced, _ in contributions:
        if forced.shape[0] == 0:
            continue
        resid = np.linalg.norm(forced - forced @ proj, 2)
        worst = max(worst, float(resid))
    return GrFiber(merged, witness, bundle.d, consistency=worst)


def intersect_fiber(fiber: AffineJetFiber, constraint: AffineJetFiber):
    """Affine intersection of two fibers over the same (anchor, frame).

    Returns EMPTY when the affine sets are disjoint (least-squares residual
    of the joint system above tolerance).
    """
    if fiber.frame_index != constraint.frame_index or fiber.anchor != constraint.anchor:
        raise ValueError("fibers are attached to different (sample, frame) pairs")
    dim_flat = fiber.base.size
    v1 = fiber.basis.reshape(fiber.dim, dim_flat).T          # (D, r1)
    v2 = constraint.basis.reshape(constraint.dim, dim_flat).T
    rhs = (constraint.base - fiber.base).ravel()
    a = np.hstack([v1, -v2]) if v2.size else v1
    if a.size == 0:
        if np.linalg.norm(rhs) > 1e-8 * (1.0 + np.linalg.norm(fiber.base)):
            return EMPTY
        return fiber
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    resid = np.linalg.norm(a @ sol - rhs)
    if resid > 1e-8 * (1.0 + np.linalg.norm(fiber.base) + np.linalg.norm(constraint.base)):
        return EMPTY
    base_new = fiber.base + (v1 @ sol[: fiber.dim]).reshape(fiber.base.shape)
    # intersection directions: v1 x with v1 x in span(v2)
    _, s, vt = np.linalg.svd(a)
    cols = a.shape[1]
    null_rows = np.concatenate([s < 1e-10 * max(s.max(initial=0.0), 1.0),
                                np.ones(cols - len(s), dtype=bool)])
    null = vt[null_rows].T
    dirs = v1 @ null[: fiber.dim] if null.size else np.zeros((dim_flat, 0))
    if dirs.size:
        q, r = np.linalg.qr(dirs)
        keep = np.abs(np.diag(r)) > 1e-10
        dirs = q[:, keep]
    basis_new = dirs.T.reshape(-1, *fiber.base.shape)
    return AffineJetFiber(
        frame=fiber.frame, frame_index=fiber.frame_index, anchor=fiber.anchor,
        center=fiber.center, base=base_new, basis=basis_new,
        d=fiber.d, m=fiber.m, proper=fiber.proper and constraint.proper,
    )


def bundle_json_dumps(bundle: MBundle) -> str:
    return json.dumps(bundle.to_json(), sort_keys=True)
