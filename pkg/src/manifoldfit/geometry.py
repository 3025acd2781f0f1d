"""Orthonormal frames, coordinate splits, and Grassmannian planes.

Everything here is an immutable value and every operation is a pure
function, so the module is safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionMismatchError",
    "FrameAlignmentError",
    "Frame",
    "GrPlane",
    "AffinePlane",
    "split",
    "merge",
    "grass_dist",
    "planes_equal",
    "align_frames",
    "frame_to_plane",
    "oplus",
]

# Construction rejects matrices whose orthogonality defect exceeds this;
# smaller defects are repaired by modified Gram-Schmidt.
ORTHOGONALITY_REJECT = 1e-6
PLANE_EQUALITY_TOL = 1e-9
DEFAULT_ALIGN_EPS0 = 0.5


class DimensionMismatchError(ValueError):
    """Operands with incompatible ambient or split dimensions."""


class FrameAlignmentError(ValueError):
    """Planes handed to align_frames are farther apart than allowed."""


def _mgs(columns: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt on the columns of a full-rank matrix."""
    q = np.array(columns, dtype=float)
    for k in range(q.shape[1]):
        for j in range(k):
            q[:, k] -= (q[:, j] @ q[:, k]) * q[:, j]
        nrm = np.linalg.norm(q[:, k])
        if nrm < 1e-12:
            raise ValueError("rank-deficient column set")
        q[:, k] /= nrm
    return q


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Frame:
    """An n x n orthogonal matrix whose first d columns are the independent axes.

    The matrix is re-orthonormalized on construction; input with an
    orthogonality defect above ``ORTHOGONALITY_REJECT`` is rejected.
    """

    q: np.ndarray
    d: int

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise DimensionMismatchError(f"frame matrix must be square, got {q.shape}")
        n = q.shape[0]
        if not 1 <= self.d < n:
            raise ValueError(f"split index d={self.d} must satisfy 1 <= d < n={n}")
        defect = np.linalg.norm(q.T @ q - np.eye(n), 2)
        if defect > ORTHOGONALITY_REJECT:
            raise ValueError(f"matrix is not orthogonal (defect {defect:.3e})")
        if defect > 1e-12:
            q = _mgs(q)
        object.__setattr__(self, "q", _readonly(q))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def independent(self) -> np.ndarray:
        """First d columns."""
        return self.q[:, : self.d]

    @property
    def dependent(self) -> np.ndarray:
        """Last n - d columns."""
        return self.q[:, self.d:]


def split(frame: Frame, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split x into its d independent and n-d dependent frame coordinates."""
    x = np.asarray(x, dtype=float)
    if x.shape != (frame.n,):
        raise DimensionMismatchError(f"point has shape {x.shape}, frame is n={frame.n}")
    y = frame.q.T @ x
    return y[: frame.d], y[frame.d:]


def merge(frame: Frame, x_q: np.ndarray, x_q_perp: np.ndarray) -> np.ndarray:
    """Inverse of :func:`split`."""
    x_q = np.asarray(x_q, dtype=float)
    x_q_perp = np.asarray(x_q_perp, dtype=float)
    if x_q.shape != (frame.d,) or x_q_perp.shape != (frame.n - frame.d,):
        raise DimensionMismatchError("split coordinates do not match frame dimensions")
    return frame.q @ np.concatenate([x_q, x_q_perp])


@dataclass(frozen=True)
class GrPlane:
    """A d-plane through the origin, stored as its orthogonal projection matrix."""

    proj: np.ndarray
    d: int

    def __post_init__(self):
        p = np.asarray(self.proj, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise DimensionMismatchError(f"projection must be square, got {p.shape}")
        p = 0.5 * (p + p.T)
        if np.linalg.norm(p @ p - p, 2) > 1e-10:
            raise ValueError("matrix is not idempotent")
        if abs(np.trace(p) - self.d) > 1e-10:
            raise ValueError(f"trace {np.trace(p):.12f} does not match rank d={self.d}")
        object.__setattr__(self, "proj", _readonly(p))

    @classmethod
    def from_basis(cls, basis: np.ndarray) -> "GrPlane":
        """Plane spanned by the columns of ``basis`` (orthonormalized first)."""
        v = _mgs(np.asarray(basis, dtype=float))
        return cls(v @ v.T, v.shape[1])

    @property
    def n(self) -> int:
        return self.proj.shape[0]

    def basis(self) -> np.ndarray:
        """An orthonormal (n, d) basis of the plane."""
        w, v = np.linalg.eigh(self.proj)
        cols = v[:, w > 0.5]
        if cols.shape[1] != self.d:
            raise RuntimeError("projection eigenvalues inconsistent with rank")
        return cols

    def complement_basis(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.proj)
        return v[:, w <= 0.5]


@dataclass(frozen=True)
class AffinePlane:
    """A d-plane offset from the origin: ``base + plane``."""

    base: np.ndarray
    plane: GrPlane

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        if base.shape != (self.plane.n,):
            raise DimensionMismatchError("base point does not match plane dimension")
        object.__setattr__(self, "base", _readonly(base))

    def direction(self) -> GrPlane:
        """Natural projection onto the linear Grassmannian."""
        return self.plane

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        r = np.asarray(x, dtype=float) - self.base
        return bool(np.linalg.norm(r - self.plane.proj @ r) <= tol * (1.0 + np.linalg.norm(r)))


def _check_same_grassmannian(w1: GrPlane, w2: GrPlane) -> None:
    if w1.n != w2.n or w1.d != w2.d:
        raise DimensionMismatchError(
            f"planes live in different Grassmannians: ({w1.n},{w1.d}) vs ({w2.n},{w2.d})"
        )


def grass_dist(w1: GrPlane, w2: GrPlane) -> float:
    """Spectral-norm distance between projection matrices."""
    _check_same_grassmannian(w1, w2)
    return float(np.linalg.norm(w1.proj - w2.proj, 2))


def planes_equal(w1: GrPlane, w2: GrPlane, tol: float = PLANE_EQUALITY_TOL) -> bool:
    return grass_dist(w1, w2) <= tol


def align_frames(w: GrPlane, w_prime: GrPlane, eps0: float = DEFAULT_ALIGN_EPS0) -> Frame:
    """An orthogonal Q with Q w_prime = w and ||Q - I|| controlled by their distance.

    Projects an orthonormal basis of ``w_prime`` onto ``w`` and
    re-orthonormalizes, then repeats on the orthogonal complements; Q is
    the map sending the source basis to the aligned one.
    """
    _check_same_grassmannian(w, w_prime)
    dist = grass_dist(w, w_prime)
    if dist > eps0:
        raise FrameAlignmentError(f"plane distance {dist:.6f} exceeds eps0={eps0}")
    b = w_prime.basis()
    b_perp = w_prime.complement_basis()
    aligned = _mgs(w.proj @ b)
    aligned_perp = _mgs((np.eye(w.n) - w.proj) @ b_perp)
    q = np.hstack([aligned, aligned_perp]) @ np.hstack([b, b_perp]).T
    return Frame(q, w.d)


def frame_to_plane(frame: Frame) -> GrPlane:
    """Plane spanned by the frame's first d columns."""
    v = frame.independent
    return GrPlane(v @ v.T, frame.d)


def oplus(frame: Frame, a: np.ndarray) -> GrPlane:
    """Column space of Q [I_d; A]: the graph plane of the linear map A in Q coordinates."""
    a = np.asarray(a, dtype=float)
    n, d = frame.n, frame.d
    if a.shape != (n - d, d):
        raise DimensionMismatchError(f"matrix has shape {a.shape}, expected {(n - d, d)}")
    cols = frame.q @ np.vstack([np.eye(d), a])
    return GrPlane.from_basis(cols)
