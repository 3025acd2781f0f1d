"""Vector-valued polynomial jets: evaluation, Taylor-compatibility residuals,
graph compatibility between frames, and coordinate-change jet realization.

A polynomial of degree <= m in d variables with c output coordinates is
stored as a coefficient array of shape (K, c), K = C(d+m, m), indexed by
multi-indices in graded lexicographic order.  Coefficients follow the
Taylor convention about a designated center: P(t) = sum_a coeffs[a] *
(t - center)^alpha_a, so coeffs[a] = d^alpha P(center) / alpha!.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Frame, split

__all__ = [
    "MultiIndexError",
    "UndefinedScalingError",
    "IncompatibleFrameError",
    "multi_indices",
    "alpha_index",
    "jet_space_dim",
    "derivative_eval_matrix",
    "JetPoly",
    "Jet",
    "eval_derivative",
    "taylor_residual",
    "CompatibilityCheck",
    "compatible",
    "realize_jet",
]

COMPAT_DET_RATIO = 1e-8
COMPAT_WARN_FACTOR = 100.0


class MultiIndexError(ValueError):
    """Multi-index order exceeds the jet degree."""


class UndefinedScalingError(ValueError):
    """Taylor residual requested at coincident projections."""


class IncompatibleFrameError(ValueError):
    """Jet realization requested in a frame where the graph is vertical."""

    def __init__(self, message: str, minor: np.ndarray):
        super().__init__(message)
        self.minor = minor


@lru_cache(maxsize=None)
def multi_indices(d: int, m: int) -> np.ndarray:
    """All multi-indices of order <= m in d variables, graded lexicographic."""
    if d < 1 or m < 0:
        raise ValueError(f"invalid jet dimensions d={d}, m={m}")
    idx = [()]
    for _ in range(d):
        idx = [a + (k,) for a in idx for k in range(m + 1)]
    idx = [a for a in idx if sum(a) <= m]
    idx.sort(key=lambda a: (sum(a), a))
    arr = np.array(idx, dtype=int).reshape(len(idx), d)
    arr.flags.writeable = False
    return arr


@lru_cache(maxsize=None)
def alpha_index(d: int, m: int) -> dict:
    """Map from multi-index tuple to its position in graded lex order."""
    return {tuple(a): i for i, a in enumerate(multi_indices(d, m))}


def jet_space_dim(d: int, m: int) -> int:
    return math.comb(d + m, m)


@lru_cache(maxsize=None)
def _falling_factors(d: int, m: int) -> np.ndarray:
    """(K, K) table of beta!/(beta-alpha)! for beta >= alpha, else 0."""
    alphas = multi_indices(d, m)
    k = len(alphas)
    out = np.zeros((k, k))
    for i, a in enumerate(alphas):
        for j, b in enumerate(alphas):
            if np.all(b >= a):
                f = 1.0
                for bk, ak in zip(b, a):
                    f *= math.factorial(bk) / math.factorial(bk - ak)
                out[i, j] = f
    out.flags.writeable = False
    return out


def derivative_eval_matrix(d: int, m: int, t: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Matrix sending Taylor coefficients about ``center`` to all derivative
    values (d^alpha P)(t), rows in graded lex order."""
    alphas = multi_indices(d, m)
    fact = _falling_factors(d, m)
    delta = np.asarray(t, dtype=float) - np.asarray(center, dtype=float)
    # exponents beta - alpha, clipped; invalid entries masked by fact == 0
    expo = alphas[None, :, :] - alphas[:, None, :]
    pw = np.power(delta[None, None, :], np.clip(expo, 0, None))
    return fact * pw.prod(axis=2)


def _monomials(d: int, m: int, delta: np.ndarray) -> np.ndarray:
    """Vector of (delta)^alpha over all multi-indices."""
    alphas = multi_indices(d, m)
    return np.power(delta[None, :], alphas).prod(axis=1)


@dataclass(frozen=True)
class JetPoly:
    """Degree-m polynomial map R^d -> R^codim, Taylor coefficients about ``center``."""

    coeffs: np.ndarray
    d: int
    m: int
    center: np.ndarray

    def __post_init__(self):
        c = np.array(np.asarray(self.coeffs, dtype=float), copy=True)
        if c.ndim == 1:
            c = c[:, None]
        k = jet_space_dim(self.d, self.m)
        if c.shape[0] != k:
            raise ValueError(f"coefficient array has {c.shape[0]} rows, expected {k}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite polynomial coefficients")
        center = np.array(np.asarray(self.center, dtype=float), copy=True)
        if center.shape != (self.d,):
            raise ValueError(f"center has shape {center.shape}, expected ({self.d},)")
        c.flags.writeable = False
        center.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "center", center)

    @property
    def codim(self) -> int:
        return self.coeffs.shape[1]

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.coeffs.T @ _monomials(self.d, self.m, t - self.center)

    def value_at_center(self) -> np.ndarray:
        return self.coeffs[0].copy()

    def gradient_at_center(self) -> np.ndarray:
        """(codim, d) matrix of first derivatives at the center."""
        index = alpha_index(self.d, self.m)
        rows = [index[tuple(np.eye(self.d, dtype=int)[k])] for k in range(self.d)]
        return self.coeffs[rows].T.copy()

    def gradient_at(self, t: np.ndarray) -> np.ndarray:
        unit = np.eye(self.d, dtype=int)
        return np.stack([eval_derivative(self, unit[k], t) for k in range(self.d)], axis=1)


def eval_derivative(p: JetPoly, alpha, t: np.ndarray) -> np.ndarray:
    """Exact derivative d^alpha P evaluated at t."""
    alpha = tuple(int(a) for a in np.asarray(alpha).ravel())
    if len(alpha) != p.d:
        raise MultiIndexError(f"multi-index length {len(alpha)} does not match d={p.d}")
    if sum(alpha) > p.m:
        raise MultiIndexError(f"|alpha|={sum(alpha)} exceeds jet degree m={p.m}")
    row = alpha_index(p.d, p.m)[alpha]
    mat = derivative_eval_matrix(p.d, p.m, np.asarray(t, dtype=float), p.center)
    return mat[row] @ p.coeffs


def taylor_residual(p_i: JetPoly, p_j: JetPoly, t_i: np.ndarray, t_j: np.ndarray,
                    m: int | None = None) -> float:
    """One (i, j) block of the refinement quadratic form: the sum over
    multi-indices and output coordinates of squared scaled derivative
    differences, evaluated at t_i."""
    if (p_i.d, p_i.m, p_i.codim) != (p_j.d, p_j.m, p_j.codim):
        raise ValueError("jets live in different polynomial spaces")
    m = p_i.m if m is None else m
    if m != p_i.m:
        raise ValueError(f"degree argument {m} does not match jets of degree {p_i.m}")
    t_i = np.asarray(t_i, dtype=float)
    t_j = np.asarray(t_j, dtype=float)
    s = float(np.linalg.norm(t_i - t_j))
    if s == 0.0:
        raise UndefinedScalingError("coincident projections have no Taylor scaling")
    vals_i = derivative_eval_matrix(p_i.d, m, t_i, p_i.center) @ p_i.coeffs
    vals_j = derivative_eval_matrix(p_j.d, m, t_i, p_j.center) @ p_j.coeffs
    orders = multi_indices(p_i.d, m).sum(axis=1)
    scale = s ** (m - orders).astype(float)
    diff = (vals_i - vals_j) / scale[:, None]
    return float(np.sum(diff * diff))


@dataclass(frozen=True)
class Jet:
    """A coordinate frame together with a polynomial graph germ at a basepoint."""

    frame: Frame
    poly: JetPoly
    basepoint: np.ndarray
    proper: bool = True

    def __post_init__(self):
        bp = np.array(np.asarray(self.basepoint, dtype=float), copy=True)
        if bp.shape != (self.frame.n,):
            raise ValueError("basepoint does not match frame dimension")
        if self.poly.d != self.frame.d or self.poly.codim != self.frame.n - self.frame.d:
            raise ValueError("polynomial space does not match the frame split")
        bp.flags.writeable = False
        object.__setattr__(self, "basepoint", bp)
        if self.proper:
            x_q, x_q_perp = split(self.frame, bp)
            if np.linalg.norm(self.poly.center - x_q) > 1e-9:
                raise ValueError("proper jet must be centered at the basepoint's split")
            if np.linalg.norm(self.poly.evaluate(x_q) - x_q_perp) > 1e-9:
                raise ValueError("proper jet must pass through its basepoint")

    @property
    def center(self) -> np.ndarray:
        return self.poly.center


@dataclass(frozen=True)
class CompatibilityCheck:
    ok: bool
    minor: np.ndarray
    det_ratio: float
    warning: bool

    def __bool__(self) -> bool:
        return self.ok


def compatible(jet: Jet, r: Frame) -> CompatibilityCheck:
    """Whether the jet's graph is expressible over the first d axes of ``r``.

    Tests invertibility of the top d x d minor of R^T Q [I; grad P]; the
    scale-free cutoff is |det| relative to sigma_max^d.
    """
    if r.n != jet.frame.n or r.d != jet.frame.d:
        raise ValueError("frames have different dimensions")
    d = jet.frame.d
    grad = jet.poly.gradient_at_center()          # (n-d, d)
    a = r.q.T @ jet.frame.q @ np.vstack([np.eye(d), grad])
    minor = a[:d, :]
    sv = np.linalg.svd(minor, compute_uv=False)
    smax = sv.max(initial=0.0)
    ratio = 0.0 if smax == 0.0 else float(np.prod(sv) / smax ** d)
    ok = ratio > COMPAT_DET_RATIO
    near = (COMPAT_DET_RATIO / COMPAT_WARN_FACTOR) < ratio < (COMPAT_DET_RATIO * COMPAT_WARN_FACTOR)
    return CompatibilityCheck(ok, minor, ratio, near)


# ---------------------------------------------------------------------------
# Truncated polynomial algebra for jet realization.
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _mul_table(d: int, m: int) -> tuple:
    """Index triples (i, j, k) with alpha_i + alpha_j = alpha_k, |alpha_k| <= m."""
    alphas = multi_indices(d, m)
    index = alpha_index(d, m)
    ii, jj, kk = [], [], []
    for i, a in enumerate(alphas):
        for j, b in enumerate(alphas):
            s = tuple(a + b)
            if sum(s) <= m:
                ii.append(i)
                jj.append(j)
                kk.append(index[s])
    out = (np.array(ii), np.array(jj), np.array(kk))
    for arr in out:
        arr.flags.writeable = False
    return out


def _trunc_mul(a: np.ndarray, b: np.ndarray, d: int, m: int) -> np.ndarray:
    ii, jj, kk = _mul_table(d, m)
    out = np.zeros_like(a)
    np.add.at(out, kk, a[ii] * b[jj])
    return out


def _compose(coeffs: np.ndarray, center: np.ndarray, args: np.ndarray,
             d: int, m: int) -> np.ndarray:
    """Compose P (coeffs about ``center``, codim outputs) with d argument
    polynomials given as columns of ``args`` (K, d); returns (K, codim)."""
    alphas = multi_indices(d, m)
    k = len(alphas)
    # power tables for each shifted argument
    powers = []
    for var in range(d):
        delta = args[:, var].copy()
        delta[0] -= center[var]
        table = [np.zeros(k)]
        table[0][0] = 1.0
        for _ in range(m):
            table.append(_trunc_mul(table[-1], delta, d, m))
        powers.append(table)
    out = np.zeros((k, coeffs.shape[1]))
    for a_idx, alpha in enumerate(alphas):
        mono = None
        for var, e in enumerate(alpha):
            if e == 0:
                continue
            mono = powers[var][e] if mono is None else _trunc_mul(mono, powers[var][e], d, m)
        if mono is None:
            mono = np.zeros(k)
            mono[0] = 1.0
        out += mono[:, None] * coeffs[a_idx][None, :]
    return out


def realize_jet(jet: Jet, r: Frame) -> Jet:
    """Re-express the graph germ of ``jet`` as a jet over the frame ``r``.

    Solves the implicit graph equation on the ring of degree-m jets by a
    chord Newton iteration, which is exact (up to roundoff) after m + 2
    steps; the result has the same basepoint and satisfies the round-trip
    and tangent-preservation identities.
    """
    check = compatible(jet, r)
    if not check.ok:
        raise IncompatibleFrameError(
            f"graph is not expressible over the target frame (det ratio {check.det_ratio:.3e})",
            check.minor,
        )
    d, m = jet.poly.d, jet.poly.m
    n = jet.frame.n
    codim = n - d
    x = jet.basepoint
    x_q, _ = split(jet.frame, x)
    x_r, x_r_perp = split(r, x)

    t = jet.frame.q.T @ r.q
    a1, a2 = t[:d, :d], t[:d, d:]
    a3, a4 = t[d:, :d], t[d:, d:]
    grad = jet.poly.gradient_at_center()
    chord = a4 - grad @ a2
    sv = np.linalg.svd(chord, compute_uv=False)
    if sv.min() <= 1e-10 * max(sv.max(), 1.0):
        raise IncompatibleFrameError("implicit graph system is singular", check.minor)
    chord_inv = np.linalg.inv(chord)

    k = jet_space_dim(d, m)
    index = alpha_index(d, m)
    lin_rows = [index[tuple(np.eye(d, dtype=int)[j])] for j in range(d)]

    # unknown v(u): codim polynomials in u = y_R - x_R
    v = np.zeros((k, codim))
    v[0] = x_r_perp
    # fixed affine parts: y_R written as polynomials in u
    u_polys = np.zeros((k, d))
    u_polys[0] = x_r
    for j in range(d):
        u_polys[lin_rows[j], j] = 1.0

    resid = None
    for _ in range(m + 2):
        args = u_polys @ a1.T + v @ a2.T          # (K, d): arguments of P
        lhs = u_polys @ a3.T + v @ a4.T           # (K, codim)
        resid = lhs - _compose(jet.poly.coeffs, x_q, args, d, m)
        v = v - resid @ chord_inv.T
    scale = 1.0 + float(np.abs(v).max())
    if resid is not None and float(np.abs(resid).max()) > 1e-8 * scale:
        raise RuntimeError("jet realization iteration failed to converge")
    v[0] = x_r_perp
    poly = JetPoly(v, d, m, x_r)
    return Jet(r, poly, x, proper=jet.proper)
