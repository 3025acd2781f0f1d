"""The refinement engine: quadratic-form assembly over shrinking-scale point
clusters, constrained minimization over affine fibers, and iteration of the
pruning step until the bundle stabilizes.

The limit test is scale-aware: a jet survives at a scale delta when the
worst cluster minimum stays below max(threshold, (slope * delta)^2), the
decay profile a degree-m Taylor field produces.  Output coordinates are
refined independently (the pruning form decouples across them), which keeps
every engine-built fiber basis coordinate-separable.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bundles import EMPTY, AffineJetFiber, MBundle, SampledSet, is_empty
from .jets import JetPoly, derivative_eval_matrix, jet_space_dim, multi_indices

__all__ = [
    "RefinementConfig",
    "QminReport",
    "StabilityReport",
    "DegenerateClusterError",
    "qmin",
    "qmin_report",
    "refine_once",
    "refine_to_stable",
    "decide_nontrivial",
]

THREAD_ENV_VAR = "MANIFOLD_FIT_THREADS"


class DegenerateClusterError(ValueError):
    """Cluster contains distinct samples with coincident projections."""


@dataclass(frozen=True)
class RefinementConfig:
    """Knobs of the refinement engine.

    ``scales`` defaults to a geometric schedule (ratio 1/2, 8 levels)
    starting at a quarter of the data diameter.  ``qmin_threshold`` is the
    absolute floor of the per-scale tolerance and ``qmin_slope`` its
    scale-proportional part.  ``free_cut`` separates pinned from free fiber
    directions in the survivor reconstruction.
    """

    kbar: int = 2
    scales: tuple[float, ...] | None = None
    n_scales: int = 8
    scale_ratio: float = 0.5
    qmin_threshold: float = 1e-4
    qmin_slope: float = 6.0
    free_cut: float = 0.4
    cluster_budget: int = 8
    max_generations: int = 6
    seed: int = 0
    coincident_tol: float = 1e-9
    gap_ratio: float = 1e3

    def __post_init__(self):
        if self.kbar < 1:
            raise ValueError("kbar must be at least 1")
        if self.scales is not None:
            s = tuple(float(x) for x in self.scales)
            if any(x <= 0 for x in s) or any(a <= b for a, b in zip(s, s[1:])):
                raise ValueError("scales must be strictly decreasing and positive")
            object.__setattr__(self, "scales", s)
        for name in ("qmin_threshold", "qmin_slope", "free_cut", "coincident_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def resolve_scales(self, samples: SampledSet) -> tuple[float, ...]:
        if self.scales is not None:
            return self.scales
        top = samples.diameter / 4.0
        return tuple(top * self.scale_ratio ** k for k in range(self.n_scales))

    def tolerance(self, delta: float) -> float:
        return max(self.qmin_threshold, (self.qmin_slope * delta) ** 2)

    def as_dict(self) -> dict:
        return {
            "kbar": self.kbar,
            "scales": list(self.scales) if self.scales is not None else None,
            "n_scales": self.n_scales,
            "scale_ratio": self.scale_ratio,
            "qmin_threshold": self.qmin_threshold,
            "qmin_slope": self.qmin_slope,
            "free_cut": self.free_cut,
            "cluster_budget": self.cluster_budget,
            "max_generations": self.max_generations,
            "seed": self.seed,
            "coincident_tol": self.coincident_tol,
            "gap_ratio": self.gap_ratio,
        }


@dataclass
class QminReport:
    """Per-scale pruning minima for one (sample, frame, jet) probe."""

    scales: list[float]
    values: list[float]
    slope: float | None
    verdict: str                 # "survives" or "culled"
    kbar: int
    witnesses: list[np.ndarray] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scales": self.scales,
            "values": self.values,
            "slope": self.slope,
            "verdict": self.verdict,
            "kbar": self.kbar,
            "witnesses": [w.tolist() for w in self.witnesses],
        }


@dataclass
class StabilityReport:
    stabilized: bool
    generations: int
    dim_histograms: list[dict]
    empty_counts: list[int]
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stabilized": self.stabilized,
            "generations": self.generations,
            "dim_histograms": [{str(k): v for k, v in h.items()} for h in self.dim_histograms],
            "empty_counts": self.empty_counts,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# Row assembly shared by the exact minimizer and the engine.
# ---------------------------------------------------------------------------

def _scale_exponents(d: int, m: int) -> np.ndarray:
    return (m - multi_indices(d, m).sum(axis=1)).astype(float)


class _DerivativeCache:
    """Derivative-evaluation matrices between sample projections.

    Keyed by ordered sample pairs; centers never change across
    generations, so one cache serves the whole refinement run.
    """

    def __init__(self, t: np.ndarray, d: int, m: int):
        self.t = t
        self.d = d
        self.m = m
        self.self_mat = derivative_eval_matrix(d, m, np.zeros(d), np.zeros(d))
        self._store: dict[tuple[int, int], np.ndarray] = {}

    def between(self, a: int, b: int) -> np.ndarray:
        """Matrix of (d^alpha about center t_b) evaluated at t_a."""
        if a == b:
            return self.self_mat
        key = (a, b)
        mat = self._store.get(key)
        if mat is None:
            mat = derivative_eval_matrix(self.d, self.m, self.t[a], self.t[b])
            self._store[key] = mat
        return mat


def _pair_rows(members: list[int], t: np.ndarray, dcache: _DerivativeCache,
               expo: np.ndarray, floor: float) -> list[tuple[int, int, np.ndarray, np.ndarray]]:
    """For each ordered member pair, the scaled derivative matrices
    (applied to the row-evaluated member and the compared member)."""
    out = []
    for ia, a in enumerate(members):
        for ib, b in enumerate(members):
            if ia == ib:
                continue
            s = max(float(np.linalg.norm(t[a] - t[b])), floor)
            w = s ** (-expo)
            out.append((ia, ib, w[:, None] * dcache.between(a, a),
                        w[:, None] * dcache.between(a, b)))
    return out


def qmin(bundle: MBundle, frame_index: int, anchor_index: int, p0: JetPoly,
         cluster: list[int], coincident_tol: float = 1e-9):
    """Exact minimum of the pruning form over the cluster's fibers with the
    anchor jet held fixed; returns the value and the minimizing jets."""
    t, _ = bundle.projection(frame_index)
    members = [anchor_index] + list(cluster)
    for i, a in enumerate(members):
        for b in members[i + 1:]:
            if a != b and np.linalg.norm(t[a] - t[b]) < coincident_tol:
                raise DegenerateClusterError(
                    f"samples {a} and {b} have coincident projections")
    anchor_fiber = bundle.fiber(anchor_index, frame_index)
    if is_empty(anchor_fiber):
        raise ValueError("anchor fiber is empty")
    if np.linalg.norm(p0.center - anchor_fiber.center) > 1e-9:
        raise ValueError("anchor jet must be centered at the anchor's projection")
    if not anchor_fiber.contains(p0.coeffs):
        raise ValueError("anchor jet does not lie in the anchor fiber")

    fibers = [bundle.fiber(i, frame_index) for i in members]
    if any(is_empty(f) for f in fibers[1:]):
        return float("inf"), []
    d, m = bundle.d, bundle.m
    codim = bundle.samples.ambient_dim - d
    k = jet_space_dim(d, m)
    expo = _scale_exponents(d, m)
    dcache = _DerivativeCache(t, d, m)

    coeff_fixed = [p0.coeffs] + [None] * len(cluster)
    col_offsets, total = [], 0
    for f in fibers[1:]:
        col_offsets.append(total)
        total += f.dim
    rows_m, rows_r = [], []
    for ia, ib, d_self, d_cross in _pair_rows(members, t, dcache, expo,
                                              floor=coincident_tol):
        block = np.zeros((k * codim, total))
        rhs = np.zeros((k, codim))
        for pos, mat, sign in ((ia, d_self, 1.0), (ib, d_cross, -1.0)):
            fib = fibers[pos]
            if pos == 0:
                rhs += sign * mat @ coeff_fixed[0]
            else:
                rhs += sign * mat @ fib.base
                if fib.dim:
                    cols = np.einsum("ab,rbc->rac", mat, fib.basis).reshape(fib.dim, -1).T
                    off = col_offsets[pos - 1]
                    block[:, off:off + fib.dim] += sign * cols
        rows_m.append(block)
        rows_r.append(rhs.ravel())
    mat = np.vstack(rows_m)
    rhs = np.concatenate(rows_r)
    if total:
        sol, *_ = np.linalg.lstsq(mat, -rhs, rcond=None)
        value = float(np.sum((mat @ sol + rhs) ** 2))
    else:
        sol = np.zeros(0)
        value = float(np.sum(rhs ** 2))
    witnesses = []
    for pos, f in enumerate(fibers[1:]):
        coeffs = f.base.copy()
        if f.dim:
            off = col_offsets[pos]
            coeffs = coeffs + np.tensordot(sol[off:off + f.dim], f.basis, axes=(0, 0))
        witnesses.append(JetPoly(coeffs, d, m, f.center))
    return value, witnesses


# ---------------------------------------------------------------------------
# The engine proper: refine a table of per-coordinate fiber slices.
# ---------------------------------------------------------------------------

def _fiber_to_slices(fiber: AffineJetFiber):
    return fiber.coordinate_slices()


def _slices_to_fiber(slices, template: AffineJetFiber) -> AffineJetFiber:
    k, codim = template.base.shape
    base = np.zeros((k, codim))
    rows = []
    for l, (b, v) in enumerate(slices):
        base[:, l] = b
        for row in v:
            direction = np.zeros((k, codim))
            direction[:, l] = row
            rows.append(direction)
    basis = np.array(rows).reshape(len(rows), k, codim) if rows else np.zeros((0, k, codim))
    return AffineJetFiber(
        frame=template.frame, frame_index=template.frame_index,
        anchor=template.anchor, center=template.center,
        base=base, basis=basis, d=template.d, m=template.m,
        proper=template.proper,
    )


def _pick_clusters(clean: np.ndarray, t: np.ndarray, kbar: int, budget: int,
                   rng: np.random.Generator, ctol: float) -> list[tuple[int, ...]]:
    """Deterministic extremal clusters plus seeded random fill, skipping
    clusters that pair coincident projections."""
    n = len(clean)
    size = min(kbar, n)
    if size == 0:
        return []
    cands: list[tuple[int, ...]] = []
    cands.append(tuple(clean[:size]))                     # nearest
    cands.append(tuple(clean[-size:]))                    # farthest
    if size >= 2:
        cands.append(tuple(np.concatenate([clean[:size - 1], clean[-1:]])))  # spread
        for start in range(size, n - size + 1, size):     # coverage sweep
            cands.append(tuple(clean[start:start + size]))
            if len(cands) >= budget:
                break
    while len(cands) < budget and n > size:
        cands.append(tuple(rng.choice(clean, size=size, replace=False)))
    seen, out = set(), []
    for c in cands[:max(budget, 3)]:
        key = tuple(sorted(c))
        if key in seen:
            continue
        seen.add(key)
        ok = all(np.linalg.norm(t[a] - t[b]) >= ctol
                 for i, a in enumerate(key) for b in key[i + 1:])
        if ok:
            out.append(c)
    return out


def _cluster_block(anchor: int, cluster: tuple[int, ...], t: np.ndarray,
                   slices_table: list, pair_data, self_diag: np.ndarray,
                   codim: int):
    """Schur-reduced residual operator of one cluster: per output
    coordinate, (A, b) with q(u) = ||A u + b||^2 after minimizing over the
    cluster jets.

    ``pair_data(a, b)`` returns the row-scaling vector and the scaled
    cross-evaluation matrix for the ordered pair; derivatives at a member's
    own center reduce to the diagonal ``self_diag``.
    """
    members = [anchor] + list(cluster)
    mc = len(members)
    pairs = [(ia, ib) for ia in range(mc) for ib in range(mc) if ia != ib]
    k = self_diag.shape[0]
    out = []
    mats = [pair_data(members[ia], members[ib]) for ia, ib in pairs]
    for l in range(codim):
        parts = [slices_table[i][l] for i in members]     # (b, V) per member
        r0 = parts[0][1].shape[0]
        free_dims = [p[1].shape[0] for p in parts[1:]]
        total = sum(free_dims)
        offs = np.concatenate([[0], np.cumsum(free_dims[:-1])]).astype(int) \
            if free_dims else np.zeros(0, int)
        m_anchor = np.zeros((k * len(pairs), r0))
        m_free = np.zeros((k * len(pairs), total))
        rhs = np.zeros(k * len(pairs))
        for p, ((ia, ib), (w, d_cross)) in enumerate(zip(pairs, mats)):
            sl = slice(p * k, (p + 1) * k)
            b_a, v_a = parts[ia]
            b_b, v_b = parts[ib]
            wd = w * self_diag
            rhs[sl] = wd * b_a - d_cross @ b_b
            if v_a.shape[0]:
                cols = wd[:, None] * v_a.T
                if ia == 0:
                    m_anchor[sl] = cols
                else:
                    off = offs[ia - 1]
                    m_free[sl, off:off + v_a.shape[0]] = cols
            if v_b.shape[0]:
                cols = d_cross @ v_b.T
                if ib == 0:
                    m_anchor[sl] -= cols
                else:
                    off = offs[ib - 1]
                    m_free[sl, off:off + v_b.shape[0]] -= cols
        val_rows = np.arange(len(pairs)) * k
        if total:
            u_w, s_w, _ = np.linalg.svd(m_free, full_matrices=False)
            rank = s_w > 1e-11 * max(s_w.max(initial=0.0), 1.0)
            u_w = u_w[:, rank]
            a_red = m_anchor - u_w @ (u_w.T @ m_anchor)
            b_red = rhs - u_w @ (u_w.T @ rhs)
            mv = m_free[val_rows]
            uv, sv, _ = np.linalg.svd(mv, full_matrices=False)
            uv = uv[:, sv > 1e-11 * max(sv.max(initial=0.0), 1.0)]
            a_val = m_anchor[val_rows] - uv @ (uv.T @ m_anchor[val_rows])
        else:
            a_red, b_red = m_anchor, rhs
            a_val = m_anchor[val_rows]
        out.append((a_red, b_red, a_val))
    return out


def _solve_slice(blocks: list, taus: list, deltas: list, b0: np.ndarray,
                 v0: np.ndarray, cfg: RefinementConfig):
    """Survivor affine set of one coordinate slice from its Schur blocks.

    A fiber direction stays free when a unit perturbation along it keeps
    the value-consistency rows of every block inside that block's scale
    tolerance; this restricts pinning to evidence carried by the sample
    heights themselves, which is the only channel the shrinking-ball limit
    retains.  The base point solves the joint fine-scale-emphasized least
    squares over all rows, and the fiber dies when the solved base violates
    some block's tolerance.  Returns (new_b, new_v, gap_warning) or None.
    """
    r0 = v0.shape[0]
    if not blocks:
        return b0, v0, False
    inv_sq_tau = [1.0 / np.sqrt(tau) for tau in taus]
    gap_warn = False
    if r0:
        val_normed = [w * a_val for (_, _, a_val), w in zip(blocks, inv_sq_tau)]
        a_val_bar = np.vstack(val_normed)
        if a_val_bar.shape[0] < r0:
            a_val_bar = np.vstack([a_val_bar, np.zeros((r0 - a_val_bar.shape[0], r0))])
        vt = np.linalg.svd(a_val_bar, full_matrices=False)[2]   # (r0, r0)
        resp = np.zeros(r0)
        for bn in val_normed:
            np.maximum(resp, np.linalg.norm(bn @ vt.T, axis=0), out=resp)
        free = resp <= cfg.free_cut
        v_free = vt[free]
        if free.any() and (~free).any():
            floor = max(resp[free].max(initial=0.0), 1e-300)
            gap_warn = bool(resp[~free].min() < cfg.gap_ratio * floor)
        # base accuracy is set by the finest scales; upweight them
        d_min = min(deltas)
        rec_w = [w * d_min / d for w, d in zip(inv_sq_tau, deltas)]
        a_rec = np.vstack([w * a for (a, _, _), w in zip(blocks, rec_w)])
        b_rec = np.concatenate([w * b for (_, b, _), w in zip(blocks, rec_w)])
        u_hat, *_ = np.linalg.lstsq(a_rec, -b_rec, rcond=None)
    else:
        u_hat = np.zeros(0)
        v_free = np.zeros((0, 0))
    for (a, b, _), tau in zip(blocks, taus):
        resid = a @ u_hat + b if r0 else b
        if float(resid @ resid) > tau * (1.0 + 1e-9):
            return None
    new_b = b0 + (v0.T @ u_hat if r0 else 0.0)
    new_v = v_free @ v0 if r0 else v0
    return new_b, new_v, gap_warn


def _refine_table(samples: SampledSet, t: np.ndarray, codim: int,
                  slices_table: list, cfg: RefinementConfig,
                  scales: tuple[float, ...], dcache: _DerivativeCache,
                  tag: int, neighbor_table: list, d: int, m: int):
    """One refinement pass over every sample of one fiber table.

    ``slices_table`` maps sample -> EMPTY or per-coordinate (b, V) slices;
    returns (new_table, diagnostics).
    """
    expo = _scale_exponents(d, m)
    ctol = cfg.coincident_tol * max(1.0, samples.diameter)
    fine_to_coarse = sorted(range(len(scales)), key=lambda s: scales[s])
    diagnostics: list[str] = []
    new_table: list = [EMPTY] * samples.n_points
    scales_arr = np.array(scales)
    self_diag = np.diag(dcache.self_mat).copy()

    def refine_one(i: int):
        prev = slices_table[i]
        if prev is EMPTY:
            return EMPTY, None
        nbr_idx, nbr_dist = neighbor_table[i]
        counts = np.searchsorted(nbr_dist, scales_arr, side="right")
        informative = [s for s in fine_to_coarse if counts[s] > 0]
        if not informative:
            return prev, None
        tq = t[nbr_idx]
        anchor_pd = np.linalg.norm(tq - t[i], axis=1)
        # hard degeneracy checks at the two finest informative scales
        for s in informative[:2]:
            c = counts[s]
            if np.any(anchor_pd[:c] < ctol):
                return EMPTY, None
            if c > 1:
                sub = tq[:c]
                dd = np.linalg.norm(sub[:, None, :] - sub[None, :, :], axis=2)
                np.fill_diagonal(dd, np.inf)
                if dd.min() < ctol:
                    return EMPTY, None
        empty_nbr = np.fromiter((slices_table[j] is EMPTY for j in nbr_idx),
                                dtype=bool, count=len(nbr_idx))
        if empty_nbr[: counts[informative[0]]].all():
            return EMPTY, None

        pd_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

        def pair_data(a: int, b: int):
            hit = pd_cache.get((a, b))
            if hit is None:
                diff = t[a] - t[b]
                s_ab = max(float(np.sqrt(diff @ diff)), ctol)
                w = s_ab ** (-expo)
                hit = (w, w[:, None] * dcache.between(a, b))
                pd_cache[(a, b)] = hit
            return hit

        blocks = [[] for _ in range(codim)]
        taus: list[float] = []
        deltas: list[float] = []
        for s in informative:
            c = counts[s]
            keep = ~empty_nbr[:c] & (anchor_pd[:c] >= ctol)
            clean = nbr_idx[:c][keep]
            if clean.size == 0:
                continue
            rng = np.random.default_rng((cfg.seed, tag, i, s))
            clusters = _pick_clusters(clean, t, cfg.kbar, cfg.cluster_budget, rng, ctol)
            tau = cfg.tolerance(scales[s])
            for cluster in clusters:
                per_coord = _cluster_block(i, cluster, t, slices_table,
                                           pair_data, self_diag, codim)
                for l, ab in enumerate(per_coord):
                    blocks[l].append(ab)
                taus.append(tau)
                deltas.append(scales[s])
        new_slices = []
        warn = False
        for l in range(codim):
            solved = _solve_slice(blocks[l], taus, deltas, prev[l][0], prev[l][1], cfg)
            if solved is None:
                return EMPTY, None
            new_b, new_v, gap = solved
            warn = warn or gap
            new_slices.append((new_b, new_v))
        note = f"gap ratio below {cfg.gap_ratio:g} at sample {i}" if warn else None
        return new_slices, note

    threads = int(os.environ.get(THREAD_ENV_VAR, "1") or "1")
    indices = range(samples.n_points)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(refine_one, indices))
    else:
        results = [refine_one(i) for i in indices]
    for i, (res, note) in zip(indices, results):
        new_table[i] = res
        if note:
            diagnostics.append(note)
    return new_table, diagnostics


def _neighbor_table(samples: SampledSet, radius: float) -> list:
    table = []
    for i in range(samples.n_points):
        idx = samples.neighbors_within(i, radius)
        dist = np.linalg.norm(samples.points[idx] - samples.points[i], axis=1)
        order = np.argsort(dist, kind="stable")
        table.append((idx[order], dist[order]))
    return table


def refine_once(bundle: MBundle, config: RefinementConfig,
                _scales: tuple[float, ...] | None = None,
                _neighbors: list | None = None,
                _dcaches: list | None = None) -> MBundle:
    """One pruning pass; every fiber of the result is an affine subset of
    its predecessor and EMPTY fibers stay EMPTY."""
    scales = _scales or config.resolve_scales(bundle.samples)
    neighbors = _neighbors or _neighbor_table(bundle.samples, scales[0])
    codim = bundle.samples.ambient_dim - bundle.d
    fibers = {}
    diagnostics = list(bundle.diagnostics)
    for f in range(len(bundle.frames)):
        t, _ = bundle.projection(f)
        dcache = _dcaches[f] if _dcaches else _DerivativeCache(t, bundle.d, bundle.m)
        table = []
        templates = []
        for i in range(bundle.samples.n_points):
            fib = bundle.fiber(i, f)
            templates.append(fib)
            table.append(EMPTY if is_empty(fib) else _fiber_to_slices(fib))
        new_table, diags = _refine_table(
            bundle.samples, t, codim, table, config, scales, dcache, f,
            neighbors, bundle.d, bundle.m)
        diagnostics.extend(f"frame {f}: {msg}" for msg in diags)
        for i in range(bundle.samples.n_points):
            res = new_table[i]
            if res is EMPTY:
                fibers[(i, f)] = EMPTY
            elif res is table[i]:
                fibers[(i, f)] = templates[i]
            else:
                fibers[(i, f)] = _slices_to_fiber(res, templates[i])
    return MBundle(bundle.samples, bundle.frames, fibers, bundle.d, bundle.m,
                   bundle.generation + 1, tuple(diagnostics))


def _fibers_agree(a, b, tol: float = 1e-9) -> bool:
    if is_empty(a) or is_empty(b):
        return is_empty(a) and is_empty(b)
    if a.dim != b.dim:
        return False
    scale = 1.0 + float(np.linalg.norm(a.base))
    if np.linalg.norm(a.base - b.base) > tol * scale:
        return False
    if a.dim:
        fa = a.basis.reshape(a.dim, -1)
        fb = b.basis.reshape(b.dim, -1)
        if np.linalg.norm(fb - (fb @ fa.T) @ fa) > tol:
            return False
    return True


def refine_to_stable(bundle: MBundle, config: RefinementConfig):
    """Iterate refinement until two consecutive generations agree, or the
    generation cap is hit (reported, not silently accepted)."""
    scales = config.resolve_scales(bundle.samples)
    neighbors = _neighbor_table(bundle.samples, scales[0])
    dcaches = [_DerivativeCache(bundle.projection(f)[0], bundle.d, bundle.m)
               for f in range(len(bundle.frames))]
    history = [bundle.dim_histogram()]
    empties = [bundle.empty_count()]
    current = bundle
    stabilized = False
    for _ in range(config.max_generations):
        nxt = refine_once(current, config, _scales=scales, _neighbors=neighbors,
                          _dcaches=dcaches)
        history.append(nxt.dim_histogram())
        empties.append(nxt.empty_count())
        if all(_fibers_agree(current.fibers[key], nxt.fibers[key])
               for key in current.fibers):
            stabilized = True
            current = nxt
            break
        current = nxt
    diagnostics = list(current.diagnostics)
    if not stabilized:
        diagnostics.append(
            f"refinement did not stabilize within {config.max_generations} generations")
    report = StabilityReport(stabilized, current.generation, history, empties,
                             diagnostics)
    return current, report


def decide_nontrivial(bundle: MBundle) -> tuple[bool, list[int]]:
    """True when every sample keeps at least one nonempty frame fiber."""
    culprits = [i for i in range(bundle.samples.n_points)
                if not bundle.nonempty_frames(i)]
    return not culprits, culprits


def qmin_report(bundle: MBundle, frame_index: int, anchor_index: int,
                p0: JetPoly, config: RefinementConfig) -> QminReport:
    """Probe the limit test for one jet: worst cluster minimum per scale,
    fitted log-log decay slope, and the survival verdict."""
    scales = config.resolve_scales(bundle.samples)
    t, _ = bundle.projection(frame_index)
    ctol = config.coincident_tol * max(1.0, bundle.samples.diameter)
    per_scale: list[float] = []
    used_scales: list[float] = []
    witnesses: list[np.ndarray] = []
    verdict = "survives"
    for s_idx, delta in enumerate(scales):
        nbrs = bundle.samples.neighbors_within(anchor_index, delta)
        nbrs = np.array([j for j in nbrs
                         if not is_empty(bundle.fiber(j, frame_index))], dtype=int)
        if nbrs.size == 0:
            continue
        rng = np.random.default_rng((config.seed, frame_index, anchor_index, s_idx))
        clusters = _pick_clusters(nbrs, t, config.kbar, config.cluster_budget, rng, ctol)
        worst = 0.0
        worst_wit = []
        for cluster in clusters:
            try:
                val, wit = qmin(bundle, frame_index, anchor_index, p0, list(cluster),
                                coincident_tol=ctol)
            except DegenerateClusterError:
                val, wit = float("inf"), []
            if val > worst:
                worst, worst_wit = val, wit
        used_scales.append(delta)
        per_scale.append(worst)
        witnesses = [w.coeffs for w in worst_wit] or witnesses
        if worst > config.tolerance(delta):
            verdict = "culled"
    slope = None
    pos = [(s, v) for s, v in zip(used_scales, per_scale) if v > 0]
    if len(pos) >= 2:
        xs = np.log([s for s, _ in pos])
        ys = np.log([v for _, v in pos])
        slope = float(np.polyfit(xs, ys, 1)[0])
    return QminReport(used_scales, per_scale, slope, verdict, config.kbar, witnesses)
