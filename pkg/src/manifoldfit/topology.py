"""The topological necessary condition: loop monodromy of forced tangent
lines, the d = 1 shortcut, and the composite decision.

Candidate loops are cycles of samples whose Gr-fiber is a single plane.
When the forced planes along a loop share a fixed subspace of codimension
one inside themselves, the leftover line moves in the quotient of the
ambient space by the shared part; its class is an integer winding when the
quotient is a plane and a lift sign in higher dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bundles import EMPTY, GrFiber, MBundle, SampledSet, gr_fiber, is_empty
from .refinement import RefinementConfig, decide_nontrivial, refine_to_stable
from .reports import DecisionReport

__all__ = [
    "LoopPath",
    "ObstructionReport",
    "ResolutionError",
    "d1_shortcut",
    "find_candidate_loops",
    "line_monodromy",
    "decide",
]

CONTINUATION_MAX_JUMP = 0.5
COMMON_EIG_TOL = 0.9
WINDING_RESIDUAL_TOL = 0.1
LOOP_OVERLAP_DEDUP = 0.8
MIN_LOOP_LEN = 8


class ResolutionError(RuntimeError):
    """Loop sampling too coarse for sign or angle continuation."""


@dataclass(frozen=True)
class LoopPath:
    """An ordered cyclic list of sample indices with their fiber snapshots."""

    indices: tuple[int, ...]
    fibers: tuple[GrFiber, ...]
    singleton: bool

    def __post_init__(self):
        if len(self.indices) != len(self.fibers):
            raise ValueError("loop indices and fibers must align")
        if len(self.indices) < 3:
            raise ValueError("a loop needs at least three samples")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class ObstructionReport:
    verdict: str                      # OBSTRUCTED | PASSES | INCONCLUSIVE
    mechanism: dict = field(default_factory=dict)
    loop_indices: list = field(default_factory=list)
    free_factor: tuple[int, int] = (0, 0)
    angles: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "mechanism": self.mechanism,
            "loop_indices": [int(i) for i in self.loop_indices],
            "free_factor": list(self.free_factor),
        }


def d1_shortcut(bundle: MBundle) -> tuple[bool, list[int]]:
    """For curves the topological check is vacuous: the answer is fiber
    nontriviality alone."""
    if bundle.d != 1:
        raise ValueError("the shortcut applies only to d = 1 bundles")
    return decide_nontrivial(bundle)


def _loop_grass_dist(p1: np.ndarray, p2: np.ndarray) -> float:
    return float(np.linalg.norm(p1 - p2, 2))


def find_candidate_loops(samples: SampledSet, fibers: dict,
                         max_loops: int = 32) -> list[LoopPath]:
    """Cycles in the neighborhood graph restricted to singleton-fiber
    samples, ordered by length and deduplicated by sample overlap.

    Uses the fundamental cycles of a breadth-first spanning tree per
    connected component: every essential loop of the singleton region shows
    up as the fundamental cycle of some cross edge, while short mesh cycles
    are discarded (they carry nearly constant planes and cannot obstruct).
    """
    singleton = [int(i) for i, f in fibers.items()
                 if not is_empty(f) and f.is_singleton()]
    if len(singleton) < MIN_LOOP_LEN:
        return []
    pts = samples.points
    sing = np.array(sorted(singleton), dtype=int)
    nn = []
    for i in sing:
        d = np.linalg.norm(pts[sing] - pts[i], axis=1)
        d = d[d > 0]
        if d.size:
            nn.append(d.min())
    if not nn:
        return []
    radius = 2.5 * float(np.median(nn))
    sing_set = set(int(i) for i in sing)
    adj = {int(i): [int(j) for j in samples.neighbors_within(int(i), radius)
                    if int(j) in sing_set] for i in sing}
    unvisited = set(sing_set)
    candidates: list[list[int]] = []
    while unvisited:
        start = min(unvisited)
        comp, parent, depth = _bfs_tree(start, adj)
        unvisited -= comp
        if len(comp) < MIN_LOOP_LEN:
            continue
        for u in sorted(comp):
            for v in adj[u]:
                if v <= u or parent.get(v) == u or parent.get(u) == v:
                    continue
                cycle = _fundamental_cycle(u, v, parent, depth)
                if cycle and len(cycle) >= MIN_LOOP_LEN:
                    candidates.append(cycle)
    # dedup small-first so distinct holes survive, but never drop the long
    # cycles: they are the ones that can wind
    deduped: list[list[int]] = []
    sets: list[set] = []
    for walk in sorted(candidates, key=len):
        key = set(walk)
        if any(len(key & o) >= LOOP_OVERLAP_DEDUP * len(walk) for o in sets):
            continue
        deduped.append(walk)
        sets.append(key)
    if len(deduped) > max_loops:
        deduped = deduped[:max_loops // 2] + deduped[-(max_loops - max_loops // 2):]
    return [LoopPath(tuple(walk), tuple(fibers[i] for i in walk), singleton=True)
            for walk in deduped]


def _bfs_tree(start: int, adj: dict):
    parent: dict[int, int | None] = {start: None}
    depth = {start: 0}
    order = [start]
    head = 0
    while head < len(order):
        cur = order[head]
        head += 1
        for nxt in adj[cur]:
            if nxt not in parent:
                parent[nxt] = cur
                depth[nxt] = depth[cur] + 1
                order.append(nxt)
    return set(order), parent, depth


def _fundamental_cycle(u: int, v: int, parent: dict, depth: dict):
    """Tree path u -> lca -> v closed by the cross edge (v, u)."""
    path_u, path_v = [u], [v]
    a, b = u, v
    while depth[a] > depth[b]:
        a = parent[a]
        path_u.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        path_v.append(b)
    while a != b:
        a = parent[a]
        b = parent[b]
        if a is None or b is None:
            return None
        path_u.append(a)
        path_v.append(b)
    # path_u ends at the lca; path_v's copy of it is dropped
    return path_u + path_v[-2::-1]


def _common_subspace(fibers: tuple[GrFiber, ...]) -> np.ndarray:
    """Orthonormal basis of the subspace lying in every forced span,
    detected from the spectrum of the averaged span projection."""
    mean = np.mean([f.span_projection() for f in fibers], axis=0)
    w, v = np.linalg.eigh(mean)
    return v[:, w >= COMMON_EIG_TOL]


def _moving_lines(fibers: tuple[GrFiber, ...], common: np.ndarray):
    """Per-sample unit direction of the forced part outside the common
    subspace; None when the leftover is not a line."""
    n = fibers[0].n
    proj_out = np.eye(n) - common @ common.T
    lines = []
    for f in fibers:
        rest = f.forced @ proj_out.T
        u, s, vt = np.linalg.svd(rest)
        if s.size == 0 or s[0] < 1e-8:
            return None
        if s.size > 1 and s[1] > 0.2 * s[0]:
            return None
        lines.append(vt[0])
    return np.array(lines)


def line_monodromy(loop: LoopPath, quotient_basis: np.ndarray | None = None) -> ObstructionReport:
    """Monodromy class of the moving forced line along a loop.

    In a 2-dimensional quotient the class is the integer winding of the
    line (angle doubling); in higher dimension it is the sign picked up by
    a unit-vector lift.  Loops whose varying factor is not a line come back
    INCONCLUSIVE rather than wrongly decided.
    """
    fibers = loop.fibers
    ls = {f.l for f in fibers}
    if len(ls) != 1:
        return ObstructionReport("INCONCLUSIVE", {"reason": "forced rank varies along loop"},
                                 list(loop.indices))
    l = ls.pop()
    n = fibers[0].n
    d = fibers[0].d
    if l == 0:
        return ObstructionReport("PASSES", {"reason": "unconstrained fibers"},
                                 list(loop.indices), (n, d))
    common = _common_subspace(fibers)
    c = common.shape[1]
    if c == l:
        return ObstructionReport("PASSES", {"reason": "constant forced planes",
                                            "winding": 0},
                                 list(loop.indices), (n - l, d - l))
    if c != l - 1:
        return ObstructionReport(
            "INCONCLUSIVE",
            {"reason": f"moving factor has rank {l - c}, only lines are decided"},
            list(loop.indices), (n - l, d - l))
    lines = _moving_lines(fibers, common)
    if lines is None:
        return ObstructionReport("INCONCLUSIVE", {"reason": "moving factor is not a line"},
                                 list(loop.indices), (n - l, d - l))
    if quotient_basis is None:
        # the moving line lives in the orthogonal complement of the common part
        q, _ = np.linalg.qr(np.eye(n) - common @ common.T)
        w, v = np.linalg.eigh(np.eye(n) - common @ common.T)
        quotient_basis = v[:, w > 0.5]
    k = quotient_basis.shape[1]
    coords = lines @ quotient_basis                      # (L, k) unit-ish vectors
    norms = np.linalg.norm(coords, axis=1)
    if np.any(norms < 0.9):
        return ObstructionReport("INCONCLUSIVE",
                                 {"reason": "moving line leaves the quotient"},
                                 list(loop.indices), (n - l, d - l))
    coords = coords / norms[:, None]
    # resolution precondition: consecutive line jumps stay small
    for a, b in zip(coords, np.roll(coords, -1, axis=0)):
        jump = math.sqrt(max(0.0, 1.0 - (a @ b) ** 2))
        if jump >= CONTINUATION_MAX_JUMP:
            raise ResolutionError(
                f"consecutive loop samples jump by {jump:.3f} >= {CONTINUATION_MAX_JUMP}")
    if k == 2:
        angles = np.arctan2(coords[:, 1], coords[:, 0])
        doubled = 2.0 * angles
        closed = np.append(doubled, doubled[0])
        increments = np.diff(closed)
        increments = (increments + math.pi) % (2.0 * math.pi) - math.pi
        total = float(np.sum(increments))
        winding = round(total / (2.0 * math.pi))
        resid = abs(total - 2.0 * math.pi * winding)
        if resid > WINDING_RESIDUAL_TOL * 2.0 * math.pi:
            raise ResolutionError(f"winding residual {resid:.3f} too large")
        verdict = "OBSTRUCTED" if winding != 0 else "PASSES"
        return ObstructionReport(verdict, {"winding": int(winding), "k": 2},
                                 list(loop.indices), (n - l, d - l),
                                 angles=[float(a) for a in angles])
    # k >= 3: lift by sign continuation and read off the holonomy sign
    lift = coords.copy()
    for i in range(1, len(lift)):
        if lift[i] @ lift[i - 1] < 0:
            lift[i] = -lift[i]
    sign = 1 if lift[-1] @ lift[0] >= 0 else -1
    verdict = "OBSTRUCTED" if sign < 0 else "PASSES"
    return ObstructionReport(verdict, {"sign": sign, "k": int(k)},
                             list(loop.indices), (n - l, d - l))


def decide(samples: SampledSet, bundle: MBundle, config: RefinementConfig | None = None,
           loops: list[LoopPath] | None = None,
           explicit_loops: list[list[int]] | None = None) -> DecisionReport:
    """Composite verdict: fiber nontriviality, the d = 1 shortcut, and the
    loop-monodromy necessary condition for d >= 2."""
    config = config or RefinementConfig()
    if bundle.generation == 0:
        bundle, stability = refine_to_stable(bundle, config)
    else:
        from .refinement import StabilityReport
        stability = StabilityReport(True, bundle.generation,
                                    [bundle.dim_histogram()], [bundle.empty_count()])
    diagnostics = list(stability.diagnostics)
    nontrivial, culprits = decide_nontrivial(bundle)
    gr_summary: dict = {"by_rank": {}, "consistency_violations": 0, "worst_consistency": 0.0}
    loop_reports: list[dict] = []

    def build(verdict, caveat, mechanism):
        return DecisionReport(
            verdict=verdict, caveat=caveat, mechanism=mechanism,
            d=bundle.d, m=bundle.m,
            input_descriptor=samples.descriptor,
            config={**config.as_dict(), "scales_resolved": list(config.resolve_scales(samples))},
            frames_used=len(bundle.frames),
            stability=stability.to_dict(),
            gr_summary=gr_summary,
            loops=loop_reports,
            culprit_samples=[int(i) for i in culprits[:50]],
            diagnostics=diagnostics,
        )

    if not nontrivial:
        return build("NO", "NO_WITH_MECHANISM",
                     f"empty fibers at {len(culprits)} samples")
    if bundle.d == 1:
        return build("YES", "UNCONDITIONAL",
                     "stabilized bundle nontrivial; curve fibers carry no obstruction")

    fibers = {}
    for i in range(samples.n_points):
        f = gr_fiber(bundle, i)
        fibers[i] = f
        if not is_empty(f):
            key = str(f.l)
            gr_summary["by_rank"][key] = gr_summary["by_rank"].get(key, 0) + 1
            if f.consistency > 1e-6:
                gr_summary["consistency_violations"] += 1
                gr_summary["worst_consistency"] = max(
                    gr_summary["worst_consistency"], f.consistency)
    if loops is None:
        loops = find_candidate_loops(samples, fibers)
        if explicit_loops:
            for walk in explicit_loops:
                loops.append(LoopPath(tuple(int(i) for i in walk),
                                      tuple(fibers[int(i)] for i in walk),
                                      singleton=all(fibers[int(i)].is_singleton()
                                                    for i in walk)))
    obstructed = None
    inconclusive = 0
    for loop in loops:
        try:
            rep = line_monodromy(loop)
        except ResolutionError as exc:
            rep = ObstructionReport("INCONCLUSIVE", {"reason": str(exc)},
                                    list(loop.indices))
        loop_reports.append(rep.to_dict())
        if rep.verdict == "OBSTRUCTED" and obstructed is None:
            obstructed = rep
        if rep.verdict == "INCONCLUSIVE":
            inconclusive += 1
    if obstructed is not None:
        mech = obstructed.mechanism
        if "winding" in mech:
            detail = f"loop winding {mech['winding']}"
        else:
            detail = f"loop holonomy sign {mech.get('sign')}"
        return build("NO", "NO_WITH_MECHANISM", detail)
    note = "nontrivial fibers and no obstructed loop"
    if not loops:
        note += "; no loops required checking (NECESSARY-CONDITION-ONLY)"
    elif inconclusive:
        note += f"; {inconclusive} loop(s) inconclusive"
    return build("YES", "NECESSARY_CONDITIONS", note)
