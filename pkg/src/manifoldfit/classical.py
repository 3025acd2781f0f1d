"""Classical extension-problem mode: bundles of jets of maps R^N -> R^D
pinned to sampled function values, refined with clusters drawn in the
domain rather than in the ambient graph space.

This is the comparison mode for the discontinuous-function contrast: a
scalar bundle over the domain can die under refinement while the bundle of
its graph, viewed as a subset of the plane, survives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundles import EMPTY, SampledSet, is_empty
from .jets import jet_space_dim
from .refinement import RefinementConfig, _DerivativeCache, _neighbor_table, _refine_table

__all__ = ["ClassicalReport", "classical_mode", "classical_refine"]


@dataclass
class ClassicalReport:
    nontrivial: bool
    generations: int
    empty_counts: list[int]
    dims: list[int]
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": "classical",
            "nontrivial": self.nontrivial,
            "generations": self.generations,
            "empty_counts": self.empty_counts,
            "dims": self.dims,
            "diagnostics": self.diagnostics,
        }


def _initial_table(values: np.ndarray, n_dim: int, m: int):
    k = jet_space_dim(n_dim, m)
    basis = np.zeros((k - 1, k))
    basis[:, 1:] = np.eye(k - 1)
    table = []
    for v in values:
        slices = []
        for l in range(values.shape[1]):
            b = np.zeros(k)
            b[0] = v[l]
            slices.append((b, basis))
        table.append(slices)
    return table


def classical_refine(points: np.ndarray, values: np.ndarray, m: int,
                     config: RefinementConfig):
    """Iterated refinement of the value-pinned bundle; returns the final
    fiber table (EMPTY or per-coordinate slices), generation count, and the
    per-generation empty counts."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if points.ndim != 2 or values.shape[0] != points.shape[0]:
        raise ValueError("points and values must align")
    samples = SampledSet(points)
    n_dim = points.shape[1]
    codim = values.shape[1]
    table = _initial_table(values, n_dim, m)
    scales = config.resolve_scales(samples)
    neighbors = _neighbor_table(samples, scales[0])
    dcache = _DerivativeCache(points, n_dim, m)
    empty_counts = [0]
    diagnostics: list[str] = []
    generation = 0
    for _ in range(config.max_generations):
        new_table, diags = _refine_table(samples, points, codim, table, config,
                                         scales, dcache, 0, neighbors, n_dim, m)
        diagnostics.extend(diags)
        generation += 1
        empty_counts.append(sum(1 for f in new_table if f is EMPTY))
        stable = all(_table_entry_agrees(a, b) for a, b in zip(table, new_table))
        table = new_table
        if stable:
            break
    return table, generation, empty_counts, diagnostics


def _table_entry_agrees(a, b, tol: float = 1e-9) -> bool:
    if a is EMPTY or b is EMPTY:
        return (a is EMPTY) == (b is EMPTY)
    for (ba, va), (bb, vb) in zip(a, b):
        if va.shape[0] != vb.shape[0]:
            return False
        if np.linalg.norm(ba - bb) > tol * (1.0 + np.linalg.norm(ba)):
            return False
        if va.shape[0] and np.linalg.norm(vb - (vb @ va.T) @ va) > tol:
            return False
    return True


def classical_mode(points: np.ndarray, values: np.ndarray, m: int,
                   config: RefinementConfig | None = None) -> ClassicalReport:
    """Does the sampled function extend to a C^m map?  Verdict is the
    nontriviality of the stabilized value-pinned bundle."""
    config = config or RefinementConfig()
    table, generations, empty_counts, diagnostics = classical_refine(
        points, values, m, config)
    dims = [-1 if f is EMPTY else sum(v.shape[0] for _, v in f) for f in table]
    nontrivial = all(f is not EMPTY for f in table)
    return ClassicalReport(nontrivial, generations, empty_counts, dims, diagnostics)
