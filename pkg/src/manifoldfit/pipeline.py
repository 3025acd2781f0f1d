"""End-to-end decision pipeline shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .bundles import SampledSet, default_frames, gr_fiber, initial_bundle, is_empty
from .refinement import RefinementConfig, refine_to_stable
from .reports import DecisionReport
from .topology import decide

__all__ = ["run_decision", "stabilize", "collect_gr_fibers"]


def run_decision(points, d: int, m: int, config: RefinementConfig | None = None,
                 descriptor: dict | None = None,
                 explicit_loops: list[list[int]] | None = None) -> DecisionReport:
    """Full verdict for a point cloud: build the starting bundle over the
    deduplicated permutation frames, stabilize, and decide."""
    samples = points if isinstance(points, SampledSet) else SampledSet(
        np.asarray(points, dtype=float), descriptor=descriptor)
    n = samples.ambient_dim
    if not 1 <= d < n:
        raise ValueError(f"need 1 <= d < n, got d={d}, n={n}")
    if m < 1:
        raise ValueError("m must be at least 1")
    config = config or RefinementConfig()
    bundle = initial_bundle(samples, default_frames(n, d), d, m)
    return decide(samples, bundle, config, explicit_loops=explicit_loops)


def stabilize(points, d: int, m: int, config: RefinementConfig | None = None,
              descriptor: dict | None = None):
    """Stabilized bundle plus its stability report, without the verdict."""
    samples = points if isinstance(points, SampledSet) else SampledSet(
        np.asarray(points, dtype=float), descriptor=descriptor)
    config = config or RefinementConfig()
    bundle = initial_bundle(samples, default_frames(samples.ambient_dim, d), d, m)
    return refine_to_stable(bundle, config)


def collect_gr_fibers(bundle) -> dict:
    """Gr-fiber per sample of a stabilized bundle (EMPTY entries included)."""
    return {i: gr_fiber(bundle, i) for i in range(bundle.samples.n_points)}
