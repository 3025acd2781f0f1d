"""Decide whether a sampled compact set fits inside a d-dimensional C^m
manifold, and paste local graph patches into a candidate manifold."""

from .bundles import (EMPTY, AffineJetFiber, GrFiber, MBundle, SampledSet,
                      default_frames, gr_fiber, initial_bundle, intersect_fiber,
                      is_empty)
from .classical import ClassicalReport, classical_mode
from .estimator import ManifoldExtensionChecker
from .generators import GeneratorSpec, analytic_tangent, generate
from .geometry import (AffinePlane, Frame, GrPlane, align_frames, frame_to_plane,
                       grass_dist, merge, oplus, planes_equal, split)
from .jets import (Jet, JetPoly, compatible, eval_derivative, realize_jet,
                   taylor_residual)
from .pasting import (CylinderPacket, LocalPatch, demo_packet, extract_mput,
                      glued_tangent, paste_sections, weighted_sq_dist)
from .pipeline import run_decision, stabilize
from .refinement import (QminReport, RefinementConfig, StabilityReport,
                         decide_nontrivial, qmin, qmin_report, refine_once,
                         refine_to_stable)
from .reports import DecisionReport
from .topology import (LoopPath, ObstructionReport, d1_shortcut, decide,
                       find_candidate_loops, line_monodromy)

__version__ = "0.1.0"

__all__ = [
    "AffineJetFiber", "AffinePlane", "ClassicalReport", "CylinderPacket",
    "DecisionReport", "EMPTY", "Frame", "GeneratorSpec", "GrFiber", "GrPlane",
    "Jet", "JetPoly", "LocalPatch", "LoopPath", "MBundle",
    "ManifoldExtensionChecker", "ObstructionReport", "QminReport",
    "RefinementConfig", "SampledSet", "StabilityReport", "align_frames",
    "analytic_tangent", "classical_mode", "compatible", "d1_shortcut", "decide",
    "decide_nontrivial", "default_frames", "demo_packet", "eval_derivative",
    "extract_mput", "find_candidate_loops", "frame_to_plane", "generate",
    "glued_tangent", "gr_fiber", "grass_dist", "initial_bundle",
    "intersect_fiber", "is_empty", "line_monodromy", "merge", "oplus",
    "paste_sections", "planes_equal", "qmin", "qmin_report", "realize_jet",
    "refine_once", "refine_to_stable", "run_decision", "split", "stabilize",
    "taylor_residual", "weighted_sq_dist",
]
