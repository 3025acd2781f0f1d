"""Pasting local graph patches into a candidate manifold: frame-aligned
cylinder packets, the weighted squared-distance function and its exact
derivatives, extraction of the glued spine as a projected-Hessian zero set,
and disc-bundle section averaging over it.

Patches are analytic inputs (callables with gradients); the spine is found
by Gauss-Newton on the projected gradient and the final surface is the
partition-of-unity average of per-patch normal offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Frame, GrPlane, frame_to_plane, grass_dist

__all__ = [
    "DomainError",
    "PatchInvariantError",
    "LocalPatch",
    "CylinderPacket",
    "weighted_sq_dist",
    "extract_mput",
    "MputSample",
    "paste_sections",
    "GluedPoint",
    "glued_tangent",
]

DEFAULT_C0 = 0.05
DEFAULT_C2 = 0.25
EIGENGAP_MIN = 10.0
NEWTON_TOL = 1e-9
NEWTON_MAX_ITERS = 80


class DomainError(ValueError):
    """Point outside the union of evaluation cylinders."""


class PatchInvariantError(ValueError):
    """A patch violates the packet's normalization or tilt bounds."""


@dataclass(frozen=True)
class LocalPatch:
    """A graph patch: center, aligned frame, and the graph map with its
    gradient.  ``func(t)`` returns the (n-d,) heights at t in R^d and
    ``grad(t)`` the (n-d, d) Jacobian."""

    center: np.ndarray
    frame: Frame
    func: object
    grad: object
    radius: float

    def __post_init__(self):
        c = np.array(np.asarray(self.center, dtype=float), copy=True)
        if c.shape != (self.frame.n,):
            raise ValueError("patch center does not match frame dimension")
        c.flags.writeable = False
        object.__setattr__(self, "center", c)

    @property
    def d(self) -> int:
        return self.frame.d

    def graph_point(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.center + self.frame.q @ np.concatenate([t, self.func(t)])


def _bump_value_grad_hess(u: np.ndarray, p: int):
    """The polynomial bump (1 - |u|^2)^p on the unit ball with exact
    derivatives; identically zero outside."""
    r2 = float(u @ u)
    if r2 >= 1.0:
        k = len(u)
        return 0.0, np.zeros(k), np.zeros((k, k))
    w = 1.0 - r2
    val = w ** p
    grad = -2.0 * p * w ** (p - 1) * u
    hess = (-2.0 * p * w ** (p - 1) * np.eye(len(u))
            + 4.0 * p * (p - 1) * w ** (p - 2) * np.outer(u, u))
    return val, grad, hess


class CylinderPacket:
    """Overlapping frame-aligned cylinders carrying graph patches.

    Validates the packet geometry on construction: normalized patches
    (F(0) = 0), tilt bound |grad F| <= c0 on the 12 delta0 cylinder, frame
    proximity below c0 on overlaps, and bounded overlap count.
    """

    def __init__(self, patches: list[LocalPatch], delta0: float,
                 c0: float = DEFAULT_C0, c2: float = DEFAULT_C2, m: int = 1,
                 validate: bool = True):
        if not patches:
            raise ValueError("a packet needs at least one patch")
        self.patches = list(patches)
        self.delta0 = float(delta0)
        self.c0 = float(c0)
        self.c2 = float(c2)
        self.m = int(m)
        self.bump_power = self.m + 3
        self.n = patches[0].frame.n
        self.d = patches[0].frame.d
        if any(p.frame.n != self.n or p.frame.d != self.d for p in patches):
            raise ValueError("patches live in different dimensions")
        self.overlap = self._overlap_graph()
        if validate:
            self._validate()

    def _overlap_graph(self) -> dict[int, list[int]]:
        centers = np.array([p.center for p in self.patches])
        out: dict[int, list[int]] = {i: [] for i in range(len(self.patches))}
        for i in range(len(self.patches)):
            for j in range(i + 1, len(self.patches)):
                if np.linalg.norm(centers[i] - centers[j]) < 24.0 * self.delta0:
                    out[i].append(j)
                    out[j].append(i)
        return out

    def _validate(self) -> None:
        d = self.d
        rng = np.random.default_rng(0)
        probes = rng.uniform(-1.0, 1.0, size=(64, d))
        probes *= 12.0 * self.delta0 / np.maximum(np.linalg.norm(probes, axis=1),
                                                  1.0)[:, None]
        for k, patch in enumerate(self.patches):
            if np.linalg.norm(patch.func(np.zeros(d))) > 1e-9:
                raise PatchInvariantError(f"patch {k} is not normalized: F(0) != 0")
            worst = max(float(np.linalg.norm(patch.grad(t), 2)) for t in probes)
            if worst > self.c0 * (1.0 + 1e-6):
                raise PatchInvariantError(
                    f"patch {k} tilt {worst:.4f} exceeds c0={self.c0}")
        for i, nbrs in self.overlap.items():
            if len(nbrs) + 1 > 4 ** self.n:
                raise PatchInvariantError("overlap count is unreasonably large")
            pi = frame_to_plane(self.patches[i].frame)
            for j in nbrs:
                pj = frame_to_plane(self.patches[j].frame)
                if grass_dist(pi, pj) >= self.c0:
                    raise PatchInvariantError(
                        f"patches {i},{j} overlap with frame distance >= c0")

    def local_coords(self, index: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        patch = self.patches[index]
        rel = patch.frame.q.T @ (np.asarray(z, dtype=float) - patch.center)
        return rel[: self.d], rel[self.d:]

    def in_cylinder(self, index: int, z: np.ndarray, r: float) -> bool:
        x, y = self.local_coords(index, z)
        bound = r * self.delta0
        return bool(np.linalg.norm(x) < bound and np.linalg.norm(y) < bound)


def weighted_sq_dist(packet: CylinderPacket, z: np.ndarray):
    """The smoothed squared distance to the packet's plane pieces with its
    exact gradient and Hessian.

    Value at z is the bump-weighted average of |y_i|^2 over the cylinders
    containing z, written in each cylinder's own coordinates.
    """
    z = np.asarray(z, dtype=float)
    if not any(packet.in_cylinder(i, z, 5.0) for i in range(len(packet.patches))):
        raise DomainError("point lies outside the union of evaluation cylinders")
    n = packet.n
    scale = 6.0 * packet.delta0
    num_v, num_g, num_h = 0.0, np.zeros(n), np.zeros((n, n))
    den_v, den_g, den_h = 0.0, np.zeros(n), np.zeros((n, n))
    for i, patch in enumerate(packet.patches):
        x, y = packet.local_coords(i, z)
        val, grad_u, hess_u = _bump_value_grad_hess(x / scale, packet.bump_power)
        if val == 0.0:
            continue
        if np.linalg.norm(y) >= scale:
            raise DomainError("cylinder weight active outside its height range")
        xmat = patch.frame.q[:, : packet.d].T       # (d, n): z -> x chart
        ymat = patch.frame.q[:, packet.d:].T        # (n-d, n)
        theta_g = xmat.T @ grad_u / scale
        theta_h = xmat.T @ hess_u @ xmat / scale ** 2
        phi_v = float(y @ y)
        phi_g = 2.0 * ymat.T @ y
        phi_h = 2.0 * ymat.T @ ymat
        den_v += val
        den_g += theta_g
        den_h += theta_h
        num_v += phi_v * val
        num_g += phi_g * val + phi_v * theta_g
        num_h += (phi_h * val + np.outer(phi_g, theta_g)
                  + np.outer(theta_g, phi_g) + phi_v * theta_h)
    if den_v <= 0.0:
        raise DomainError("no cylinder weight is active at the point")
    g_val = num_v / den_v
    g_grad = (num_g - g_val * den_g) / den_v
    g_hess = (num_h - g_val * den_h - np.outer(g_grad, den_g)
              - np.outer(den_g, g_grad)) / den_v
    return g_val, g_grad, g_hess


@dataclass
class MputSample:
    """One extracted spine point with its tangent plane and Hessian data."""

    point: np.ndarray
    tangent: GrPlane
    normal_basis: np.ndarray
    eigengap: float
    iterations: int


def _hessian_split(packet: CylinderPacket, z: np.ndarray):
    _, grad, hess = weighted_sq_dist(packet, z)
    w, v = np.linalg.eigh(hess)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    codim = packet.n - packet.d
    normal = v[:, :codim]
    tangent = v[:, codim:]
    gap = w[codim - 1] / max(abs(w[codim]), 1e-300)
    return grad, normal, tangent, float(gap)


def extract_mput(packet: CylinderPacket, seeds: np.ndarray,
                 eigengap_min: float = EIGENGAP_MIN) -> list[MputSample]:
    """Project seed points onto the zero set of the projected gradient.

    Gauss-Newton on z -> N(z)^T grad G(z); seeds that fail to converge are
    dropped with a diagnostic, and a thin Hessian eigengap raises one too.
    """
    out = []
    for seed in np.atleast_2d(np.asarray(seeds, dtype=float)):
        z = seed.copy()
        converged = False
        iters = 0
        try:
            for iters in range(1, NEWTON_MAX_ITERS + 1):
                _, grad, hess = weighted_sq_dist(packet, z)
                w, v = np.linalg.eigh(hess)
                order = np.argsort(w)[::-1]
                normal = v[:, order][:, : packet.n - packet.d]
                resid = normal.T @ grad
                if np.linalg.norm(resid) <= NEWTON_TOL:
                    converged = True
                    break
                jac = normal.T @ hess
                step = jac.T @ np.linalg.solve(jac @ jac.T, resid)
                if np.linalg.norm(step) > packet.delta0:
                    step *= packet.delta0 / np.linalg.norm(step)
                z = z - step
        except DomainError:
            continue
        if not converged:
            continue
        grad, normal, tangent, gap = _hessian_split(packet, z)
        sample = MputSample(z, GrPlane.from_basis(tangent), normal, gap, iters)
        if gap < eigengap_min:
            sample.eigengap = gap
            raise RuntimeError(
                f"Hessian eigengap {gap:.2f} below {eigengap_min}: degenerate geometry")
        out.append(sample)
    return out


@dataclass
class GluedPoint:
    """Glued-section output at one spine point, with blend diagnostics."""

    base: np.ndarray
    offset: np.ndarray
    point: np.ndarray
    weights: dict = field(default_factory=dict)
    patch_offsets: dict = field(default_factory=dict)
    patch_gradients: dict = field(default_factory=dict)


def _patch_section(packet: CylinderPacket, index: int, x: np.ndarray,
                   tangent_basis: np.ndarray):
    """Point of patch ``index`` lying in the normal disc at x, by Newton in
    the patch's graph coordinates."""
    patch = packet.patches[index]
    t, _ = packet.local_coords(index, x)
    for _ in range(NEWTON_MAX_ITERS):
        g = patch.graph_point(t)
        resid = tangent_basis.T @ (g - x)
        if np.linalg.norm(resid) <= 1e-12 * (1.0 + np.linalg.norm(x)):
            break
        jac = tangent_basis.T @ patch.frame.q @ np.vstack(
            [np.eye(packet.d), patch.grad(t)])
        t = t - np.linalg.solve(jac, resid)
    else:
        raise RuntimeError(f"patch {index} section solve did not converge")
    g = patch.graph_point(t)
    ambient_grad = patch.frame.q @ np.vstack([np.eye(packet.d), patch.grad(t)])
    return g, ambient_grad


def paste_sections(packet: CylinderPacket, mput: list[MputSample],
                   require_support: bool = True):
    """Partition-of-unity average of per-patch offsets over the spine.

    Returns (glued points, dropped count); spine samples supported by no
    patch are dropped and counted.
    """
    out: list[GluedPoint] = []
    dropped = 0
    scale = 3.0 * packet.delta0
    for sample in mput:
        x = sample.point
        tangent_basis = sample.tangent.basis()
        weights = {}
        for i in range(len(packet.patches)):
            u, _ = packet.local_coords(i, x)
            val, _, _ = _bump_value_grad_hess(u / scale, packet.bump_power)
            if val > 0.0:
                weights[i] = val
        if not weights:
            dropped += 1
            if require_support:
                continue
            out.append(GluedPoint(x, np.zeros(packet.n), x))
            continue
        total = sum(weights.values())
        offset = np.zeros(packet.n)
        offsets, grads = {}, {}
        for i, w in weights.items():
            g, ambient_grad = _patch_section(packet, i, x, tangent_basis)
            offsets[i] = g - x
            grads[i] = ambient_grad
            offset += (w / total) * (g - x)
        glued = GluedPoint(x, offset, x + offset,
                           weights={i: w / total for i, w in weights.items()},
                           patch_offsets=offsets, patch_gradients=grads)
        out.append(glued)
    return out, dropped


def project_to_mput(packet: CylinderPacket, z: np.ndarray) -> MputSample | None:
    """Nearest spine point to z (Gauss-Newton from z itself)."""
    res = extract_mput(packet, np.asarray(z, dtype=float)[None, :])
    return res[0] if res else None


def glued_tangent(packet: CylinderPacket, sample: MputSample, h: float = 1e-5) -> GrPlane:
    """Tangent plane of the glued graph at a spine point, by central
    differences of the paste map along the spine."""
    basis = sample.tangent.basis()
    cols = []
    for k in range(packet.d):
        plus = project_to_mput(packet, sample.point + h * basis[:, k])
        minus = project_to_mput(packet, sample.point - h * basis[:, k])
        if plus is None or minus is None:
            raise DomainError("tangent probe left the pasting domain")
        gp, _ = paste_sections(packet, [plus], require_support=False)
        gm, _ = paste_sections(packet, [minus], require_support=False)
        cols.append((gp[0].point - gm[0].point) / (2.0 * h))
    return GrPlane.from_basis(np.stack(cols, axis=1))


def _line_patch(center_x: float, slope: float, delta0: float) -> LocalPatch:
    frame = Frame(np.eye(2), 1)
    center = np.array([center_x, slope * center_x])

    def func(t, s=slope):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return s * t

    def grad(t, s=slope):
        return np.array([[s]])

    return LocalPatch(center, frame, func, grad, delta0)


def _curve_patch(center_x: float, half_curv: float, delta0: float) -> LocalPatch:
    frame = Frame(np.eye(2), 1)
    g = lambda x: half_curv * x * x
    center = np.array([center_x, g(center_x)])

    def func(t, x0=center_x):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return g(x0 + t) - g(x0)

    def grad(t, x0=center_x):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.array([[2.0 * half_curv * (x0 + float(t[0]))]])

    return LocalPatch(center, frame, func, grad, delta0)


def demo_packet(name: str, delta0: float = 0.05, c0: float = DEFAULT_C0):
    """Built-in packets for the pasting demo and tests.

    Returns the packet and sample points lying on the patch graphs;
    ``two_lines`` keeps its samples out of the blend zone (the graphs
    disagree there), ``shared_curve`` spreads them across it.
    """
    if name == "flat":
        patch = _line_patch(0.0, 0.0, delta0)
        packet = CylinderPacket([patch], delta0, c0=c0)
        xs = np.linspace(-2.0 * delta0, 2.0 * delta0, 21)
        pts = np.stack([xs, np.zeros_like(xs)], axis=1)
        return packet, pts
    if name == "two_lines":
        left = _line_patch(-1.5 * delta0, c0, delta0)
        right = _line_patch(1.5 * delta0, -c0, delta0)
        packet = CylinderPacket([left, right], delta0, c0=c0)
        xs_l = np.linspace(-4.0 * delta0, -2.0 * delta0, 15)
        xs_r = np.linspace(2.0 * delta0, 4.0 * delta0, 15)
        pts = np.vstack([np.stack([xs_l, c0 * xs_l], axis=1),
                         np.stack([xs_r, -c0 * xs_r], axis=1)])
        return packet, pts
    if name == "shared_curve":
        half_curv = c0 / 2.0
        left = _curve_patch(-1.5 * delta0, half_curv, delta0)
        right = _curve_patch(1.5 * delta0, half_curv, delta0)
        packet = CylinderPacket([left, right], delta0, c0=c0)
        xs = np.linspace(-4.0 * delta0, 4.0 * delta0, 33)
        pts = np.stack([xs, half_curv * xs * xs], axis=1)
        return packet, pts
    raise ValueError(f"unknown demo packet '{name}'")
