"""Paths from the origin, allowedness and clearance against a d.f.s.

Paths are polylines parameterized by arc length.  A path is lifted to the
track ``t -> (L(path|t), path(t))`` in ``R x C``; it is allowed when the
track avoids every singular ray ``{(lam, w) : lam >= onset(w)}``.  On a
polyline both the allowedness test and the clearance (distance from the
track to the rays) are evaluated exactly, segment by segment.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dfs import DFS
from .errors import PathError, PathNotFound

#: distances at or below this count as touching a ray
TOUCH_TOL = 1e-12


@dataclass(frozen=True)
class PolyPath:
    """Polyline starting at 0 with arc-length parameterization."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple(complex(v) for v in self.vertices)
        if not verts:
            raise PathError("a path needs at least one vertex")
        if verts[0] != 0:
            raise PathError("paths start at 0")
        for p, q in zip(verts, verts[1:]):
            if p == q:
                raise PathError("consecutive vertices must be distinct")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def through(cls, points: Iterable) -> "PolyPath":
        """Build a path from 0 through ``points``, dropping repeated vertices."""
        verts = [0j]
        for p in points:
            p = complex(p)
            if p != verts[-1]:
                verts.append(p)
        return cls(tuple(verts))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=complex)

    @property
    def seglengths(self) -> np.ndarray:
        return np.abs(np.diff(self.array))

    @property
    def cumlengths(self) -> np.ndarray:
        """Accumulated length at every vertex (starts with 0)."""
        return np.concatenate([[0.0], np.cumsum(self.seglengths)])

    @property
    def length(self) -> float:
        return float(self.seglengths.sum())

    @property
    def end(self) -> complex:
        return self.vertices[-1]

    def _locate(self, t: float) -> tuple[int, float]:
        if t < 0 or t > self.length * (1 + 1e-15) + 1e-15:
            raise PathError(f"parameter {t} outside [0, {self.length}]")
        cum = self.cumlengths
        k = int(np.searchsorted(cum, t, side="right")) - 1
        k = min(max(k, 0), len(self.vertices) - 2)
        return k, t - cum[k]

    def point_at(self, t: float) -> complex:
        if len(self.vertices) == 1:
            return 0j
        k, u = self._locate(t)
        p, q = self.vertices[k], self.vertices[k + 1]
        return p + (q - p) / abs(q - p) * min(u, abs(q - p))

    def length_at(self, t: float) -> float:
        """Length of the initial piece ``path|t``; the identity for arc length."""
        if len(self.vertices) == 1:
            if t != 0:
                raise PathError("degenerate path only has t = 0")
            return 0.0
        self._locate(t)
        return float(min(t, self.length))

    def restrict(self, t: float) -> "PolyPath":
        if len(self.vertices) == 1:
            if t != 0:
                raise PathError("degenerate path only has t = 0")
            return self
        k, u = self._locate(t)
        if t == 0:
            return PolyPath((0j,))
        verts = list(self.vertices[: k + 1])
        p = self.point_at(t)
        if p != verts[-1]:
            verts.append(p)
        return PolyPath(tuple(verts))

    def extend(self, points: Iterable) -> "PolyPath":
        return PolyPath.through(list(self.vertices[1:]) + list(points))

    def densify(self, max_step: float) -> "PolyPath":
        """Same geometric track with extra vertices, no segment longer than ``max_step``."""
        verts = [0j]
        for p, q in zip(self.vertices, self.vertices[1:]):
            k = max(1, math.ceil(abs(q - p) / max_step))
            verts.extend(p + (q - p) * j / k for j in range(1, k + 1))
        return PolyPath(tuple(verts))


def segment_ray_dist2(p0, d, s0, seglen, anchors, onsets):
    """Squared distance between straight track pieces and vertical rays.

    A track piece is ``u -> (s0 + u, p0 + u d)`` for ``u in [0, seglen]`` with
    ``|d| = 1``; a ray is ``{(lam, w) : lam >= onset}``.  All arguments
    broadcast.  Returns ``(dist2, u_at_min)``.

    The squared distance ``|p0 - w + u d|^2 + max(0, onset - s0 - u)^2`` is a
    convex piecewise quadratic in ``u``; its minimum is attained at one of
    the clipped stationary points or at the breakpoint.
    """
    p0, d, s0, seglen, anchors, onsets = np.broadcast_arrays(
        *(np.asarray(x) for x in (p0, d, s0, seglen, anchors, onsets))
    )
    w = p0 - anchors
    b = (np.conj(w) * d).real
    c = onsets - s0
    ww = (w * np.conj(w)).real
    cands = [
        np.zeros_like(seglen),
        seglen,
        np.clip(-b, np.clip(c, 0, seglen), seglen),
        np.clip((c - b) / 2, 0, np.clip(c, 0, seglen)),
        np.clip(c, 0, seglen),
    ]
    best = np.full(seglen.shape, np.inf)
    ubest = np.zeros(seglen.shape)
    for u in cands:
        f = ww + 2 * u * b + u * u + np.maximum(c - u, 0.0) ** 2
        better = f < best
        best = np.where(better, f, best)
        ubest = np.where(better, u, ubest)
    return np.maximum(best, 0.0), ubest


def _track_pieces(path: PolyPath):
    v = path.array
    seg = np.diff(v)
    lens = np.abs(seg)
    d = np.exp(1j * np.angle(seg))          # finite even for subnormal pieces
    s0 = np.concatenate([[0.0], np.cumsum(lens)[:-1]])
    return v[:-1], d, s0, lens


def _check_budget(path: PolyPath, omega: DFS):
    if path.length > omega.budget * (1 + 1e-12):
        raise PathError(f"path length {path.length:.6g} exceeds d.f.s. budget {omega.budget:g}")


@dataclass(frozen=True)
class AllowednessReport:
    allowed: bool
    margin: float
    violation: tuple | None = None  # (t, w)


def _distance_table(path: PolyPath, omega: DFS):
    anchors, onsets = omega.rays
    if len(path.vertices) == 1 or len(anchors) == 0:
        return None
    p0, d, s0, lens = _track_pieces(path)
    return segment_ray_dist2(
        p0[:, None], d[:, None], s0[:, None], lens[:, None], anchors[None, :], onsets[None, :]
    )


def check_allowed(path: PolyPath, omega: DFS) -> AllowednessReport:
    """Decide whether the lifted track of ``path`` avoids the singular rays."""
    _check_budget(path, omega)
    table = _distance_table(path, omega)
    if table is None:
        return AllowednessReport(True, omega.budget)
    dist2, umin = table
    dist = np.sqrt(dist2)
    margin = float(dist.min())
    if margin > TOUCH_TOL:
        return AllowednessReport(True, margin)
    # first touching piece along the path gives the witness
    k, j = np.argwhere(dist <= TOUCH_TOL)[0]
    t = float(path.cumlengths[k] + umin[k, j])
    w = complex(omega.rays[0][j])
    return AllowednessReport(False, 0.0, (t, w))


def clearance(path: PolyPath, omega: DFS) -> float:
    """Largest ``delta`` such that ``path`` lies in the clearance class of ``omega``.

    Distances are taken to the closed singular support only (the forced
    start at the origin is not counted).  Capped at the budget; 0 when the
    path is not allowed.
    """
    report = check_allowed(path, omega)
    if not report.allowed:
        return 0.0
    return min(report.margin, omega.budget)


# --- planning ---------------------------------------------------------------

_STENCIL = [
    (1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1),
    (2, 1), (1, 2), (-1, 2), (-2, 1), (-2, -1), (-1, -2), (1, -2), (2, -1),
]


def _pieces_clear(p0, q, s0, omega: DFS, delta: float) -> np.ndarray:
    """Vectorized: does the piece p0 -> q starting at length s0 keep clearance delta?"""
    anchors, onsets = omega.rays
    p0 = np.atleast_1d(np.asarray(p0, dtype=complex))
    q = np.atleast_1d(np.asarray(q, dtype=complex))
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    if len(anchors) == 0:
        return np.ones(np.broadcast(p0, q, s0).shape, dtype=bool)
    seg = q - p0
    lens = np.abs(seg)
    d = np.where(lens > 0, seg / np.where(lens > 0, lens, 1), 1)
    dist2, _ = segment_ray_dist2(
        p0[..., None], d[..., None], s0[..., None], lens[..., None], anchors, onsets
    )
    return dist2.min(axis=-1) >= delta * delta


def shortcut(path: PolyPath, omega: DFS, delta: float) -> PolyPath:
    """Greedy removal of vertices while clearance ``delta`` is kept.

    Shortening a prefix lowers every later accumulated length, which can
    only increase distances to the (upward) rays, so later pieces stay clear.
    """
    verts = list(path.vertices)
    out = [verts[0]]
    s = 0.0
    i = 0
    while i < len(verts) - 1:
        j = len(verts) - 1
        while j > i + 1 and not _pieces_clear(verts[i], verts[j], s, omega, delta)[0]:
            j -= 1
        s += abs(verts[j] - verts[i])
        out.append(verts[j])
        i = j
    return PolyPath(tuple(out))


def plan_path(
    omega: DFS,
    target: complex,
    maxlen: float,
    delta: float,
    resolution: float | None = None,
) -> PolyPath:
    """A* search for a polyline from 0 to ``target`` with clearance ``delta``.

    Grid nodes are spaced ``resolution`` (default ``delta/2``); the cost is
    the accumulated length, which is also what enters the feasibility test,
    so the first expansion of a node is the most permissive one.  Every
    expansion also tries a straight piece to the target.  The result is
    shortcut and re-validated.
    """
    target = complex(target)
    if delta <= 0:
        raise PathError("delta must be positive")
    if abs(target) > maxlen or maxlen > omega.budget * (1 + 1e-12):
        raise PathError("target or maxlen outside the budget")
    h = resolution or delta / 2
    start = (0, 0)
    best_g = {start: 0.0}
    heap = [(abs(target), 0.0, start)]
    parent: dict = {start: None}
    goal = None
    steps = np.array([complex(dx, dy) * h for dx, dy in _STENCIL])
    while heap:
        f, g, node = heapq.heappop(heap)
        if g > best_g.get(node, math.inf):
            continue
        p = complex(node[0], node[1]) * h
        if g + abs(target - p) <= maxlen and _pieces_clear(p, target, g, omega, delta)[0]:
            parent["goal"] = node
            goal = g + abs(target - p)
            break
        qs = p + steps
        gs = g + np.abs(steps)
        ok = (gs + np.abs(target - qs) <= maxlen) & _pieces_clear(p, qs, g, omega, delta)
        for (dx, dy), q, gq, good in zip(_STENCIL, qs, gs, ok):
            if not good:
                continue
            nb = (node[0] + dx, node[1] + dy)
            if gq < best_g.get(nb, math.inf) - 1e-15:
                best_g[nb] = gq
                parent[nb] = node
                heapq.heappush(heap, (gq + abs(target - q), gq, nb))
    if goal is None:
        raise PathNotFound(
            f"no path to {target} with clearance {delta} and length <= {maxlen} at grid resolution {h}"
        )
    chain = []
    node = parent["goal"]
    while node is not None:
        chain.append(complex(node[0], node[1]) * h)
        node = parent[node]
    chain.reverse()
    path = PolyPath.through(chain[1:] + [target]) if target != 0 else PolyPath((0j,))
    if len(path.vertices) > 2:
        path = shortcut(path, omega, delta)
    if path.length > maxlen * (1 + 1e-12) or clearance(path, omega) < delta * (1 - 1e-12):
        raise PathNotFound("planned path failed re-validation")  # pragma: no cover
    return path


# --- sampling of K^{delta,L} -------------------------------------------------

@dataclass(frozen=True)
class SamplerDensity:
    """Density knobs for :func:`sample_boundary`.

    ``directions`` straight rays are always produced; ``level = 0`` keeps
    only those (at their maximal admissible length).
    """

    directions: int = 24
    radii: int = 4
    arcs: int = 8
    planned: int = 0
    level: int = 1

    @classmethod
    def minimal(cls) -> "SamplerDensity":
        return cls(directions=8, radii=1, arcs=0, planned=0, level=0)

    def to_json(self) -> dict:
        return {"directions": self.directions, "radii": self.radii, "arcs": self.arcs,
                "planned": self.planned, "level": self.level}


def _max_admissible(base: PolyPath, direction: complex, omega: DFS, delta: float, maxlen: float) -> float:
    """Largest extension length along ``direction`` keeping clearance and length."""
    s = base.length
    p = base.end
    room = maxlen - s
    if room <= 0:
        return 0.0
    if _pieces_clear(p, p + direction * room, s, omega, delta)[0]:
        return room
    lo, hi = 0.0, room
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if _pieces_clear(p, p + direction * mid, s, omega, delta)[0]:
            lo = mid
        else:
            hi = mid
    return lo


def _arc_points(center: complex, start: complex, angle: float, radius: float, per_turn: int = 24):
    """Polygonal arc around ``center`` whose chords stay at distance >= radius."""
    k = max(1, math.ceil(abs(angle) / (2 * math.pi) * per_turn))
    rv = radius / math.cos(abs(angle) / (2 * k))
    phi0 = np.angle(start - center)
    return [center + rv * np.exp(1j * (phi0 + angle * j / k)) for j in range(1, k + 1)]


def sample_boundary(
    omega: DFS,
    delta: float,
    maxlen: float,
    density: SamplerDensity | int = SamplerDensity(),
    seed: int = 0,
) -> list[tuple[PolyPath, complex]]:
    """Sample endpoints of paths of length <= maxlen with clearance >= delta.

    Families: straight rays in evenly spaced directions (several radii per
    direction); detours that approach each singular point, wind around it
    by several angles and leave radially; optional planner paths to random
    targets.  Every returned path is re-validated.
    """
    if isinstance(density, int):
        density = SamplerDensity.minimal() if density == 0 else SamplerDensity(level=density)
    if not 2 * delta < omega.first_threshold:
        raise PathError("sampler needs Omega_{2 delta} to be empty")
    if maxlen > omega.budget * (1 + 1e-12):
        raise PathError("maxlen exceeds the d.f.s. budget")
    rng = np.random.default_rng(seed)
    out: list[tuple[PolyPath, complex]] = []
    seen: set = set()

    def add(path: PolyPath):
        key = tuple(np.round(path.array, 9))
        if key in seen or len(path.vertices) < 2:
            return
        if path.length <= maxlen * (1 + 1e-12) and clearance(path, omega) >= delta * (1 - 1e-9):
            seen.add(key)
            out.append((path, path.end))

    origin = PolyPath((0j,))
    for j in range(density.directions):
        u = np.exp(2j * np.pi * j / density.directions)
        R = _max_admissible(origin, u, omega, delta, maxlen)
        for k in range(1, density.radii + 1):
            r = R * k / density.radii
            if r > 0:
                add(PolyPath((0j, u * r)))
    if density.level == 0:
        return out

    anchors, _ = omega.rays
    gap = 1.05 * delta
    angles = [s * a for a in np.linspace(0, 2 * np.pi, density.arcs + 1)[1:] for s in (1, -1)]
    for w in anchors:
        if abs(w) <= gap:
            continue
        u = w / abs(w)
        approach = PolyPath((0j, w - u * gap))
        for ang in angles:
            arc = _arc_points(w, approach.end, ang, gap)
            base = approach.extend(arc)
            if base.length > maxlen or clearance(base, omega) < delta:
                continue
            add(base)
            out_dir = (base.end - w) / abs(base.end - w)
            ext = _max_admissible(base, out_dir, omega, delta, maxlen)
            for k in range(1, density.radii + 1):
                if ext * k / density.radii > 1e-9:
                    add(base.extend([base.end + out_dir * ext * k / density.radii]))
    for _ in range(density.planned):
        r = maxlen * math.sqrt(rng.uniform())
        target = r * np.exp(2j * np.pi * rng.uniform())
        try:
            add(plan_path(omega, target, maxlen, delta))
        except PathNotFound:
            continue
    return out


# --- JSON (path.v1) ----------------------------------------------------------

def to_json(path: PolyPath) -> dict:
    return {"schema": "path.v1", "vertices": [[v.real, v.imag] for v in path.vertices]}


def from_json(data) -> PolyPath:
    try:
        return PolyPath(tuple(complex(v[0], v[1]) for v in data["vertices"]))
    except (KeyError, TypeError, IndexError) as exc:
        raise PathError(f"malformed path.v1 document: {exc}") from exc
