"""Convolution products continued along allowed paths by deforming the simplex.

The value of ``1*f_1*...*f_n`` at the end of a path ``gamma`` is the
integral of ``f_1(z_1)...f_n(z_n) dz_1 ^ ... ^ dz_n`` over the image of the
simplex ``Delta_n`` under a flow of *nodes* ``v_i = (lambda_i, zeta_i)`` in
(length, position) space.  Nodes start at ``(s_i |gamma(a)|, s_i gamma(a))``
on the initial straight piece and move with the field

    X_i = eta(v_i) / D * (1, gamma'),
    D = eta(v_1) + ... + eta(v_n) + dist((L(gamma|t), gamma(t)), v_1 + ... + v_n),

where ``eta`` is the distance to the origin and the singular rays.

Time is arc length along ``gamma``.  Inside one straight piece of the
polyline every node moves along the same unit vector, so the state of a node
is a single scalar and its track is a polyline whose vertices sit at the
corners of ``gamma``.  This makes the length law ``lambda' = |zeta'|`` exact
and lets branches be tracked exactly along node tracks.

Quadrature: lattice vertices of ``Delta_n`` are flowed and the image chain
is replaced by its piecewise-linear interpolant on a Kuhn triangulation.
The form is holomorphic, vanishes on the faces ``z_i = 0`` (frozen origin
nodes) and on the fibre ``z_1 + ... + z_n = gamma(1)`` (the face
``sum s = 1`` stays in it), so by Stokes the interpolated chain carries the
same integral as long as the interpolation stays on the same sheets.  Each
image simplex is integrated with a conical Gauss rule; refinement halving
gives an error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dfs as dfsmod
from . import pathgeo
from .dfs import DFS, eta_array
from .errors import ContinuationError, FlowError, PathError, QuadratureError
from .germs import Germ
from .oracles import Oracle, Primitive, theta_increment
from .pathgeo import PolyPath
from .simplex import graded_points, kuhn_simplices, lattice, simplex_rule

SQRT2 = math.sqrt(2.0)


# --- normalized paths ---------------------------------------------------------

def rho_for(omega: DFS) -> float:
    """Largest admissible ``rho`` (``Omega_{2 rho}`` empty), shaved by 1e-9."""
    top = omega.first_threshold if not omega.is_trivial else omega.budget
    return 0.5 * top * (1 - 1e-9)


@dataclass(frozen=True)
class FlowPath:
    """A polyline in the normal form used by the flow.

    The first piece is the straight segment ``0 -> gamma(a)`` with
    ``0 < |gamma(a)| < rho``; the flow runs on the remaining pieces.
    """

    vertices: tuple
    rho: float

    @classmethod
    def from_path(cls, path: PolyPath, rho: float, a_len: float | None = None) -> "FlowPath":
        if len(path.vertices) < 2:
            raise PathError("the flow needs a path of positive length")
        first = path.vertices[1]
        if a_len is None:
            a_len = min(abs(first), 0.75 * rho)
        if not 0 < a_len < rho or a_len > abs(first) * (1 + 1e-12):
            raise PathError(f"|gamma(a)| = {a_len:g} must lie in (0, rho) on the first piece")
        ga = first / abs(first) * a_len
        verts = [0j, ga] + ([first] if abs(first - ga) > 1e-14 else []) + list(path.vertices[2:])
        return cls(tuple(complex(v) for v in verts), float(rho))

    @property
    def path(self) -> PolyPath:
        return PolyPath(self.vertices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=complex)

    @property
    def ga(self) -> complex:
        return self.vertices[1]

    @property
    def a_len(self) -> float:
        return abs(self.vertices[1])

    @property
    def corners(self) -> np.ndarray:
        """Arc length at every vertex."""
        return np.concatenate([[0.0], np.cumsum(np.abs(np.diff(self.array)))])

    @property
    def length(self) -> float:
        return float(self.corners[-1])

    def segment(self, k: int) -> tuple[complex, complex, float, float]:
        """``(start, unit direction, t_start, t_end)`` of piece ``k``."""
        v = self.array
        c = self.corners
        d = v[k + 1] - v[k]
        return complex(v[k]), complex(d / abs(d)), float(c[k]), float(c[k + 1])

    def point(self, t: float) -> complex:
        return self.path.point_at(t)

    def derivative(self, t: float) -> complex:
        """Unit tangent; at a corner the tangent of the piece that starts there."""
        c = self.corners
        k = int(np.clip(np.searchsorted(c, t, side="right") - 1, 0, len(c) - 2))
        return self.segment(k)[1]


# --- node systems and the field -------------------------------------------------

@dataclass
class NodeSystem:
    """Nodes ``v_i = (lam_i, zeta_i)`` seeded from the simplex point ``s``."""

    lam: np.ndarray
    zeta: np.ndarray
    s: np.ndarray

    @property
    def n(self) -> int:
        return len(self.lam)

    @property
    def nodes(self) -> list[tuple[float, complex]]:
        return list(zip(self.lam.tolist(), self.zeta.tolist()))

    @classmethod
    def seed(cls, s: Sequence[float], gamma: FlowPath) -> "NodeSystem":
        s = np.asarray(s, dtype=float)
        if (s < 0).any() or s.sum() > 1 + 1e-12:
            raise ValueError("seed must lie in the simplex")
        return cls(s * gamma.a_len, s * gamma.ga, s)


def _big_D(t, lam, zeta, gamma: FlowPath, omega: DFS):
    """Batched ``D`` on arrays of shape (P, n)."""
    eta = eta_array(omega, lam, zeta)
    g = gamma.point(t)
    far = np.hypot(t - lam.sum(axis=-1), np.abs(g - zeta.sum(axis=-1)))
    return eta, eta.sum(axis=-1) + far


def big_D(t: float, sys: NodeSystem, gamma: FlowPath, omega: DFS) -> float:
    """``D(t, v)`` at arc length ``t``; raises if it is not positive."""
    _, D = _big_D(t, sys.lam[None], sys.zeta[None], gamma, omega)
    D = float(D[0])
    if not D > 0:
        raise FlowError(f"D = {D:g} <= 0 at t = {t:g}: a node left the allowed set")
    return D


def vector_field(t: float, sys: NodeSystem, gamma: FlowPath, omega: DFS,
                 printed_form: bool = False) -> list[tuple[float, complex]]:
    """Velocities ``X_i`` as ``(d lam_i, d zeta_i)`` pairs.

    ``printed_form=True`` uses ``eta(v_1)`` in every component instead of
    ``eta(v_i)``; origin nodes are then no longer frozen.
    """
    eta, D = _big_D(t, sys.lam[None], sys.zeta[None], gamma, omega)
    D = float(D[0])
    if not D > 0:
        raise FlowError(f"D = {D:g} <= 0 at t = {t:g}: a node left the allowed set")
    eta = eta[0]
    if printed_form:
        eta = np.full_like(eta, eta[0])
    u = gamma.derivative(t)
    return [(float(e / D), complex(e / D * u)) for e in eta]


# --- flow ---------------------------------------------------------------------

@dataclass(frozen=True)
class OdeParams:
    """RK4 controls: steps are ``min(h_max, cfl * min D)``, halved until two
    successive runs agree to ``tol`` (at most ``max_halvings`` times)."""

    h_max: float = 0.1
    cfl: float = 0.3
    tol: float = 1e-6
    max_halvings: int = 1


@dataclass
class FlowTrace:
    """Node positions at the corner times of the path (and its end).

    ``lam``/``zeta`` have shape (T, P, n) for T recorded times and P seeds.
    """

    times: np.ndarray
    lam: np.ndarray
    zeta: np.ndarray
    s: np.ndarray
    gamma: FlowPath
    steps: int = 0
    halvings: int = 0
    defect: float = 0.0
    printed_form: bool = False

    @property
    def arclen(self) -> np.ndarray:
        """Accumulated length of every ``zeta``-track from time ``a``."""
        d = np.abs(np.diff(self.zeta, axis=0))
        return np.concatenate([np.zeros_like(self.lam[:1]), np.cumsum(d, axis=0)], axis=0)

    def system(self, k: int, p: int) -> NodeSystem:
        return NodeSystem(self.lam[k, p].copy(), self.zeta[k, p].copy(), self.s[p].copy())

    def tracks(self) -> np.ndarray:
        """Full ``zeta`` polylines from 0, shape (T + 1, P, n)."""
        return np.concatenate([np.zeros_like(self.zeta[:1]), self.zeta], axis=0)


def _run(lam0, zeta0, gamma: FlowPath, omega: DFS, h_max, cfl, printed_form):
    P, n = lam0.shape
    lam, zeta = lam0.copy(), zeta0.copy()
    times, L, Z = [gamma.a_len], [lam.copy()], [zeta.copy()]
    steps = 0
    nseg = len(gamma.vertices) - 1
    for k in range(1, nseg):
        _, u, t0, t1 = gamma.segment(k)
        lamk, zetak = lam.copy(), zeta.copy()
        mu = np.zeros((P, n))
        t = t0

        def rate(tt, m):
            eta, D = _big_D(tt, lamk + m, zetak + m * u, gamma, omega)
            if not (D > 0).all():
                raise FlowError(f"D <= 0 at t = {tt:g}: a node left the allowed set")
            if printed_form:
                eta = np.repeat(eta[:, :1], n, axis=1)
            return eta / D[:, None]

        while t < t1:
            _, D = _big_D(t, lamk + mu, zetak + mu * u, gamma, omega)
            h = min(h_max, cfl * float(D.min()), t1 - t)
            if t1 - t - h < 1e-12:
                h = t1 - t
            k1 = rate(t, mu)
            k2 = rate(t + h / 2, mu + h / 2 * k1)
            k3 = rate(t + h / 2, mu + h / 2 * k2)
            k4 = rate(t + h, mu + h * k3)
            mu = mu + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t1 if h == t1 - t else t + h
            steps += 1
        lam = lamk + mu
        zeta = zetak + mu * u
        times.append(t1)
        L.append(lam.copy())
        Z.append(zeta.copy())
    return np.array(times), np.array(L), np.array(Z), steps


def flow_nodes(seed, gamma: FlowPath, omega: DFS, ode: OdeParams = OdeParams(),
               delta: float | None = None, printed_form: bool = False) -> FlowTrace:
    """Flow seeds from time ``a`` to the end of ``gamma``.

    ``seed`` is a :class:`NodeSystem` or an array of simplex points (P, n).
    With ``delta`` given, nodes are checked against the clearance floor
    ``delta(t)`` (distance to the singular rays) at every recorded time.
    """
    if isinstance(seed, NodeSystem):
        s = seed.s[None]
        lam0, zeta0 = seed.lam[None].astype(float), seed.zeta[None].astype(complex)
    else:
        s = np.atleast_2d(np.asarray(seed, dtype=float))
        lam0, zeta0 = s * gamma.a_len, s * gamma.ga
    if (eta_array(omega, lam0, zeta0, include_origin=False) <= 0).any():
        raise FlowError("seed outside the allowed set")
    h, cfl = ode.h_max, ode.cfl
    times, L, Z, steps = _run(lam0, zeta0, gamma, omega, h, cfl, printed_form)
    defect = math.inf
    halvings = 0
    for halvings in range(1, ode.max_halvings + 1):
        h, cfl = h / 2, cfl / 2
        _, L2, Z2, steps2 = _run(lam0, zeta0, gamma, omega, h, cfl, printed_form)
        defect = float(np.max(np.abs(L2[-1] - L[-1]), initial=0.0))
        L, Z, steps = L2, Z2, steps2
        if defect <= ode.tol:
            break
    trace = FlowTrace(times, L, Z, s, gamma, steps, halvings, defect, printed_form)
    if delta is not None:
        for k, t in enumerate(times):
            floor = delta_of_t(t, gamma, delta)
            eta = eta_array(omega, L[k], Z[k], include_origin=False)
            if float(eta.min()) < floor - ode.tol:
                raise FlowError(f"node clearance collapse at t = {t:g}: "
                                f"{float(eta.min()):.3g} < delta(t) = {floor:.3g}")
    return trace


# --- constants ----------------------------------------------------------------

def _check_gamma_a(gamma: FlowPath, delta: float):
    if not 0 < delta < gamma.rho:
        raise FlowError(f"need 0 < delta < rho, got delta={delta:g}, rho={gamma.rho:g}")
    if not delta < gamma.a_len < gamma.rho:
        raise FlowError(f"need delta < |gamma(a)| < rho, got |gamma(a)|={gamma.a_len:g}")


def delta_of_t(t: float, gamma: FlowPath, delta: float) -> float:
    """Clearance floor ``1/2 rho exp(-2 sqrt2 (L(gamma|t) - |gamma(a)|) / delta)``.

    ``t`` is the arc length reached, in ``[|gamma(a)|, L(gamma)]``.
    """
    _check_gamma_a(gamma, delta)
    return 0.5 * gamma.rho * math.exp(-2 * SQRT2 * (t - gamma.a_len) / delta)


def c_of_t(t: float, gamma: FlowPath, delta: float) -> float:
    """Jacobian scale ``|gamma(a)| exp(3 sqrt2 (L(gamma|t) - |gamma(a)|) / delta)``."""
    _check_gamma_a(gamma, delta)
    return gamma.a_len * math.exp(3 * SQRT2 * (t - gamma.a_len) / delta)


def constants(delta: float, L: float, rho: float, gamma_a_abs: float | None = None,
              omega: DFS | None = None) -> tuple[float, float]:
    """``(delta', c)`` with ``delta' = 1/2 rho e^{-2 sqrt2 L/delta}`` and
    ``c = |gamma(a)| e^{3 sqrt2 L/delta}``.

    Without ``gamma_a_abs`` the bound ``|gamma(a)| <= rho`` is used, which
    makes ``c`` independent of the path.
    """
    if not (delta > 0 and L >= 0 and rho > 0):
        raise ValueError("need delta > 0, L >= 0, rho > 0")
    if omega is not None and not omega.first_threshold > 2 * delta:
        raise ValueError("Omega_{2 delta} must be empty")
    a = rho if gamma_a_abs is None else gamma_a_abs
    return 0.5 * rho * math.exp(-2 * SQRT2 * L / delta), a * math.exp(3 * SQRT2 * L / delta)


# --- integrand factors --------------------------------------------------------

class _Factor:
    """Evaluates one ``f_i`` at points reached along node tracks."""

    def __init__(self, f):
        if isinstance(f, Germ):
            if f.center != 0:
                raise ValueError("convolution factors must be germs at the origin")
            if f.oracle is not None:
                self.oracle, self.germ = f.oracle, None
            else:
                self.oracle, self.germ = None, f
        elif isinstance(f, Oracle):
            self.oracle, self.germ = f, None
        elif isinstance(f, str):
            from .oracles import parse

            self.oracle, self.germ = parse(f), None
        else:
            raise TypeError(f"unsupported factor {f!r}")
        if isinstance(self.oracle, Primitive):
            raise ValueError("a primitive has no pointwise values; convolve its derivative with 1")

    @property
    def anchors(self) -> np.ndarray:
        return np.asarray(self.oracle.anchors if self.oracle is not None else (), dtype=complex)

    @property
    def single_valued(self) -> bool:
        return self.oracle is None or self.oracle.single_valued

    def branch_at_vertices(self, tracks: np.ndarray) -> np.ndarray:
        """Angles at the track ends; ``tracks`` is (T, V) starting at 0."""
        A = self.anchors
        theta = np.zeros(tracks.shape[1:] + (len(A),))
        for k in range(len(tracks) - 1):
            theta += theta_increment(A, tracks[k], tracks[k + 1])
        return theta

    def check_disk(self, tracks: np.ndarray):
        if self.germ is not None and np.max(np.abs(tracks)) > 0.9 * self.germ.radius_hint:
            raise ContinuationError(
                "node tracks leave the disk of a germ without closed-form tag; "
                "attach an oracle to continue it")

    def __call__(self, z: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if self.germ is not None:
            return self.germ(z)
        return self.oracle.value(z, theta)


# --- conv_eval ----------------------------------------------------------------

@dataclass(frozen=True)
class QuadParams:
    """Lattice ``m`` subdivisions per axis and ``q``-point rules per simplex.

    The lattice is doubled until two successive resolutions agree to
    ``tol`` (relative) or the vertex count would exceed ``max_vertices``.
    With ``reuse_coarse`` the first comparison uses the even sub-lattice of
    the first flow instead of a second flow.
    ``method`` is ``"lattice"`` (deterministic, with doubling check),
    ``"montecarlo"`` (``samples`` random points on the first branch-consistent
    image chain, standard error reported) or ``"auto"`` (lattice for
    ``n <= 3``, Monte Carlo above).
    ``grade`` clusters lattice points toward the faces of the simplex: near
    the corner where one ``s_i`` carries the whole fiber, the lagging node
    can wind around a singular point within a thin layer.  A tuple of
    grades is tried in order when the lattice check fails.
    """

    m: int | None = None
    q: int | None = None
    tol: float = 1e-6
    method: str = "auto"
    samples: int = 200000
    seed: int = 0
    chunk: int = 200000
    max_vertices: int = 25000
    reuse_coarse: bool = False
    grade: float | tuple = (2.0, 3.0, 4.0)

    #: starting resolutions per number of factors
    M_BY_N = {1: 8, 2: 8, 3: 8, 4: 4, 5: 4}
    Q_BY_N = {1: 10, 2: 8, 3: 5, 4: 4, 5: 3}

    def resolved(self, n: int) -> tuple[int, int]:
        m = self.m if self.m is not None else self.M_BY_N[n]
        q = self.q if self.q is not None else self.Q_BY_N[n]
        return m, q


@dataclass
class ConvResult:
    value: complex
    error: float
    coarse: complex | None
    trace: FlowTrace
    simplices: int
    method: str

    def to_json(self) -> dict:
        return {"value": [self.value.real, self.value.imag], "error": self.error,
                "simplices": self.simplices, "method": self.method,
                "ode_steps": self.trace.steps, "ode_defect": self.trace.defect}


def _as_path(path) -> PolyPath:
    if isinstance(path, PolyPath):
        return path
    if isinstance(path, FlowPath):
        return path.path
    return PolyPath.through(list(path)[1:] if complex(list(path)[0]) == 0 else list(path))


def lattice_flow(n: int, m: int, gamma: FlowPath, omega: DFS, ode: OdeParams = OdeParams(),
                 delta: float | None = None, printed_form: bool = False,
                 grade: float = 1.0) -> FlowTrace:
    """Flow every vertex of the (face-graded) lattice of level ``m`` on ``Delta_n``."""
    return flow_nodes(graded_points(n, m, grade), gamma, omega, ode, delta, printed_form)


def _rule_sum(factors, Zs, th0, signs, U, W):
    """Gauss rule on affine image simplices ``Zs`` (S, n+1, n)."""
    Z0 = Zs[:, 0]
    Wm = np.swapaxes(Zs[:, 1:] - Z0[:, None, :], 1, 2)            # columns are edges
    det = np.linalg.det(Wm)
    Z = Z0[:, :, None] + Wm @ U.T                                  # (S, n, Q)
    prod = np.ones((Z.shape[0], Z.shape[2]), dtype=complex)
    for i, f in enumerate(factors):
        zi = Z[:, i, :]
        if f.single_valued:
            th = np.zeros(zi.shape + (len(f.anchors),))
        else:
            th = th0[i][:, None, :] + theta_increment(f.anchors, Z0[:, None, i], zi)
        prod = prod * f(zi, th)
    return np.sum(signs * det * (prod @ W))


class _Straddle(Exception):
    """An image simplex meets a singular hyperplane."""


#: subdivision depth per number of factors
MAX_LEVEL = {1: 24, 2: 8, 3: 5, 4: 3, 5: 2}


def _needs_split(factors, Zs, kappa):
    """Image simplices whose size is not small against the anchor distance."""
    out = np.zeros(len(Zs), dtype=bool)
    for i, f in enumerate(factors):
        if not len(f.anchors):
            continue
        z = Zs[..., i]                                              # (S, n+1)
        diam = np.max(np.abs(z[:, :, None] - z[:, None, :]), axis=(1, 2))
        dist = np.min(np.abs(z[..., None] - f.anchors), axis=(1, 2))
        if (dist < 1e-3 * diam).any():
            raise _Straddle()
        out |= diam > kappa * dist
    return out


def _subdivision(n: int):
    sub, sub_signs = kuhn_simplices(n, 2)
    pts = lattice(n, 2)[sub] / 2                                    # (2^n, n+1, n)
    bary = np.concatenate([1 - pts.sum(axis=2, keepdims=True), pts], axis=2)
    return bary, sub_signs.astype(float)


def _adaptive(factors, Zs, th0, sg, U, W, kappa, levels, chunk):
    """Rule sum over image simplices, splitting those close to a singularity."""
    n = Zs.shape[2]
    bary, sub_signs = _subdivision(n)
    total = 0j
    for level in range(levels + 1):
        split = _needs_split(factors, Zs, kappa) if level < levels else np.zeros(len(Zs), bool)
        keep = ~split
        if keep.any():
            total += _rule_sum(factors, Zs[keep], [t[keep] for t in th0], sg[keep], U, W)
        if not split.any():
            break
        Zp = Zs[split]
        Zs = np.matmul(bary[None], Zp[:, None]).reshape(-1, n + 1, n)
        child0 = Zs.reshape(len(Zp), len(bary), n + 1, n)[:, :, 0]
        th0 = [
            (t[split][:, None, :] + theta_increment(f.anchors, Zp[:, None, 0, i], child0[..., i])
             ).reshape(len(Zs), t.shape[-1])
            for i, (f, t) in enumerate(zip(factors, th0))
        ]
        sg = (sg[split][:, None] * sub_signs[None, :]).reshape(-1)
        if len(Zs) * len(W) > chunk:
            step = max(1, chunk // len(W))
            for j in range(0, len(Zs), step):
                total += _adaptive(factors, Zs[j:j + step], [t[j:j + step] for t in th0],
                                   sg[j:j + step], U, W, kappa, levels - level - 1, chunk)
            break
    return total


def _simplex_integral(factors, Zv, theta_v, simp, signs, U, W, chunk,
                      kappa: float = 0.5, max_level: int | None = None):
    """Integrate over the piecewise-linear image chain.

    Image simplices that are large compared with their distance to a
    singular point are split (in parameter space) into ``2^n`` children;
    the chain itself does not change, only the rule resolution.
    """
    if max_level is None:
        max_level = MAX_LEVEL[Zv.shape[1]]
    total = 0j
    per = max(1, chunk // max(1, len(W)))
    for lo in range(0, len(simp), per):
        sl = simp[lo:lo + per]
        th0 = [theta_v[i][sl[:, 0]] for i in range(len(factors))]
        total += _adaptive(factors, Zv[sl], th0, signs[lo:lo + per].astype(float), U, W,
                           kappa, max_level, chunk)
    return total


def _branches_consistent(factors, Zv, theta_v, simp) -> bool:
    """Angles tracked along node paths agree with straight edge increments."""
    for i, f in enumerate(factors):
        if not len(f.anchors):
            continue
        th0 = theta_v[i][simp[:, 0]]
        for j in range(1, simp.shape[1]):
            pred = th0 + theta_increment(f.anchors, Zv[simp[:, 0], i], Zv[simp[:, j], i])
            if np.max(np.abs(pred - theta_v[i][simp[:, j]])) > 1e-6:
                return False
    return True


def conv_eval_detailed(fs, gamma, omega: DFS, quad: QuadParams = QuadParams(),
                       ode: OdeParams = OdeParams(), rho: float | None = None,
                       delta: float | None = None, validate: bool = True,
                       printed_form: bool = False) -> ConvResult:
    """Value of ``1*f_1*...*f_n`` at the end of ``gamma`` with diagnostics.

    ``gamma`` must be allowed for ``Omega^{*n}``.  Factors are oracles, CLI
    strings or origin germs (oracle-tagged, or used only inside their disk).
    """
    factors = [_Factor(f) for f in fs]
    n = len(factors)
    if not 1 <= n <= 5:
        raise ValueError("conv_eval supports 1 <= n <= 5 factors")
    path = _as_path(gamma)
    if validate:
        big = dfsmod.star_power(omega, n)
        rep = pathgeo.check_allowed(path, big)
        if not rep.allowed:
            raise PathError(f"path is not allowed for Omega^*{n}: witness {rep.violation}")
    rho = rho_for(omega) if rho is None else rho
    fp = gamma if isinstance(gamma, FlowPath) else FlowPath.from_path(path, rho)
    grades = quad.grade if isinstance(quad.grade, (tuple, list)) else (quad.grade,)
    for k, grade in enumerate(grades):
        try:
            return _escalate(factors, fp, omega, quad, ode, delta, printed_form, grade)
        except QuadratureError:
            if k == len(grades) - 1:
                raise


def _escalate(factors, fp, omega, quad, ode, delta, printed_form, grade) -> ConvResult:
    """Double the lattice until successive values agree."""
    n = len(factors)
    m, q = quad.resolved(n)
    m += m % 2
    U, W = simplex_rule(n, q)
    prev, err = None, math.nan
    while True:
        can_refine = len(lattice(n, 2 * m)) <= quad.max_vertices
        trace = lattice_flow(n, m, fp, omega, ode, delta, printed_form, grade)
        tracks = trace.tracks()                                     # (T+1, V, n)
        Zv = trace.zeta[-1]
        for i, f in enumerate(factors):
            f.check_disk(tracks[..., i])
        theta_v = [f.branch_at_vertices(tracks[..., i]) for i, f in enumerate(factors)]
        simp, signs = kuhn_simplices(n, m)
        value = None
        if _branches_consistent(factors, Zv, theta_v, simp):
            if quad.method == "montecarlo" or (quad.method == "auto" and n > 3):
                val, err = _montecarlo(factors, Zv, theta_v, simp, signs, quad)
                return ConvResult(val, err, None, trace, len(simp), "montecarlo")
            try:
                value = _simplex_integral(factors, Zv, theta_v, simp, signs, U, W, quad.chunk)
            except _Straddle:
                value = None
        if value is not None:
            if prev is None and quad.reuse_coarse:
                prev = _coarse_value(factors, Zv, theta_v, n, m, U, W, quad.chunk)
            if prev is not None:
                err = abs(value - prev)
                if err <= quad.tol * max(1.0, abs(value)):
                    return ConvResult(complex(value), float(err), complex(prev), trace, len(simp), "lattice")
        if not can_refine:
            if value is None:
                raise QuadratureError(f"lattice m={m} still straddles a singular point or branch cut")
            raise QuadratureError(f"refinement check failed at m={m}: |I_m - I_m/2| = {err:.3g}")
        prev = value
        m *= 2


def _coarse_value(factors, Zv, theta_v, n, m, U, W, chunk):
    """Integral on the even sub-lattice, or None if it is not usable."""
    pts = lattice(n, m)
    even = np.nonzero((pts % 2 == 0).all(axis=1))[0]
    lookup = {tuple(p): i for i, p in zip(even, pts[even] // 2)}
    remap = np.array([lookup[tuple(p)] for p in lattice(n, m // 2)])
    csimp, csigns = kuhn_simplices(n, m // 2)
    csimp = remap[csimp]
    if not _branches_consistent(factors, Zv, theta_v, csimp):
        return None
    try:
        return _simplex_integral(factors, Zv, theta_v, csimp, csigns, U, W, chunk)
    except _Straddle:
        return None


def _montecarlo(factors, Zv, theta_v, simp, signs, quad: QuadParams):
    """Random points on the image chain; returns (mean, standard error).

    With at most ``samples / 2`` simplices every simplex gets the same number
    of points (stratified); otherwise simplices are picked uniformly.
    """
    n = Zv.shape[1]
    rng = np.random.default_rng(quad.seed)
    S = len(simp)
    k = quad.samples // S
    if k >= 2:
        pick = np.repeat(np.arange(S), k)
    else:
        pick = rng.integers(0, S, quad.samples)
    U = rng.dirichlet(np.ones(n + 1), len(pick))[:, 1:]
    sl = simp[pick]
    Z0 = Zv[sl[:, 0]]
    Wm = np.swapaxes(Zv[sl[:, 1:]] - Z0[:, None, :], 1, 2)
    Z = Z0 + np.einsum("sij,sj->si", Wm, U)
    prod = np.ones(len(pick), dtype=complex)
    for i, f in enumerate(factors):
        th = theta_v[i][sl[:, 0]] + theta_increment(f.anchors, Z0[:, i], Z[:, i])
        prod = prod * f(Z[:, i], th)
    X = signs[pick] * np.linalg.det(Wm) * prod / math.factorial(n)
    if k >= 2:
        X = X.reshape(S, k)
        mean = X.mean(axis=1)
        var = X.var(axis=1, ddof=1) / k
        return complex(mean.sum()), float(math.sqrt(var.sum()))
    X = S * X
    return complex(X.mean()), float(X.std(ddof=1) / math.sqrt(len(pick)))


def conv_eval(fs, gamma, omega: DFS, quad: QuadParams = QuadParams(),
              ode: OdeParams = OdeParams(), **kw) -> complex:
    """Value of ``1*f_1*...*f_n`` at the end of the allowed path ``gamma``."""
    return conv_eval_detailed(fs, gamma, omega, quad, ode, **kw).value


# --- Jacobian bound -------------------------------------------------------------

@dataclass
class JacobianReport:
    n: int
    worst_ratio: float
    worst_time: float
    seed_det_error: float
    ok: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def pl_jacobians(trace: FlowTrace, n: int, m: int) -> np.ndarray:
    """``det[d zeta_i / d s_j]`` of the piecewise-linear interpolant, (T, S).

    ``trace`` must come from :func:`lattice_flow` at level ``m``.
    """
    simp, _ = kuhn_simplices(n, m)
    E = trace.s[simp[:, 1:]] - trace.s[simp[:, :1]]
    detE = np.linalg.det(np.swapaxes(E, 1, 2))
    Z = trace.zeta
    dZ = Z[:, simp[:, 1:]] - Z[:, simp[:, :1]]                         # (T, S, n, n)
    return np.linalg.det(np.swapaxes(dZ, 2, 3)) / detE


def jacobian_bound_check(trace: FlowTrace, n: int, m: int, delta: float, tol: float = 1e-6) -> JacobianReport:
    """Compare ``|det|`` on the lattice with ``c(t)^n`` at every recorded time."""
    J = np.abs(pl_jacobians(trace, n, m))
    ceilings = np.array([c_of_t(t, trace.gamma, delta) ** n for t in trace.times])
    ratios = J.max(axis=1) / ceilings
    k = int(np.argmax(ratios))
    seed_err = float(np.max(np.abs(J[0] - trace.gamma.a_len ** n)) / trace.gamma.a_len ** n)
    return JacobianReport(n, float(ratios[k]), float(trace.times[k]), seed_err,
                          bool(ratios[k] <= 1 + tol))


def invariant_report(trace: FlowTrace, omega: DFS, delta: float | None = None) -> dict:
    """Numerical checks of the flow invariants on a trace."""
    g = trace.gamma
    target = np.array([g.point(t) for t in trace.times])
    face = np.isclose(trace.s.sum(axis=1), 1.0)
    out = {}
    if face.any():
        lam_err = np.abs(trace.lam[:, face].sum(axis=2) - trace.times[:, None])
        z_err = np.abs(trace.zeta[:, face].sum(axis=2) - target[:, None])
        out["face_error"] = float(np.max(np.hypot(lam_err, z_err)))
    zero = trace.s == 0
    out["origin_frozen"] = bool((trace.lam[:, zero] == 0).all() and (trace.zeta[:, zero] == 0).all())
    law = trace.lam - trace.lam[:1] - trace.arclen
    out["arclength_error"] = float(np.max(np.abs(law)))
    if delta is not None:
        worst = math.inf
        for k, t in enumerate(trace.times):
            eta = eta_array(omega, trace.lam[k], trace.zeta[k], include_origin=False)
            worst = min(worst, float(eta.min()) - delta_of_t(t, g, delta))
        out["floor_margin"] = worst
    return out


# --- endpoint germ -------------------------------------------------------------

def endpoint_germ(fs, gamma, omega: DFS, radius: float | None = None, points: int = 12,
                  degree: int = 6, quad: QuadParams = QuadParams(), ode: OdeParams = OdeParams()) -> Germ:
    """Taylor germ of ``1*f_1*...*f_n`` at the end of ``gamma``.

    The path is extended to a ring of points around its end, conv_eval runs
    on each, and a polynomial is fitted by least squares; the residual is
    stored as ``err``.
    """
    path = _as_path(gamma)
    n = len(fs)
    end = path.end
    big = dfsmod.star_power(omega, n)
    if radius is None:
        anchors, _ = big.rays
        d = float(np.min(np.abs(anchors - end))) if len(anchors) else 1.0
        radius = 0.1 * min(d, 1.0)
    ring = end + radius * np.exp(2j * np.pi * np.arange(points) / points)
    rho = rho_for(omega)
    vals = []
    for z in ring:
        vals.append(conv_eval(fs, path.extend([z]), omega, quad, ode, rho=rho))
    vals.append(conv_eval(fs, path, omega, quad, ode, rho=rho))
    zs = np.append(ring, end)
    V = np.vander((zs - end) / radius, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, np.array(vals), rcond=None)
    resid = float(np.max(np.abs(V @ coef - vals)))
    coeffs = coef / radius ** np.arange(degree + 1)
    return Germ(end, coeffs, radius, resid)


# --- estimate verification -------------------------------------------------------

@dataclass
class BoundCertificate:
    n: int
    delta: float
    L: float
    delta_prime: float
    c: float
    rho: float
    lhs_sup: float
    rhs_value: float
    samples: int
    profile_samples: int
    seed: int
    sampling_delta: float
    grid: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    fs: list = field(default_factory=list)
    lhs_argmax: list = field(default_factory=list)

    @property
    def margin(self) -> float:
        return self.rhs_value - self.lhs_sup

    def to_json(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["schema"] = "cert.v1"
        d["kind"] = "convolution-bound"
        d["margin"] = self.margin
        return d


def sup_profile(f, omega: DFS, delta: float, grid: Sequence[float], density=1, seed: int = 0):
    """Sampled ``sup |f|`` over ``K_Omega^{delta, l}`` for each ``l`` in ``grid``.

    Made nondecreasing in ``l``; also returns the number of sampled points.
    """
    fac = _Factor(f)
    if fac.oracle is None:
        raise ValueError("sup profiles need a closed-form tag")
    out, count = [], 0
    for ell in grid:
        best = abs(complex(fac.oracle.at_origin(0j)))
        if ell > 0:
            for path, _ in pathgeo.sample_boundary(omega, delta, ell, density, seed):
                best = max(best, abs(fac.oracle.along(path)))
                count += 1
        out.append(best)
    return np.maximum.accumulate(np.array(out)), count


def partition_max(profiles: Sequence[np.ndarray]) -> float:
    """Max over grid partitions ``k_1 + ... + k_n = K`` of ``prod P_i[k_i]``."""
    best = np.asarray(profiles[0], dtype=float)
    for P in profiles[1:]:
        K = len(best)
        nxt = np.zeros(K)
        for k in range(K):
            nxt[k] = np.max(best[: k + 1] * P[k::-1])
        best = nxt
    return float(best[-1])


def verify_bound(fs, omega: DFS, delta: float, L: float, density=1, seed: int = 0,
                 grid_points: int = 17, quad: QuadParams = QuadParams(),
                 ode: OdeParams = OdeParams(), sampling_floor: float = 1e-12,
                 progress=None) -> BoundCertificate:
    """Sampled check of ``sup |1*f_1*...*f_n| <= c^n/n! max prod sup |f_i|``.

    Left side: conv_eval at every endpoint from ``sample_boundary`` of
    ``Omega^{*n}``.  Right side: ``c`` and ``delta'`` from :func:`constants`
    (with ``|gamma(a)| <= rho``); the sup profiles are sampled over
    ``K_Omega^{max(delta', sampling_floor), l}`` on a uniform ``l``-grid and
    the partition max is taken on that grid.  Both restrictions can only
    lower the right side.
    """
    n = len(fs)
    if not omega.first_threshold > 2 * delta:
        raise ValueError("Omega_{2 delta} must be empty")
    rho = rho_for(omega)
    dprime, c = constants(delta, L, rho)
    big = dfsmod.star_power(omega.with_budget(max(omega.budget, L)), n)
    samples = pathgeo.sample_boundary(big, delta, L, density, seed)
    lhs, arg = 0.0, [0.0, 0.0]
    for j, (path, end) in enumerate(samples):
        v = abs(conv_eval(fs, path, omega, quad, ode, rho=rho, validate=False))
        if v > lhs:
            lhs, arg = v, [end.real, end.imag]
        if progress:
            progress(j, len(samples))
    grid = np.linspace(0.0, L, grid_points)
    ds = max(dprime, sampling_floor)
    profiles, pcount = [], 0
    for f in fs:
        prof, cnt = sup_profile(f, omega, ds, grid, density, seed)
        profiles.append(prof)
        pcount += cnt
    rhs = c**n / math.factorial(n) * partition_max(profiles)
    names = [f if isinstance(f, str) else repr(f.to_json() if hasattr(f, "to_json") else f) for f in fs]
    return BoundCertificate(n, delta, L, dprime, c, rho, lhs, rhs, len(samples), pcount, seed, ds,
                            grid.tolist(), [p.tolist() for p in profiles], names, arg)
