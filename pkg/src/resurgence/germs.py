"""Formal series, truncated Taylor germs, Borel transform and disk-chain continuation.

The formal Borel transform sends ``sum phi_j z^j`` to the constant ``phi_0``
(the coefficient of the convolution unit) and the germ
``sum_{j>=1} phi_j zeta^(j-1)/(j-1)!``.  Products of series without constant
term become convolutions ``int_0^zeta f(s) g(zeta - s) ds`` of germs.

Coefficients are kept exact (``Fraction``) when the inputs are rational, so
that transform round trips and coefficient identities can be checked
exactly; any float or complex input switches to complex arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Sequence

import numpy as np

from .dfs import DFS
from .errors import ContinuationError
from .oracles import Oracle, Primitive, track

#: default truncation order
DEFAULT_N = 64


def _exactify(c):
    if isinstance(c, Rational):
        return Fraction(c)
    return complex(c)


def _all_exact(cs) -> bool:
    return all(isinstance(c, Fraction) for c in cs)


def _as_coeffs(cs) -> np.ndarray:
    cs = [_exactify(c) for c in cs]
    if _all_exact(cs):
        return np.array(cs, dtype=object)
    return np.array([complex(c) for c in cs], dtype=complex)


@dataclass(frozen=True, eq=False)
class FormalSeries:
    """Truncated formal series ``sum_{j<=N} phi_j z^j``."""

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(_exactify(c) for c in self.coeffs))
        if not self.coeffs:
            raise ValueError("a formal series needs at least one coefficient")

    @property
    def N(self) -> int:
        return len(self.coeffs) - 1

    @property
    def exact(self) -> bool:
        return _all_exact(self.coeffs)

    def __eq__(self, other):
        return isinstance(other, FormalSeries) and self.coeffs == other.coeffs

    def __repr__(self):
        return f"FormalSeries({list(self.coeffs)!r})"


@dataclass(frozen=True, eq=False)
class Germ:
    """Truncated Taylor expansion at ``center``.

    ``branch`` pins the branch of ``oracle`` at ``center`` (one angle per
    oracle anchor) when the germ carries a closed-form tag.
    """

    center: complex
    coeffs: np.ndarray
    radius_hint: float = math.inf
    err: float = 0.0
    oracle: Oracle | None = None
    branch: tuple | None = None

    def __post_init__(self):
        c = self.coeffs
        if not isinstance(c, np.ndarray):
            c = _as_coeffs(c)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "center", complex(self.center))
        if len(c) == 0:
            raise ValueError("a germ needs at least one coefficient")
        if not self.radius_hint > 0:
            raise ValueError("radius_hint must be positive")
        if self.err < 0:
            raise ValueError("err must be nonnegative")

    @property
    def N(self) -> int:
        return len(self.coeffs) - 1

    @property
    def exact(self) -> bool:
        return self.coeffs.dtype == object

    @property
    def numeric(self) -> np.ndarray:
        return np.asarray([complex(c) for c in self.coeffs], dtype=complex) if self.exact else self.coeffs

    def __call__(self, z):
        """Evaluate the truncated expansion (Horner)."""
        z = np.asarray(z, dtype=complex) - self.center
        out = np.zeros(z.shape, dtype=complex)
        for c in self.numeric[::-1]:
            out = out * z + c
        return out

    def derivative(self) -> "Germ":
        c = self.numeric
        d = c[1:] * np.arange(1, len(c))
        if len(d) == 0:
            d = np.zeros(1, dtype=complex)
        return Germ(self.center, d, self.radius_hint, self.err)

    def truncate(self, N: int) -> "Germ":
        return Germ(self.center, self.coeffs[: N + 1], self.radius_hint, self.err, self.oracle, self.branch)

    def to_json(self) -> dict:
        c = self.numeric
        out = {
            "schema": "germ.v1",
            "center": [self.center.real, self.center.imag],
            "coeffs": [[z.real, z.imag] for z in c],
            "radius_hint": self.radius_hint if math.isfinite(self.radius_hint) else None,
            "err": self.err,
        }
        if self.exact:
            out["exact"] = [str(x) for x in self.coeffs]
        if self.oracle is not None:
            out["oracle"] = self.oracle.to_json()
            out["branch"] = list(self.branch or ())
        return out

    @classmethod
    def from_json(cls, data) -> "Germ":
        from . import oracles

        oracle = oracles.from_json(data["oracle"]) if data.get("oracle") else None
        r = data.get("radius_hint")
        return cls(
            complex(*data["center"]),
            ([Fraction(x) for x in data["exact"]] if data.get("exact")
             else np.array([complex(a, b) for a, b in data["coeffs"]])),
            math.inf if r is None else r,
            data.get("err", 0.0),
            oracle,
            tuple(data["branch"]) if oracle is not None else None,
        )


def germ_from_oracle(oracle: Oracle, N: int = DEFAULT_N) -> Germ:
    """Origin germ of a closed form on its principal branch."""
    anchors = oracle.anchors
    sing = oracle.singularities()
    r = min((abs(w) for w in sing), default=math.inf)
    theta = np.zeros(len(anchors))
    return Germ(0j, oracle.taylor(0j, theta, N), r, 0.0, oracle, tuple(theta))


def constant_germ(value=1, N: int = DEFAULT_N) -> Germ:
    return Germ(0j, [value] + [0] * N)


# --- Borel transform ---------------------------------------------------------

def borel(s: FormalSeries) -> tuple:
    """Formal Borel transform: ``(phi_0, germ)``."""
    c = s.coeffs
    out = [c[j] / math.factorial(j - 1) for j in range(1, len(c))] or [0]
    if not s.exact:
        out = [complex(x) for x in out]
    return c[0], Germ(0j, out)


def inverse_borel(constant, g: Germ) -> FormalSeries:
    if g.center != 0:
        raise ValueError("inverse Borel transform needs a germ centered at 0")
    coeffs = [_exactify(constant)] + [
        (c if g.exact else complex(c)) * math.factorial(k) for k, c in enumerate(g.coeffs)
    ]
    return FormalSeries(tuple(coeffs))


@lru_cache(maxsize=None)
def _beta(i: int, j: int) -> Fraction:
    """``int_0^1 s^i (1-s)^j ds = i! j! / (i+j+1)!``."""
    return Fraction(1, (i + j + 1) * math.comb(i + j, i))


def conv_origin(a: Germ, b: Germ, N: int | None = None) -> Germ:
    """Convolution of two origin germs on the coefficient level.

    ``zeta^i * zeta^j = B(i+1, j+1) zeta^(i+j+1)``; the result is truncated
    at ``min(N_a, N_b)`` (or ``N``).
    """
    if a.center != 0 or b.center != 0:
        raise ValueError("conv_origin needs germs centered at 0")
    N = min(a.N, b.N) if N is None else N
    exact = a.exact and b.exact
    if exact:
        out = [Fraction(0)] * (N + 1)
        for i in range(min(a.N, N)):
            ai = a.coeffs[i]
            if ai == 0:
                continue
            for j in range(min(b.N, N - 1 - i) + 1):
                out[i + j + 1] += ai * b.coeffs[j] * _beta(i, j)
        coeffs = np.array(out, dtype=object)
    else:
        A, B = a.numeric, b.numeric
        coeffs = np.zeros(N + 1, dtype=complex)
        for i in range(min(a.N, N)):
            if A[i] == 0:
                continue
            j = np.arange(min(b.N, N - 1 - i) + 1)
            w = np.array([float(_beta(i, int(jj))) for jj in j])
            coeffs[i + 1 + j] += A[i] * B[j] * w
    return Germ(0j, coeffs, min(a.radius_hint, b.radius_hint), a.err + b.err)


# --- recentering and continuation ------------------------------------------

@lru_cache(maxsize=8)
def _binom_matrix(N: int) -> np.ndarray:
    B = np.zeros((N + 1, N + 1))
    for j in range(N + 1):
        for k in range(j + 1):
            B[k, j] = math.comb(j, k)
    return B


def _shift(coeffs: np.ndarray, h: complex, scale: float) -> np.ndarray:
    """Taylor coefficients at ``center + h`` from those at ``center``."""
    N = len(coeffs) - 1
    if h == 0:
        return coeffs.copy()
    k = np.arange(N + 1)
    ct = coeffs * scale**k
    ht = h / scale
    # T[k, j] = C(j, k) ht^(j-k) for j >= k
    diff = k[None, :] - k[:, None]
    T = _binom_matrix(N) * np.where(diff >= 0, ht ** np.maximum(diff, 0), 0)
    return (T @ ct) / scale**k


def recenter(g: Germ, new_center: complex, step_fraction: float = 0.5) -> Germ:
    """Re-expand ``g`` at ``new_center`` (within ``step_fraction`` of its radius).

    The shift is exact for the truncated polynomial; ``err`` grows by the
    tail estimate ``M r^(N+1) / (1 - r)`` with ``M`` the largest scaled
    coefficient and ``r`` the step ratio.
    """
    h = complex(new_center) - g.center
    if h == 0:
        return g
    R = g.radius_hint
    if abs(h) > step_fraction * R * (1 + 1e-9):
        raise ContinuationError(f"recenter step {abs(h):.3g} exceeds {step_fraction} x radius {R:.3g}")
    c = g.numeric
    scale = R if math.isfinite(R) else max(1.0, 2 * abs(h))
    r = abs(h) / scale
    tail = r ** (g.N + 1) / (1 - r) * float(np.max(np.abs(c * scale ** np.arange(g.N + 1))))
    new = _shift(c, h, scale)
    return Germ(new_center, new, max(R - abs(h), 1e-300), g.err + tail, g.oracle, None)


@dataclass(frozen=True)
class StepPolicy:
    step_fraction: float = 0.25
    min_step: float = 1e-9
    tol: float = 1e-6
    max_radius: float = 4.0


def radius_from_dfs(omega: DFS, p: complex, s: float) -> float:
    """Lower bound on the convergence radius at the end of an allowed path.

    At position ``p`` reached with accumulated length ``s``, a singular point
    ``w`` can only lie within distance ``r`` if ``onset(w) <= s + r``, so it
    limits the radius to ``max(|p - w|, onset(w) - s)``.  Unknown points
    beyond the budget limit it to ``budget - s``.
    """
    anchors, onsets = omega.rays
    r = omega.budget - s
    if len(anchors):
        r = min(r, float(np.min(np.maximum(np.abs(p - anchors), onsets - s))))
    return r


def _radius(p, s, omega, singularities, cap):
    if omega is not None:
        r = radius_from_dfs(omega, p, s)
    elif singularities:
        r = min(abs(p - w) for w in singularities)
    else:
        r = math.inf
    return min(r, cap)


def _nearest_branch(anchors, z: complex, theta_prev: np.ndarray) -> np.ndarray:
    """Angles of ``1 - z/w`` closest to the previous ones (continuity)."""
    if not len(anchors):
        return theta_prev
    a = np.asarray(anchors, dtype=complex)
    principal = np.angle(1 - z / a)
    return principal + 2 * np.pi * np.round((theta_prev - principal) / (2 * np.pi))


def continue_along(
    g: Germ,
    path,
    omega: DFS | None = None,
    singularities: Sequence[complex] | None = None,
    policy: StepPolicy = StepPolicy(),
    start_length: float = 0.0,
    gaps: list | None = None,
) -> Germ:
    """Disk-chain analytic continuation of ``g`` along ``path``.

    ``path`` is a :class:`~resurgence.pathgeo.PolyPath` (or a vertex list)
    starting at ``g.center``.  The admissible radius at each point comes
    from ``omega`` (filtration-aware: it shrinks as length accumulates), or
    from a plain singular set, or from the germ's closed-form tag.  Each
    step moves at most ``step_fraction`` of that radius.

    Every step re-expands the current germ at the next center.  A germ with
    a closed-form tag is then refreshed from the closed form on the branch
    chosen by continuity of the angles, and the re-expanded value must agree
    with it (otherwise the chain jumped sheets and an error is raised); a
    primitive tag keeps the carried value as integration constant.

    A pure-Taylor germ is a polynomial, and re-expanding it never recovers
    information beyond the disk it was computed on: steps are also limited
    by the distance to the rim of the initial disk, and a path leaving that
    disk is rejected up front.

    If ``gaps`` is a list, the relative gap between the re-expanded value
    and the closed form is appended to it at every step.
    """
    verts = list(path.vertices) if hasattr(path, "vertices") else [complex(v) for v in path]
    if abs(verts[0] - g.center) > 1e-12:
        raise ContinuationError("path must start at the germ center")
    oracle = g.oracle
    if omega is None and singularities is None and oracle is not None:
        singularities = oracle.singularities()
    N = g.N
    theta = None
    if oracle is not None:
        theta = np.asarray(g.branch if g.branch is not None else np.zeros(len(oracle.anchors)), dtype=float)
    p = g.center
    s = start_length
    cur = Germ(g.center, g.numeric, g.radius_hint, g.err, oracle, g.branch)
    c0 = g.center
    R0 = math.inf if oracle is not None else min(g.radius_hint, _radius(p, s, omega, singularities, math.inf))
    if max(abs(v - c0) for v in verts) >= R0:
        raise ContinuationError("path leaves the disk of a germ without closed-form tag")
    for q in verts[1:]:
        while abs(q - p) > 0:
            R = min(_radius(p, s, omega, singularities, policy.max_radius), R0 - abs(p - c0))
            step = policy.step_fraction * R
            if step < policy.min_step:
                raise ContinuationError(f"insufficient radius {R:.3g} at {p}")
            d = q - p
            nxt = q if abs(d) <= step else p + d / abs(d) * step
            pred = recenter(Germ(cur.center, cur.coeffs, R, cur.err), nxt, policy.step_fraction)
            if oracle is not None:
                theta = _nearest_branch(oracle.anchors, nxt, theta)
                if isinstance(oracle, Primitive):
                    fresh = oracle.taylor(nxt, theta, N, constant=pred.coeffs[0])
                    err = pred.err
                else:
                    fresh = oracle.taylor(nxt, theta, N)
                    gap = abs(pred.coeffs[0] - fresh[0])
                    if gaps is not None:
                        gaps.append(gap / max(1.0, abs(fresh[0])))
                    if gap > policy.tol * max(1.0, abs(fresh[0])) + 10 * (pred.err - cur.err):
                        raise ContinuationError(
                            f"re-expansion disagrees with the closed form at {nxt} (gap {gap:.3g})")
                    err = cur.err
                cur = Germ(nxt, fresh, pred.radius_hint, err, oracle, tuple(theta))
            else:
                cur = pred
            if cur.err > policy.tol:
                raise ContinuationError(f"error budget exceeded (err={cur.err:.3g})")
            s += abs(nxt - p)
            p = nxt
    R = min(_radius(p, s, omega, singularities, policy.max_radius), R0 - abs(p - c0))
    branch = tuple(float(t) for t in theta) if theta is not None else None
    return Germ(p, cur.coeffs, R, cur.err, oracle, branch)


def oracle_germ_along(oracle: Oracle, path, N: int = DEFAULT_N) -> Germ:
    """Endpoint germ computed from the closed form with tracked branch."""
    verts = list(path.vertices) if hasattr(path, "vertices") else [complex(v) for v in path]
    theta = track(oracle.anchors, verts[1:])
    end = verts[-1]
    r = min((abs(end - w) for w in oracle.singularities()), default=math.inf)
    return Germ(end, oracle.taylor(end, theta, N), r, 0.0, oracle, tuple(theta))
