"""Discrete filtered sets (d.f.s.) and their algebra.

A d.f.s. is a nondecreasing family ``Omega_L`` of finite subsets of the
complex plane, empty for small ``L``.  Only the upper-closed form is stored:
each singular point ``w`` carries its *onset*, the smallest length ``L`` with
``w in Omega_L``.  The family is represented up to a length ``budget``.

With this encoding the sum of two d.f.s. is a min-plus convolution of onset
maps and upper-closure lookups are a comparison against the onset.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from typing import Sequence

import numpy as np

from .errors import DFSError

#: decimal digits kept when points and onsets are merged
ROUND_DIGITS = 12


def canon_point(z) -> complex:
    """Round a complex number to the canonical grid used for set union."""
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DFSError(f"non-finite point {z!r}")
    # "+ 0.0" folds -0.0 into 0.0 so that the two keys coincide
    return complex(round(z.real, ROUND_DIGITS) + 0.0, round(z.imag, ROUND_DIGITS) + 0.0)


def canon_length(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DFSError(f"non-finite length {x!r}")
    return round(x, ROUND_DIGITS) + 0.0


class DFS:
    """Budgeted discrete filtered set in upper-closed (onset map) form.

    Instances are immutable; build them with :func:`make_dfs`,
    :func:`from_closed_discrete` or :func:`from_endless_data`.
    """

    __slots__ = ("_budget", "_onsets", "_anchors", "_onset_arr")

    def __init__(self, onsets: Mapping[complex, float], budget: float):
        budget = canon_length(budget)
        if budget <= 0:
            raise DFSError("budget must be positive")
        clean = {}
        for w, L in onsets.items():
            w = canon_point(w)
            L = canon_length(L)
            if L <= 0:
                raise DFSError(f"point {w} has onset {L} <= 0")
            if L > budget:
                continue
            if w not in clean or L < clean[w]:
                clean[w] = L
        items = sorted(clean.items(), key=lambda kv: (kv[1], kv[0].real, kv[0].imag))
        self._budget = budget
        self._onsets = dict(items)
        self._anchors = np.array([w for w, _ in items], dtype=complex)
        self._onset_arr = np.array([L for _, L in items], dtype=float)

    @property
    def budget(self) -> float:
        return self._budget

    @property
    def onsets(self) -> dict[complex, float]:
        return dict(self._onsets)

    def onset(self, w) -> float:
        """Onset of ``w``; ``inf`` if ``w`` is not singular within budget."""
        return self._onsets.get(canon_point(w), math.inf)

    @property
    def points(self) -> frozenset:
        return frozenset(self._onsets)

    @property
    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Singular support as arrays ``(anchors, onsets)`` sorted by onset.

        The closed singular support is the union of the vertical rays
        ``{(lam, w) : lam >= onset(w)}``.
        """
        return self._anchors, self._onset_arr

    @property
    def is_trivial(self) -> bool:
        return not self._onsets

    @property
    def first_threshold(self) -> float:
        """Smallest onset, or ``inf`` for the trivial d.f.s."""
        return float(self._onset_arr[0]) if len(self._onset_arr) else math.inf

    @property
    def steps(self) -> list[tuple[float, frozenset]]:
        """Step family ``[(threshold, Omega_threshold), ...]``, cumulative."""
        out = [(0.0, frozenset())]
        current: set = set()
        for w, L in self._onsets.items():
            current.add(w)
            if out[-1][0] == L:
                out[-1] = (L, frozenset(current))
            else:
                out.append((L, frozenset(current)))
        return out

    def with_budget(self, budget: float) -> "DFS":
        return DFS(self._onsets, budget)

    def __eq__(self, other):
        if not isinstance(other, DFS):
            return NotImplemented
        return self._budget == other._budget and self._onsets == other._onsets

    def __hash__(self):
        return hash((self._budget, tuple(self._onsets.items())))

    def __le__(self, other: "DFS") -> bool:
        """Partial order ``Omega_L subset Omega'_L`` for all L (within budget)."""
        return all(other.onset(w) <= L for w, L in self._onsets.items())

    def __repr__(self):
        body = ", ".join(f"{w}@{L:g}" for w, L in self._onsets.items())
        return f"DFS(budget={self._budget:g}, {{{body}}})"


def make_dfs(steps: Iterable[tuple[float, Iterable]], budget: float) -> DFS:
    """Validate and canonicalize a step family.

    Steps may come in any order; nesting is repaired by taking, for every
    point, the smallest threshold at which it is listed.
    """
    budget = float(budget)
    if not budget > 0:
        raise DFSError("budget must be positive")
    onsets: dict[complex, float] = {}
    for threshold, pts in steps:
        threshold = float(threshold)
        if not math.isfinite(threshold) or threshold < 0:
            raise DFSError(f"invalid threshold {threshold!r}")
        if threshold > budget:
            raise DFSError(f"threshold {threshold} exceeds budget {budget}")
        if not hasattr(pts, "__len__"):
            raise DFSError("point sets must be finite collections")
        pts = [canon_point(p) for p in pts]
        if threshold == 0 and pts:
            raise DFSError("Omega_0 must be empty")
        for w in pts:
            if w not in onsets or threshold < onsets[w]:
                onsets[w] = threshold
    return DFS(onsets, budget)


def from_closed_discrete(points: Iterable, budget: float) -> DFS:
    """The d.f.s. ``Omega_L = {w : |w| <= L}`` of a closed discrete set."""
    onsets = {}
    for w in points:
        w = canon_point(w)
        if w == 0:
            raise DFSError("0 cannot belong to a closed discrete singular set")
        onsets[w] = abs(w)
    return DFS(onsets, budget)


def from_endless_data(delta: float, F: Sequence[Iterable], budget: float) -> DFS:
    """Build ``Omega_L = F_0 u ... u F_n`` with ``n = floor(L/delta)``."""
    if not delta > 0:
        raise DFSError("delta must be positive")
    if len(F) and len(list(F[0])):
        raise DFSError("F_0 must be empty")
    onsets: dict[complex, float] = {}
    for k, pts in enumerate(F):
        for w in pts:
            w = canon_point(w)
            onsets.setdefault(w, k * delta)
    return DFS(onsets, budget)


def trivial(budget: float) -> DFS:
    return DFS({}, budget)


def sum(a: DFS, b: DFS) -> DFS:  # noqa: A001 - name fixed by the public API
    """Sum ``a * b``: onset of ``w1 + w2`` is ``onset_a(w1) + onset_b(w2)``.

    Points of ``a`` and ``b`` keep their own onsets.  The result budget is
    the smaller of the two.
    """
    budget = min(a.budget, b.budget)
    out = dict(a._onsets)
    for w, L in b._onsets.items():
        if L < out.get(w, math.inf):
            out[w] = L
    for w1, L1 in a._onsets.items():
        if L1 >= budget:
            continue
        for w2, L2 in b._onsets.items():
            L = canon_length(L1 + L2)
            if L > budget:
                # onsets of b are sorted, nothing further fits
                break
            w = canon_point(w1 + w2)
            if L < out.get(w, math.inf):
                out[w] = L
    return DFS(out, budget)


def star_power(a: DFS, n: int) -> DFS:
    if n < 1:
        raise DFSError("n must be >= 1")
    out = a
    for _ in range(n - 1):
        out = sum(out, a)
    return out


def star_iterations_bound(a: DFS) -> int:
    """Number of summands after which ``a^{*n}`` stops changing within budget."""
    if a.is_trivial:
        return 1
    return max(1, math.ceil(a.budget / a.first_threshold))


def star_infinity(a: DFS) -> DFS:
    """Inductive limit of ``a^{*n}``, computed by iterating until stable.

    Each extra summand raises the smallest new onset by at least the first
    threshold, so at most :func:`star_iterations_bound` iterations are needed.
    """
    current = a
    for _ in range(star_iterations_bound(a) + 1):
        nxt = sum(current, a)
        if nxt == current:
            return current
        current = nxt
    raise AssertionError("star closure failed to stabilize")  # pragma: no cover


def upper_value(a: DFS, L: float) -> frozenset:
    """Upper closure ``{w : onset(w) <= L}``."""
    if L < 0:
        raise DFSError("L must be nonnegative")
    if L > a.budget:
        raise DFSError(f"L={L} exceeds budget {a.budget}")
    return frozenset(w for w, o in a._onsets.items() if o <= L)


def eta_array(a: DFS, lam, xi, include_origin: bool = True) -> np.ndarray:
    """Vectorized distance from ``(lam, xi)`` to ``{(0,0)} u closed support``.

    ``lam`` and ``xi`` broadcast together.  With ``include_origin=False`` the
    origin term is dropped and only the singular rays count (``inf`` for the
    trivial d.f.s.).
    """
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi, dtype=complex)
    lam, xi = np.broadcast_arrays(lam, xi)
    if include_origin:
        best = np.hypot(lam, np.abs(xi))
    else:
        best = np.full(lam.shape, np.inf)
    anchors, onsets = a.rays
    for w, L in zip(anchors, onsets):
        gap = np.maximum(L - lam, 0.0)
        best = np.minimum(best, np.hypot(gap, np.abs(xi - w)))
    return best


def eta(a: DFS, point) -> float:
    """Distance from ``point = (lam, xi)`` to the origin and the singular rays."""
    lam, xi = point
    if lam < 0:
        raise DFSError("lambda must be nonnegative")
    return float(eta_array(a, lam, xi))


# --- JSON (dfs.v1) -----------------------------------------------------------

def to_json(a: DFS) -> dict:
    return {
        "schema": "dfs.v1",
        "budget": a.budget,
        "steps": [
            {
                "L": L,
                "points": [[w.real, w.imag] for w in sorted(pts, key=lambda z: (a.onset(z), z.real, z.imag))],
            }
            for L, pts in a.steps
        ],
    }


def from_json(data: Mapping) -> DFS:
    try:
        steps = [(s["L"], [complex(p[0], p[1]) for p in s["points"]]) for s in data["steps"]]
        budget = data["budget"]
    except (KeyError, TypeError, IndexError) as exc:
        raise DFSError(f"malformed dfs.v1 document: {exc}") from exc
    return make_dfs(steps, budget)
