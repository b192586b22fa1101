"""Closed-form functions with explicit branch tracking.

These are the ground truth for every continuation test.  A branch of a
multivalued closed form is pinned by one real angle per *anchor* ``w``: the
continuous argument of ``1 - z/w``, starting at 0 for ``z = 0``.  Along a
straight piece that avoids ``w`` the increment of that argument is the
principal argument of ``(z1 - w)/(z0 - w)``, so tracking along a polyline
is exact.

Catalog: :class:`Power` ``(1 - z/w)**alpha`` (poles for negative integer
``alpha``), :class:`Log` ``-log(1 - z/w)``, :class:`Exp` ``exp(a z)``,
:class:`Poly`, and sums, products and scalar multiples of these.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def theta_increment(anchors, z0, z1) -> np.ndarray:
    """Argument increment of ``z - w`` along the straight piece ``z0 -> z1``.

    Broadcasts ``z0``/``z1`` (shape S) against ``anchors`` (shape K) to S+(K,).
    """
    anchors = np.asarray(anchors, dtype=complex)
    z0 = np.asarray(z0, dtype=complex)[..., None]
    z1 = np.asarray(z1, dtype=complex)[..., None]
    return np.angle((z1 - anchors) / (z0 - anchors))


def track(anchors, points: Sequence[complex]) -> np.ndarray:
    """Branch angles at the end of the polyline ``0 -> points...``."""
    anchors = np.asarray(anchors, dtype=complex)
    theta = np.zeros(len(anchors))
    prev = 0j
    for p in points:
        theta = theta + theta_increment(anchors, prev, p)
        prev = p
    return theta


class Oracle:
    """Base class.  Subclasses define ``anchors``, ``value`` and ``taylor``."""

    anchors: tuple = ()
    #: True when values do not depend on the branch angles
    single_valued: bool = True

    def singularities(self) -> tuple:
        return tuple(self.anchors)

    def value(self, z, theta):  # pragma: no cover - abstract
        raise NotImplementedError

    def taylor(self, z0: complex, theta0, N: int) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def to_json(self) -> dict:  # pragma: no cover
        raise NotImplementedError

    # convenience -----------------------------------------------------------
    def __add__(self, other):
        return Sum((self, other))

    def __mul__(self, other):
        if isinstance(other, Oracle):
            return Product((self, other))
        return Scaled(complex(other), self)

    __rmul__ = __mul__

    def along(self, path) -> complex:
        """Value at the end of ``path`` on the branch reached along it."""
        verts = path.vertices if hasattr(path, "vertices") else path
        theta = track(self.anchors, list(verts[1:]))
        return complex(self.value(np.asarray(verts[-1]), theta))

    def at_origin(self, z):
        """Principal branch near 0 (no winding)."""
        z = np.asarray(z, dtype=complex)
        return self.value(z, theta_increment(self.anchors, np.zeros_like(z), z))


def _log_u(z, w, theta):
    u = 1 - z / w
    return np.log(np.abs(u)) + 1j * theta


class Power(Oracle):
    """``coef * (1 - z/w)**alpha``."""

    def __init__(self, omega: complex, alpha: float, coef: complex = 1.0):
        self.omega = complex(omega)
        self.alpha = float(alpha)
        self.coef = complex(coef)
        self.anchors = (self.omega,)
        self.single_valued = self.alpha == int(self.alpha)

    def value(self, z, theta):
        z = np.asarray(z, dtype=complex)
        th = np.asarray(theta)[..., 0]
        if self.alpha == int(self.alpha):
            return self.coef * (1 - z / self.omega) ** int(self.alpha)
        return self.coef * np.exp(self.alpha * _log_u(z, self.omega, th))

    def taylor(self, z0, theta0, N):
        z0 = complex(z0)
        th = float(np.asarray(theta0)[0])
        lead = complex(self.value(np.asarray(z0), np.asarray([th])))
        q = -1.0 / (self.omega - z0)
        out = np.empty(N + 1, dtype=complex)
        b = 1.0 + 0j
        for k in range(N + 1):
            out[k] = lead * b
            b = b * (self.alpha - k) / (k + 1) * q
        return out

    def to_json(self):
        return {"kind": "power", "omega": [self.omega.real, self.omega.imag],
                "alpha": self.alpha, "coef": [self.coef.real, self.coef.imag]}


def pole(omega: complex, coef: complex = 1.0) -> Power:
    """Simple pole ``coef / (1 - z/w)``."""
    return Power(omega, -1.0, coef)


class Log(Oracle):
    """``-coef * log(1 - z/w)``."""

    single_valued = False

    def __init__(self, omega: complex, coef: complex = 1.0):
        self.omega = complex(omega)
        self.coef = complex(coef)
        self.anchors = (self.omega,)

    def value(self, z, theta):
        z = np.asarray(z, dtype=complex)
        th = np.asarray(theta)[..., 0]
        return -self.coef * _log_u(z, self.omega, th)

    def taylor(self, z0, theta0, N):
        z0 = complex(z0)
        th = float(np.asarray(theta0)[0])
        out = np.empty(N + 1, dtype=complex)
        out[0] = complex(self.value(np.asarray(z0), np.asarray([th])))
        q = 1.0 / (self.omega - z0)
        for k in range(1, N + 1):
            out[k] = self.coef * q**k / k
        return out

    def to_json(self):
        return {"kind": "log", "omega": [self.omega.real, self.omega.imag],
                "coef": [self.coef.real, self.coef.imag]}


class Exp(Oracle):
    """``coef * exp(a z)`` (entire)."""

    def __init__(self, a: complex = 1.0, coef: complex = 1.0):
        self.a = complex(a)
        self.coef = complex(coef)
        self.anchors = ()

    def value(self, z, theta):
        return self.coef * np.exp(self.a * np.asarray(z, dtype=complex))

    def taylor(self, z0, theta0, N):
        out = np.empty(N + 1, dtype=complex)
        c = self.coef * np.exp(self.a * complex(z0))
        for k in range(N + 1):
            out[k] = c
            c = c * self.a / (k + 1)
        return out

    def to_json(self):
        return {"kind": "exp", "a": [self.a.real, self.a.imag], "coef": [self.coef.real, self.coef.imag]}


class Poly(Oracle):
    """Polynomial ``sum c_k z^k``."""

    def __init__(self, coeffs: Sequence[complex]):
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.anchors = ()

    def value(self, z, theta):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for c in self.coeffs[::-1]:
            out = out * z + c
        return out

    def taylor(self, z0, theta0, N):
        # repeated synthetic division gives the shifted coefficients
        c = list(self.coeffs)
        out = []
        for _ in range(N + 1):
            if not c:
                out.append(0j)
                continue
            acc = 0j
            q = []
            for a in reversed(c):
                acc = acc * z0 + a
                q.append(acc)
            out.append(q[-1])
            c = list(reversed(q[:-1]))
        return np.asarray(out, dtype=complex)

    def to_json(self):
        return {"kind": "poly", "coeffs": [[c.real, c.imag] for c in self.coeffs]}


class _Composite(Oracle):
    def __init__(self, terms):
        self.terms = tuple(terms)
        self.anchors = tuple(w for t in self.terms for w in t.anchors)
        self.single_valued = all(t.single_valued for t in self.terms)
        self._slices = []
        k = 0
        for t in self.terms:
            self._slices.append(slice(k, k + len(t.anchors)))
            k += len(t.anchors)

    def singularities(self):
        return tuple(dict.fromkeys(w for t in self.terms for w in t.singularities()))

    def _parts(self, theta):
        theta = np.asarray(theta)
        return [theta[..., s] for s in self._slices]


class Sum(_Composite):
    def value(self, z, theta):
        return sum(t.value(z, th) for t, th in zip(self.terms, self._parts(theta)))

    def taylor(self, z0, theta0, N):
        return sum(t.taylor(z0, th, N) for t, th in zip(self.terms, self._parts(theta0)))

    def to_json(self):
        return {"kind": "sum", "terms": [t.to_json() for t in self.terms]}


class Product(_Composite):
    def value(self, z, theta):
        out = 1
        for t, th in zip(self.terms, self._parts(theta)):
            out = out * t.value(z, th)
        return out

    def taylor(self, z0, theta0, N):
        out = np.zeros(N + 1, dtype=complex)
        out[0] = 1
        for t, th in zip(self.terms, self._parts(theta0)):
            out = np.convolve(out, t.taylor(z0, th, N))[: N + 1]
        return out

    def to_json(self):
        return {"kind": "product", "terms": [t.to_json() for t in self.terms]}


class Scaled(_Composite):
    def __init__(self, c: complex, term: Oracle):
        super().__init__((term,))
        self.c = complex(c)

    def value(self, z, theta):
        return self.c * self.terms[0].value(z, theta)

    def taylor(self, z0, theta0, N):
        return self.c * self.terms[0].taylor(z0, theta0, N)

    def to_json(self):
        return {"kind": "scaled", "c": [self.c.real, self.c.imag], "term": self.terms[0].to_json()}


class Primitive(Oracle):
    """Antiderivative ``F(z) = int_0^z h`` of a closed form ``h``.

    ``F`` has no pointwise formula: its value depends on the path, and
    :meth:`along` integrates ``h`` with Gauss-Legendre rules on pieces that
    stay well inside the disks of convergence.  :meth:`taylor` needs the
    value at ``z0`` as ``constant``.
    """

    def __init__(self, h: Oracle):
        self.h = h
        self.anchors = tuple(h.anchors)
        self.single_valued = False

    def singularities(self):
        return self.h.singularities()

    def value(self, z, theta):
        raise NotImplementedError("a primitive is evaluated along a path")

    def taylor(self, z0, theta0, N, constant: complex = 0.0):
        out = np.empty(N + 1, dtype=complex)
        out[0] = constant
        if N:
            out[1:] = self.h.taylor(z0, theta0, N - 1) / np.arange(1, N + 1)
        return out

    def along(self, path, nodes: int = 24) -> complex:
        verts = list(path.vertices if hasattr(path, "vertices") else path)
        x, wts = np.polynomial.legendre.leggauss(nodes)
        sing = np.asarray(self.singularities(), dtype=complex)
        theta = np.zeros(len(self.anchors))
        total = 0j
        for z0, z1 in zip(verts[:-1], verts[1:]):
            a = complex(z0)
            while a != z1:
                d = min(float(np.min(np.abs(a - sing))), float(np.min(np.abs(z1 - sing)))) if len(sing) else np.inf
                step = max(0.25 * d, 1e-12)
                b = z1 if abs(z1 - a) <= step else a + (z1 - a) / abs(z1 - a) * step
                pts = 0.5 * (a + b) + 0.5 * (b - a) * x
                th = theta + theta_increment(self.anchors, np.full(nodes, a), pts)
                total += 0.5 * (b - a) * np.sum(wts * self.h.value(pts, th))
                theta = theta + theta_increment(self.anchors, a, b)
                a = b
        return complex(total)

    def at_origin(self, z):
        z = np.asarray(z, dtype=complex)
        return np.vectorize(lambda q: self.along([0j, q]) if q != 0 else 0j, otypes=[complex])(z)

    def to_json(self):
        return {"kind": "primitive", "of": self.h.to_json()}


def from_json(data: dict) -> Oracle:
    kind = data["kind"]
    cx = lambda v: complex(v[0], v[1])  # noqa: E731
    if kind == "power":
        return Power(cx(data["omega"]), data["alpha"], cx(data.get("coef", [1, 0])))
    if kind == "log":
        return Log(cx(data["omega"]), cx(data.get("coef", [1, 0])))
    if kind == "exp":
        return Exp(cx(data.get("a", [1, 0])), cx(data.get("coef", [1, 0])))
    if kind == "poly":
        return Poly([cx(c) for c in data["coeffs"]])
    if kind == "sum":
        return Sum(from_json(t) for t in data["terms"])
    if kind == "product":
        return Product(from_json(t) for t in data["terms"])
    if kind == "scaled":
        return Scaled(cx(data["c"]), from_json(data["term"]))
    if kind == "primitive":
        return Primitive(from_json(data["of"]))
    raise ValueError(f"unknown oracle kind {kind!r}")


def parse(spec: str) -> Oracle:
    """Parse the short CLI notation: ``pole:1``, ``log:1``, ``power:1:0.5``,
    ``exp``, ``exp:2``, ``one``, optionally prefixed by a scale ``0.1*``."""
    spec = spec.strip()
    if "*" in spec:
        c, rest = spec.split("*", 1)
        return Scaled(complex(c), parse(rest))
    name, *args = spec.split(":")
    if name == "one":
        return Poly([1])
    if name == "pole":
        return pole(complex(args[0]))
    if name == "log":
        return Log(complex(args[0]))
    if name == "power":
        return Power(complex(args[0]), float(args[1]))
    if name == "exp":
        return Exp(complex(args[0]) if args else 1.0)
    raise ValueError(f"cannot parse oracle {spec!r}")


def catalog() -> dict[str, Oracle]:
    """The reference catalog: 1/(1-z), -log(1-z), (1-z)**(1/2), exp z."""
    return {
        "pole": pole(1),
        "log": Log(1),
        "sqrt": Power(1, 0.5),
        "exp": Exp(1),
    }
