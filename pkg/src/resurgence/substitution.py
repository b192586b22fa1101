"""Substitution of series into convergent power series.

``F(w_1, ..., w_r) = sum_k c_k w^k`` with ``|c_k| <= C Lambda^|k|``.  On the
formal side ``F(phi_1, ..., phi_r)`` is a truncated composition.  In the
Borel plane the degree-``n`` part is a sum of ``n``-fold convolutions, and
``1 * (...)`` of each is evaluated at the end of an allowed path by the flow
engine of :mod:`resurgence.convflow`.  The majorant
``sum_{n > n0} C (Lambda c M)^n / n!`` bounds what the omitted degrees can
contribute.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln, logsumexp

from . import convflow, pathgeo
from . import dfs as dfsmod
from .dfs import DFS
from .errors import SubstitutionError
from .germs import FormalSeries, _exactify
from .oracles import Oracle, parse


# --- power series with majorant ---------------------------------------------

@dataclass(frozen=True)
class PowerSeriesF:
    """Sparse multivariate power series with majorant constants.

    ``coeffs`` maps multi-indices (tuples of length ``r``) to coefficients.
    When ``C`` or ``Lambda`` is omitted both are fitted: ``Lambda`` from a
    log-linear regression of ``max_{|k|=d} |c_k|`` against ``d``, and ``C``
    as twice the smallest constant making ``|c_k| <= C Lambda^|k|`` hold.
    """

    r: int
    coeffs: Mapping
    C: float | None = None
    Lambda: float | None = None

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("arity must be positive")
        clean = {}
        for k, c in dict(self.coeffs).items():
            k = (int(k),) if np.isscalar(k) else tuple(int(x) for x in k)
            if len(k) != self.r or min(k) < 0:
                raise ValueError(f"bad multi-index {k} for arity {self.r}")
            c = _exactify(c)
            if c != 0:
                clean[k] = clean.get(k, 0) + c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))
        if self.C is None or self.Lambda is None:
            C, lam = fit_majorant(self.coeffs)
            object.__setattr__(self, "C", C if self.C is None else float(self.C))
            object.__setattr__(self, "Lambda", lam if self.Lambda is None else float(self.Lambda))
        if not (self.C > 0 and self.Lambda > 0):
            raise ValueError("majorant constants must be positive")
        for k, c in self.coeffs.items():
            if abs(complex(c)) > self.C * self.Lambda ** sum(k) * (1 + 1e-12):
                raise ValueError(f"|c_{k}| exceeds C Lambda^|k|")

    @property
    def K_max(self) -> int:
        return max((sum(k) for k in self.coeffs), default=0)

    def degree_groups(self) -> dict[int, list]:
        """Multi-indices grouped by total degree, lexicographic inside a group."""
        out: dict[int, list] = {}
        for k in sorted(self.coeffs):
            out.setdefault(sum(k), []).append(k)
        return dict(sorted(out.items()))

    def __call__(self, *w):
        if len(w) != self.r:
            raise ValueError(f"expected {self.r} arguments")
        return sum(complex(c) * np.prod([complex(x) ** e for x, e in zip(w, k)])
                   for k, c in self.coeffs.items())

    def to_json(self) -> dict:
        return {
            "schema": "powerseries.v1",
            "r": self.r,
            "C": self.C,
            "Lambda": self.Lambda,
            "coeffs": [{"k": list(k), "c": [complex(c).real, complex(c).imag]}
                       for k, c in self.coeffs.items()],
        }

    @classmethod
    def from_json(cls, data) -> "PowerSeriesF":
        if data.get("schema", "powerseries.v1") != "powerseries.v1":
            raise ValueError("expected schema powerseries.v1")
        coeffs = {}
        for e in data["coeffs"]:
            c = e["c"]
            coeffs[tuple(e["k"])] = complex(c[0], c[1]) if isinstance(c, list) else c
        return cls(int(data["r"]), coeffs, data.get("C"), data.get("Lambda"))


def fit_majorant(coeffs: Mapping, safety: float = 2.0) -> tuple[float, float]:
    """``(C, Lambda)`` with ``|c_k| <= C Lambda^|k|`` for every given ``c_k``."""
    by_deg: dict[int, float] = {}
    for k, c in coeffs.items():
        a = abs(complex(c))
        if a > 0:
            d = sum(k)
            by_deg[d] = max(by_deg.get(d, 0.0), a)
    if not by_deg:
        return safety, 1.0
    if len(by_deg) >= 2:
        d = np.array(sorted(by_deg))
        y = np.log([by_deg[x] for x in d])
        slope = float(np.polyfit(d, y, 1)[0])
        lam = math.exp(slope)
    else:
        lam = 1.0
    C = max(a / lam**d for d, a in by_deg.items())
    return safety * C, lam


def geometric(K: int, r: int = 1) -> PowerSeriesF:
    """``1/(1 - w_1 - ... - w_r)`` truncated at total degree ``K`` (exact)."""
    coeffs = {}
    for k in itertools.product(range(K + 1), repeat=r):
        if sum(k) <= K:
            coeffs[k] = math.factorial(sum(k)) // math.prod(math.factorial(x) for x in k)
    return PowerSeriesF(r, coeffs)


def monomial(k: Sequence[int], c=1) -> PowerSeriesF:
    k = tuple(int(x) for x in k)
    return PowerSeriesF(len(k), {k: c})


# --- formal substitution -------------------------------------------------------

def _mul(a: list, b: list, N: int) -> list:
    out = [0] * (N + 1)
    for i, x in enumerate(a[: N + 1]):
        if x == 0:
            continue
        for j, y in enumerate(b[: N + 1 - i]):
            out[i + j] += x * y
    return out


def formal_substitute(F: PowerSeriesF, phis: Sequence[FormalSeries], N: int | None = None) -> FormalSeries:
    """Truncated composition ``F(phi_1, ..., phi_r)`` up to ``z^N``.

    Every ``phi_i`` must have zero constant term, so ``phi^k`` has valuation
    ``|k|`` and only ``|k| <= N`` contributes.
    """
    if len(phis) != F.r:
        raise ValueError(f"F has arity {F.r} but {len(phis)} series were given")
    for i, p in enumerate(phis):
        if p.coeffs[0] != 0:
            raise SubstitutionError(f"series {i} has a nonzero constant term")
    N = min(p.N for p in phis) if N is None else N
    exact = all(p.exact for p in phis) and all(isinstance(c, (int, Fraction)) for c in F.coeffs.values())
    zero = Fraction(0) if exact else 0j
    series = [[(c if exact else complex(c)) for c in p.coeffs[: N + 1]] + [zero] * max(0, N - p.N)
              for p in phis]
    # powers[i][e] = phi_i^e truncated at N
    powers = []
    for i, s in enumerate(series):
        top = max((k[i] for k in F.coeffs), default=0)
        pw = [[Fraction(1) if exact else 1 + 0j] + [zero] * N]
        for e in range(1, min(top, N) + 1):
            pw.append(_mul(pw[-1], s, N))
        powers.append(pw)
    out = [zero] * (N + 1)
    for k, c in F.coeffs.items():
        if sum(k) > N:
            continue
        term = powers[0][k[0]]
        for i in range(1, F.r):
            term = _mul(term, powers[i][k[i]], N)
        cc = c if exact else complex(c)
        for j in range(N + 1):
            out[j] += cc * term[j]
    return FormalSeries(tuple(out))


# --- majorant tail -------------------------------------------------------------

def log_majorant_tail(C: float, Lambda: float, c: float, M: float, n0: int) -> float:
    """``log sum_{n > n0} C x^n / n!`` with ``x = Lambda c M``."""
    if min(C, Lambda, c, M) < 0:
        raise ValueError("majorant constants must be nonnegative")
    if C == 0 or Lambda * c * M == 0:
        return -math.inf
    logx = math.log(Lambda) + math.log(c) + math.log(M)
    x = math.exp(logx) if logx < 700 else math.inf
    a = n0 + 1
    if x < 700:
        P = gammainc(a, x)
        if P > 0:
            return math.log(C) + x + math.log(P)
    elif a < x:
        return math.log(C) + x + math.log1p(-gammaincc(a, x))
    # direct log-space summation from the first omitted term
    terms, n = [], a
    while True:
        t = n * logx - gammaln(n + 1)
        terms.append(t)
        if n > x and t < terms[0] - 40 or len(terms) > 10**6:
            break
        n += 1
    return math.log(C) + float(logsumexp(terms))


def majorant_tail(C: float, Lambda: float, c: float, M: float, n0: int) -> float:
    """``sum_{n > n0} C (Lambda c M)^n / n!`` (``inf`` when it overflows)."""
    lt = log_majorant_tail(C, Lambda, c, M, n0)
    return 0.0 if lt == -math.inf else (math.exp(lt) if lt < 709 else math.inf)


# --- Borel-plane evaluation ----------------------------------------------------

@dataclass
class SubstitutionCertificate:
    n0: int
    value: complex
    M: float
    c: float
    delta: float
    delta_prime: float
    C: float
    Lambda: float
    L: float
    log_tail_bound: float
    tol: float
    certified: bool
    group_values: list = field(default_factory=list)
    envelope: list = field(default_factory=list)
    samples: int = 0
    seed: int = 0
    sampling_delta: float = 0.0
    ordering: str = "degree"

    @property
    def tail_bound(self) -> float:
        lt = self.log_tail_bound
        return 0.0 if lt == -math.inf else (math.exp(lt) if lt < 709 else math.inf)

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["value"] = [self.value.real, self.value.imag]
        d["group_values"] = [[complex(v).real, complex(v).imag] for v in self.group_values]
        d["tail_bound"] = self.tail_bound if math.isfinite(self.tail_bound) else None
        d["log10_tail_bound"] = self.log_tail_bound / math.log(10) if math.isfinite(self.log_tail_bound) else None
        d.pop("log_tail_bound")
        d["schema"] = "cert.v1"
        d["kind"] = "substitution"
        return d


def _oracle(f) -> Oracle:
    if isinstance(f, Oracle):
        return f
    if isinstance(f, str):
        return parse(f)
    if getattr(f, "oracle", None) is not None:
        return f.oracle
    raise TypeError("Borel germs must carry a closed-form tag for sup sampling")


def sampled_sup(f, omega: DFS, delta: float, L: float, density=1, seed: int = 0) -> tuple[float, int]:
    """Sampled ``sup |f|`` over ``K_Omega^{delta, L}`` and the sample count."""
    o = _oracle(f)
    best = abs(complex(o.at_origin(0j)))
    samples = pathgeo.sample_boundary(omega, delta, L, density, seed)
    for path, _ in samples:
        best = max(best, abs(o.along(path)))
    return best, len(samples)


def _term_factors(k, phis, reverse: bool) -> list:
    fs = [phi for phi, e in zip(phis, k) for _ in range(e)]
    return fs[::-1] if reverse else fs


def borel_substitute_eval(
    F: PowerSeriesF,
    phis: Sequence,
    gamma,
    omegas: Sequence[DFS],
    tol: float = 1e-8,
    delta: float | None = None,
    M: float | None = None,
    density=1,
    seed: int = 0,
    strict: bool = True,
    max_degree: int = 5,
    ordering: str = "degree",
    quad: convflow.QuadParams = convflow.QuadParams(),
    ode: convflow.OdeParams = convflow.OdeParams(),
    sampling_floor: float = 1e-12,
) -> tuple[complex, SubstitutionCertificate]:
    """Value of ``sum_{|k|>=1} c_k (1 * phi_1^{*k_1} * ... * phi_r^{*k_r})`` at the end of ``gamma``.

    ``phis`` are the Borel germs (closed-form tags or CLI strings).  The
    constant ``c_0`` is the coefficient of the convolution unit and is not
    part of the returned value.  Degrees are summed in increasing order;
    the majorant tail after degree ``n0`` uses ``(delta', c)`` from
    :func:`resurgence.convflow.constants` with ``L = L(gamma)`` and ``M`` the
    sampled sup of ``|phi_i|`` over ``K^{delta', L}``.

    With ``strict`` a :class:`SubstitutionError` is raised when the tail
    bound is still above ``tol`` at ``max_degree``.  Otherwise summation
    stops once a whole degree group is below ``tol`` (relative to the
    partial sum) or at ``max_degree``, and the certificate records
    ``certified = False``.  ``ordering="reverse"`` sums the same terms from
    the highest degree down, with reversed groups and factor order.
    """
    if len(phis) != F.r or len(omegas) != F.r:
        raise ValueError("F, phis and omegas must have matching arity")
    if not 1 <= max_degree <= 5:
        raise ValueError("the flow engine evaluates convolutions of at most 5 factors")
    path = convflow._as_path(gamma)
    omega = omegas[0]
    for o in omegas[1:]:
        omega = dfsmod.sum(omega, o)
    omega = omega.with_budget(max(omega.budget, path.length))
    star = dfsmod.star_infinity(omega)
    rep = pathgeo.check_allowed(path, star)
    if not rep.allowed:
        raise SubstitutionError(f"path is not allowed for the stabilized sum: witness {rep.violation}")
    L = path.length
    if delta is None:
        delta = min(pathgeo.clearance(path, star), 0.5 * star.first_threshold * (1 - 1e-9))
    if not delta > 0:
        raise SubstitutionError("the path needs positive clearance")
    rho = convflow.rho_for(omega)
    dprime, c = convflow.constants(delta, L, rho)
    ds = max(dprime, sampling_floor)
    count = 0
    if M is None:
        M = 0.0
        for phi, om in zip(phis, omegas):
            sup, cnt = sampled_sup(phi, om.with_budget(max(om.budget, L)), ds, L, density, seed)
            M, count = max(M, sup), count + cnt

    groups = {d: ks for d, ks in F.degree_groups().items() if d >= 1}
    top = max(groups, default=0)

    def group_value(d, reverse=False):
        ks = groups.get(d, [])
        ks = ks[::-1] if reverse else ks
        total = 0j
        for k in ks:
            fs = _term_factors(k, phis, reverse)
            total += complex(F.coeffs[k]) * convflow.conv_eval(fs, path, omega, quad, ode, rho=rho,
                                                              validate=False)
        return total

    values, envelope, partial = [], [], 0j
    n0 = 0
    certified = False
    for d in range(1, max_degree + 1):
        gv = group_value(d) if d in groups else 0j
        values.append(gv)
        envelope.append(math.exp(math.log(F.C) + d * math.log(F.Lambda * c * M) - math.lgamma(d + 1))
                        if F.Lambda * c * M > 0 else 0.0)
        partial += gv
        n0 = d
        if d >= top:
            certified = True                          # F is a polynomial: nothing omitted
            break
        if log_majorant_tail(F.C, F.Lambda, c, M, d) < math.log(tol):
            certified = True
            break
        if not strict and d in groups and abs(gv) <= tol * max(1.0, abs(partial)):
            break
    lt = -math.inf if n0 >= top else log_majorant_tail(F.C, F.Lambda, c, M, n0)
    if strict and not certified:
        raise SubstitutionError(
            f"majorant tail still 10^{lt / math.log(10):.3g} > tol after degree {n0} "
            f"(Lambda c M = {F.Lambda * c * M:.3g})")
    if ordering == "reverse":
        value = 0j
        for d in range(n0, 0, -1):
            if d in groups:
                value += group_value(d, reverse=True)
    elif ordering == "degree":
        value = complex(sum(values))
    else:
        raise ValueError("ordering must be 'degree' or 'reverse'")
    cert = SubstitutionCertificate(n0, value, M, c, delta, dprime, F.C, F.Lambda, L, lt, tol,
                                   certified, values, envelope, count, seed, ds, ordering)
    return value, cert
