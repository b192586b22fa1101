"""Command-line front end.

Subcommands ``dfs``, ``path``, ``germ``, ``conv``, ``subst`` and ``plot``.
JSON goes to stdout unless ``--out`` is given.  Exit codes: 0 success,
1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import convflow, germs, oracles, pathgeo, plotting, substitution
from . import dfs as dfsmod
from .errors import ResurgenceError

SCHEMAS = """\
schemas:
  dfs.v1          {"budget": L, "steps": [{"L": t, "points": [[re, im], ...]}, ...]}
                  inline: closed:1,2@5  (closed discrete set {1, 2}, budget 5)
  path.v1         {"vertices": [[0, 0], [re, im], ...]}
                  inline: 1j,2+1j,2.5  (vertices after 0)
  germ.v1         {"center": [re, im], "coeffs": [[re, im], ...], "radius_hint": r, "err": e}
  powerseries.v1  {"r": 1, "coeffs": [{"k": [2], "c": [1, 0]}], "C": c, "Lambda": l}
                  inline: geometric:K, monomial:2
  factors         pole:1, log:1, power:1:0.5, exp, one, optionally scaled as 0.1*pole:1
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n\n{SCHEMAS}")
        sys.exit(2)


class UsageError(Exception):
    pass


# --- input helpers ---------------------------------------------------------------

def _read_json(arg: str):
    try:
        with open(arg) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {arg}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{arg} is not valid JSON: {exc}") from exc


def _complex_list(text: str) -> list[complex]:
    try:
        return [complex(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse complex list {text!r}") from exc


def load_dfs(arg: str) -> dfsmod.DFS:
    if arg.startswith("closed:"):
        body = arg[len("closed:"):]
        pts, _, budget = body.partition("@")
        if not budget:
            raise UsageError("inline d.f.s. needs a budget: closed:1,2@5")
        return dfsmod.from_closed_discrete(_complex_list(pts), float(budget))
    if arg.startswith("trivial@"):
        return dfsmod.trivial(float(arg.split("@", 1)[1]))
    return dfsmod.from_json(_read_json(arg))


def load_path(arg: str) -> pathgeo.PolyPath:
    if os.path.exists(arg):
        return pathgeo.from_json(_read_json(arg))
    pts = _complex_list(arg)
    if pts and pts[0] == 0:
        pts = pts[1:]
    return pathgeo.PolyPath.through(pts)


def load_F(arg: str) -> substitution.PowerSeriesF:
    if arg.startswith("geometric:"):
        return substitution.geometric(int(arg.split(":", 1)[1]))
    if arg.startswith("monomial:"):
        return substitution.monomial([int(x) for x in arg.split(":", 1)[1].split(",")])
    return substitution.PowerSeriesF.from_json(_read_json(arg))


def load_series(text: str) -> germs.FormalSeries:
    vals = []
    for t in text.split(","):
        t = t.strip()
        try:
            vals.append(int(t))
        except ValueError:
            try:
                vals.append(complex(t))
            except ValueError as exc:
                raise UsageError(f"cannot parse coefficient {t!r}") from exc
    return germs.FormalSeries(tuple(vals))


def _factors(text: str) -> list[str]:
    out = [t.strip() for t in text.split(",") if t.strip()]
    for t in out:
        try:
            oracles.parse(t)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    return out


def _cx(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _series_json(s: germs.FormalSeries) -> dict:
    return {"schema": "series.v1", "coeffs": [_cx(c) for c in s.coeffs],
            "exact": [str(c) for c in s.coeffs] if s.exact else None}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def emit(doc, out: str | None):
    text = json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text)


# --- subcommands -------------------------------------------------------------------

def cmd_dfs(a, cfg):
    if a.op == "sum":
        if len(a.inputs) != 2:
            raise UsageError("dfs sum needs two inputs")
        res = dfsmod.sum(load_dfs(a.inputs[0]), load_dfs(a.inputs[1]))
        return dfsmod.to_json(res)
    if len(a.inputs) != 1:
        raise UsageError(f"dfs {a.op} needs one input")
    omega = load_dfs(a.inputs[0])
    if a.op == "star":
        return dfsmod.to_json(dfsmod.star_power(omega, a.n))
    if a.op == "starinf":
        return dfsmod.to_json(dfsmod.star_infinity(omega))
    if a.op == "closure":
        if a.L is None:
            raise UsageError("dfs closure needs --L")
        pts = sorted(dfsmod.upper_value(omega, a.L), key=lambda z: (z.real, z.imag))
        return {"L": a.L, "points": [_cx(z) for z in pts]}
    if a.op == "eta":
        if a.lam is None or a.xi is None:
            raise UsageError("dfs eta needs --lam and --xi")
        return {"lam": a.lam, "xi": _cx(complex(a.xi)), "eta": dfsmod.eta(omega, (a.lam, complex(a.xi)))}
    raise UsageError(a.op)  # pragma: no cover


def cmd_path(a, cfg):
    omega = load_dfs(a.dfs)
    if a.op == "check":
        path = load_path(a.path)
        rep = pathgeo.check_allowed(path, omega)
        return {"allowed": rep.allowed, "margin": rep.margin, "length": path.length,
                "violation": None if rep.violation is None else {"t": rep.violation[0],
                                                                 "omega": _cx(rep.violation[1])},
                "clearance": pathgeo.clearance(path, omega)}
    if a.op == "plan":
        path = pathgeo.plan_path(omega, complex(a.target), a.maxlen, a.delta)
        doc = pathgeo.to_json(path)
        doc["clearance"] = pathgeo.clearance(path, omega)
        doc["length"] = path.length
        return doc
    if a.op == "sample":
        seed = cfg.seed if a.seed is None else a.seed
        density = cfg.sampler_density if a.density is None else a.density
        samples = pathgeo.sample_boundary(omega, a.delta, a.maxlen, density, seed)
        if a.svg:
            _write(a.svg, plotting.render_svg(plotting.Scene(omega, [p.array for p, _ in samples])))
        return {"seed": seed, "density": density, "delta": a.delta, "maxlen": a.maxlen,
                "samples": [{"vertices": pathgeo.to_json(p)["vertices"], "end": _cx(e)}
                            for p, e in samples]}
    raise UsageError(a.op)  # pragma: no cover


def _germ_arg(text: str, N: int) -> germs.Germ:
    if os.path.exists(text):
        return germs.Germ.from_json(_read_json(text))
    return germs.germ_from_oracle(oracles.parse(text), N)


def cmd_germ(a, cfg):
    N = cfg.truncation if a.N is None else a.N
    if a.op == "borel":
        c0, g = germs.borel(load_series(a.series))
        return {"constant": _cx(c0), "germ": g.to_json()}
    if a.op == "inverse":
        g = _germ_arg(a.germ, N)
        return _series_json(germs.inverse_borel(complex(a.constant), g))
    if a.op == "conv0":
        return germs.conv_origin(_germ_arg(a.a, N), _germ_arg(a.b, N)).to_json()
    if a.op == "continue":
        g = _germ_arg(a.f, N)
        path = load_path(a.path)
        omega = load_dfs(a.dfs) if a.dfs else None
        if a.pure:
            g = germs.Germ(g.center, g.coeffs, g.radius_hint, g.err)
        out = germs.continue_along(g, path, omega, policy=cfg.policy())
        return out.to_json()
    raise UsageError(a.op)  # pragma: no cover


def cmd_conv(a, cfg):
    omega = load_dfs(a.dfs)
    quad, ode = cfg.quad(), cfg.ode()
    if a.op == "eval":
        fs = _factors(a.fs)
        path = load_path(a.path)
        res = convflow.conv_eval_detailed(fs, path, omega, quad, ode)
        if a.svg:
            tracks = res.trace.tracks()
            face = np.isclose(res.trace.s.sum(axis=1), 1.0)
            bundle = [tracks[:, face, i] for i in range(len(fs))]
            _write(a.svg, plotting.render_svg(plotting.Scene(omega, [path.array], bundle)))
        doc = res.to_json()
        doc.update({"fs": fs, "n": len(fs), "path": pathgeo.to_json(path)["vertices"]})
        return doc
    if a.op == "verify-bound":
        fs = _factors(a.fs)
        if a.n is not None and a.n != len(fs):
            if len(fs) != 1:
                raise UsageError("--n must match the number of factors")
            fs = fs * a.n
        seed = cfg.seed if a.seed is None else a.seed
        density = cfg.sampler_density if a.density is None else a.density
        cert = convflow.verify_bound(fs, omega, a.delta, a.L, density, seed, quad=quad, ode=ode)
        doc = cert.to_json()
        doc["dfs"] = dfsmod.to_json(omega)
        doc["density"] = density
        if a.out_dir:
            os.makedirs(a.out_dir, exist_ok=True)
            stem = os.path.join(a.out_dir, a.stem)
            with open(stem + "_profiles.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["l"] + [f"sup_f{i + 1}" for i in range(len(fs))])
                for k, ell in enumerate(cert.grid):
                    w.writerow([repr(ell)] + [repr(p[k]) for p in cert.profiles])
            _write(stem + "_profiles.svg", plotting.render_profiles(cert.grid, cert.profiles, fs))
            emit(doc, stem + ".json")
        return doc
    if a.op == "jacobian-check":
        path = load_path(a.path)
        fp = convflow.FlowPath.from_path(path, convflow.rho_for(omega))
        trace = convflow.lattice_flow(a.n, a.m, fp, omega, ode, a.delta, grade=1.0)
        rep = convflow.jacobian_bound_check(trace, a.n, a.m, a.delta)
        doc = rep.to_json()
        doc.update(convflow.invariant_report(trace, omega, a.delta))
        return doc
    raise UsageError(a.op)  # pragma: no cover


def cmd_subst(a, cfg):
    F = load_F(a.F)
    if a.op == "formal":
        phis = [load_series(t) for t in a.phis.split(";")]
        return _series_json(substitution.formal_substitute(F, phis, a.N))
    if a.op == "eval":
        phis = _factors(a.phis)
        omegas = [load_dfs(t) for t in a.dfs.split(";")]
        if len(omegas) == 1:
            omegas = omegas * len(phis)
        seed = cfg.seed if a.seed is None else a.seed
        value, cert = substitution.borel_substitute_eval(
            F, phis, load_path(a.path), omegas, tol=a.tol, seed=seed, strict=a.strict,
            max_degree=a.max_degree, quad=cfg.quad(), ode=cfg.ode())
        doc = cert.to_json()
        doc["F"] = F.to_json()
        doc["phis"] = phis
        if a.svg:
            _write(a.svg, plotting.render_terms(cert.group_values, cert.envelope))
        return doc
    raise UsageError(a.op)  # pragma: no cover


def cmd_plot(a, cfg):
    omega = load_dfs(a.dfs) if a.dfs else None
    paths = [load_path(p) for p in (a.path or [])]
    tracks = []
    if a.tracks and paths and omega is not None:
        n, m = a.tracks
        fp = convflow.FlowPath.from_path(paths[0], convflow.rho_for(omega))
        trace = convflow.lattice_flow(n, m, fp, omega, cfg.ode())
        T = trace.tracks()
        tracks = [T[..., i] for i in range(n)]
    svg = plotting.render_svg(plotting.Scene(omega, [p.array for p in paths], tracks, a.title or ""))
    if a.out:
        _write(a.out, svg)
        return None
    sys.stdout.write(svg)
    return None


# --- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="resurgence", description="Computations with endlessly continuable germs.",
                epilog=SCHEMAS, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="RunConfig JSON (default: $RESURGENCE_CONFIG)")
    p.add_argument("--seed", type=int, dest="global_seed", help="override the configured seed")
    p.add_argument("--out", "-o", help="write JSON here instead of stdout")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    d = sub.add_parser("dfs", help="discrete filtered sets")
    d.add_argument("op", choices=["sum", "star", "starinf", "closure", "eta"])
    d.add_argument("inputs", nargs="+", help="dfs.v1 files or inline closed:...@budget")
    d.add_argument("--n", type=int, default=2)
    d.add_argument("--L", type=float)
    d.add_argument("--lam", type=float)
    d.add_argument("--xi")

    q = sub.add_parser("path", help="allowed paths")
    q.add_argument("op", choices=["check", "plan", "sample"])
    q.add_argument("--dfs", required=True)
    q.add_argument("--path")
    q.add_argument("--target")
    q.add_argument("--delta", type=float, default=0.1)
    q.add_argument("--maxlen", type=float, default=3.0)
    q.add_argument("--density", type=int)
    q.add_argument("--seed", type=int)
    q.add_argument("--svg")

    g = sub.add_parser("germ", help="germs and the Borel transform")
    g.add_argument("op", choices=["borel", "inverse", "conv0", "continue"])
    g.add_argument("--series", help="coefficients phi_0,phi_1,...")
    g.add_argument("--germ")
    g.add_argument("--constant", default="0")
    g.add_argument("--a")
    g.add_argument("--b")
    g.add_argument("--f", help="factor notation or germ.v1 file")
    g.add_argument("--path")
    g.add_argument("--dfs")
    g.add_argument("--N", type=int)
    g.add_argument("--pure", action="store_true", help="drop the closed-form tag (pure Taylor chain)")

    c = sub.add_parser("conv", help="convolutions along allowed paths")
    c.add_argument("op", choices=["eval", "verify-bound", "jacobian-check"])
    c.add_argument("--dfs", required=True)
    c.add_argument("--fs", default="pole:1")
    c.add_argument("--n", type=int)
    c.add_argument("--m", type=int, default=8)
    c.add_argument("--path")
    c.add_argument("--delta", type=float, default=0.2)
    c.add_argument("--L", type=float, default=3.0)
    c.add_argument("--density", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out-dir")
    c.add_argument("--stem", default="certificate")
    c.add_argument("--svg")

    s = sub.add_parser("subst", help="substitution into power series")
    s.add_argument("op", choices=["formal", "eval"])
    s.add_argument("--F", required=True, help="powerseries.v1 file, geometric:K or monomial:k1,...")
    s.add_argument("--phis", required=True, help="series (formal, ';'-separated) or factors (eval)")
    s.add_argument("--N", type=int)
    s.add_argument("--path")
    s.add_argument("--dfs", help="one d.f.s. per factor, ';'-separated")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-degree", type=int, default=5)
    s.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--svg")

    pl = sub.add_parser("plot", help="SVG of singular points, paths and node tracks")
    pl.add_argument("--dfs")
    pl.add_argument("--path", action="append")
    pl.add_argument("--tracks", type=int, nargs=2, metavar=("N", "M"))
    pl.add_argument("--title")
    for sp in (d, q, g, c, s, pl):
        sp.add_argument("--out", "-o", default=argparse.SUPPRESS, help="output file")
    return p


REQUIRED = {
    ("path", "check"): ["path"], ("path", "plan"): ["target"],
    ("germ", "borel"): ["series"], ("germ", "inverse"): ["germ"], ("germ", "conv0"): ["a", "b"],
    ("germ", "continue"): ["f", "path"], ("conv", "eval"): ["path"],
    ("conv", "jacobian-check"): ["path", "n"], ("subst", "eval"): ["path", "dfs"],
}
HANDLERS = {"dfs": cmd_dfs, "path": cmd_path, "germ": cmd_germ, "conv": cmd_conv,
            "subst": cmd_subst, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        for name in REQUIRED.get((a.cmd, getattr(a, "op", None)), []):
            if getattr(a, name, None) is None:
                raise UsageError(f"{a.cmd} {a.op} needs --{name.replace('_', '-')}")
        cfg = cfgmod.load(a.config).override(seed=a.global_seed)
        doc = HANDLERS[a.cmd](a, cfg)
        if doc is not None:
            emit(doc, a.out)
        return 0
    except UsageError as exc:
        sys.stderr.write(f"resurgence: usage error: {exc}\n\n{SCHEMAS}")
        return 2
    except (ResurgenceError, ValueError, ZeroDivisionError) as exc:
        sys.stderr.write(f"resurgence: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
