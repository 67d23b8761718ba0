"""Command-line front end.

Every command builds a plain ``RunConfig``, hands it to :func:`run` and
writes the resulting report (JSON, or CSV for ``profile``/``weyl`` when the
output path ends in ``.csv``). Errors go to stderr as a one-line JSON object.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence

from . import report as rp
from .acceptance import check_all
from .amenability import foelner_search, isoperimetric_profile
from .chains import ChainError
from .decider import (
    DecideConfig,
    DecisionError,
    FlowProblem,
    Obstruction,
    cut_count,
    decide,
    make_demand,
    min_capacity,
    psc_verdict,
    solve_feasibility,
)
from .space import SpaceError, SpaceSpec, WindowBudgetError, build_window
from .spectral import (
    MeshSpec,
    SpectralError,
    closed_form_spectrum,
    laplacian_spectrum,
    verify_eigen_covering_bound,
    weyl_check,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4
TWO_PI = 2 * math.pi

COMMANDS = ("decide", "tails", "cut", "psc", "foelner", "profile",
            "spectrum", "weyl", "cover", "check-all")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str, line: int | None = None):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    out: str | None = None
    seed: int = 0
    timing: bool = False


# parameter parsing -------------------------------------------------------------

def _int_list(name, text):
    if isinstance(text, (list, tuple)):
        vals = text
    else:
        try:
            vals = [int(x) for x in str(text).split(",") if x.strip()]
        except ValueError:
            raise ConfigError(name, f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(not isinstance(v, int) or v < 1 for v in vals):
        raise ConfigError(name, "expected a nonempty list of positive integers")
    return [int(v) for v in vals]


def _float_list(name, text):
    if isinstance(text, (list, tuple)):
        vals = text
    else:
        try:
            vals = [float(x) for x in str(text).split(",") if x.strip()]
        except ValueError:
            raise ConfigError(name, f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0) for v in vals):
        raise ConfigError(name, "expected a nonempty list of positive numbers")
    return [float(v) for v in vals]


def _ranged(name, value, lo, hi, kind=int):
    try:
        v = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}") from None
    if kind is int and v != value and not isinstance(value, str):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if not lo <= v <= hi:
        raise ConfigError(name, f"must lie in [{lo}, {hi}], got {v}")
    return v


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _read_json(path: str, what: str):
    p = Path(path)
    if not p.exists():
        raise ConfigError(what, f"file not found: {path}")
    text = p.read_text()
    try:
        return json.loads(text), text
    except json.JSONDecodeError as exc:
        raise ConfigError(what, f"invalid JSON: {exc.msg}", exc.lineno) from None


def load_space(ref: str) -> SpaceSpec:
    """``lattice:2``, ``tree:3`` or a path to a JSON space spec."""
    if ":" in ref and not Path(ref).exists():
        fam, _, arg = ref.partition(":")
        try:
            val = int(arg)
        except ValueError:
            raise ConfigError("space", f"bad shorthand {ref!r}") from None
        try:
            if fam == "lattice":
                return SpaceSpec.lattice(val)
            if fam == "tree":
                return SpaceSpec.tree(val)
        except SpaceError as exc:
            raise ConfigError("space." + str(exc).split(":", 1)[0], str(exc)) from None
        raise ConfigError("space", f"unknown family shorthand {fam!r}")
    data, text = _read_json(ref, "space")
    try:
        return SpaceSpec.from_dict(data)
    except SpaceError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigError(f"space.{key}", str(exc).split(": ", 1)[-1], _line_of(text, key)) from None


def _mesh(params) -> MeshSpec:
    kind = params.get("mesh", "circle")
    dims = _ranged("dims", params.get("dims", 1 if kind != "torus" else 2), 1, 3)
    side = _ranged("side", params.get("side", TWO_PI), 1e-6, 1e6, float)
    sub = _ranged("subdiv", params.get("subdiv", 64), 3, 100_000)
    if kind == "circle":
        return MeshSpec.circle(side, sub)
    if kind == "interval":
        return MeshSpec.interval(side, sub)
    if kind == "torus":
        return MeshSpec.torus((side,) * dims, (sub,) * dims)
    raise ConfigError("mesh", f"unknown mesh {kind!r}")


# commands -----------------------------------------------------------------------

def _decide_config(p) -> DecideConfig:
    return DecideConfig(
        slope_threshold=_ranged("slope_threshold", p.get("slope_threshold", 0.5), 0.0, 10.0, float),
        r2_threshold=_ranged("r2_threshold", p.get("r2_threshold", 0.9), 0.0, 1.0, float),
        stability=_ranged("stability", p.get("stability", 0.10), 0.0, 1.0, float),
    )


def _space_args(p):
    if "space" not in p:
        raise ConfigError("space", "required")
    spec = load_space(p["space"])
    reach = _ranged("reach", p.get("reach", 1), 1, 8)
    return spec, p.get("demand", "all-ones"), reach


def _single_window(p):
    spec, demand, reach = _space_args(p)
    size = _ranged("size", p.get("size", 8), 0, 10_000) if spec.family != "custom" else None
    w = build_window(spec, size)
    return spec, w, make_demand(w, demand), reach


def _labels(w, members):
    return [rp.clean(list(lab) if isinstance(lab, tuple) else lab) for lab in
            (w.labels[int(v)] for v in members)]


def cmd_decide(p):
    spec, demand, reach = _space_args(p)
    v = decide(spec, demand, reach, _int_list("sizes", p.get("sizes", "4,8,16,32")), _decide_config(p))
    return {"space": spec.to_dict(), "verdict": v.to_dict()}


def cmd_psc(p):
    spec, demand, reach = _space_args(p)
    ahat = _ranged("ahat", p.get("ahat", 1), -10**9, 10**9)
    v = decide(spec, demand, reach, _int_list("sizes", p.get("sizes", "4,8,16,32")), _decide_config(p))
    return {"space": spec.to_dict(), "ahat": ahat, "psc": psc_verdict(v, ahat).value,
            "decision": v.to_dict()}


def cmd_cut(p):
    spec, w, c, reach = _single_window(p)
    res = min_capacity(FlowProblem(w, c, reach))
    out = {"space": spec.to_dict(), "window_id": w.id, "n_vertices": w.n_vertices,
           "c_star": res.c_star, "iterations": res.iterations, "region": None}
    if res.region is not None:
        out["region"] = {"members": list(res.region.members), "labels": _labels(w, res.region.members),
                         "sign": res.sign, "cut": cut_count(w, res.region.members, reach),
                         "mass": float(abs(c.coeffs[list(res.region.members)].sum()))}
    return out


def cmd_tails(p):
    spec, w, c, reach = _single_window(p)
    cap = p.get("capacity")
    if cap is None:
        cap = min_capacity(FlowProblem(w, c, reach)).c_star
    cap = _ranged("capacity", cap, 0.0, 1e12, float)
    cert = solve_feasibility(FlowProblem(w, c, reach, cap))
    return {"space": spec.to_dict(), "window_id": w.id, "capacity": cap,
            "certificate": cert.to_dict(), "valid": cert.is_valid(),
            "kind": "Obstruction" if isinstance(cert, Obstruction) else "TailSet"}


def cmd_foelner(p):
    spec = load_space(p["space"]) if "space" in p else None
    if spec is None:
        raise ConfigError("space", "required")
    r = _ranged("r", p.get("r", 1), 1, 8)
    eps = _ranged("epsilon", p.get("epsilon", 0.05), 1e-9, 1 - 1e-9, float)
    budget = _ranged("budget", p.get("budget", 10_000), 1, 10**7)
    rep = foelner_search(spec, r, eps, budget)
    return {"space": spec.to_dict(), "foelner": rep.to_dict()}


def cmd_profile(p):
    if "space" not in p:
        raise ConfigError("space", "required")
    spec = load_space(p["space"])
    r = _ranged("r", p.get("r", 1), 1, 8)
    family = p.get("family", "balls")
    if family not in ("balls", "boxes"):
        raise ConfigError("family", "must be balls or boxes")
    prof = isoperimetric_profile(spec, r, family, _int_list("sizes", p.get("sizes", "1,2,4,8,16")))
    return {"space": spec.to_dict(), "profile": prof.to_dict(),
            "_csv": (["region_id", "vol_R", "vol_dR", "ratio"], prof.to_csv_rows())}


def cmd_spectrum(p):
    m = _mesh(p)
    cutoff = p.get("cutoff")
    cutoff = None if cutoff is None else _ranged("cutoff", cutoff, 0.0, 1e12, float)
    n_eigs = p.get("n_eigs")
    n_eigs = None if n_eigs is None else _ranged("n_eigs", n_eigs, 1, m.n_vertices)
    rep = laplacian_spectrum(m, cutoff=cutoff, n_eigs=n_eigs)
    out = {"spectrum": rep.to_dict()}
    cf = closed_form_spectrum(m)[: len(rep.eigenvalues)]
    out["closed_form_max_relative_error"] = float(
        np.abs(rep.eigenvalues - cf).max() / max(cf.max(), 1e-300))
    return out


def _weyl_meshes(p):
    family = p.get("family", "circle")
    sizes = _int_list("sizes", p.get("sizes", "64,128,256"))
    h = _ranged("spacing", p.get("spacing", TWO_PI / 64), 1e-6, 1e3, float)
    if family == "circle":
        return [MeshSpec.circle(n * h, n) for n in sizes]
    if family == "torus":
        base = sizes[0]
        return [MeshSpec.torus((base * h, n * h), (base, n)) for n in sizes]
    raise ConfigError("family", f"unknown Weyl family {family!r}")


def cmd_weyl(p):
    meshes = _weyl_meshes(p)
    lo = _ranged("lambda_min", p.get("lambda_min", 1.0), 1e-9, 1e9, float)
    hi = _ranged("lambda_max", p.get("lambda_max", 25.0), lo, 1e9, float)
    pts = _ranged("lambda_points", p.get("lambda_points", 97), 2, 100_000)
    rep = weyl_check(meshes, np.linspace(lo, hi, pts))
    d = rep.to_dict()
    d["meshes"] = [m.to_dict() for m in meshes]
    return {"weyl": d, "_csv": (["lambda", "N_lambda", "vol", "n", "bound_rhs"], rep.csv_rows())}


def cmd_cover(p):
    m = _mesh(p)
    eps = _float_list("epsilons", p.get("epsilons", [math.pi / 8, math.pi / 4, math.pi / 2, math.pi]))
    return {"covering": verify_eigen_covering_bound(m, eps).to_dict()}


def cmd_check_all(p, seed):
    profile = p.get("profile", "quick")
    if profile not in ("quick", "full"):
        raise ConfigError("profile", "must be quick or full")
    echo = p.get("_echo")
    return check_all(profile, seed, echo=echo)


HANDLERS = {
    "decide": cmd_decide, "tails": cmd_tails, "cut": cmd_cut, "psc": cmd_psc,
    "foelner": cmd_foelner, "profile": cmd_profile, "spectrum": cmd_spectrum,
    "weyl": cmd_weyl, "cover": cmd_cover,
}


def run(config: RunConfig) -> dict:
    """Dispatch a config and return the report (not yet serialized)."""
    if config.command not in COMMANDS:
        raise ConfigError("command", f"unknown command {config.command!r}")
    start = time.perf_counter()
    params = dict(config.params)
    if config.command == "check-all":
        payload = cmd_check_all(params, config.seed)
    else:
        payload = HANDLERS[config.command](params)
    csv_part = payload.pop("_csv", None)
    echo_cfg = {k: v for k, v in params.items() if not k.startswith("_")}
    diag = {"wall_time_s": time.perf_counter() - start} if config.timing else None
    rep = rp.make_report(config.command, {"params": echo_cfg, "seed": config.seed}, payload, diag)
    if csv_part is not None:
        rep_csv = rp.csv_text(*csv_part)
        return {**rep, "_csv": rep_csv}
    return rep


# argv handling ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("argv", message)


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="coarsehom", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out")
        sp.add_argument("--config", help="JSON file of parameters; flags override it")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--timing", action="store_true", default=None,
                        help="include wall time in diagnostics (breaks byte-identity)")
        return sp

    def space(sp, sizes=True, single=False):
        sp.add_argument("--space")
        sp.add_argument("--demand")
        sp.add_argument("--reach", type=int)
        if sizes:
            sp.add_argument("--sizes")
            sp.add_argument("--slope-threshold", dest="slope_threshold", type=float)
            sp.add_argument("--r2-threshold", dest="r2_threshold", type=float)
            sp.add_argument("--stability", type=float)
        if single:
            sp.add_argument("--size", type=int)

    def mesh(sp):
        sp.add_argument("--mesh", choices=["circle", "torus", "interval"])
        sp.add_argument("--dims", type=int)
        sp.add_argument("--side", type=float)
        sp.add_argument("--subdiv", type=int)

    space(common(sub.add_parser("decide", help="bounded vs growing C* over window sizes")))
    sp = common(sub.add_parser("tails", help="tail set or obstruction at one capacity"))
    space(sp, sizes=False, single=True)
    sp.add_argument("--capacity", type=float)
    space(common(sub.add_parser("cut", help="minimal capacity and its argmax region")),
          sizes=False, single=True)
    sp = common(sub.add_parser("psc", help="scalar-curvature verdict"))
    space(sp)
    sp.add_argument("--ahat", type=int)
    sp = common(sub.add_parser("foelner", help="search for a Foelner region"))
    sp.add_argument("--space")
    sp.add_argument("--r", type=int)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--budget", type=int)
    sp = common(sub.add_parser("profile", help="isoperimetric profile (CSV with .csv --out)"))
    sp.add_argument("--space")
    sp.add_argument("--r", type=int)
    sp.add_argument("--family", choices=["balls", "boxes"])
    sp.add_argument("--sizes")
    sp = common(sub.add_parser("spectrum", help="mesh Laplacian spectrum"))
    mesh(sp)
    sp.add_argument("--cutoff", type=float)
    sp.add_argument("--n-eigs", dest="n_eigs", type=int)
    sp = common(sub.add_parser("weyl", help="counting function against the Weyl bound"))
    sp.add_argument("--family", choices=["circle", "torus"])
    sp.add_argument("--sizes")
    sp.add_argument("--spacing", type=float)
    sp.add_argument("--lambda-min", dest="lambda_min", type=float)
    sp.add_argument("--lambda-max", dest="lambda_max", type=float)
    sp.add_argument("--lambda-points", dest="lambda_points", type=int)
    sp = common(sub.add_parser("cover", help="covering numbers against eigenvalues"))
    mesh(sp)
    sp.add_argument("--epsilons")
    sp = common(sub.add_parser("check-all", help="run every acceptance criterion"))
    grp = sp.add_mutually_exclusive_group()
    grp.add_argument("--quick", dest="profile", action="store_const", const="quick")
    grp.add_argument("--full", dest="profile", action="store_const", const="full")
    return ap


_META = ("command", "out", "config", "seed", "timing")


def config_from_args(argv) -> RunConfig:
    ap = _parser()
    ns = ap.parse_args(argv)
    flags = {k: v for k, v in vars(ns).items() if v is not None}
    params, seed, out, timing = {}, 0, None, False
    if "config" in flags:
        data, text = _read_json(flags["config"], "config")
        if not isinstance(data, dict):
            raise ConfigError("config", "must be a JSON object")
        allowed = {a.dest for a in _subparser(ap, ns.command)._actions} - {"help", "config", "command"}
        for key in data:
            if key not in allowed:
                raise ConfigError(key, f"unknown field for command {ns.command!r}", _line_of(text, key))
        seed = data.pop("seed", 0)
        out = data.pop("out", None)
        timing = bool(data.pop("timing", False))
        params.update(data)
    params.update({k: v for k, v in flags.items() if k not in _META})
    seed = flags.get("seed", seed)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    return RunConfig(ns.command, params, flags.get("out", out), seed, flags.get("timing", timing))


def _subparser(ap, name):
    for action in ap._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _error(kind: str, exc: Exception, code: int, **extra) -> int:
    payload = {"error": kind, "message": str(exc), "exit_code": code, **extra}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        if cfg.command == "check-all":
            cfg.params["_echo"] = lambda line: print(line, file=sys.stderr)
        rep = run(cfg)
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG, field=exc.field, line=exc.line)
    except WindowBudgetError as exc:
        return _error("numerical", exc, EXIT_NUMERIC)
    except (SpaceError, ChainError) as exc:
        name = str(exc).split(":", 1)[0] if ":" in str(exc) else None
        return _error("config", exc, EXIT_CONFIG, field=name)
    except (DecisionError, SpectralError, ArpackNoConvergence, FloatingPointError) as exc:
        return _error("numerical", exc, EXIT_NUMERIC)
    except ValueError as exc:
        name = str(exc).split(":", 1)[0] if ":" in str(exc) else None
        return _error("config", exc, EXIT_CONFIG, field=name)

    csv_part = rep.pop("_csv", None)
    text = rp.dumps(rep)
    if cfg.out:
        target = Path(cfg.out)
        body = csv_part if (csv_part is not None and target.suffix == ".csv") else text
        target.write_text(body)
    else:
        sys.stdout.write(text)
    if cfg.command == "check-all" and not rep["payload"]["passed"]:
        sys.stderr.write(json.dumps({"error": "acceptance", "failures": rep["payload"]["failures"],
                                     "exit_code": EXIT_ACCEPTANCE}) + "\n")
        return EXIT_ACCEPTANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
