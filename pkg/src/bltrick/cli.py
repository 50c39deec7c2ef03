"""Command line front door.

    bltrick <subcommand> --config run.json [--set dotted.key=value ...] [--out DIR]

Subcommands: solve, system, multi, probe, verify, oracle, scaling-test,
check.  Exit codes: 0 converged and verified, 2 converged but a
verification metric is above tolerance, 3 not converged, 4 configuration
or hypothesis error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import platform
import sys
import time
from dataclasses import fields
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from . import energy as en
from .expr import ExprError
from .grid import GridError, Profile, make_grid, profile_from_csv, profile_to_csv
from .model import ModelError, NoPositiveGError, SystemSpec, builtin, check_conditions, from_expressions
from .solver import (
    HypothesisError,
    NoNegativeLevelError,
    ProbeFailedError,
    SolverError,
    build_plateau_seed,
    default_plateau_height,
    solve_ground,
    solve_multi,
    solve_system,
    sphere_probe,
)
from .verify import BracketError, distinctness, scaling_law_check, shoot_ground, verify_solution

SUBCOMMANDS = ("solve", "system", "multi", "probe", "verify", "oracle", "scaling-test", "check")

EXIT_OK, EXIT_VERIFY, EXIT_NOT_CONVERGED, EXIT_CONFIG = 0, 2, 3, 4

DEFAULTS = {
    "problem": {"N": 3, "case": None, "builtin": None, "expressions": None, "system": None},
    "grid": {"R": 30.0, "M": 2048, "grading": "uniform"},
    "trick": {"k": "auto"},
    "outputs": {"dir": "out", "csv": True, "json": True, "svg": True, "log_x": False,
                "stem": None},
    "verify": {
        "oracle": False,
        "bracket": [4.0, 5.0],
        "oracle_R": None,
        "profile": None,
        "tolerances": {"residual_rel": 5e-3, "pohozaev": None, "oracle_gap": 1e-2,
                       "boundary_tail": None},
    },
    "multi": {"count": 3},
    "probe": {"j": [1, 2, 3, 4]},
    "scaling": {"t": [0.25, 0.5, 2.0, 4.0], "tolerance": 1e-12},
}

POHOZAEV_DEFAULT = {"positive-mass": 1e-3, "zero-mass": 5e-3, "zero-mass-multi": 5e-2,
                    "system": 5e-3}


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: dict, assignment: str) -> None:
    """Set a leaf by dotted path, e.g. ``grid.M=1024``; values are JSON when
    they parse as JSON and plain strings otherwise."""
    if "=" not in assignment:
        raise ConfigurationError(f"--set expects key=value, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigurationError(f"empty key in --set {assignment!r}")
    node = config
    for key in keys[:-1]:
        nxt = node.get(key)
        if nxt is None:
            nxt = node[key] = {}
        if not isinstance(nxt, dict):
            raise ConfigurationError(f"--set {path}: {key!r} is not a block")
        node = nxt
    node[keys[-1]] = _parse_value(raw)


def load_config(path: Optional[str], overrides=(), out: Optional[str] = None) -> dict:
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigurationError("the config document must be a JSON object")
    unknown = set(user) - set(DEFAULTS)
    if unknown:
        raise ConfigurationError(f"unknown config blocks: {sorted(unknown)}")
    config = _merge(DEFAULTS, user)
    for item in overrides:
        apply_override(config, item)
    if out is not None:
        config["outputs"]["dir"] = out
    return config


def _grading(raw):
    if isinstance(raw, list):
        return tuple(raw)
    return raw


def build_grid(config: dict):
    g = config["grid"]
    try:
        return make_grid(int(config["problem"]["N"]), float(g["R"]), int(g["M"]),
                         _grading(g["grading"]))
    except (TypeError, KeyError) as exc:
        raise ConfigurationError(f"bad grid block: {exc}") from exc


def build_spec(config: dict):
    """Scalar nonlinearity or system potential from the problem block."""
    p = config["problem"]
    N = int(p["N"])
    given = [key for key in ("builtin", "expressions", "system") if p.get(key)]
    if len(given) != 1:
        raise ConfigurationError("problem block needs exactly one of builtin, expressions, system")
    if p.get("builtin"):
        params = dict(p["builtin"])
        name = params.pop("name", None)
        if name is None:
            raise ConfigurationError("problem.builtin needs a name")
        return builtin(name, N=N, case=p.get("case"), **params)
    if p.get("expressions"):
        e = dict(p["expressions"])
        if "g" not in e:
            raise ConfigurationError("problem.expressions needs g")
        return from_expressions(e["g"], e.get("G"), case=p.get("case") or "positive-mass",
                                m=float(e.get("m", 0.0)), q=e.get("q"),
                                table_range=e.get("table_range"))
    s = dict(p["system"])
    if "F" not in s:
        raise ConfigurationError("problem.system needs F")
    return SystemSpec.from_expressions(s["F"], s.get("F_u"), s.get("F_v"),
                                       m=float(s.get("m", 0.5)), q=float(s.get("q", 4.0)))


def build_trick(config: dict) -> en.TrickConfig:
    t = dict(config["trick"])
    if t.get("k") == "auto":
        t["k"] = None
    allowed = {f.name for f in fields(en.TrickConfig)}
    unknown = set(t) - allowed
    if unknown:
        raise ConfigurationError(f"unknown trick fields: {sorted(unknown)}")
    if t.get("witness") is not None:
        t["witness"] = tuple(t["witness"])
    return en.TrickConfig(**t)


# ---------------------------------------------------------------------------
# artifacts


def _clean(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def canonical_json(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit_report(report: dict, path) -> None:
    Path(path).write_text(canonical_json(report))


def svg_plot(profile: Profile, log_x: bool = False, width: int = 640, height: int = 400) -> str:
    """Minimal polyline plot of the profile components against r."""
    r = np.asarray(profile.grid.radii, dtype=float)
    vals = np.atleast_2d(profile.values)
    if log_x:
        keep = r > 0
        x = np.log10(r[keep])
        vals = vals[:, keep]
    else:
        x = r
    lo_y = min(0.0, float(np.min(vals)))
    hi_y = max(float(np.max(vals)), lo_y + 1e-300)
    x0, x1 = float(x[0]), float(x[-1])
    pad = 50

    def px(a):
        return pad + (a - x0) / (x1 - x0) * (width - 2 * pad)

    def py(b):
        return height - pad - (b - lo_y) / (hi_y - lo_y) * (height - 2 * pad)

    colors = ("#1f4e9c", "#b8420f", "#2d7a2d")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{py(0.0):.2f}" x2="{width - pad}" y2="{py(0.0):.2f}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="13">'
        f'{"log10 r" if log_x else "r"}</text>',
        f'<text x="{pad - 6}" y="{py(hi_y):.2f}" text-anchor="end" font-size="11">{hi_y:.4g}</text>',
        f'<text x="{pad - 6}" y="{py(lo_y):.2f}" text-anchor="end" font-size="11">{lo_y:.4g}</text>',
        f'<text x="{pad}" y="{height - pad + 16}" text-anchor="middle" font-size="11">{x0:.4g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="middle" font-size="11">'
        f'{x1:.4g}</text>',
    ]
    # thin very long profiles for a readable file
    step = max(1, x.size // 2000)
    for c in range(vals.shape[0]):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[::step], vals[c, ::step]))
        parts.append(f'<polyline fill="none" stroke="{colors[c % 3]}" stroke-width="1.5" '
                     f'points="{pts}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _versions() -> dict:
    return {"bltrick": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


class Emitter:
    """Writes the artifacts of one run into the output directory."""

    def __init__(self, config: dict, subcommand: str):
        self.out = config["outputs"]
        self.dir = Path(self.out["dir"])
        self.stem = self.out.get("stem") or subcommand.replace("-", "_")
        self.written: list = []

    def _path(self, suffix: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir / f"{self.stem}{suffix}"

    def profile(self, profile: Profile, tag: str = "") -> None:
        if self.out.get("csv", True):
            p = self._path(f"{tag}.csv")
            p.write_text(profile_to_csv(profile))
            self.written.append(str(p))
        if self.out.get("svg", True):
            p = self._path(f"{tag}.svg")
            p.write_text(svg_plot(profile, bool(self.out.get("log_x", False))))
            self.written.append(str(p))

    def report(self, report: dict) -> None:
        if self.out.get("json", True):
            p = self._path(".json")
            emit_report(report, p)
            self.written.append(str(p))


# ---------------------------------------------------------------------------
# subcommands


def _case(spec) -> str:
    return "system" if isinstance(spec, SystemSpec) else spec.case


def _tolerances(config: dict, spec) -> dict:
    tol = dict(config["verify"]["tolerances"])
    if tol.get("pohozaev") is None:
        tol["pohozaev"] = POHOZAEV_DEFAULT[_case(spec)]
    return tol


def _verdict(vrep: dict, tol: dict) -> list:
    """Names of verification metrics above tolerance."""
    checks = {
        "residual_rel": vrep.get("residual_rel"),
        "pohozaev": vrep.get("pohozaev_normalized"),
        "oracle_gap": vrep.get("oracle_gap"),
        "boundary_tail": vrep.get("boundary_tail_rel"),
    }
    bad = []
    for name, val in checks.items():
        bound = tol.get(name)
        if bound is None or val is None:
            continue
        if not (isinstance(val, float) and val <= bound):
            bad.append(name)
    return bad


def _oracle(spec, config: dict, grid):
    v = config["verify"]
    R = float(v["oracle_R"]) if v.get("oracle_R") is not None else grid.R
    return shoot_ground(spec, grid.N, tuple(v["bracket"]), R=R, M=grid.M)


def _finish_solution(rep, spec, config, grid, em: Emitter, base: dict, oracle=None) -> int:
    vrep = verify_solution(rep.solution, spec, oracle=oracle).to_dict()
    tol = _tolerances(config, spec)
    bad = _verdict(vrep, tol)
    base.update({"solve": rep.to_dict(), "verify": vrep, "tolerances": tol,
                 "failed_checks": bad})
    em.profile(rep.solution)
    if not rep.converged:
        code = EXIT_NOT_CONVERGED
    else:
        code = EXIT_VERIFY if bad else EXIT_OK
    base["exit_code"] = code
    em.report(base)
    return code


def cmd_solve(config, spec, grid, em, base) -> int:
    if isinstance(spec, SystemSpec):
        return cmd_system(config, spec, grid, em, base)
    trick = build_trick(config)
    rep = solve_ground(spec, trick, grid)
    oracle = None
    if config["verify"]["oracle"]:
        oracle = _oracle(spec, config, grid)
        base["oracle"] = {"alpha": oracle.alpha, "bracket": list(oracle.bracket),
                          "rounds": oracle.rounds, "classification": oracle.classification,
                          "pohozaev_normalized": oracle.pohozaev_normalized}
    return _finish_solution(rep, spec, config, grid, em, base, oracle)


def cmd_system(config, spec, grid, em, base) -> int:
    if not isinstance(spec, SystemSpec):
        raise ConfigurationError("the system subcommand needs a problem.system block")
    rep = solve_system(spec, build_trick(config), grid)
    return _finish_solution(rep, spec, config, grid, em, base)


def cmd_multi(config, spec, grid, em, base) -> int:
    if isinstance(spec, SystemSpec):
        raise ConfigurationError("multi handles scalar nonlinearities only")
    count = int(config["multi"]["count"])
    reps = solve_multi(spec, build_trick(config), grid, count)
    tol = _tolerances(config, spec)
    solutions = []
    any_bad = False
    for i, rep in enumerate(reps, start=1):
        vrep = verify_solution(rep.solution, spec).to_dict()
        bad = _verdict(vrep, tol)
        any_bad = any_bad or bool(bad)
        solutions.append({"solve": rep.to_dict(), "verify": vrep, "failed_checks": bad})
        em.profile(rep.solution, f"_{i}")
    base["solutions"] = solutions
    base["tolerances"] = tol
    if len(reps) >= 2:
        base["distinctness"] = distinctness([r.solution for r in reps])
    converged = len(reps) == count and all(r.converged for r in reps)
    code = EXIT_NOT_CONVERGED if not converged else (EXIT_VERIFY if any_bad else EXIT_OK)
    base["exit_code"] = code
    em.report(base)
    return code


def cmd_probe(config, spec, grid, em, base) -> int:
    if isinstance(spec, SystemSpec):
        raise ConfigurationError("probe handles scalar nonlinearities only")
    trick = build_trick(config).resolve(spec, grid.N)
    js = config["probe"]["j"]
    js = [int(js)] if isinstance(js, (int, float)) else [int(j) for j in js]
    results = []
    code = EXIT_OK
    for j in js:
        try:
            res = sphere_probe(spec, grid, trick.k, j)
            results.append({"j": j, "found": True, "r": res.r, "sup": res.sup,
                             "dilation": res.dilation, "samples": res.samples})
        except ProbeFailedError as exc:
            results.append({"j": j, "found": False, "error": str(exc)})
            code = EXIT_NOT_CONVERGED
    base["k"] = trick.k
    base["probe"] = results
    base["exit_code"] = code
    em.report(base)
    return code


def cmd_verify(config, spec, grid, em, base) -> int:
    path = config["verify"].get("profile")
    if not path:
        raise ConfigurationError("verify needs verify.profile (a profile CSV)")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read profile {path}: {exc}") from exc
    v = profile_from_csv(text, int(config["problem"]["N"]))
    oracle = _oracle(spec, config, v.grid) if config["verify"]["oracle"] else None
    vrep = verify_solution(v, spec, oracle=oracle).to_dict()
    tol = _tolerances(config, spec)
    bad = _verdict(vrep, tol)
    code = EXIT_VERIFY if bad else EXIT_OK
    base.update({"verify": vrep, "tolerances": tol, "failed_checks": bad, "exit_code": code})
    em.report(base)
    return code


def cmd_oracle(config, spec, grid, em, base) -> int:
    if isinstance(spec, SystemSpec) or spec.case != "positive-mass":
        raise ConfigurationError("the shooting oracle handles positive-mass nonlinearities only")
    shot = _oracle(spec, config, grid)
    base["oracle"] = {"alpha": shot.alpha, "bracket": list(shot.bracket), "rounds": shot.rounds,
                      "classification": shot.classification,
                      "departure_radius": shot.departure_radius,
                      "pohozaev_normalized": shot.pohozaev_normalized}
    em.profile(shot.profile)
    base["exit_code"] = EXIT_OK
    em.report(base)
    return EXIT_OK


def cmd_scaling(config, spec, grid, em, base) -> int:
    sc = config["scaling"]
    ts = sc["t"]
    ts = [float(ts)] if isinstance(ts, (int, float)) else [float(t) for t in ts]
    tol = float(sc.get("tolerance", 1e-12))
    trick = build_trick(config)
    if isinstance(spec, SystemSpec):
        amp = spec.find_witness()
    else:
        amp = trick.xi if trick.xi is not None else default_plateau_height(spec, grid.N)
    seed = build_plateau_seed(spec, grid, amp, trick.t_plateau, trick.skirt)
    N = grid.N
    rows = []
    worst = 0.0
    for t in ts:
        e_phi, e_psi = scaling_law_check(seed, t, spec)
        worst = max(worst, e_phi, e_psi)
        rows.append({"t": t, "factor_phi": t ** (N - 2), "factor_psi": t**N,
                     "error_phi": e_phi, "error_psi": e_psi})
    code = EXIT_OK if worst <= tol else EXIT_VERIFY
    base.update({"scaling": rows, "tolerance": tol, "exit_code": code})
    em.report(base)
    return code


def cmd_check(config, spec, grid, em, base) -> int:
    rep = check_conditions(spec, int(config["problem"]["N"]))
    base["conditions"] = rep.to_dict()
    code = EXIT_OK if rep.ok else EXIT_CONFIG
    base["exit_code"] = code
    em.report(base)
    for name in rep.failed:
        verdict = rep.verdicts[name]
        _diag(f"condition {name} fails: {verdict.note}")
    return code


HANDLERS = {
    "solve": cmd_solve,
    "system": cmd_system,
    "multi": cmd_multi,
    "probe": cmd_probe,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
    "scaling-test": cmd_scaling,
    "check": cmd_check,
}


# ---------------------------------------------------------------------------
# entry points


def _diag(msg: str, label: str = "bltrick") -> None:
    use_color = sys.stderr.isatty() and "NO_COLOR" not in os.environ
    prefix = f"\033[1;31m{label}:\033[0m" if use_color else f"{label}:"
    print(f"{prefix} {msg}", file=sys.stderr)


def run(subcommand: str, config_path: Optional[str], overrides=(), out: Optional[str] = None) -> int:
    """Execute one subcommand and return its exit code."""
    if subcommand not in SUBCOMMANDS:
        _diag(f"unknown subcommand {subcommand!r}")
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        config = load_config(config_path, overrides, out)
        spec = build_spec(config)
        grid = build_grid(config)
        build_trick(config)
        em = Emitter(config, subcommand)
        # the output directory is left out of the echo: it does not affect results
        echo = copy.deepcopy(config)
        echo["outputs"].pop("dir", None)
        base = {"subcommand": subcommand, "config": echo, "versions": _versions(),
                "spec": spec.describe()}
        code = HANDLERS[subcommand](config, spec, grid, em, base)
    except (NoPositiveGError, HypothesisError) as exc:
        _diag(str(exc))
        return EXIT_CONFIG
    except (ConfigurationError, en.ConfigError, ModelError, GridError, ExprError,
            BracketError) as exc:
        _diag(f"configuration error: {exc}")
        return EXIT_CONFIG
    except (NoNegativeLevelError, SolverError) as exc:
        _diag(f"solve failed: {exc}")
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        _diag(f"I/O error: {exc}")
        return EXIT_CONFIG
    # wall time stays out of the report so reruns are byte-identical
    print(f"{subcommand}: exit {code}, wall time {time.perf_counter() - t0:.3f} s", file=sys.stderr)
    for path in em.written:
        print(f"  wrote {path}", file=sys.stderr)
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _diag(message)
        raise SystemExit(EXIT_CONFIG)


def main(argv=None) -> int:
    parser = _Parser(prog="bltrick", description=__doc__.split("\n\n")[0])
    parser.add_argument("subcommand", help=", ".join(SUBCOMMANDS))
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config leaf by dotted path")
    parser.add_argument("--out", help="output directory (overrides outputs.dir)")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.overrides, args.out)


if __name__ == "__main__":
    sys.exit(main())
