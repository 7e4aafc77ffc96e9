"""Command-line front end.

Exit codes: 0 ok / linearizable, 1 validation error, 2 I/O error,
3 not linearizable, 4 indeterminate, 5 numeric failure or failed check.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import catalog as cat
from .classify import INDETERMINATE, LINEARIZABLE, NOT_LINEARIZABLE, ClassificationError, classify
from .curvature import SingularMetricError, report
from .dynamics import (
    ConstraintError, affine_check, apply_transform, charge_drift, charge_values, integrate,
    noether_charge_from_generator, null_lift_recover, project_to_constraint,
    straightness_residual,
)
from .exprjet import ExprDomainError
from .systems import SamplingError, SpecError, SystemSpec, jacobi_metric, load, sample_points

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NOT, EXIT_INDETERMINATE, EXIT_NUMERIC = range(6)
DECISION_EXIT = {LINEARIZABLE: EXIT_OK, NOT_LINEARIZABLE: EXIT_NOT, INDETERMINATE: EXIT_INDETERMINATE}
NUMERIC_ERRORS = (ConstraintError, SamplingError, ClassificationError, SingularMetricError,
                  ExprDomainError, FloatingPointError)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    command: str
    source: str | None = None
    catalog: str | None = None
    seed: int = 0
    samples: int = 50
    dt: float = 1e-3
    horizon: float | None = None
    overrides: dict[str, float] = field(default_factory=dict)
    output: str | None = None
    format: str = "json"
    verbose: bool = False

    def __post_init__(self):
        if self.seed < 0:
            raise CliError("--seed must be non-negative", EXIT_VALIDATION)
        if self.samples < 1:
            raise CliError("--samples must be positive", EXIT_VALIDATION)
        if not self.dt > 0:
            raise CliError("--dt must be positive", EXIT_VALIDATION)
        if self.horizon is not None and not self.horizon > 0:
            raise CliError("--horizon must be positive", EXIT_VALIDATION)


def _parse_set(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value for {name!r} is not a number") from None


def _vector(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    def d(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d(0))
    g.add_argument("--samples", type=int, default=d(50))
    g.add_argument("--dt", type=float, default=d(1e-3))
    g.add_argument("--horizon", type=float, default=d(None), help="integration horizon T")
    g.add_argument("--set", dest="overrides", type=_parse_set, action="append", default=d([]),
                   metavar="NAME=VALUE", help="override a declared parameter (repeatable)")
    g.add_argument("--output", "-o", default=d(None))
    g.add_argument("--format", choices=("json", "csv"), default=d(None))
    g.add_argument("--verbose", "-v", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    top = _global_options(suppress=False)
    # Sub-commands repeat the flags with suppressed defaults so values given
    # before the command name are not overwritten.
    common = _global_options(suppress=True)

    p = argparse.ArgumentParser(prog="geolin", parents=[top],
                                description="Linearizability analysis of constraint Hamiltonian systems.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="check a system spec file")
    v.add_argument("path")

    def source(sp):
        sp.add_argument("--catalog", default=None, metavar="NAME")

    a = sub.add_parser("analyze", parents=[common], help="classify a system")
    a.add_argument("path", nargs="?")
    source(a)

    i = sub.add_parser("integrate", parents=[common], help="integrate a trajectory")
    i.add_argument("path", nargs="?")
    source(i)
    i.add_argument("--q0", type=_vector, default=None)
    i.add_argument("--direction", type=_vector, default=None)

    ver = sub.add_parser("verify", parents=[common], help="dynamic checks: transform | charges | lift-recovery")
    ver.add_argument("items", nargs="+", metavar="[PATH] WHAT")
    source(ver)
    ver.add_argument("--q0", type=_vector, default=None)
    ver.add_argument("--direction", type=_vector, default=None)

    c = sub.add_parser("catalog", parents=[common], help="list, show or run the built-in catalog")
    c.add_argument("action", choices=("list", "show", "run-all"))
    c.add_argument("name", nargs="?")
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _read_spec(path: str) -> SystemSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(json.dumps([{"path": "$", "message": f"invalid JSON: {exc}"}]), EXIT_VALIDATION) from exc
    try:
        return load(doc)
    except SpecError as exc:
        raise CliError(json.dumps([{"path": p, "message": m} for p, m in exc.errors], indent=2),
                       EXIT_VALIDATION) from exc


def _resolve(cfg: RunConfig):
    """(system, catalog entry or None) with --set overrides applied."""
    if (cfg.source is None) == (cfg.catalog is None):
        raise CliError("give exactly one of a spec path or --catalog NAME", EXIT_VALIDATION)
    entry = None
    if cfg.catalog is not None:
        try:
            entry = cat.catalog_get(cfg.catalog)
        except KeyError as exc:
            raise CliError(str(exc.args[0]), EXIT_VALIDATION) from exc
        s = entry.system
    else:
        s = _read_spec(cfg.source)
    if cfg.overrides:
        try:
            s = s.with_params(**cfg.overrides)
        except KeyError as exc:
            raise CliError(str(exc.args[0]), EXIT_VALIDATION) from exc
    return s, entry


def _emit(cfg: RunConfig, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if cfg.output is None:
        sys.stdout.write(text)
        return
    try:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {cfg.output}: {exc.strerror or exc}", EXIT_IO) from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, default=cat._jsonable)


def _initial_data(cfg: RunConfig, s: SystemSpec, entry, q0, direction):
    run = entry.run if entry is not None else None
    if entry is not None and entry.metric_only:
        raise CliError(f"{entry.name} is a metric-only fixture; it has no dynamics", EXIT_VALIDATION)
    q0 = q0 if q0 is not None else (run.q0 if run else None)
    direction = direction if direction is not None else (run.direction if run else None)
    if q0 is None or direction is None:
        raise CliError("no initial data: pass --q0 and --direction", EXIT_VALIDATION)
    if len(q0) != s.dim or len(direction) != s.dim:
        raise CliError(f"--q0 and --direction need {s.dim} components", EXIT_VALIDATION)
    T = cfg.horizon if cfg.horizon is not None else (run.T if run else 0.5)
    if abs(T / cfg.dt - round(T / cfg.dt)) > 1e-6 or round(T / cfg.dt) < 1:
        raise CliError(f"--horizon {T} must be a whole number of --dt {cfg.dt} steps", EXIT_VALIDATION)
    qd0 = project_to_constraint(s, q0, direction)
    return q0, qd0, T


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(cfg: RunConfig) -> int:
    s = _read_spec(cfg.source)
    _emit(cfg, _dump({"valid": True, "name": s.name, "n": s.dim, "diagnostics": []}))
    return EXIT_OK


def cmd_analyze(cfg: RunConfig) -> int:
    s, _ = _resolve(cfg)
    verdict = classify(s, cfg.samples, cfg.seed)
    out = verdict.to_json()
    if cfg.verbose and s.dim >= 2:
        m = jacobi_metric(s)
        out["curvature_reports"] = [report(m, p).to_json(verbose=True)
                                    for p in sample_points(s, min(3, cfg.samples), cfg.seed)]
    _emit(cfg, _dump(out))
    return DECISION_EXIT[verdict.decision]


def cmd_integrate(cfg: RunConfig, q0=None, direction=None) -> int:
    s, entry = _resolve(cfg)
    q0, qd0, T = _initial_data(cfg, s, entry, q0, direction)
    traj = integrate(s, q0, qd0, T, cfg.dt)
    for tr in s.transforms:
        if tr.target != "lift":
            traj = apply_transform(tr, traj)
    for gen in s.generators:
        ch = noether_charge_from_generator(s, gen)
        traj.columns[f"Phi_{gen.name}"] = charge_values(s, ch, traj)
    if cfg.format == "json":
        out = {"system": s.name, "parameters": dict(s.params), "dt": cfg.dt, "T": T,
               "truncated_at": traj.truncated_at, "max_abs_H": float(np.max(np.abs(traj.H))),
               "t": traj.t.tolist(), "q": traj.q.tolist(), "qdot": traj.qd.tolist(),
               "H": traj.H.tolist(), "tau": traj.tau.tolist(),
               "columns": {k: v.tolist() for k, v in traj.columns.items()}}
        _emit(cfg, _dump(out))
    else:
        _emit(cfg, traj.to_csv())
    return EXIT_OK


def _verify_transform(cfg, s, entry, traj) -> list[dict]:
    items = []
    modes = entry.transform_modes if entry else {}
    candidates = [t for t in s.transforms if t.target != "lift"]
    if not candidates:
        raise CliError(f"{s.name} defines no transform to verify", EXIT_VALIDATION)
    for tr in candidates:
        mode = modes.get(tr.name, cat.STRAIGHTNESS)
        if mode != cat.STRAIGHTNESS:
            items.append({"name": tr.name, "mode": mode, "pass": None,
                          "note": "checked at metric level by `catalog run-all`"})
            continue
        t2 = apply_transform(tr, traj)
        cols = np.column_stack([t2.columns[c] for c in tr.new_coords])
        item = {"name": tr.name, "mode": mode, "straightness": straightness_residual(cols),
                "raw_straightness": straightness_residual(t2.q), "truncated_at": t2.truncated_at}
        if tr.target == "jacobi-canonical":
            try:
                item["affine"] = affine_check(t2, tr.new_coords)
            except ValueError as exc:
                item["affine"] = None
                item["affine_note"] = str(exc)
        item["tolerance"] = 1e-6
        item["pass"] = bool(item["straightness"] < 1e-6 and t2.truncated_at is None)
        items.append(item)
    return items


def cmd_verify(cfg: RunConfig, what: str, q0=None, direction=None) -> int:
    s, entry = _resolve(cfg)
    q0, qd0, T = _initial_data(cfg, s, entry, q0, direction)
    if what == "transform":
        traj = integrate(s, q0, qd0, T, cfg.dt)
        items = _verify_transform(cfg, s, entry, traj)
    elif what == "charges":
        if not s.generators:
            raise CliError(f"{s.name} defines no generators to verify", EXIT_VALIDATION)
        traj = integrate(s, q0, qd0, T, cfg.dt)
        items = []
        for gen in s.generators:
            stats = charge_drift(s, noether_charge_from_generator(s, gen), traj)
            items.append({"name": gen.name, **stats, "tolerance": 1e-7,
                          "pass": bool(stats["max_drift"] < 1e-7)})
    elif what == "lift-recovery":
        items = []
        for I0 in (1.0, -1.0):
            r = null_lift_recover(s, I0, q0, qd0, T, cfg.dt)
            items.append({"name": f"I0={I0:+g}", "residual": r.residual,
                          "fiber_charge_drift": r.fiber_charge_drift, "tolerance": 1e-8,
                          "pass": bool(r.residual < 1e-8)})
    else:
        raise CliError(f"unknown check {what!r}; expected transform, charges or lift-recovery",
                       EXIT_VALIDATION)
    ok = all(it["pass"] is not False for it in items)
    _emit(cfg, _dump({"system": s.name, "what": what, "parameters": dict(s.params), "T": T,
                      "dt": cfg.dt, "items": items, "pass": ok}))
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_catalog(cfg: RunConfig, action: str, name: str | None) -> int:
    if action == "list":
        _emit(cfg, "\n".join(cat.catalog_list()))
        return EXIT_OK
    if action == "show":
        if name is None:
            raise CliError("catalog show needs an entry name", EXIT_VALIDATION)
        try:
            _emit(cfg, _dump(cat.catalog_get(name).describe()))
        except KeyError as exc:
            raise CliError(str(exc.args[0]), EXIT_VALIDATION) from exc
        return EXIT_OK
    rep = cat.run_all(cfg.seed, cfg.samples)
    _emit(cfg, cat.dumps(rep))
    return EXIT_OK if cat.suite_passed(rep) else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        fmt = args.format or ("csv" if args.command == "integrate" else "json")
        source = getattr(args, "path", None)
        what = None
        if args.command == "verify":
            if len(args.items) > 2:
                parser.error("verify takes at most a path and one check name")
            *rest, what = args.items
            source = rest[0] if rest else None
        cfg = RunConfig(args.command, source, getattr(args, "catalog", None), args.seed,
                        args.samples, args.dt, args.horizon, dict(args.overrides), args.output,
                        fmt, args.verbose)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "integrate":
            return cmd_integrate(cfg, args.q0, args.direction)
        if args.command == "verify":
            return cmd_verify(cfg, what, args.q0, args.direction)
        return cmd_catalog(cfg, args.action, args.name)
    except CliError as exc:
        print(f"geolin: {exc}", file=sys.stderr)
        return exc.code
    except NUMERIC_ERRORS as exc:
        print(f"geolin: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
