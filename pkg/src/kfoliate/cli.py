"""Command line entry point.

    kfoliate run CONFIG
    kfoliate flow --a0 a11,a12,a21,a22 --t-max T [--out PATH]
    kfoliate export-mesh CONFIG --k K --out PATH
    kfoliate verify SUITE [--report PATH] [--dt DT]

Exit codes: 0 success, 1 invalid input or config, 2 solver abort,
3 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .continuation import ContinuationAbort, ForcingMode, SolverConfig
from .equiflow import FlowError, evolve_shape, g_eigen, riccati_rhs, rk4
from .export import atomic_write, mesh_text, report_text, table_text
from .foliation import (FoliationError, FoliationTable, LeafRecord, convergence_sweep)
from .hypgeo import BASE_PLANE, GeometryError, WedgeCore
from .surfcalc import BasePlaneChart
from .verify import SUITES, Check, at_most, run_suite

log = logging.getLogger("kfoliate")

OK, INVALID, ABORT, FAILED = 0, 1, 2, 3


class ConfigError(ValueError):
    """A config problem, anchored to ``path:line`` when the line is known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + message)


@dataclass
class RunConfig:
    core: object
    chart: BasePlaneChart
    task: str
    k_start: float
    k_end: float
    n_leaves: int
    dt: float
    forcing: ForcingMode
    method: str
    det_law_check: bool
    amplitude: float = 0.0
    frequency: int = 1
    csv_path: Path | None = None
    mesh_prefix: str | None = None
    report_path: Path | None = None
    tol_det: float = 1e-4
    source: Path | None = field(default=None, repr=False)

    @property
    def curvatures(self) -> list[float]:
        return [float(k) for k in np.linspace(self.k_start, self.k_end, self.n_leaves)]

    def solver(self) -> SolverConfig:
        return SolverConfig(dt=self.dt, tol_det=self.tol_det, det_law_check=self.det_law_check)


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key = value`` entry, keyed by (section, key)."""
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip().lower()
            lines[(section, "")] = no
        elif section and "=" in stripped and not stripped.startswith(("#", ";")):
            lines[(section, stripped.split("=", 1)[0].strip().lower())] = no
    return lines


class _Reader:
    def __init__(self, path: Path):
        self.path = path
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", path) from exc
        self.parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            self.parser.read_string(text, source=str(path))
        except configparser.ParsingError as exc:
            line = exc.errors[0][0] if exc.errors else None
            raise ConfigError("malformed line", path, line) from exc
        except configparser.Error as exc:
            raise ConfigError(exc.message.split("\n")[0], path, getattr(exc, "lineno", None)) from exc
        self.lines = _key_lines(text)

    def error(self, section, key, message) -> ConfigError:
        line = self.lines.get((section, key)) or self.lines.get((section, ""))
        return ConfigError(f"[{section}] {key}: {message}" if key else message, self.path, line)

    def get(self, section, key, conv=str, default=None, required=False):
        if not self.parser.has_option(section, key):
            if required:
                raise self.error(section, "", f"missing required key [{section}] {key}")
            return default
        raw = self.parser.get(section, key)
        try:
            return conv(raw)
        except ValueError as exc:
            raise self.error(section, key, f"bad value {raw!r} ({exc})") from exc


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def load_config(path) -> RunConfig:
    path = Path(path)
    r = _Reader(path)
    kind = r.get("core", "type", str.lower, "plane")
    if kind == "plane":
        core = BASE_PLANE
    elif kind == "wedge":
        angle = r.get("core", "bend_angle", float, required=True)
        try:
            core = WedgeCore.from_bend_angle(angle)
        except GeometryError as exc:
            raise r.error("core", "bend_angle", str(exc)) from exc
    else:
        raise r.error("core", "type", f"unknown core {kind!r} (plane or wedge)")

    try:
        chart = BasePlaneChart(r.get("chart", "rho_min", float, 0.1), r.get("chart", "rho_max", float, 1.0),
                               r.get("chart", "n_rho", int, 64), r.get("chart", "n_theta", int, 64))
    except ValueError as exc:
        raise r.error("chart", "", f"invalid chart: {exc}") from exc

    task = r.get("run", "task", str.lower, "sweep")
    if task not in ("sweep", "continue"):
        raise r.error("run", "task", f"unknown task {task!r} (sweep or continue)")
    k_start = r.get("run", "k_start", float, required=True)
    k_end = r.get("run", "k_end", float, required=True)
    for key, val in (("k_start", k_start), ("k_end", k_end)):
        if not 0 < val < 1:
            raise r.error("run", key, "must lie in (0, 1)")
    if k_end <= k_start:
        raise r.error("run", "k_end", "must exceed k_start")
    n_leaves = r.get("run", "n_leaves", int, 2)
    if n_leaves < 2:
        raise r.error("run", "n_leaves", "need at least two leaves")
    dt = r.get("run", "dt", float, 1e-2)
    if dt <= 0:
        raise r.error("run", "dt", "must be positive")
    tol_det = r.get("run", "tol_det", float, 1e-4)
    if tol_det <= 0:
        raise r.error("run", "tol_det", "must be positive")
    forcing = r.get("run", "forcing", ForcingMode, ForcingMode.DET_NORMALIZED)
    default_method = "continuation" if task == "continue" else ("newton" if kind == "wedge" else "exact")
    method = r.get("run", "method", str.lower, default_method)
    if method not in ("exact", "continuation", "newton"):
        raise r.error("run", "method", f"unknown method {method!r}")
    if task == "continue" and method != "continuation":
        raise r.error("run", "method", "task 'continue' always uses continuation")
    if kind == "wedge" and method != "newton":
        raise r.error("run", "method", "wedge cores support only the newton method")
    det_law_check = r.get("run", "det_law_check", _bool, False)

    amplitude = r.get("perturbation", "amplitude", float, 0.0)
    frequency = r.get("perturbation", "frequency", int, 1)
    if amplitude and method != "continuation":
        raise r.error("perturbation", "amplitude", "perturbed starts need the continuation method")

    def out(key):
        val = r.get("outputs", key, str, None)
        if val is not None and not val.strip():
            raise r.error("outputs", key, "path must be nonempty")
        return val

    csv_path, mesh_prefix, report = out("csv"), out("mesh_prefix"), out("report")
    base = path.parent
    return RunConfig(core, chart, task, k_start, k_end, n_leaves, dt, forcing, method, det_law_check,
                     amplitude, frequency,
                     base / csv_path if csv_path else None,
                     str(base / mesh_prefix) if mesh_prefix else None,
                     base / report if report else None, tol_det, path)


def compute(cfg: RunConfig, ks=None) -> tuple[FoliationTable, dict]:
    """Build the leaves of a config; returns the table and the leaf points by k."""
    points = {}
    table = convergence_sweep(ks or cfg.curvatures, cfg.core, cfg.chart, cfg.solver(), cfg.method,
                              (cfg.amplitude, cfg.frequency), cfg.forcing,
                              on_leaf=lambda k, imm: points.__setitem__(k, imm.points))
    return table, points


def _first_failure(table: FoliationTable) -> LeafRecord | None:
    return next((r for r in table.records if r.failed), None)


def mesh_path(prefix: str, k: float) -> Path:
    return Path(f"{prefix}_k{k:.4f}.ply")


def leaf_checks(table: FoliationTable, tol_det: float) -> list[Check]:
    return [at_most(f"leaf-k{r.k:.4f}-det-spread", r.det_max - r.det_min, tol_det) for r in table.records]


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    table, points = compute(cfg)
    bad = _first_failure(table)
    if bad is not None:
        print(f"solver abort at k = {bad.k:.4f}: {bad.message}", file=sys.stderr)
        return ABORT
    checks = leaf_checks(table, cfg.tol_det)
    outputs = {}
    if cfg.csv_path:
        outputs[cfg.csv_path] = table_text(table)
    if cfg.mesh_prefix:
        for k, pts in points.items():
            outputs[mesh_path(cfg.mesh_prefix, k)] = mesh_text(pts)
    if cfg.report_path:
        outputs[cfg.report_path] = report_text(checks)
    for p, text in outputs.items():
        atomic_write(p, text)
    if not cfg.csv_path:
        sys.stdout.write(table_text(table))
    return OK if all(c.passed for c in checks) else FAILED


def cmd_export_mesh(args) -> int:
    cfg = load_config(args.config)
    if not 0 < args.k < 1:
        raise ConfigError("--k must lie in (0, 1)")
    ks = [args.k]
    if cfg.method == "continuation" and args.k > cfg.k_start:
        ks = [cfg.k_start, args.k]
    elif cfg.method == "continuation" and args.k < cfg.k_start:
        raise ConfigError("--k must not be below k_start for continued leaves")
    table, points = compute(cfg, ks)
    bad = _first_failure(table)
    if bad is not None:
        print(f"solver abort at k = {bad.k:.4f}: {bad.message}", file=sys.stderr)
        return ABORT
    atomic_write(args.out, mesh_text(points[args.k]))
    return OK


def parse_matrix(raw: str) -> np.ndarray:
    parts = [float(x) for x in raw.split(",")]
    if len(parts) != 4:
        raise ValueError("expected four comma-separated entries a11,a12,a21,a22")
    return np.array(parts).reshape(2, 2)


FLOW_COLUMNS = ("t", "lambda1_closed", "lambda2_closed", "lambda1_rk4", "lambda2_rk4", "max_gap")


def flow_table(A0, t_max: float, samples: int = 21, step: float = 1e-3) -> np.ndarray:
    """Rows (t, closed-form eigenvalues, RK4 eigenvalues, gap) for the equidistant flow of A0."""
    ts = np.linspace(0.0, t_max, samples)
    rows = []
    A, t_prev = np.array(A0, dtype=float), 0.0
    for t in ts:
        A = rk4(lambda _, y: riccati_rhs(y), A, t, step, t_prev)
        t_prev = t
        closed, _ = g_eigen(evolve_shape(A0, None, t))
        stepped, _ = g_eigen(0.5 * (A + A.T))
        rows.append([t, *closed, *stepped, float(np.max(np.abs(closed - stepped)))])
    return np.array(rows)


def cmd_flow(args) -> int:
    try:
        A0 = parse_matrix(args.a0)
    except ValueError as exc:
        raise ConfigError(f"--a0: {exc}") from exc
    if args.t_max < 0 or args.samples < 2:
        raise ConfigError("--t-max must be nonnegative and --samples at least 2")
    if np.max(np.abs(A0 - A0.T)) > 1e-12:
        raise ConfigError("--a0 must be symmetric (self-adjoint for the flat chart metric)")
    try:
        rows = flow_table(A0, args.t_max, args.samples)
    except FlowError as exc:
        raise ConfigError(f"--a0: {exc}") from exc
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FLOW_COLUMNS)
    for row in rows:
        w.writerow([repr(float(x)) for x in row])
    if args.out:
        atomic_write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    gap = float(rows[:, -1].max())
    if gap > 1e-8:
        print(f"closed form and RK4 differ by {gap:.3e}", file=sys.stderr)
        return FAILED
    return OK


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    if args.dt is not None and args.dt <= 0:
        raise ConfigError("--dt must be positive")
    checks = run_suite(args.suite, args.dt)
    text = report_text(checks)
    sys.stdout.write(text)
    if args.report:
        atomic_write(args.report, text)
    return OK if all(c.passed for c in checks) else FAILED


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kfoliate", description="Constant-curvature foliations of convex-core ends.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="compute the leaves described by a config file")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)

    flow = sub.add_parser("flow", help="eigenvalues of the equidistant flow, closed form vs RK4")
    flow.add_argument("--a0", required=True, help="initial shape operator a11,a12,a21,a22")
    flow.add_argument("--t-max", type=float, required=True)
    flow.add_argument("--samples", type=int, default=21, help="number of output rows")
    flow.add_argument("--out", help="CSV path (default: stdout)")
    flow.set_defaults(func=cmd_flow)

    mesh = sub.add_parser("export-mesh", help="write one leaf as a ball-model PLY mesh")
    mesh.add_argument("config")
    mesh.add_argument("--k", type=float, required=True)
    mesh.add_argument("--out", required=True)
    mesh.set_defaults(func=cmd_export_mesh)

    ver = sub.add_parser("verify", help="run an acceptance suite")
    ver.add_argument("suite", help=", ".join(SUITES))
    ver.add_argument("--report", help="also write the report to this path")
    ver.add_argument("--dt", type=float, help="time step for the continuation suite")
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID
    except ContinuationAbort as exc:
        print(f"solver abort ({exc.check}): {exc}", file=sys.stderr)
        return ABORT
    except FoliationError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return ABORT
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return INVALID


if __name__ == "__main__":
    sys.exit(main())
