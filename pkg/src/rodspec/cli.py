"""Command-line front end.

Usage::

    rodspec <command> -c model.ini [--out DIR] [--svg] [--threads N]

Commands: ``validate``, ``cell``, ``effective``, ``direct``, ``example1d``,
``sweep``, ``mvt-check``.  Exit codes: 0 success, 1 usage/config error,
2 hypothesis violation, 3 numerical failure.
"""
from __future__ import annotations

import os

# BLAS threads are pinned before numpy loads so that results are reproducible;
# parallelism, if requested, happens across independent eps instances.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import configparser
import io
import json
import logging
import platform
import re
import sys
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .expr import ExprError, ParseError, parse

log = logging.getLogger("rodspec")

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("validate", "cell", "effective", "direct", "example1d", "sweep", "mvt-check")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)


class UsageError(ValueError):
    pass


# --- config -------------------------------------------------------------------------

def _unquote(raw: str) -> str:
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    return raw


def _number(raw: str) -> float:
    s = _unquote(raw)
    try:
        return float(Fraction(s)) if "/" in s else float(s)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {s!r}") from None


def _integer(raw: str) -> int:
    s = _unquote(raw)
    try:
        return int(s)
    except ValueError:
        raise ValueError(f"not an integer: {s!r}") from None


def _boolean(raw: str) -> bool:
    s = _unquote(raw).lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _expression(raw: str) -> str:
    s = _unquote(raw)
    try:
        parse(s)
    except ParseError as exc:
        raise ValueError(f"bad expression {s!r}: {exc}") from None
    return s


def _list(item):
    def conv(raw: str):
        s = _unquote(raw)
        parts = [p for p in re.split(r"[,\s]+", s.strip().strip("[]")) if p]
        if not parts:
            raise ValueError("empty list")
        return [item(p) for p in parts]
    return conv


def _string(raw: str) -> str:
    return _unquote(raw)


# section -> key -> (converter, default); None default means "optional, unset"
SCHEMA = {
    "geometry": {"f": (_expression, None), "half_width": (_number, 0.5), "hole": (_boolean, None),
                 "n_cells": (_list(_integer), None), "ladder": (_list(_number), None)},
    "coefficients": {"a11": (_expression, "1"), "a12": (_expression, "0"), "a22": (_expression, "1"),
                     "c": (_expression, "1"), "lambda0": (_number, 1e-3)},
    "mode": {"beta": (_integer, 1), "flatness": (_integer, None)},
    "solver": {"h": (_number, None), "h_y": (_number, 1 / 16), "tol": (_number, 1e-9),
               "seed": (_integer, 42), "j_max": (_integer, 3), "l": (_number, None), "n": (_integer, None)},
    "output": {"directory": (_string, "rodspec_out"), "svg": (_boolean, False)},
    "cell": {"slices": (_list(_number), None)},
    "example1d": {"epsilons": (_list(_number), [0.01, 0.004, 0.001]), "n": (_integer, 2 ** 14),
                  "extrapolate": (_boolean, True)},
    "mvt": {"w": (_expression, "cos(2*pi*y1)"), "v": (_expression, None)},
}


@dataclass
class Config:
    values: dict
    text: str = ""
    path: str | None = None
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def error(self, section: str, key: str, message: str) -> ConfigError:
        return ConfigError(f"[{section}] {key}: {message}", self.lines.get((section, key)), self.path)

    # -- derived objects ----------------------------------------------------
    def geometry(self):
        from .geometry import CellGeometry, CrossSection

        g = self.values["geometry"]
        hole = g["hole"] if g["hole"] is not None else g["f"] is not None
        if hole and g["f"] is None:
            raise self.error("geometry", "hole", "hole = true needs a level set F")
        if g["half_width"] <= 0:
            raise self.error("geometry", "half_width", "must be positive")
        return CellGeometry(g["f"] or "1", CrossSection(g["half_width"]), hole)

    def coefficients(self):
        from .geometry import CoefficientSet

        c = self.values["coefficients"]
        if c["lambda0"] <= 0:
            raise self.error("coefficients", "lambda0", "must be positive")
        return CoefficientSet(c["a11"], c["a12"], c["a22"], c["c"], c["lambda0"])

    def n_cells(self) -> list:
        g = self.values["geometry"]
        if g["n_cells"] is not None and g["ladder"] is not None:
            raise self.error("geometry", "ladder", "give n_cells or ladder, not both")
        if g["n_cells"] is not None:
            if any(n < 1 for n in g["n_cells"]):
                raise self.error("geometry", "n_cells", "cell counts must be >= 1")
            return list(g["n_cells"])
        if g["ladder"] is None:
            return [4, 8, 16]
        out = []
        for e in g["ladder"]:
            n = (1.0 / e - 1.0) / 2.0 if e > 0 else -1.0
            if n < 1 or abs(n - round(n)) > 1e-9:
                raise self.error("geometry", "ladder", f"epsilon {e:g} is not 1/(2N+1)")
            out.append(int(round(n)))
        return out

    def sweep_config(self, seed: int):
        from .asymptotics import SweepConfig

        s, m = self.values["solver"], self.values["mode"]
        return SweepConfig(self.geometry(), self.coefficients(), beta=m["beta"], n_cells=tuple(self.n_cells()),
                           j_max=s["j_max"], h_y=s["h_y"], h=s["h"], seed=seed, tol=s["tol"],
                           flatness=m["flatness"], L=s["l"], n=s["n"])

    def plain(self) -> dict:
        return {sec: {k: v for k, v in vals.items()} for sec, vals in self.values.items()}


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:\s\[#;][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict:
    idx, section = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip().lower()
            idx.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line.lstrip().startswith(("#", ";")):
            idx.setdefault((section, m.group(1).strip().lower()), no)
    return idx


def parse_config(text: str, path: str | None = None) -> Config:
    """Parse INI-style text against :data:`SCHEMA` (unknown keys are errors)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None,
                                   default_section="__none__")
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, path) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, path) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", exc.lineno, path) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError("unparseable line", line, path) from None
    lines = _line_index(text)
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        name = sec.strip().lower()
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", lines.get((name, None)), path)
        for key, raw in cp.items(sec):
            key_l = key.strip().lower()
            if key_l not in SCHEMA[name]:
                raise ConfigError(f"[{name}] unknown key {key!r}", lines.get((name, key_l)), path)
            conv = SCHEMA[name][key_l][0]
            try:
                values[name][key_l] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}", lines.get((name, key_l)), path) from None
    cfg = Config(values, text, path, lines)
    _validate(cfg)
    return cfg


def _validate(cfg: Config) -> None:
    m, s = cfg["mode"], cfg["solver"]
    if m["beta"] not in (0, 1, 2):
        raise cfg.error("mode", "beta", "must be 0, 1 or 2")
    if m["flatness"] is not None and (m["flatness"] < 2 or m["flatness"] % 2):
        raise cfg.error("mode", "flatness", "must be an even integer >= 2")
    for key in ("h_y", "tol"):
        if not s[key] > 0:
            raise cfg.error("solver", key, "must be positive")
    if s["h"] is not None and not s["h"] > 0:
        raise cfg.error("solver", "h", "must be positive")
    if s["j_max"] < 1:
        raise cfg.error("solver", "j_max", "must be >= 1")
    if s["l"] is not None and not s["l"] > 0:
        raise cfg.error("solver", "l", "must be positive")
    if cfg["example1d"]["n"] < 1024:
        raise cfg.error("example1d", "n", "must be >= 1024")
    if any(not (0 < e < 1) for e in cfg["example1d"]["epsilons"]):
        raise cfg.error("example1d", "epsilons", "values must lie in (0, 1)")
    cfg.n_cells()


def load_config(path: str) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return parse_config(text, path)


# --- outputs ----------------------------------------------------------------------

class Outputs:
    """Atomic file writer rooted at the output directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.written: list = []

    def write(self, name: str, text: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        target = self.root / name
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.root)
        try:
            with os.fdopen(fd, "w", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        if name not in self.written:
            self.written.append(name)
        return target

    def csv(self, name: str, header: str, rows) -> Path:
        return self.write(name, "\n".join([header] + [",".join(r) for r in rows]) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _manifest(out: Outputs, command: str, cfg: Config, seed: int, summary: dict) -> None:
    data = {
        "command": command,
        "config_path": cfg.path,
        "config_text": cfg.text,
        "config": cfg.plain(),
        "seed": seed,
        "versions": {"rodspec": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "outputs": sorted(out.written),
        "summary": summary,
    }
    out.write("manifest.json", json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


# --- commands -------------------------------------------------------------------------

class HypothesisFailure(RuntimeError):
    def __init__(self, report):
        self.report = report
        super().__init__("; ".join(f"{c.name}: {c.detail}" for c in report.failures()))


def _check_hypotheses(cfg: Config, strict: bool = True):
    from .geometry import validate_hypotheses

    report = validate_hypotheses(cfg.geometry(), cfg.coefficients())
    fails = report.failures()
    if cfg["mode"]["beta"] == 0:      # no concentration needed for a bounded potential
        fails = [c for c in fails if not c.name.startswith("H3")]
    if fails and strict:
        raise HypothesisFailure(report)
    return report


def cmd_validate(cfg, out, seed, args):
    report = _check_hypotheses(cfg, strict=False)
    text = "\n".join(report.lines()) + "\n"
    sys.stdout.write(text)
    out.write("validate.txt", text)
    _manifest(out, "validate", cfg, seed, {"passed": report.passed})
    bad = [c for c in report.failures() if not (cfg["mode"]["beta"] == 0 and c.name.startswith("H3"))]
    return EXIT_HYPOTHESIS if bad else EXIT_OK


def cmd_cell(cfg, out, seed, args):
    from .asymptotics import fmt
    from .cell_problem import effective_matrix
    from .geometry import cbar, cell_measure, minimize_cbar
    from .mesh import write_mesh

    _check_hypotheses(cfg)
    geom, coeffs = cfg.geometry(), cfg.coefficients()
    h = cfg["solver"]["h"] or cfg["solver"]["h_y"]
    slices = cfg["cell"]["slices"]
    if slices is None:
        slices = [minimize_cbar(geom, coeffs).x1_min]
    rows = []
    for k, x1 in enumerate(slices):
        if not -0.5 <= x1 <= 0.5:
            raise cfg.error("cell", "slices", f"slice {x1:g} outside [-1/2, 1/2]")
        E = effective_matrix(geom, coeffs, float(x1), h)
        A = E.A
        rows.append([fmt(x1), fmt(E.a_eff), fmt(A[0, 0]), fmt(A[0, 1]), fmt(A[1, 0]), fmt(A[1, 1]),
                     fmt(cell_measure(geom, float(x1))), fmt(cbar(geom, coeffs, float(x1)))])
        buf = io.StringIO()
        m = E.correctors[1].system.mesh
        write_mesh(m, buf)
        n1, n2 = (E.correctors[i].vertex_values() for i in (1, 2))
        buf.write(f"fields {m.n_vertices} N1 N2\n")
        for a, b in zip(n1, n2):
            buf.write(f"{a:.17g} {b:.17g}\n")
        out.write(f"corrector_{k}.mesh", buf.getvalue())
    out.csv("cell.csv", "x1,a_eff,A11,A12,A21,A22,measure,cbar", rows)
    for r in rows:
        print(f"x1={r[0]} a_eff={r[1]}")
    _manifest(out, "cell", cfg, seed, {"slices": list(slices), "h": h})
    return EXIT_OK


def cmd_effective(cfg, out, seed, args):
    from .asymptotics import effective_data, fmt
    from .geometry import minimize_cbar

    _check_hypotheses(cfg)
    sc = cfg.sweep_config(seed)
    profile = minimize_cbar(sc.geometry, sc.coefficients)
    nus, pairs, cbar0, meta = effective_data(sc, profile)
    meta.pop("_cell", None)
    out.csv("nu_table.csv", "j,nu", [[str(j), fmt(nu)] for j, nu in enumerate(nus, start=1)])
    z = np.asarray(pairs[0].z, dtype=float)
    curves = np.column_stack([z] + [np.asarray(p(z), dtype=float) for p in pairs])
    out.csv("curves.csv", "z," + ",".join(f"v{j}" for j in range(1, len(pairs) + 1)),
            ([fmt(v) for v in row] for row in curves))
    if args.svg:
        from .svg import line_plot

        out.write("curves.svg", line_plot({f"v{j}": (z, curves[:, j]) for j in range(1, len(pairs) + 1)},
                                          title="effective eigenfunctions", xlabel="z", ylabel="v_j"))
    for j, nu in enumerate(nus, start=1):
        print(f"nu_{j} = {nu:.12g}")
    _manifest(out, "effective", cfg, seed, dict(meta, nu=list(nus), cbar0=cbar0))
    return EXIT_OK


def cmd_direct(cfg, out, seed, args):
    from .asymptotics import fmt, rescale_eigenvalue
    from .direct import solve_direct
    from .geometry import RodGeometry, minimize_cbar

    _check_hypotheses(cfg)
    sc = cfg.sweep_config(seed)
    beta = sc.beta
    profile = minimize_cbar(sc.geometry, sc.coefficients) if beta != 0 else None
    cbar0 = 0.0
    if beta == 1:
        cbar0 = profile.cbar_min
    elif beta == 2:
        from .cell_problem import solve_cell_eigen

        cbar0 = solve_cell_eigen(sc.geometry, sc.coefficients, profile.x1_min, sc.h or sc.h_y, seed=seed).lambda1
    k = sc.flatness or (profile.flatness_order if profile else 2)
    rows, summary = [], {}
    for N in sorted(sc.n_cells):
        rod = RodGeometry(N)
        spec = solve_direct(sc.geometry, sc.coefficients, rod, beta, sc.j_max, sc.h_y, tol=sc.tol,
                            seed=seed, profile=profile, flatness=k)
        nu = rescale_eigenvalue(spec.values, rod.epsilon, cbar0, beta, k)
        nu = np.atleast_1d(nu)
        for j in range(sc.j_max):
            gap = spec.values[j + 1] - spec.values[j] if j + 1 < sc.j_max else float("nan")
            rows.append([fmt(rod.epsilon), str(j + 1), fmt(spec.values[j]), fmt(nu[j]),
                         fmt(spec.residuals[j]), fmt(gap), str(spec.mesh.n_vertices), str(seed)])
        summary[str(N)] = {"normalization": spec.normalization, "sigma": spec.sigma}
        print(f"eps={rod.epsilon:.6g} lambda_1={spec.values[0]:.12g}")
    out.csv("direct.csv", "epsilon,j,lambda,nu_eps,residual,gap,n_vertices,seed", rows)
    _manifest(out, "direct", cfg, seed, summary)
    return EXIT_OK


def cmd_example1d(cfg, out, seed, args):
    from .asymptotics import fmt
    from .direct import solve_example_1d

    ex = cfg["example1d"]
    rows, res = [], []
    for eps in ex["epsilons"]:
        r = solve_example_1d(eps, n=ex["n"], seed=seed, extrapolate=ex["extrapolate"])
        res.append(r)
        rows.append([fmt(eps), str(r.n), fmt(r.mu1), fmt(r.mu1_extrapolated), fmt(r.lambda1),
                     fmt(r.sup_err), fmt(r.predicted_sup_err), str(seed)])
        print(f"eps={eps:g} mu1={r.mu1:.12g} sup_err={r.sup_err:.3e} (predicted {r.predicted_sup_err:.3e})")
    out.csv("example1d.csv", "epsilon,n,mu1,mu1_extrapolated,lambda1,sup_err,predicted_sup_err,seed", rows)
    if args.svg:
        from .svg import line_plot

        series = {}
        for r in res:
            step = max(1, len(r.y) // 800)
            series[f"eps={r.epsilon:g}"] = (r.y[::step], r.v1[::step])
        g = np.linspace(-4, 4, 401)
        series["exp(-y^2/2)"] = (g, np.exp(-0.5 * g * g))
        out.write("example1d.svg", line_plot(series, title="ground state", xlabel="y", ylabel="v1"))
    _manifest(out, "example1d", cfg, seed, {"epsilons": ex["epsilons"]})
    return EXIT_OK


def cmd_sweep(cfg, out, seed, args):
    from .asymptotics import fmt, run_sweep

    _check_hypotheses(cfg)
    sc = cfg.sweep_config(seed)
    report = run_sweep(sc, progress=lambda e: print(f"eps={e:.6g} done", flush=True), threads=args.threads)
    out.write("sweep.csv", report.csv())
    out.csv("slopes.csv", "quantity,slope", ([k, fmt(v)] for k, v in sorted(report.slopes.items())))
    if args.svg and report.rows:
        from .svg import line_plot

        js = sorted({r.j for r in report.rows})
        err = {f"|nu-nu_eff| j={j}": tuple(zip(*[(r.epsilon, abs(r.nu_eps - r.nu_eff))
                                                for r in report.rows if r.j == j])) for j in js}
        out.write("sweep_nu.svg", line_plot(err, title="eigenvalue error", xlabel="eps",
                                            ylabel="|nu^eps - nu|", loglog=True))
        loc = {f"E_j j={j}": tuple(zip(*[(r.epsilon, r.loc_err) for r in report.rows if r.j == j])) for j in js}
        out.write("sweep_loc.svg", line_plot(loc, title="localization error", xlabel="eps",
                                             ylabel="E_j", loglog=True))
    for k, v in sorted(report.slopes.items()):
        print(f"slope {k} = {v:.4f}")
    _manifest(out, "sweep", cfg, seed, {"slopes": report.slopes, "errors": report.errors,
                                        "checks": report.checks, "metadata": report.metadata})
    if report.errors:
        for e, msg in sorted(report.errors.items()):
            print(f"eps={e:.6g} failed: {msg}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_mvt(cfg, out, seed, args):
    from .asymptotics import DEFAULT_MVT_PROFILE, fit_rate, fmt, mean_value_residual
    from .geometry import RodGeometry

    _check_hypotheses(cfg, strict=False)
    geom = cfg.geometry()
    w = cfg["mvt"]["w"]
    v = cfg["mvt"]["v"] or DEFAULT_MVT_PROFILE
    rows, pts = [], []
    for N in sorted(cfg.n_cells()):
        r = mean_value_residual(w, v, RodGeometry(N), geom, cfg["solver"]["h_y"])
        pts.append((r.epsilon, r.residual))
        rows.append([fmt(r.epsilon), fmt(r.residual), fmt(r.bound_ratio), fmt(r.term_rod),
                     fmt(r.term_average), fmt(r.v_norm), fmt(r.grad_norm)])
        print(f"eps={r.epsilon:.6g} residual={r.residual:.3e} bound_ratio={r.bound_ratio:.3e}")
    out.csv("mvt.csv", "epsilon,residual,bound_ratio,term_rod,term_average,v_norm,grad_norm", rows)
    summary = {"w": w, "v": v}
    if len(pts) >= 3:
        try:
            slope, _, r2 = fit_rate(pts)
            summary.update(slope=slope, r2=r2)
            print(f"slope = {slope:.4f} (r2 = {r2:.4f})")
        except ValueError as exc:
            summary["slope_error"] = str(exc)
    _manifest(out, "mvt-check", cfg, seed, summary)
    return EXIT_OK


HANDLERS = {"validate": cmd_validate, "cell": cmd_cell, "effective": cmd_effective, "direct": cmd_direct,
            "example1d": cmd_example1d, "sweep": cmd_sweep, "mvt-check": cmd_mvt}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rodspec", description="Spectral homogenization on thin perforated rods.")
    p.add_argument("--version", action="version", version=f"rodspec {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("-c", "--config", required=True, help="INI-style config file")
        s.add_argument("--out", help="output directory (overrides [output] directory)")
        s.add_argument("--svg", action="store_true", default=None, help="also write SVG plots")
        s.add_argument("--threads", type=int, default=1, help="concurrent eps instances (default 1)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _seed(cfg: Config) -> int:
    env = os.environ.get("RODSPEC_SEED")
    if env is None or env.strip() == "":
        return cfg["solver"]["seed"]
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"RODSPEC_SEED must be an integer, got {env!r}") from None


def main(argv=None) -> int:
    from .cell_problem import CellProblemError
    from .direct import DirectError
    from .effective import EffectiveError
    from .eigensolve import ConvergenceError, FactorizationError
    from .fem import AssemblyError
    from .geometry import GeometryError, HypothesisViolation

    numeric = (FactorizationError, ConvergenceError, CellProblemError, DirectError, EffectiveError,
               AssemblyError, GeometryError, ExprError, FloatingPointError, np.linalg.LinAlgError)
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing command")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args.config)
        seed = _seed(cfg)
        if args.svg is None:
            args.svg = cfg["output"]["svg"]
        out = Outputs(Path(args.out or cfg["output"]["directory"]))
        return HANDLERS[args.command](cfg, out, seed, args)
    except (UsageError, ConfigError) as exc:
        print(f"rodspec: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisFailure as exc:
        print("rodspec: hypothesis violation", file=sys.stderr)
        for line in exc.report.lines():
            if "FAIL" in line:
                print(line, file=sys.stderr)
        return EXIT_HYPOTHESIS
    except HypothesisViolation as exc:
        print(f"rodspec: hypothesis violation: {exc} witness={exc.witness}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except numeric as exc:
        print(f"rodspec: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
