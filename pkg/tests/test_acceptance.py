"""Acceptance criteria, one PASS/FAIL line each.

Run under pytest (the lines are repeated in the terminal summary) or
directly with ``python tests/test_acceptance.py``.  Tolerances are the
published acceptance tolerances; nothing here is loosened to make a line
green.
"""
from __future__ import annotations

import contextlib
import functools
import io
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from rodspec.asymptotics import fit_rate, mean_value_residual, run_sweep
from rodspec.cell_problem import beta2_effective, effective_matrix, lambda1_curvature, solve_cell_eigen
from rodspec.cli import load_config, main
from rodspec.direct import solve_example_1d
from rodspec.effective import EffectiveModel, closed_form_nu, hermite_eigenpairs, solve_oscillator_fdm
from rodspec.geometry import CellGeometry, CoefficientSet, CrossSection, RodGeometry

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


@functools.lru_cache(maxsize=None)
def _sweep(name: str):
    cfg = load_config(str(CONFIGS / name))
    return _timed(lambda: run_sweep(cfg.sweep_config(cfg["solver"]["seed"])))


# --- criteria ----------------------------------------------------------------------

def criterion_1():
    def work():
        return [solve_example_1d(e, 2 ** 14) for e in (1e-2, 4e-3, 1e-3)]

    exs, dt = _timed(work)
    first = exs[0]
    pred = math.exp(-1 / (2 * math.sqrt(1e-2)))
    mus = [e.mu1 for e in exs]
    ok = (first.mu1 > 1.0 and 0.5 * pred <= first.sup_err <= 2 * pred and _decreasing(mus)
          and abs(mus[-1] - 1.0) < 0.05 and dt < 10)
    return ok, (f"mu1={mus[0]:.7f}>1, sup_err/pred={first.sup_err / pred:.3f}, "
                f"mu1 ladder={[f'{m:.8f}' for m in mus]}, {dt:.1f}s")


def criterion_2():
    def work():
        exact = [p.nu for p in hermite_eigenpairs(1.0, 2.0, 6)]
        fdm = [p.nu for p in solve_oscillator_fdm(EffectiveModel.oscillator(1.0, 2.0), 6)]
        return exact, fdm

    (exact, fdm), dt = _timed(work)
    ref = [1.0, 3.0, 5.0, 7.0, 9.0, 11.0]
    rel = max(abs(f - r) / r for f, r in zip(fdm, ref))
    ok = exact == ref and rel <= 1e-7 and dt < 5
    return ok, f"closed form exact={exact == ref}, FDM max rel err={rel:.2e}, {dt:.2f}s"


def criterion_3():
    cases = {
        "no hole": (CellGeometry("1", CrossSection(0.5), False), CoefficientSet.isotropic("1", "1")),
        "layered": (CellGeometry("1", CrossSection(0.5), False),
                    CoefficientSet.isotropic("2 + cos(2*pi*y1)", "1")),
        "disk": (CellGeometry("y1^2 + y2^2 - 0.09", CrossSection(0.5), True), CoefficientSet.isotropic("1", "1")),
    }

    def work():
        return {k: (effective_matrix(g, c, 0.0, 1 / 64), effective_matrix(g, c, 0.0, 1 / 128))
                for k, (g, c) in cases.items()}

    res, dt = _timed(work)
    ok = dt < 60
    parts = []
    for name, (A, Af) in res.items():
        nrm = A.norm
        psd = np.min(np.linalg.eigvalsh(A.A)) >= -1e-10 * nrm
        good = (A.asymmetry <= 1e-10 * nrm and psd and A.off_axis <= 5e-3 * nrm
                and Af.off_axis <= max(A.off_axis, 1e-12 * nrm) and A.a_eff > 0)
        ok &= good
        parts.append(f"{name}: a_eff={A.a_eff:.6f} off={A.off_axis:.1e}->{Af.off_axis:.1e} "
                     f"{'ok' if good else 'BAD'}")
    lay = abs(res["layered"][0].a_eff - math.sqrt(3.0))
    ok &= lay <= 5e-3
    return ok, "; ".join(parts) + f"; |a_eff - sqrt3|={lay:.1e}; {dt:.1f}s"


def criterion_4():
    rep, dt = _sweep("model.toml")
    slope = rep.slopes.get("lambda1_shift", float("nan"))
    scaled = [math.sqrt(e) * abs(lam - rep.metadata["cbar0"] / e) for e, lam in rep.column("lam", 1)]
    ok = not rep.errors and -0.65 <= slope <= -0.35 and dt < 15 * 60
    return ok, (f"slope of |lambda1 - cbar0/eps| = {slope:.3f} (target [-0.65, -0.35]); "
                f"sqrt(eps)|...| = {[round(s, 3) for s in scaled]}; {dt:.1f}s")


def criterion_5():
    rep, _ = _sweep("model.toml")
    parts, ok = [], not rep.errors
    for j in (1, 2, 3):
        nu_err = [abs(r.nu_eps - r.nu_eff) for r in rep.rows if r.j == j]
        loc = [r.loc_err for r in rep.rows if r.j == j]
        gaps = [r.gap for r in rep.rows if r.j == j]
        mass = [r.mass_d01 for r in rep.rows if r.j == j]
        flags = (_decreasing(nu_err), _decreasing(loc), all(g > 0 for g in gaps), _decreasing(mass))
        ok &= all(flags)
        parts.append(f"j={j}: " + " ".join(f"{n}={'y' if f else 'N'}" for n, f in zip("abcd", flags))
                     + f" m(0.1)={[round(m, 4) for m in mass]}")
    return ok, "; ".join(parts)


def criterion_6():
    cfg = load_config(str(CONFIGS / "mvt.toml"))
    geom = cfg.geometry()

    def work():
        return [mean_value_residual("cos(2*pi*y1)", cfg["mvt"]["v"], RodGeometry(N), geom, cfg["solver"]["h_y"])
                for N in sorted(cfg.n_cells())]

    res, dt = _timed(work)
    slope = fit_rate([(r.epsilon, r.residual) for r in res])[0]
    ratios = [r.bound_ratio for r in res]
    bounded = max(ratios) <= 1.0 and max(ratios) <= 3 * min(ratios)
    ok = slope >= 0.9 and bounded and dt < 120
    return ok, f"slope={slope:.3f}, bound_ratio={[f'{x:.3f}' for x in ratios]}, {dt:.1f}s"


def criterion_7():
    rep, dt = _sweep("model_beta0.toml")
    rel = [abs(r.lam - r.nu_eff) / r.nu_eff for r in rep.rows if r.j == 1]
    ok = not rep.errors and _decreasing(rel) and rel[-1] < 0.10 and dt < 600
    return ok, f"rel err lambda1={[f'{x:.2e}' for x in rel]}, {dt:.1f}s"


def criterion_8():
    cfg = load_config(str(CONFIGS / "model_beta2.toml"))
    geom, coeffs = cfg.geometry(), cfg.coefficients()
    h = cfg["solver"]["h_y"]

    def work():
        base = solve_cell_eigen(geom, coeffs, 0.0, h)
        # additivity at a few slices on the same (x1-independent) cell
        add = max(abs(solve_cell_eigen(geom, coeffs, x, h, system=base.system.at(x)).lambda1
                      - base.lambda1 - x * x) for x in (-0.3, 0.1, 0.25))
        curv = lambda1_curvature(geom, coeffs, h)
        b2 = beta2_effective(geom, coeffs, h)
        model = EffectiveModel.beta2(b2.a_eff_w, b2.lambda1_curv, b2.c_eff)
        nu_fdm = solve_oscillator_fdm(model, 1)[0].nu
        return add, curv, b2, nu_fdm, closed_form_nu(model, 1)

    (add, curv, b2, nu_fdm, nu_cf), dt = _timed(work)
    rel = abs(nu_fdm - nu_cf) / abs(nu_cf)
    ok = abs(curv - 2.0) <= 5e-2 and add <= 5e-2 and rel <= 1e-6 and dt < 300
    return ok, (f"curvature={curv:.6f}, additivity dev={add:.1e}, a_eff_w={b2.a_eff_w:.6f}, "
                f"c_eff={b2.c_eff:.2e}, nu1 fdm vs closed rel={rel:.1e}, {dt:.1f}s")


def criterion_9():
    runs = [("validate", "model.toml", ["validate.txt"]),
            ("cell", "model.toml", ["cell.csv", "corrector_0.mesh"]),
            ("effective", "model.toml", ["nu_table.csv", "curves.csv"]),
            ("direct", "model.toml", ["direct.csv"]),
            ("example1d", "example1d.toml", ["example1d.csv"]),
            ("sweep", "model.toml", ["sweep.csv", "slopes.csv"]),
            ("mvt-check", "mvt.toml", ["mvt.csv"])]
    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        for cmd, cfg, files in runs:
            with contextlib.redirect_stdout(io.StringIO()):
                codes = [main([cmd, "-c", str(CONFIGS / cfg), "--out", f"{tmp}/{cmd}{k}"]) for k in (0, 1)]
            if codes != [0, 0]:
                bad.append(f"{cmd} exit {codes}")
                continue
            for f in files:
                if Path(f"{tmp}/{cmd}0/{f}").read_bytes() != Path(f"{tmp}/{cmd}1/{f}").read_bytes():
                    bad.append(f"{cmd}:{f}")
    return not bad, f"{len(runs)} commands compared" + (f"; differing: {bad}" if bad else ", all byte-identical")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9]


def _line(k: int, ok: bool, detail: str) -> str:
    return f"criterion {k}: {'PASS' if ok else 'FAIL'} -- {detail}"


@pytest.mark.parametrize("k", range(1, 10))
def test_criterion(k, acceptance_report, capsys):
    ok, detail = CRITERIA[k - 1]()
    line = _line(k, ok, detail)
    acceptance_report(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    failed = 0
    for k, fn in enumerate(CRITERIA, start=1):
        ok, detail = fn()
        failed += not ok
        print(_line(k, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
