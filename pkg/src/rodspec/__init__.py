"""Spectral homogenization and eigenfunction localization on thin perforated rods.

Submodules are imported lazily so that the command-line entry point can pin
BLAS threading before numpy is loaded.

Modules
-------
expr          expression parser/evaluator for coefficient and level-set fields
geometry      cell/rod geometry, coefficient sets, averaged potential, hypotheses
mesh          level-set cell meshes and glued rod meshes
fem           P1 assembly (stiffness, mass, corrector right-hand sides)
eigensolve    LDL^T factorisation with inertia, shift-invert Lanczos
cell_problem  correctors, effective matrix, cell eigenproblem (beta = 2)
effective     effective oscillators and the bounded-potential Sturm--Liouville problem
direct        the full eps-rod eigenproblem and the 1D example
asymptotics   rescaling, localisation metrics, mean-value check, sweeps
cli           command-line front end
"""
from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = ("expr", "geometry", "mesh", "fem", "eigensolve", "cell_problem", "effective",
               "direct", "asymptotics", "cli", "svg")
_EXPORTS = {
    "parse": "expr", "evaluate": "expr", "Expr": "expr",
    "CellGeometry": "geometry", "CrossSection": "geometry", "CoefficientSet": "geometry",
    "RodGeometry": "geometry", "minimize_cbar": "geometry", "validate_hypotheses": "geometry",
    "mesh_cell": "mesh", "mesh_rod": "mesh",
    "smallest_eigenpairs": "eigensolve",
    "effective_matrix": "cell_problem", "solve_corrector": "cell_problem",
    "solve_cell_eigen": "cell_problem", "beta2_effective": "cell_problem",
    "hermite_eigenpairs": "effective", "solve_oscillator_fdm": "effective",
    "solve_sturm_liouville_beta0": "effective",
    "solve_direct": "direct", "solve_example_1d": "direct",
    "run_sweep": "asymptotics", "SweepConfig": "asymptotics", "fit_rate": "asymptotics",
}

__all__ = sorted(_EXPORTS) + list(_SUBMODULES)


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
