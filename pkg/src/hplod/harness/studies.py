"""Convergence and decay studies over H, p and ell."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..assembly import AssembledProblem, assemble_problem, energy_norm, l2_norm
from ..correctors import (
    DEFAULT_DOF_CAP,
    CorrectorConfig,
    CorrectorContext,
    compute_basis,
    compute_element_basis,
    compute_ideal_element_basis,
)
from ..errors import ConfigError, NumericalError
from ..mesh import build_mesh, is_power_of_two
from ..multiscale import error_report, solve_multiscale, solve_reference
from ..spaces import CoarseSpace, FineSpace, load_quadrature_order, projection_quadrature_order
from .models import ModelSpec, generate_coefficient, make_rhs
from .results import Row, StudyResult

log = logging.getLogger(__name__)

STUDY_KINDS = ("single", "h-sweep", "ell-sweep", "decay")
STAGNATION_RATIO = 0.9  # successive errors within 10% count as stagnated
FLOOR_FACTOR = 2.0  # fit only errors above this multiple of the sweep minimum


@dataclass
class StudyConfig:
    study: str = "h-sweep"
    dim: int = 2
    H: list[int] = field(default_factory=lambda: [4, 8, 16])  # coarse cells per axis
    p: list[int] = field(default_factory=lambda: [1])
    ell: list[int | None] = field(default_factory=lambda: [None])  # None: saturating
    h: int = 128  # fine cells per axis
    model: ModelSpec = field(default_factory=ModelSpec)
    rhs: str = "f1"
    threads: int = 1
    dof_cap: int = DEFAULT_DOF_CAP

    def validate(self) -> None:
        if self.study not in STUDY_KINDS:
            raise ConfigError(f"unknown study {self.study!r}")
        if self.dim != self.model.dim:
            raise ConfigError("model dimension differs from study dimension")
        for name in ("H", "p", "ell"):
            if not getattr(self, name):
                raise ConfigError(f"sweep list {name} is empty")
        if not is_power_of_two(self.h):
            raise ConfigError(f"h must be a negative power of two (got 1/{self.h})")
        for n in self.H:
            if not is_power_of_two(n):
                raise ConfigError(f"H must be a negative power of two (got 1/{n})")
            if self.h < 2 * n:
                raise ConfigError(f"fine mesh h=1/{self.h} must refine H=1/{n} at least twice")
        if any(q < 0 for q in self.p):
            raise ConfigError("polynomial degrees must be >= 0")
        if any(e is not None and e < 1 for e in self.ell):
            raise ConfigError("ell values must be >= 1 or 'sat'")
        if self.model.kind in ("rough-a1", "rough-a2"):
            if self.h < self.model.n_eps:
                raise ConfigError(f"h=1/{self.h} must resolve eps=1/{self.model.n_eps}")
            if self.model.n_eps < max(self.H):
                raise ConfigError(f"eps=1/{self.model.n_eps} must not exceed H=1/{max(self.H)}")


def ell_label(ell: int | None) -> str:
    return "sat" if ell is None else str(int(ell))


# --------------------------------------------------------------------------
# fits


def fit_eoc(errors, Hs) -> list[float]:
    """Pairwise orders ``log(e_i / e_{i+1}) / log(H_i / H_{i+1})``."""
    e = np.asarray(errors, dtype=float)
    H = np.asarray(Hs, dtype=float)
    if e.size < 2 or e.size != H.size:
        raise ValueError("need at least two (error, H) pairs of equal length")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    return [float(v) for v in np.log(e[:-1] / e[1:]) / np.log(H[:-1] / H[1:])]


def fit_decay(errors, ells) -> float:
    """Least-squares slope of ``log(error)`` against ``ell``."""
    e = np.asarray(errors, dtype=float)
    x = np.asarray(ells, dtype=float)
    if e.size < 2 or e.size != x.size:
        raise ValueError("need at least two (error, ell) pairs of equal length")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    y = np.log(e)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def is_stagnated(errors) -> bool:
    e = list(errors)
    return len(e) >= 2 and abs(e[-1] - e[-2]) <= (1.0 - STAGNATION_RATIO) * abs(e[-2])


def pre_stagnation(errors) -> int:
    """Length of the leading run of errors above ``FLOOR_FACTOR * min(errors)``.

    At least two points are always returned so that a slope can be fitted.
    """
    e = np.asarray(errors, dtype=float)
    floor = FLOOR_FACTOR * e.min()
    k = 0
    while k < e.size and e[k] > floor:
        k += 1
    return max(k, min(2, e.size))


def decay_slope(errors, ells) -> float | None:
    k = pre_stagnation(errors)
    if k < 2:
        return None
    return fit_decay(errors[:k], ells[:k])


# --------------------------------------------------------------------------
# shared setup


@dataclass
class _Setup:
    problem: AssembledProblem
    reference: object
    load_order: int


def _setup(config: StudyConfig) -> _Setup:
    config.validate()
    coef = generate_coefficient(config.model)
    fine = FineSpace(build_mesh(config.dim, config.h))
    f = make_rhs(config.rhs, config.dim)
    load_order = load_quadrature_order(max(config.p))
    problem = assemble_problem(fine, coef, f, load_order)
    ref = solve_reference(problem)
    return _Setup(problem, ref, load_order)


def _metadata(config: StudyConfig, setup: _Setup) -> dict[str, str]:
    lo, hi = config.model.value_range
    coef = setup.problem.coefficient
    return {
        "package": f"hplod {__version__}",
        "model": config.model.kind,
        "coefficient_range": f"{lo!r}:{hi!r}",
        "coefficient_alpha": repr(coef.alpha),
        "coefficient_beta": repr(coef.beta),
        "coefficient_file": config.model.path or "",
        "rhs": config.rhs,
        "load_quadrature": str(setup.load_order),
        "projection_quadrature": ";".join(f"p{q}:{projection_quadrature_order(q)}" for q in config.p),
        "reference_residual": repr(setup.reference.residual),
    }


def _row(config: StudyConfig, study: str, nH: int, p: int, ell, setup: _Setup) -> Row:
    return Row(
        study=study,
        dim=config.dim,
        H=1.0 / nH,
        h=1.0 / config.h,
        eps=setup.problem.coefficient.eps_mesh.size,
        p=p,
        ell=ell_label(ell),
        seed=config.model.seed,
    )


def _run_multiscale(config: StudyConfig, setup: _Setup, nH: int, p: int, ell, failures: list, row: Row):
    t0 = time.perf_counter()
    try:
        coarse = CoarseSpace(build_mesh(config.dim, nH), p)
        ctx = CorrectorContext.build(setup.problem, coarse)
        basis = compute_basis(ctx, CorrectorConfig(ell=ell, threads=config.threads, dof_cap=config.dof_cap))
        ms = solve_multiscale(basis, setup.problem)
        err = error_report(setup.reference, ms, setup.problem)
        row.rel_energy_err = err["rel_energy_err"]
        row.rel_l2_err = err["rel_l2_err"]
    except NumericalError as exc:
        log.warning("row H=1/%d p=%d ell=%s failed: %s", nH, p, ell_label(ell), exc)
        failures.append(type(exc).__name__)
    row.wall_ms = round((time.perf_counter() - t0) * 1e3, 3)


def _finish(rows, meta, failures) -> StudyResult:
    if failures:
        meta["failures"] = ";".join(failures)
    return StudyResult(rows, meta)


def run_single(config: StudyConfig) -> StudyResult:
    setup = _setup(config)
    rows, failures = [], []
    for p in config.p:
        for ell in config.ell:
            for nH in config.H:
                row = _row(config, "single", nH, p, ell, setup)
                _run_multiscale(config, setup, nH, p, ell, failures, row)
                rows.append(row)
    return _finish(rows, _metadata(config, setup), failures)


def run_h_sweep(config: StudyConfig) -> StudyResult:
    """Errors against one shared fine reference for every ``(p, ell, H)``."""
    setup = _setup(config)
    Hs = sorted(config.H)
    rows, failures = [], []
    for p in config.p:
        for ell in config.ell:
            group = []
            for nH in Hs:
                row = _row(config, "h-sweep", nH, p, ell, setup)
                _run_multiscale(config, setup, nH, p, ell, failures, row)
                group.append(row)
            for prev, cur in zip(group, group[1:]):
                if not (prev.failed or cur.failed) and prev.rel_energy_err > 0 and cur.rel_energy_err > 0:
                    cur.eoc = fit_eoc([prev.rel_energy_err, cur.rel_energy_err], [prev.H, cur.H])[0]
            rows.extend(group)
    return _finish(rows, _metadata(config, setup), failures)


def run_ell_sweep(config: StudyConfig) -> StudyResult:
    """Errors against ``ell`` at fixed ``(H, p)`` plus a fitted log-linear slope."""
    setup = _setup(config)
    ells = sorted(config.ell, key=lambda e: math.inf if e is None else e)
    rows, failures = [], []
    for p in config.p:
        for nH in config.H:
            group = []
            for ell in ells:
                row = _row(config, "ell-sweep", nH, p, ell, setup)
                _run_multiscale(config, setup, nH, p, ell, failures, row)
                group.append(row)
            fit = [(int(r.ell), r.rel_energy_err) for r in group if r.ell != "sat" and not r.failed]
            fit = [(e, v) for e, v in fit if e < nH - 1 and v > 0]  # saturated patches excluded
            slope = None
            if len(fit) >= 2:
                slope = decay_slope([v for _, v in fit], [e for e, _ in fit])
            for r in group:
                r.decay_slope = slope
            rows.extend(group)
    return _finish(rows, _metadata(config, setup), failures)


def central_element(mesh) -> int:
    """Element with upper corner at the domain centre (``[0.4375, 0.5]^2`` for H = 1/16)."""
    m = max(mesh.n // 2 - 1, 0)
    return int(mesh.element_index(np.full(mesh.dim, m)))


def run_decay_study(config: StudyConfig) -> StudyResult:
    """Relative energy localization error of one element's basis functions.

    For the central element, compares the ideal (global) basis functions with
    their patch-localized versions, for the lowest-order and highest-order
    local Legendre function.
    """
    setup = _setup(config)
    A, M = setup.problem.stiffness, setup.problem.mass
    ells = sorted(e for e in config.ell if e is not None)
    if not ells:
        raise ConfigError("decay study needs at least one integer ell")
    rows = []
    for nH in config.H:
        mesh = build_mesh(config.dim, nH)
        K = central_element(mesh)
        for p in config.p:
            coarse = CoarseSpace(mesh, p)
            ctx = CorrectorContext.build(setup.problem, coarse)
            t0 = time.perf_counter()
            cfg = CorrectorConfig(dof_cap=config.dof_cap)
            ideal = compute_ideal_element_basis(ctx, K, cfg).to_global(ctx.fine.num_dofs)
            t_ideal = (time.perf_counter() - t0) * 1e3
            for which, j in (("lowest", coarse.lowest_local), ("highest", coarse.highest_local)):
                group = []
                for ell in ells:
                    t1 = time.perf_counter()
                    loc = compute_element_basis(ctx, K, CorrectorConfig(ell=ell, dof_cap=config.dof_cap))
                    diff = ideal[:, j] - loc.to_global(ctx.fine.num_dofs)[:, j]
                    row = _row(config, f"decay:{which}", nH, p, ell, setup)
                    row.rel_energy_err = energy_norm(A, diff) / energy_norm(A, ideal[:, j])
                    row.rel_l2_err = l2_norm(M, diff) / l2_norm(M, ideal[:, j])
                    row.wall_ms = round((time.perf_counter() - t1) * 1e3 + t_ideal, 3)
                    group.append(row)
                reach = max(int(np.max(mesh.element_multi_index(K))), mesh.n - 1 - int(np.min(mesh.element_multi_index(K))))
                fit = [(int(r.ell), r.rel_energy_err) for r in group if int(r.ell) < reach and r.rel_energy_err > 0]
                slope = decay_slope([v for _, v in fit], [e for e, _ in fit]) if len(fit) >= 2 else None
                for r in group:
                    r.decay_slope = slope
                rows.extend(group)
    return _finish(rows, _metadata(config, setup), [])


RUNNERS = {
    "single": run_single,
    "h-sweep": run_h_sweep,
    "ell-sweep": run_ell_sweep,
    "decay": run_decay_study,
}


def run_study(config: StudyConfig) -> StudyResult:
    config.validate()
    return RUNNERS[config.study](config)
