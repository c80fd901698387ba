"""Seeded Monte Carlo experiments over the (alpha, beta) plane.

Every trial draws from its own counter-derived random stream keyed on
(master_seed, alpha, beta, trial_index), so a trial can be replayed in
isolation and results do not depend on how work is scheduled.
"""

from __future__ import annotations

import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import __version__
from .solvers import SUCCESS_REL_ERROR, ProblemInstance, relative_error, solve
from .thresholds import beta_w_fundamental

log = logging.getLogger(__name__)

LAWS = ("normal", "rademacher")
_LAW_ALIASES = {"standard-normal": "normal", "gaussian": "normal"}


class SpecError(ValueError):
    pass


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class EnsembleSpec:
    n: int
    alpha: float
    beta: float
    nonzero_law: str = "normal"
    master_seed: int = 0

    def __post_init__(self):
        law = _LAW_ALIASES.get(self.nonzero_law, self.nonzero_law)
        object.__setattr__(self, "nonzero_law", law)
        if law not in LAWS:
            raise SpecError(f"unknown nonzero law {self.nonzero_law!r}")
        if self.n < 1:
            raise SpecError("n must be >= 1")
        if not (0 <= self.master_seed < 2**64):
            raise SpecError("master_seed must be a 64-bit unsigned integer")
        if self.m < 1:
            raise SpecError(f"m = round(alpha n) = {self.m} < 1")
        if self.m > self.n:
            raise SpecError(f"m = {self.m} exceeds n = {self.n}")
        if not 0 <= self.k <= self.m:
            raise SpecError(f"k = round(beta n) = {self.k} outside [0, m={self.m}]")

    @property
    def m(self) -> int:
        return round_half_up(self.alpha * self.n)

    @property
    def k(self) -> int:
        return round_half_up(self.beta * self.n)


def _float_key(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def trial_stream(master_seed: int, alpha: float, beta: float, trial_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(
        entropy=master_seed, spawn_key=(_float_key(alpha), _float_key(beta), trial_index)
    )
    return np.random.Generator(np.random.PCG64(seq))


def sample_problem(n: int, m: int, k: int, rng: np.random.Generator, law: str = "normal") -> ProblemInstance:
    """Gaussian A, uniformly placed k-sparse x with uniform signs, y = A x."""
    if k > m:
        raise SpecError(f"k={k} exceeds m={m}")
    A = rng.standard_normal((m, n))
    support = np.sort(rng.choice(n, size=k, replace=False))
    signs = rng.choice(np.array([-1.0, 1.0]), size=k)
    if law == "normal":
        magnitudes = np.abs(rng.standard_normal(k))
    else:
        magnitudes = np.ones(k)
    x = np.zeros(n)
    x[support] = signs * magnitudes
    return ProblemInstance(A, A @ x, truth=x, sparsity=k, support=support, signs=signs)


def sample_instance(spec: EnsembleSpec, trial_index: int) -> ProblemInstance:
    rng = trial_stream(spec.master_seed, spec.alpha, spec.beta, trial_index)
    inst = sample_problem(spec.n, spec.m, spec.k, rng, spec.nonzero_law)
    inst.seed = spec.master_seed
    return inst


@dataclass
class PhaseCell:
    alpha: float
    beta: float
    trials: int
    successes: int
    mean_rel_error: float

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValueError(f"successes={self.successes} outside [0, trials={self.trials}]")

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")


@dataclass
class PhaseDiagram:
    solver: str
    n: int
    master_seed: int
    cells: list[PhaseCell] = field(default_factory=list)
    version: str = __version__

    @property
    def alpha_grid(self) -> list[float]:
        return list(dict.fromkeys(c.alpha for c in self.cells))

    def row(self, alpha: float) -> list[PhaseCell]:
        return [c for c in self.cells if c.alpha == alpha]


def run_trial(spec: EnsembleSpec, solver: str, trial_index: int) -> float:
    """Relative error of one trial; nan if the solver raised."""
    inst = sample_instance(spec, trial_index)
    try:
        out = solve(solver, inst)
    except Exception as exc:  # counted as a failure
        log.warning("trial %d (alpha=%g, beta=%g, %s) failed: %s", trial_index, spec.alpha, spec.beta, solver, exc)
        return float("nan")
    return relative_error(out.estimate, inst.truth)


def _run_job(job):
    return run_trial(*job)


def _map(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _cell_from_errors(spec: EnsembleSpec, errors: Sequence[float]) -> PhaseCell:
    successes = sum(1 for e in errors if e <= SUCCESS_REL_ERROR)
    finite = [e for e in errors if not math.isnan(e)]
    mean = math.fsum(finite) / len(finite) if finite else float("nan")
    return PhaseCell(spec.alpha, spec.beta, len(errors), successes, mean)


def run_cell(spec: EnsembleSpec, solver: str, trials: int, workers: int = 1) -> PhaseCell:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    errors = _map([(spec, solver, t) for t in range(trials)], workers)
    return _cell_from_errors(spec, errors)


def estimate_phase_diagram(
    alpha_grid: Sequence[float],
    beta_grid: Sequence[float],
    template: EnsembleSpec,
    solver: str,
    trials: int,
    relative: bool = False,
    workers: int = 1,
) -> PhaseDiagram:
    """Success counts on an alpha x beta grid.

    With ``relative=True`` each beta is a multiple of beta_w(alpha). Cells
    whose (alpha, beta) is not a valid ensemble are kept with zero
    successes and a nan error, and logged.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    specs: list[EnsembleSpec | None] = []
    coords = []
    for a in alpha_grid:
        bw = beta_w_fundamental(a).beta_w if relative else 1.0
        for b in beta_grid:
            beta = b * bw
            coords.append((a, beta))
            try:
                specs.append(replace(template, alpha=a, beta=beta))
            except SpecError as exc:
                log.warning("cell (alpha=%g, beta=%g) skipped: %s", a, beta, exc)
                specs.append(None)
    jobs = [(s, solver, t) for s in specs if s is not None for t in range(trials)]
    errors = iter(_map(jobs, workers))
    cells = []
    for (a, beta), s in zip(coords, specs):
        if s is None:
            cells.append(PhaseCell(a, beta, trials, 0, float("nan")))
        else:
            cells.append(_cell_from_errors(s, [next(errors) for _ in range(trials)]))
    return PhaseDiagram(solver, template.n, template.master_seed, cells)


@dataclass
class EmpiricalThreshold:
    alpha: float
    beta_hat: float
    lo: float
    hi: float
    probes: list[tuple[float, float]]
    wide: bool
    non_monotone: bool = False


def _binomial_slack(rate: float, trials: int) -> float:
    return 3.0 * math.sqrt(max(rate * (1.0 - rate), 0.25 / trials) / trials) + 1.0 / trials


def empirical_threshold(
    alpha: float,
    solver: str,
    n: int,
    trials_per_probe: int,
    tol_beta: float,
    master_seed: int = 0,
    nonzero_law: str = "normal",
    workers: int = 1,
) -> EmpiricalThreshold:
    """Bisection on beta for the 50% success level at fixed alpha.

    The bracket starts at [0, alpha]; beta = 0 always succeeds. Probes that
    are non-monotone beyond binomial noise raise a warning and widen the
    bracket to cover every probe pair where the rate rose with beta.
    """
    if tol_beta < 1.0 / n:
        raise ValueError(f"tol_beta={tol_beta} finer than the beta resolution 1/n={1.0 / n}")
    if trials_per_probe < 1:
        raise ValueError("trials_per_probe must be >= 1")
    template = EnsembleSpec(n, alpha, 0.0, nonzero_law, master_seed)
    probes: list[tuple[float, float]] = []

    def rate_at(beta):
        cell = run_cell(replace(template, beta=beta), solver, trials_per_probe, workers)
        probes.append((beta, cell.success_rate))
        log.info("probe alpha=%g beta=%.5f rate=%.3f", alpha, beta, cell.success_rate)
        return cell.success_rate

    lo, hi = 0.0, alpha
    if rate_at(hi) >= 0.5:
        return EmpiricalThreshold(alpha, hi, hi, hi, probes, wide=True)
    while hi - lo > 2.0 * tol_beta:
        mid = 0.5 * (lo + hi)
        if rate_at(mid) >= 0.5:
            lo = mid
        else:
            hi = mid

    ordered = sorted(probes)
    violations = [
        (b1, b2)
        for (b1, r1), (b2, r2) in zip(ordered, ordered[1:])
        if r2 > r1 + _binomial_slack(r1, trials_per_probe)
    ]
    non_monotone = bool(violations)
    if non_monotone:
        log.warning("non-monotone success rates at alpha=%g: %s", alpha, ordered)
        lo = min([lo] + [b1 for b1, _ in violations])
        hi = max([hi] + [b2 for _, b2 in violations])
    wide = trials_per_probe < 10 or non_monotone
    return EmpiricalThreshold(alpha, 0.5 * (lo + hi), lo, hi, probes, wide, non_monotone)
