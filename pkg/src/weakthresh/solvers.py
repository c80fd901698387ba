"""Sparse recovery solvers: AMP, basis pursuit, OMP, plus checking tools.

All solvers take a :class:`ProblemInstance` and return a
:class:`RecoveryOutcome`. Matrices are plain numpy arrays with i.i.d.
N(0, 1) entries in the usual ensemble; AMP rescales internally to unit
column norm, the other solvers are scale invariant.
"""

from __future__ import annotations

import functools
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space, solve_triangular
from scipy.optimize import linprog

from .thresholds import beta_w_amp

log = logging.getLogger(__name__)

SUCCESS_REL_ERROR = 1e-4
ORACLE_MAX_N = 16
ORACLE_MAX_M = 8


class SolverError(RuntimeError):
    pass


class RankDeficiencyError(SolverError):
    pass


class NumericalError(SolverError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message, outcome=None):
        super().__init__(message)
        self.outcome = outcome


class DivergenceError(SolverError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class PreconditionError(ValueError):
    pass


class OracleSizeError(ValueError):
    pass


@dataclass
class ProblemInstance:
    matrix: np.ndarray
    measurements: np.ndarray
    truth: np.ndarray | None = None
    sparsity: int | None = None
    support: np.ndarray | None = None
    signs: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.measurements = np.asarray(self.measurements, dtype=float)
        if self.matrix.ndim != 2:
            raise ValueError("matrix must be 2-D")
        m, n = self.matrix.shape
        if m > n:
            raise ValueError(f"need m <= n, got {m}x{n}")
        if self.measurements.shape != (m,):
            raise ValueError(f"measurements must have shape ({m},), got {self.measurements.shape}")
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float)
            if self.truth.shape != (n,):
                raise ValueError(f"truth must have shape ({n},)")
            nnz = int(np.count_nonzero(self.truth))
            if self.sparsity is None:
                self.sparsity = nnz
            elif nnz != self.sparsity:
                raise ValueError(f"truth has {nnz} nonzeros, sparsity says {self.sparsity}")
            gap = np.linalg.norm(self.measurements - self.matrix @ self.truth)
            if gap > 1e-10 * np.linalg.norm(self.measurements):
                raise ValueError(f"measurements differ from matrix @ truth by {gap:.3e}")

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def alpha(self) -> float:
        return self.m / self.n

    @property
    def beta(self) -> float | None:
        return None if self.sparsity is None else self.sparsity / self.n


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 50_000
    conv_tol: float = 1e-10
    feas_tol: float = 1e-9
    threshold_multiplier: float | None = None
    certify: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (self.conv_tol > 0 and self.feas_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.threshold_multiplier is not None and self.threshold_multiplier < 0:
            raise ValueError("threshold_multiplier must be >= 0")


AMP_OPTIONS = SolverOptions(max_iter=3000, conv_tol=1e-10)
BP_OPTIONS = SolverOptions(max_iter=50_000, conv_tol=1e-10, feas_tol=1e-9)


@dataclass
class RecoveryOutcome:
    estimate: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool
    rel_error: float | None = None
    certified_optimal: bool | None = None
    solver: str = ""
    info: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.rel_error is not None and self.rel_error <= SUCCESS_REL_ERROR


def relative_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """||x_hat - x|| / ||x||, or the absolute error when x = 0."""
    err = float(np.linalg.norm(estimate - truth))
    ref = float(np.linalg.norm(truth))
    return err / ref if ref > 0 else err


def _outcome(instance, x, iterations, converged, solver, **kw) -> RecoveryOutcome:
    res = float(np.linalg.norm(instance.matrix @ x - instance.measurements))
    rel = None if instance.truth is None else relative_error(x, instance.truth)
    return RecoveryOutcome(x, iterations, res, converged, rel, solver=solver, **kw)


# ---------------------------------------------------------------------------
# AMP
# ---------------------------------------------------------------------------


def soft_threshold(v: np.ndarray, tau: float) -> np.ndarray:
    """sign(v) * max(|v| - tau, 0), written as v - clip(v, -tau, tau)."""
    if not tau >= 0:
        raise ValueError(f"threshold must be >= 0, got {tau}")
    v = np.asarray(v, dtype=float)
    return v - np.clip(v, -tau, tau)


def avg_threshold_derivative(v: np.ndarray, tau: float) -> float:
    if not tau >= 0:
        raise ValueError(f"threshold must be >= 0, got {tau}")
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(v) > tau)) / v.size


@functools.lru_cache(maxsize=256)
def tuned_threshold(alpha: float) -> float:
    """Minimax soft-threshold multiplier z*(alpha) from state evolution."""
    return beta_w_amp(alpha)[1]


def amp_solve(instance: ProblemInstance, options: SolverOptions = AMP_OPTIONS) -> RecoveryOutcome:
    """Approximate message passing with soft thresholding.

    The threshold at step t is theta * ||z_t|| / sqrt(m), with theta = z*(alpha)
    unless ``options.threshold_multiplier`` is set. The Onsager term reuses
    the derivative of the thresholding step that produced the current x.
    """
    m, n = instance.m, instance.n
    alpha = m / n
    scale = 1.0 / math.sqrt(m)
    A = instance.matrix * scale
    y = instance.measurements * scale
    theta = options.threshold_multiplier
    if theta is None:
        theta = tuned_threshold(alpha)

    x = np.zeros(n)
    z = y.copy()
    onsager = 0.0
    trace = []
    floor = 1e-12 * max(np.linalg.norm(y), 1e-300)
    converged = False
    it = 0
    for it in range(1, options.max_iter + 1):
        tau = theta * np.linalg.norm(z) / math.sqrt(m)
        arg = A.T @ z + x
        x_new = soft_threshold(arg, tau)
        onsager = avg_threshold_derivative(arg, tau) / alpha
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1.0)
        x = x_new
        z = y - A @ x + onsager * z
        trace.append(float(np.linalg.norm(y - A @ x)))
        if not np.isfinite(trace[-1]):
            raise DivergenceError("AMP produced non-finite iterates", trace)
        if it > 50 and trace[-1] > 10.0 * trace[-51] and trace[-1] > floor:
            raise DivergenceError(f"AMP residual grew tenfold in 50 iterations (t={it})", trace)
        if change <= options.conv_tol:
            converged = True
            break
    out = _outcome(instance, x, it, converged, "amp", info={"theta": theta})
    if options.certify:
        out.certified_optimal = _safe_certify(instance, x)
    return out


# ---------------------------------------------------------------------------
# basis pursuit
# ---------------------------------------------------------------------------


class _AffineProjector:
    """Projection onto {x : A x = y} from one QR factorization of A^T."""

    def __init__(self, A: np.ndarray, y: np.ndarray):
        q, r = np.linalg.qr(A.T)
        d = np.abs(np.diag(r))
        if d.size and d.min() <= 1e-12 * d.max():
            raise RankDeficiencyError(f"matrix is rank deficient (min |R_ii| = {d.min():.3e})")
        self.q = q
        self.x0 = q @ solve_triangular(r, y, trans="T")

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return v - self.q @ (self.q.T @ v) + self.x0


def _polish(instance: ProblemInstance, support: np.ndarray, feas_tol: float):
    A, y = instance.matrix, instance.measurements
    x = np.zeros(instance.n)
    if support.size == 0:
        return x if np.linalg.norm(y) <= feas_tol * max(np.linalg.norm(y), 1.0) else None
    if support.size > instance.m:
        return None
    sub = A[:, support]
    coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
    coef += np.linalg.lstsq(sub, y - sub @ coef, rcond=None)[0]
    x[support] = coef
    if np.linalg.norm(A @ x - y) > feas_tol * max(np.linalg.norm(y), 1.0):
        return None
    return x


def basis_pursuit_solve(instance: ProblemInstance, options: SolverOptions = BP_OPTIONS) -> RecoveryOutcome:
    """min ||x||_1 subject to A x = y.

    ADMM between the affine constraint and the l1 prox, with residual
    balancing of the penalty. Whenever the sparse ADMM variable settles on
    a new support of size <= m, the support is refit exactly and accepted
    if a dual certificate proves it optimal.
    """
    A, y = instance.matrix, instance.measurements
    n = instance.n
    project = _AffineProjector(A, y)
    ynorm = max(np.linalg.norm(y), 1.0)

    if instance.m == n:
        x = project.x0
        out = _outcome(instance, x, 0, True, "bp")
        if options.certify:
            out.certified_optimal = certify_l1_optimality(instance, x)
        return out

    rho = 1.0
    x = project.x0.copy()
    z = soft_threshold(x, 1.0 / rho)
    u = np.zeros(n)
    tried: set[bytes] = set()
    it = 0
    for it in range(1, options.max_iter + 1):
        x = project(z - u)
        z_old = z
        z = soft_threshold(x + u, 1.0 / rho)
        u += x - z
        r_norm = np.linalg.norm(x - z)
        s_norm = rho * np.linalg.norm(z - z_old)

        if it % 10 == 0:
            support = np.flatnonzero(z)
            key = support.tobytes()
            if np.array_equal(support, np.flatnonzero(z_old)) and key not in tried:
                tried.add(key)
                xp = _polish(instance, support, options.feas_tol)
                if xp is not None and certify_l1_optimality(instance, xp, feas_tol=options.feas_tol):
                    return _outcome(instance, xp, it, True, "bp", certified_optimal=True)

        scale = max(np.linalg.norm(x), np.linalg.norm(z), 1.0)
        if r_norm <= options.conv_tol * scale and s_norm <= options.conv_tol * scale * rho:
            break
        if r_norm > 10.0 * s_norm:
            rho *= 2.0
            u /= 2.0
        elif s_norm > 10.0 * r_norm:
            rho /= 2.0
            u *= 2.0
    else:
        out = _outcome(instance, x, it, False, "bp")
        raise NonConvergenceError(f"basis pursuit did not converge in {options.max_iter} iterations", out)

    xp = _polish(instance, np.flatnonzero(z), options.feas_tol)
    if xp is not None and np.abs(xp).sum() <= np.abs(x).sum() + 1e-12 * ynorm:
        x = xp
    out = _outcome(instance, x, it, True, "bp")
    if options.certify:
        out.certified_optimal = _safe_certify(instance, x)
    return out


# ---------------------------------------------------------------------------
# OMP
# ---------------------------------------------------------------------------


def omp_solve(instance: ProblemInstance, k: int | None = None) -> RecoveryOutcome:
    """Orthogonal matching pursuit with k greedy steps (ties go to the lowest index)."""
    A, y = instance.matrix, instance.measurements
    if k is None:
        k = instance.sparsity
    if k is None or not 1 <= k <= instance.m:
        if k == 0:
            return _outcome(instance, np.zeros(instance.n), 0, True, "omp")
        raise ValueError(f"need 1 <= k <= m, got k={k}")
    support: list[int] = []
    coef = np.zeros(0)
    r = y.copy()
    stop = 1e-13 * max(np.linalg.norm(y), 1.0)
    it = 0
    for it in range(1, k + 1):
        if np.linalg.norm(r) <= stop:
            it -= 1
            break
        corr = np.abs(A.T @ r)
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        sub = A[:, support]
        coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(support):
            raise NumericalError(f"singular least-squares subproblem on support {support}")
        coef += np.linalg.lstsq(sub, y - sub @ coef, rcond=None)[0]
        r = y - sub @ coef
    x = np.zeros(instance.n)
    x[support] = coef
    return _outcome(instance, x, it, True, "omp", info={"support": list(support)})


# ---------------------------------------------------------------------------
# oracle and certificate
# ---------------------------------------------------------------------------


def l1_oracle_bruteforce(instance: ProblemInstance, tie_tol: float = 1e-9) -> tuple[np.ndarray, bool]:
    """Minimum-l1 basic solution by enumerating all size-m supports.

    Returns the minimizer and whether it is unique among basic solutions
    (a different vector within ``tie_tol`` in l1 norm makes it non-unique).
    """
    A, y = instance.matrix, instance.measurements
    m, n = A.shape
    if n > ORACLE_MAX_N or m > ORACLE_MAX_M:
        raise OracleSizeError(f"brute-force oracle limited to n <= {ORACLE_MAX_N}, m <= {ORACLE_MAX_M}; got {m}x{n}")
    if not np.any(y):
        return np.zeros(n), True
    candidates = []
    for cols in itertools.combinations(range(n), m):
        sub = A[:, cols]
        if np.linalg.cond(sub) > 1e12:
            continue
        x = np.zeros(n)
        x[list(cols)] = np.linalg.solve(sub, y)
        candidates.append((float(np.abs(x).sum()), x))
    if not candidates:
        raise RankDeficiencyError("no invertible m-column submatrix")
    best_val, best = min(candidates, key=lambda c: c[0])
    unique = not any(
        val - best_val <= tie_tol and np.max(np.abs(x - best)) > tie_tol for val, x in candidates
    )
    return best, unique


def certify_l1_optimality(
    instance: ProblemInstance,
    x_hat: np.ndarray,
    tol: float = 1e-8,
    feas_tol: float = 1e-6,
) -> bool:
    """Search for a dual certificate nu with (A^T nu)_S = sign(x_S), |A^T nu| <= 1 off S.

    True proves optimality; False is inconclusive. The minimum-norm nu is
    tried first, then a small LP over the affine family of valid nu.
    """
    A, y = instance.matrix, instance.measurements
    x_hat = np.asarray(x_hat, dtype=float)
    gap = np.linalg.norm(A @ x_hat - y)
    if gap > feas_tol * max(np.linalg.norm(y), 1.0):
        raise PreconditionError(f"x_hat is infeasible (||Ax - y|| = {gap:.3e})")
    on = np.abs(x_hat) > 1e-8 * max(np.max(np.abs(x_hat), initial=0.0), 1.0)
    if not on.any():
        return True
    a_on, a_off = A[:, on], A[:, ~on]
    sgn = np.sign(x_hat[on])
    nu, *_ = np.linalg.lstsq(a_on.T, sgn, rcond=None)
    if np.max(np.abs(a_on.T @ nu - sgn)) > tol:
        return False
    if a_off.shape[1] == 0:
        return True
    h = a_off.T @ nu
    if np.max(np.abs(h)) <= 1.0 + tol:
        return True
    basis = null_space(a_on.T)
    d = basis.shape[1]
    if d == 0:
        return False
    g = a_off.T @ basis
    ones = np.ones((g.shape[0], 1))
    res = linprog(
        c=np.r_[np.zeros(d), 1.0],
        A_ub=np.block([[g, -ones], [-g, -ones]]),
        b_ub=np.r_[-h, h],
        bounds=[(None, None)] * (d + 1),
        method="highs",
    )
    if res.status != 0:
        return False
    nu2 = nu + basis @ res.x[:d]
    return bool(
        np.max(np.abs(a_on.T @ nu2 - sgn)) <= tol and np.max(np.abs(a_off.T @ nu2)) <= 1.0 + tol
    )


def _safe_certify(instance, x) -> bool | None:
    try:
        return certify_l1_optimality(instance, x)
    except PreconditionError:
        return None


SOLVERS = {
    "amp": (amp_solve, AMP_OPTIONS),
    "bp": (basis_pursuit_solve, BP_OPTIONS),
    "omp": (lambda inst, _opts: omp_solve(inst), None),
}


def solve(name: str, instance: ProblemInstance, options: SolverOptions | None = None) -> RecoveryOutcome:
    try:
        fn, default = SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
    return fn(instance, options or default)
