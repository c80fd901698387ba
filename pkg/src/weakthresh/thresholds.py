"""Weak-threshold curves for l1 recovery.

Three routes to beta_w(alpha):

* geometric -- the neighborliness exponents psi_com, psi_int, psi_ext of the
  randomly projected cross-polytope;
* fundamental -- the closed-form erfinv equation F(beta, alpha) = 0;
* AMP state evolution -- alpha * max_z of the minimax soft-threshold
  objective.

The geometric net exponent psi_net(beta) is non-positive on (0, alpha) and
touches zero only at beta_w, so that route locates the stationary point of
psi_net rather than a sign change of psi_net itself.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .special import (
    Bracket,
    BracketError,
    ConvergenceError,
    DomainError,
    Tolerance,
    entropy,
    erfinv,
    find_root,
    gaussian_density,
    gaussian_tail,
    minimize_1d,
    mills_ratio,
    tail_moment_ratio,
)

log = logging.getLogger(__name__)

LOG2 = math.log(2.0)
SQRT2 = math.sqrt(2.0)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)

DEFAULT_TOL = Tolerance(abs_tol=1e-12, rel_tol=1e-14, max_iter=200)
BETA_MARGIN = 1e-9
S_GAMMA_LIMIT = 1e6
EXT_Y_MAX = 10.0
AMP_GRID_SIZE = 2048
AMP_Z_RANGE = (1e-4, 50.0)
AMP_Z_FLOOR = 1e-8
EQUIVALENCE_THRESHOLD = 1e-4


class Method(str, enum.Enum):
    GEOMETRIC = "geometric"
    FUNDAMENTAL = "fundamental"
    AMP = "amp"

    @classmethod
    def parse(cls, name: str) -> "Method":
        aliases = {"geom": cls.GEOMETRIC, "fund": cls.FUNDAMENTAL}
        if name in aliases:
            return aliases[name]
        return cls(name)


class CurveError(RuntimeError):
    """A curve could not be assembled (names the offending alpha)."""


@dataclass(frozen=True)
class AngleExponents:
    psi_com: float
    psi_int: float
    psi_ext: float
    psi_net: float


@dataclass(frozen=True)
class InternalAngleParams:
    gamma: float
    s_gamma: float
    y_gamma: float
    xi_value: float


@dataclass(frozen=True)
class ThresholdPoint:
    alpha: float
    beta_w: float
    method: Method
    residual: float


@dataclass
class ThresholdCurve:
    method: Method
    points: list[ThresholdPoint] = field(default_factory=list)
    tolerance: Tolerance = DEFAULT_TOL

    @property
    def alphas(self) -> list[float]:
        return [p.alpha for p in self.points]

    @property
    def betas(self) -> list[float]:
        return [p.beta_w for p in self.points]

    def monotonicity_violations(self) -> list[tuple[float, float]]:
        """Adjacent alpha pairs where beta_w decreases."""
        return [
            (p.alpha, q.alpha)
            for p, q in zip(self.points, self.points[1:])
            if q.beta_w < p.beta_w
        ]


def _check_pair(beta: float, alpha: float, allow_zero_beta: bool = True) -> None:
    if not (math.isfinite(beta) and math.isfinite(alpha)):
        raise DomainError(f"non-finite (beta, alpha) = ({beta}, {alpha})")
    lo_ok = beta >= 0 if allow_zero_beta else beta > 0
    if not (lo_ok and beta < alpha <= 1.0):
        raise DomainError(f"need 0 <= beta < alpha <= 1, got beta={beta}, alpha={alpha}")


# ---------------------------------------------------------------------------
# geometric route
# ---------------------------------------------------------------------------


def psi_com(beta: float, alpha: float) -> float:
    """Growth exponent of the face count 2^(m-k) C(n-k-1, m-k)."""
    _check_pair(beta, alpha)
    return (alpha - beta) * LOG2 + (1.0 - beta) * entropy((alpha - beta) / (1.0 - beta))


def _s_gamma_residual(s: float, gamma: float) -> float:
    # s*R(s) - (1-gamma) has the sign of Phi(s) - (1-gamma) phi(s)/s and
    # never underflows; rescaled to the raw residual where phi(s)/s > 1.
    g = s * mills_ratio(s) - (1.0 - gamma)
    return g * max(1.0, gaussian_density(s) / s)


def solve_s_gamma(gamma: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """Solve Phi(s) = (1 - gamma) phi(s) / s for s > 0.

    s*R(s) rises from 0 to 1, so s -> 0 as gamma -> 1 and s grows without
    bound as gamma -> 0. The upper end of the bracket is doubled from 1
    until the residual turns positive.
    """
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    hi = 1.0
    while _s_gamma_residual(hi, gamma) <= 0.0:
        hi *= 2.0
        if hi > S_GAMMA_LIMIT:
            raise ConvergenceError(f"s_gamma bracket not found below {S_GAMMA_LIMIT} (gamma={gamma})")
    return find_root(lambda s: _s_gamma_residual(s, gamma), Bracket(1e-300, hi), tol)


def psi_int(beta: float, alpha: float, tol: Tolerance = DEFAULT_TOL) -> tuple[float, InternalAngleParams]:
    """Internal-angle exponent and the intermediate quantities behind it."""
    _check_pair(beta, alpha, allow_zero_beta=False)
    gamma = beta / alpha
    s = solve_s_gamma(gamma, tol)
    y = gamma / (1.0 - gamma) * s
    xi = -0.5 * y * y * (1.0 - gamma) / gamma - 0.5 * math.log(2.0 / math.pi) + math.log(y / gamma)
    value = (alpha - beta) * xi + (alpha - beta) * LOG2
    return value, InternalAngleParams(gamma=gamma, s_gamma=s, y_gamma=y, xi_value=xi)


def external_angle_objective(y: float, alpha: float) -> float:
    e = math.erf(y)
    if alpha == 1.0:
        return y * y
    if e <= 0.0:
        return math.inf
    return alpha * y * y - (1.0 - alpha) * math.log(e)


def external_angle_stationarity(y: float, alpha: float) -> float:
    """Derivative of the external-angle objective in y."""
    return 2.0 * alpha * y - (1.0 - alpha) * TWO_OVER_SQRT_PI * math.exp(-y * y) / math.erf(y)


def external_angle_argmin(alpha: float, tol: Tolerance = Tolerance(1e-12, 1e-12, 500)) -> tuple[float, float]:
    """(argmin, min) of alpha*y^2 - (1-alpha)*log(erf(y)) over y >= 0."""
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return 0.0, 0.0
    y, value = minimize_1d(lambda y: external_angle_objective(y, alpha), Bracket(0.0, EXT_Y_MAX), tol)
    # Brent on function values stalls near sqrt(eps); polish on the slope
    step = 1e-6 * max(y, 1.0)
    lo, hi = max(y - step, 0.5 * y), y + step
    if external_angle_stationarity(lo, alpha) < 0.0 < external_angle_stationarity(hi, alpha):
        y = find_root(lambda u: external_angle_stationarity(u, alpha), Bracket(lo, hi), Tolerance(1e-15, 1e-15))
        value = min(value, external_angle_objective(y, alpha))
    return y, value


def psi_ext(beta: float, alpha: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """External-angle exponent. Depends on alpha only; beta is ignored."""
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    return external_angle_argmin(alpha)[1]


def psi_net(beta: float, alpha: float, tol: Tolerance = DEFAULT_TOL) -> AngleExponents:
    com = psi_com(beta, alpha)
    internal, _ = psi_int(beta, alpha, tol)
    ext = psi_ext(beta, alpha, tol)
    return AngleExponents(com, internal, ext, com - internal - ext)


def psi_net_slope(beta: float, alpha: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """d psi_net / d beta at fixed alpha, in closed form.

    Uses ds_gamma/dgamma = -1 / ((1 + s^2) R(s) - s) from differentiating
    s R(s) = 1 - gamma, with R the Mills ratio.
    """
    _check_pair(beta, alpha, allow_zero_beta=False)
    p = (alpha - beta) / (1.0 - beta)
    one_minus_p = (1.0 - alpha) / (1.0 - beta)
    if p > 0.0 and one_minus_p > 0.0:
        log_odds = math.log(one_minus_p / p)
        d_com = -LOG2 - entropy(p) - one_minus_p * log_odds
    else:
        # alpha == 1: psi_com = (1 - beta) log 2
        d_com = -LOG2 - entropy(p)

    gamma = beta / alpha
    s = solve_s_gamma(gamma, tol)
    ds = -1.0 / tail_moment_ratio(s)
    q = 1.0 - gamma
    k_val = -0.5 * gamma * s * s / q - 0.5 * math.log(2.0 / math.pi) + math.log(s / q) + LOG2
    dk = -0.5 * s * s / (q * q) - gamma * s * ds / q + ds / s + 1.0 / q
    d_int = -k_val + (alpha - beta) * dk / alpha
    return d_com - d_int


def beta_w_geometric(alpha: float, tol: Tolerance = DEFAULT_TOL) -> ThresholdPoint:
    """beta_w from the neighborliness exponents.

    psi_net(., alpha) peaks at exactly zero on beta_w, so beta_w is found as
    the bracketed root of its beta-derivative; the residual recorded is
    psi_net at that root.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return ThresholdPoint(1.0, 1.0, Method.GEOMETRIC, 0.0)
    bracket = Bracket(BETA_MARGIN, alpha - BETA_MARGIN)
    try:
        beta = find_root(lambda b: psi_net_slope(b, alpha, tol), bracket, tol)
    except BracketError as exc:
        raise ConvergenceError(f"geometric threshold: no stationary point at alpha={alpha}") from exc
    return ThresholdPoint(alpha, beta, Method.GEOMETRIC, psi_net(beta, alpha, tol).psi_net)


# ---------------------------------------------------------------------------
# fundamental characterization
# ---------------------------------------------------------------------------


def fundamental_residual(beta: float, alpha: float) -> float:
    """F(beta, alpha); positive below the weak threshold, negative above."""
    _check_pair(beta, alpha)
    ratio = (1.0 - alpha) / (1.0 - beta)
    if not 0.0 <= ratio < 1.0:
        raise DomainError(f"erfinv argument {ratio} outside [0, 1)")
    e = erfinv(ratio)
    return (1.0 - beta) * SQRT_2_OVER_PI * math.exp(-e * e) / alpha - SQRT2 * e


def beta_w_fundamental(alpha: float, tol: Tolerance = DEFAULT_TOL) -> ThresholdPoint:
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        # F(beta, 1) = (1 - beta) sqrt(2/pi) vanishes only in the limit beta -> 1
        return ThresholdPoint(1.0, 1.0, Method.FUNDAMENTAL, 0.0)
    bracket = Bracket(BETA_MARGIN, alpha - BETA_MARGIN)
    try:
        beta = find_root(lambda b: fundamental_residual(b, alpha), bracket, tol)
    except BracketError as exc:
        raise ConvergenceError(f"fundamental threshold: no sign change at alpha={alpha}") from exc
    return ThresholdPoint(alpha, beta, Method.FUNDAMENTAL, fundamental_residual(beta, alpha))


def alpha_w_fundamental(beta: float, tol: Tolerance = DEFAULT_TOL) -> ThresholdPoint:
    """Inverse query: the alpha on the curve for a given beta in [0, 1).

    beta = 0 returns the limiting point alpha = 0.
    """
    if not (math.isfinite(beta) and 0.0 <= beta < 1.0):
        raise DomainError(f"beta must lie in [0, 1), got {beta}")
    if beta == 0.0:
        return ThresholdPoint(0.0, 0.0, Method.FUNDAMENTAL, 0.0)
    lo = beta + max(1e-12, 1e-12 * (1.0 - beta))
    try:
        alpha = find_root(lambda a: fundamental_residual(beta, a), Bracket(lo, 1.0), tol)
    except BracketError as exc:
        raise ConvergenceError(f"fundamental threshold: no sign change at beta={beta}") from exc
    return ThresholdPoint(alpha, beta, Method.FUNDAMENTAL, fundamental_residual(beta, alpha))


# ---------------------------------------------------------------------------
# AMP state evolution
# ---------------------------------------------------------------------------


def _m(z: float) -> float:
    return (1.0 + z * z) * gaussian_tail(z) - z * gaussian_density(z)


def amp_state_objective(z: float, alpha: float) -> float:
    """(1 - (2/alpha) M(z)) / (1 + z^2 - 2 M(z)), M(z) = (1+z^2)Phi(z) - z phi(z).

    z = 0 is a removable 0/0 when alpha = 1; the limit there is 1.
    """
    if not (math.isfinite(z) and math.isfinite(alpha)):
        raise DomainError(f"non-finite input z={z}, alpha={alpha}")
    if z < 0 or not 0.0 < alpha <= 1.0:
        raise DomainError(f"need z >= 0 and 0 < alpha <= 1, got z={z}, alpha={alpha}")
    if z == 0.0 and alpha == 1.0:
        return 1.0
    m = _m(z)
    return (1.0 - 2.0 / alpha * m) / (1.0 + z * z - 2.0 * m)


def _amp_objective_slope(z: float, alpha: float) -> float:
    m = _m(z)
    dm = 2.0 * z * gaussian_tail(z) - 2.0 * gaussian_density(z)
    num = 1.0 - 2.0 / alpha * m
    den = 1.0 + z * z - 2.0 * m
    return (-2.0 / alpha * dm * den - num * (2.0 * z - 2.0 * dm)) / (den * den)


def _amp_grid() -> list[float]:
    lo, hi = AMP_Z_RANGE
    ratio = hi / lo
    return [lo * ratio ** (i / (AMP_GRID_SIZE - 1)) for i in range(AMP_GRID_SIZE)]


def beta_w_amp(alpha: float, tol: Tolerance = DEFAULT_TOL) -> tuple[ThresholdPoint, float]:
    """AMP threshold and the maximizing z*.

    A log-spaced scan locates the peak; the objective's derivative is then
    root-found on the neighbouring grid cell, falling back to Brent
    minimization if it shows no sign change there. The residual recorded is
    the objective's slope at z*.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return ThresholdPoint(1.0, 1.0, Method.AMP, 0.0), 0.0

    grid = _amp_grid()
    values = [amp_state_objective(z, alpha) for z in grid]
    i = max(range(len(grid)), key=values.__getitem__)
    lo = grid[i - 1] if i > 0 else AMP_Z_FLOOR
    hi = grid[i + 1] if i + 1 < len(grid) else grid[i]
    try:
        z_star = find_root(lambda z: _amp_objective_slope(z, alpha), Bracket(lo, hi), tol)
    except BracketError:
        z_star, _ = minimize_1d(
            lambda z: -amp_state_objective(max(z, AMP_Z_FLOOR), alpha),
            Bracket(lo, hi),
            Tolerance(tol.abs_tol, max(tol.rel_tol, 1e-12), 500),
        )
        z_star = max(z_star, AMP_Z_FLOOR)
    best = amp_state_objective(z_star, alpha)
    if best < values[i]:
        z_star, best = grid[i], values[i]
    point = ThresholdPoint(alpha, alpha * best, Method.AMP, _amp_objective_slope(z_star, alpha))
    return point, z_star


# ---------------------------------------------------------------------------
# curves and cross-checks
# ---------------------------------------------------------------------------


def threshold(method: Method | str, alpha: float, tol: Tolerance = DEFAULT_TOL) -> ThresholdPoint:
    method = Method.parse(method) if not isinstance(method, Method) else method
    if method is Method.GEOMETRIC:
        return beta_w_geometric(alpha, tol)
    if method is Method.FUNDAMENTAL:
        return beta_w_fundamental(alpha, tol)
    return beta_w_amp(alpha, tol)[0]


def _check_grid(alpha_grid: Sequence[float]) -> list[float]:
    grid = [float(a) for a in alpha_grid]
    for a in grid:
        if not (math.isfinite(a) and 0.0 < a <= 1.0):
            raise DomainError(f"grid value {a} outside (0, 1]")
    for a, b in zip(grid, grid[1:]):
        if not b > a:
            raise DomainError(f"grid not strictly increasing at {a}, {b}")
    return grid


def compute_curve(
    method: Method | str, alpha_grid: Iterable[float], tol: Tolerance = DEFAULT_TOL
) -> ThresholdCurve:
    method = Method.parse(method) if not isinstance(method, Method) else method
    grid = _check_grid(list(alpha_grid))
    points = []
    for a in grid:
        try:
            points.append(threshold(method, a, tol))
        except (DomainError, ConvergenceError, BracketError) as exc:
            raise CurveError(f"{method.value} threshold failed at alpha={a}: {exc}") from exc
    curve = ThresholdCurve(method, points, tol)
    bad = curve.monotonicity_violations()
    if bad:
        raise CurveError(f"{method.value} curve decreases between alpha pairs {bad}")
    return curve


@dataclass
class EquivalenceReport:
    alphas: list[float]
    betas: dict[float, dict[Method, float]]
    deviation: dict[float, float]
    threshold: float
    failures: list[tuple[float, Method, str]] = field(default_factory=list)

    @property
    def worst_alpha(self) -> float | None:
        if not self.deviation:
            return None
        return max(self.deviation, key=self.deviation.__getitem__)

    @property
    def max_deviation(self) -> float:
        return max(self.deviation.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.failures and all(d <= self.threshold for d in self.deviation.values())

    def lines(self) -> list[str]:
        out = []
        for a in self.alphas:
            vals = self.betas.get(a, {})
            cells = " ".join(f"{m.value}={vals[m]:.12f}" for m in vals)
            dev = self.deviation.get(a)
            dev_s = "n/a" if dev is None else f"{dev:.3e}"
            out.append(f"alpha={a:.6g} {cells} max_dev={dev_s}")
        for a, m, msg in self.failures:
            out.append(f"FAILED alpha={a:.6g} method={m.value}: {msg}")
        worst = self.worst_alpha
        out.append(
            f"worst_alpha={'n/a' if worst is None else f'{worst:.6g}'} "
            f"max_dev={self.max_deviation:.3e} threshold={self.threshold:.1e} "
            f"{'PASS' if self.passed else 'FAIL'}"
        )
        return out


def verify_equivalence(
    alpha_grid: Iterable[float],
    tol: Tolerance = DEFAULT_TOL,
    threshold_: float = EQUIVALENCE_THRESHOLD,
    methods: Sequence[Method] = (Method.GEOMETRIC, Method.FUNDAMENTAL, Method.AMP),
) -> EquivalenceReport:
    """Compare beta_w across methods on a grid.

    Per-point failures are collected in the report rather than raised.
    """
    grid = _check_grid(list(alpha_grid))
    betas: dict[float, dict[Method, float]] = {}
    deviation: dict[float, float] = {}
    failures = []
    for a in grid:
        vals: dict[Method, float] = {}
        computed = []
        for m in methods:
            try:
                b = threshold(m, a, tol).beta_w
            except (DomainError, ConvergenceError, BracketError) as exc:
                failures.append((a, m, str(exc)))
                continue
            vals[m] = b
            computed.append(b)
        betas[a] = vals
        if len(computed) >= 2 or (computed and len(methods) == 1):
            deviation[a] = max(computed) - min(computed)
    return EquivalenceReport(grid, betas, deviation, threshold_, failures)
