"""Scalar special functions and 1-D solvers.

Everything here works on Python floats and is stateless. Logarithms are
natural logs throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

__all__ = [
    "DomainError",
    "BracketError",
    "ConvergenceError",
    "Tolerance",
    "Bracket",
    "gaussian_tail",
    "gaussian_density",
    "mills_ratio",
    "tail_moment_ratio",
    "erf",
    "erfc",
    "erfinv",
    "entropy",
    "find_root",
    "minimize_1d",
]

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
_EPS = 2.220446049250313e-16
_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class BracketError(ValueError):
    """The supplied interval does not bracket a root."""


class ConvergenceError(RuntimeError):
    """An iteration ran out of budget.

    ``best`` holds the best iterate found before giving up.
    """

    def __init__(self, message: str, best: float | None = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class Tolerance:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-14
    max_iter: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError(f"abs_tol must be > 0, got {self.abs_tol}")
        if not self.rel_tol >= 0:
            raise DomainError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter}")

    def tightened(self, factor: float) -> "Tolerance":
        return Tolerance(self.abs_tol / factor, self.rel_tol / factor, self.max_iter)


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise DomainError(f"invalid bracket [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _check_finite(x: float, name: str = "argument") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x}")
    return x


def erf(x: float) -> float:
    return math.erf(_check_finite(x))


def erfc(x: float) -> float:
    return math.erfc(_check_finite(x))


def gaussian_tail(s: float) -> float:
    """Upper tail P(Z > s) of the standard normal, via erfc."""
    s = _check_finite(s, "s")
    return 0.5 * math.erfc(s / SQRT2)


def gaussian_density(s: float) -> float:
    s = _check_finite(s, "s")
    return INV_SQRT_2PI * math.exp(-0.5 * s * s)


def mills_ratio(s: float) -> float:
    """Return gaussian_tail(s) / gaussian_density(s) without underflow.

    Direct quotient for s <= 8, Laplace continued fraction beyond.
    """
    s = _check_finite(s, "s")
    if s <= 8.0:
        return gaussian_tail(s) / gaussian_density(s)
    # R(s) = 1/(s + 1/(s + 2/(s + 3/(s + ...)))), evaluated bottom-up
    acc = s
    for j in range(60, 0, -1):
        acc = s + j / acc
    return 1.0 / acc


def _cf_tail(s: float, start: int, terms: int = 120) -> float:
    # c_start = start/(s + (start+1)/(s + ...)), evaluated bottom-up
    acc = s
    for j in range(start + terms, start, -1):
        acc = s + j / acc
    return start / acc


def tail_moment_ratio(s: float) -> float:
    """((1 + s^2) Phi(s) - s phi(s)) / phi(s), i.e. (1 + s^2) R(s) - s.

    For large s the direct form cancels; there it equals
    c2 / ((s + c1)(s + c2)) with c_j the tails of the continued fraction.
    """
    s = _check_finite(s, "s")
    if s <= 2.0:
        return (1.0 + s * s) * mills_ratio(s) - s
    c2 = _cf_tail(s, 2)
    c1 = 1.0 / (s + c2)
    return c2 / ((s + c1) * (s + c2))


# Giles (2010) single-precision erfinv polynomials, used as a starting guess.
_ERFINV_CENTRAL = (
    2.81022636e-08, 3.43273939e-07, -3.5233877e-06, -4.39150654e-06,
    0.00021858087, -0.00125372503, -0.00417768164, 0.246640727, 1.50140941,
)
_ERFINV_TAIL = (
    -0.000200214257, 0.000100950558, 0.00134934322, -0.00367342844,
    0.00573950773, -0.0076224613, 0.00943887047, 1.00167406, 2.83297682,
)


def _horner(coeffs, w):
    acc = 0.0
    for c in coeffs:
        acc = acc * w + c
    return acc


def erfinv(p: float) -> float:
    """Inverse of erf on (-1, 1).

    Polynomial initial guess, then Halley steps on erf(x) - |p| in the
    centre. For |p| >= 1/2 the refinement is Newton on log erfc(x) against
    the exact complement 1-|p|, which stays well conditioned in the tails
    where the starting guess is poor.
    """
    p = _check_finite(p, "p")
    if not -1.0 < p < 1.0:
        raise DomainError(f"erfinv requires |p| < 1, got {p}")
    if p == 0.0:
        return 0.0
    a = abs(p)
    comp = 1.0 - a  # exact for a >= 1/2
    w = -math.log(comp * (1.0 + a))
    if w < 5.0:
        x = _horner(_ERFINV_CENTRAL, w - 2.5) * a
    else:
        x = _horner(_ERFINV_TAIL, math.sqrt(w) - 3.0) * a
    if a < 0.5:
        for _ in range(2):
            step = (math.erf(x) - a) / (TWO_OVER_SQRT_PI * math.exp(-x * x))
            # Halley correction: f'' / f' = -2x
            x -= step / (1.0 + x * step)
        return math.copysign(x, p)
    log_comp = math.log(comp)
    for _ in range(8):
        ec = math.erfc(x)
        slope = -TWO_OVER_SQRT_PI * math.exp(-x * x) / ec
        step = (math.log(ec) - log_comp) / slope
        x -= step
        if abs(step) <= 1e-16 * x:
            break
    return math.copysign(x, p)


def entropy(p: float) -> float:
    """Binary entropy in nats, with H(0) = H(1) = 0.

    Computed from the smaller of p and 1-p so complementary arguments give
    identical results.
    """
    p = _check_finite(p, "p")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"entropy requires 0 <= p <= 1, got {p}")
    a = p if p <= 0.5 else 1.0 - p
    if a == 0.0:
        return 0.0
    return -a * math.log(a) - (1.0 - a) * math.log1p(-a)


def find_root(f: Callable[[float], float], bracket: Bracket, tol: Tolerance = Tolerance()) -> float:
    """Brent's method on a sign-changing bracket.

    Stops when |f(x)| <= abs_tol or the bracket is narrower than
    rel_tol*|x| (floored at a few ulps of x).
    """
    a, b = bracket.lo, bracket.hi
    fa, fb = float(f(a)), float(f(b))
    if not (math.isfinite(fa) and math.isfinite(fb)):
        raise DomainError(f"f not finite at bracket ends: f({a})={fa}, f({b})={fb}")
    if abs(fa) <= tol.abs_tol:
        return a
    if abs(fb) <= tol.abs_tol:
        return b
    if fa * fb > 0:
        raise BracketError(f"no sign change on [{a}, {b}]: f={fa}, {fb}")

    c, fc = a, fa
    d = e = b - a
    for _ in range(tol.max_iter):
        if fb * fc > 0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        xtol = 0.5 * max(tol.rel_tol * abs(b), 4.0 * _EPS * abs(b), 1e-300)
        m = 0.5 * (c - b)
        if abs(fb) <= tol.abs_tol or abs(m) <= xtol:
            return b
        if abs(e) >= xtol and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q, r = fa / fc, fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            if 2.0 * p < min(3.0 * m * q - abs(xtol * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m
        else:
            d = e = m
        a, fa = b, fb
        b += d if abs(d) > xtol else math.copysign(xtol, m)
        fb = float(f(b))
        if not math.isfinite(fb):
            raise DomainError(f"f not finite at {b}")
    raise ConvergenceError(f"find_root: no convergence in {tol.max_iter} iterations", best=b)


def minimize_1d(
    f: Callable[[float], float], bracket: Bracket, tol: Tolerance = Tolerance(1e-10, 1e-10, 500)
) -> tuple[float, float]:
    """Brent's golden-section/parabolic minimizer on [lo, hi].

    The argmin is located to within rel_tol*|x| + abs_tol. Endpoints are
    compared at the end so boundary minimizers are returned exactly.
    """
    lo, hi = bracket.lo, bracket.hi
    x = w = v = lo + _GOLDEN * (hi - lo)
    fx = fw = fv = float(f(x))
    d = e = 0.0
    a, b = lo, hi
    for _ in range(tol.max_iter):
        mid = 0.5 * (a + b)
        tol1 = tol.rel_tol * abs(x) + tol.abs_tol / 3.0
        tol2 = 2.0 * tol1
        if abs(x - mid) <= tol2 - 0.5 * (b - a):
            break
        use_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0:
                p = -p
            q = abs(q)
            if abs(p) < abs(0.5 * q * e) and q * (a - x) < p < q * (b - x):
                e, d = d, p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = math.copysign(tol1, mid - x)
                use_golden = False
        if use_golden:
            e = (a - x) if x >= mid else (b - x)
            d = _GOLDEN * e
        u = x + (d if abs(d) >= tol1 else math.copysign(tol1, d))
        fu = float(f(u))
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, w, x = w, x, u
            fv, fw, fx = fw, fx, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, w = w, u
                fv, fw = fw, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    else:
        raise ConvergenceError(f"minimize_1d: no convergence in {tol.max_iter} iterations", best=x)

    for end in (lo, hi):
        fe = float(f(end))
        if fe < fx:
            x, fx = end, fe
    return x, fx
