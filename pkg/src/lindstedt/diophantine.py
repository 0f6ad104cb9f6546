"""Rotation-vector number theory.

Continued fractions with exact quadratic-surd arithmetic, Brjuno sums
(scalar B(alpha) from best-approximant denominators and the vector form
from brute-force lattice minima), brute-force Diophantine constants, and
the sharp dyadic scale assignment used by the multiscale diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import BudgetError, InputError

# Convergent denominators of a double are trustworthy only while the
# rounding error of the input cannot flip a partial quotient; 2^52 is the
# documented precision budget for float rotation numbers.
FLOAT_CF_BUDGET = 2 ** 52


# -- exact quadratic surds ---------------------------------------------------

def _isqrt_floor(n: int) -> int:
    return math.isqrt(n)


@dataclass(frozen=True)
class Surd:
    """Exact (a + b*sqrt(m)) / c with integer a, b, c and m >= 0."""

    a: int
    b: int
    m: int
    c: int = 1

    def __post_init__(self):
        if self.c == 0:
            raise InputError("surd denominator cannot be 0")
        if self.m < 0:
            raise InputError("surd radicand must be >= 0")

    @staticmethod
    def from_rational(p: int, q: int) -> "Surd":
        return Surd(p, 0, 0, q).normalized()

    def normalized(self) -> "Surd":
        a, b, m, c = self.a, self.b, self.m, self.c
        if m == 0 or b == 0:
            b, m = 0, 0
        else:
            r = _isqrt_floor(m)
            if r * r == m:  # rational in disguise
                a, b, m = a + b * r, 0, 0
        if c < 0:
            a, b, c = -a, -b, -c
        g = math.gcd(math.gcd(abs(a), abs(b)), c)
        if g > 1:
            a, b, c = a // g, b // g, c // g
        return Surd(a, b, m, c)

    def is_rational(self) -> bool:
        s = self.normalized()
        return s.b == 0

    def as_fraction(self) -> Fraction:
        s = self.normalized()
        if s.b != 0:
            raise InputError("surd is irrational")
        return Fraction(s.a, s.c)

    def value(self) -> float:
        return (self.a + self.b * math.sqrt(self.m)) / self.c

    def sub_int(self, n: int) -> "Surd":
        return Surd(self.a - n * self.c, self.b, self.m, self.c).normalized()

    def reciprocal(self) -> "Surd":
        # 1 / ((a + b sqrt(m))/c) = c (a - b sqrt(m)) / (a^2 - b^2 m)
        denom = self.a * self.a - self.b * self.b * self.m
        if denom == 0:
            raise ZeroDivisionError("reciprocal of zero surd")
        return Surd(self.c * self.a, -self.c * self.b, self.m, denom).normalized()

    def compare_int(self, n: int) -> int:
        """Sign of self - n, exactly."""
        # a + b sqrt(m) ? n c   <=>   b sqrt(m) ? (n c - a)
        lhs = self.b
        rhs = self.c * n - self.a
        if lhs == 0:
            return -1 if rhs > 0 else (0 if rhs == 0 else 1)
        # both sides may be negative; compare with signed squares
        if lhs > 0 and rhs <= 0:
            return 1
        if lhs < 0 and rhs >= 0:
            return -1 if (lhs, rhs) != (0, 0) else 0
        l2 = lhs * lhs * self.m
        r2 = rhs * rhs
        if lhs > 0:
            return -1 if l2 < r2 else (0 if l2 == r2 else 1)
        return -1 if l2 > r2 else (0 if l2 == r2 else 1)

    def floor(self) -> int:
        n = math.floor(self.value())
        # fix up the float guess exactly
        while self.compare_int(n) < 0:
            n -= 1
        while self.compare_int(n + 1) >= 0:
            n += 1
        return n


def surd_golden() -> Surd:
    """(sqrt(5)-1)/2."""
    return Surd(-1, 1, 5, 2)


def surd_silver() -> Surd:
    """sqrt(2)-1."""
    return Surd(-1, 1, 2, 1)


def surd_from_cf(preperiod: list[int], period: list[int]) -> Surd:
    """Value of [0; preperiod..., period repeated] as an exact surd.

    The periodic tail y = [0; period, period, ...] solves a quadratic with
    integer coefficients obtained from the tail's convergents; the
    pre-period is then folded in by exact Moebius arithmetic.
    """
    if not period:
        raise InputError("period must be nonempty")
    if any(a < 1 for a in preperiod + period):
        raise InputError("partial quotients must be >= 1")
    # One full period maps the tail to itself: y = (A y + B)/(C y + D) where
    # the Moebius matrix composes the maps t -> 1/(a + t) = (0 t + 1)/(t + a).
    A, B, C, D = 1, 0, 0, 1
    for a in reversed(period):
        A, B, C, D = C, D, A + a * C, B + a * D
    # fixed point y = (A y + B)/(C y + D):  C y^2 + (D - A) y - B = 0
    qa, qb, qc = C, D - A, -B
    disc = qb * qb - 4 * qa * qc
    if disc <= 0 or qa == 0:
        raise InputError("degenerate periodic continued fraction")
    # y = (-qb + sqrt(disc)) / (2 qa), the positive root
    y = Surd(-qb, 1, disc, 2 * qa).normalized()
    if y.value() <= 0:
        y = Surd(-qb, -1, disc, 2 * qa).normalized()
    # fold pre-period: x = 1/(a1 + 1/(a2 + ... + 1/(ar + y)))
    x = y
    for a in reversed(preperiod):
        x = _surd_add_int(x, a).reciprocal()
    return x.normalized()


def _surd_add_int(s: Surd, n: int) -> Surd:
    return Surd(s.a + n * s.c, s.b, s.m, s.c).normalized()


# -- continued fractions -----------------------------------------------------

@dataclass
class CFReport:
    """Partial quotients and convergent denominators of a rotation number."""

    quotients: list[int]
    q: list[int]          # q[0] = 1, q[n] = a_n q[n-1] + q[n-2]
    p: list[int]
    exact: bool
    truncated: bool


def _cf_quotients_exact_fraction(fr: Fraction, n_terms: int, budget: int | None):
    quotients = []
    p, q = fr.numerator, fr.denominator
    truncated = False
    qden_prev, qden = 0, 1
    while len(quotients) < n_terms:
        if p == 0:
            truncated = True
            break
        # alpha in (0,1): next quotient from 1/alpha
        a, rem = divmod(q, p)
        if rem == 0:
            quotients.append(a)
            qden_prev, qden = qden, a * qden + qden_prev
            truncated = True  # expansion terminated: rational input
            break
        quotients.append(a)
        qden_prev, qden = qden, a * qden + qden_prev
        p, q = rem, p
        if budget is not None and qden * qden_prev > budget:
            truncated = True
            break
    return quotients, truncated


def continued_fraction(alpha, n_terms: int = 40) -> CFReport:
    """Partial quotients and best-approximant denominators of alpha in (0,1).

    Surd and Fraction inputs run on exact integer arithmetic; floats are
    expanded exactly as the binary rational they store, and the report is
    flagged truncated once the 52-bit precision budget is exhausted.
    """
    if n_terms < 1:
        raise InputError("n_terms must be >= 1")
    exact = True
    truncated = False
    quotients: list[int] = []

    if isinstance(alpha, Surd):
        s = alpha.normalized()
        if s.compare_int(0) <= 0 or s.compare_int(1) >= 0:
            raise InputError("alpha must lie in (0,1)")
        if s.is_rational():
            quotients, truncated = _cf_quotients_exact_fraction(
                s.as_fraction(), n_terms, None)
        else:
            x = s
            while len(quotients) < n_terms:
                x = x.reciprocal()
                a = x.floor()
                quotients.append(a)
                x = x.sub_int(a)
    elif isinstance(alpha, Fraction):
        if not (0 < alpha < 1):
            raise InputError("alpha must lie in (0,1)")
        quotients, truncated = _cf_quotients_exact_fraction(alpha, n_terms, None)
    else:
        x = float(alpha)
        if not (0.0 < x < 1.0):
            raise InputError("alpha must lie in (0,1)")
        exact = False
        fr = Fraction(*x.as_integer_ratio())
        quotients, truncated = _cf_quotients_exact_fraction(fr, n_terms, FLOAT_CF_BUDGET)

    q = [1]
    p = [0]
    qprev, pprev = 0, 1
    for a in quotients:
        q.append(a * q[-1] + qprev)
        p.append(a * p[-1] + pprev)
        qprev, pprev = q[-2], p[-2]
    return CFReport(quotients=quotients, q=q, p=p, exact=exact, truncated=truncated)


# -- Brjuno sums --------------------------------------------------------------

@dataclass
class BryunoReport:
    """Partial sums of a Brjuno-type series plus the data they came from."""

    kind: str                     # "scalar" or "vector"
    partial_sums: list[float]
    value: float
    n_used: int
    q: list[int] | None = None
    alpha_n: list[float] | None = None
    converged: bool = False
    tail_bound: float | None = None


def bryuno_function(alpha, n_max: int | None = None, tol: float = 1e-12) -> BryunoReport:
    """B(alpha) = sum_{n>=0} log(q_{n+1}) / q_n over best-approximant denominators.

    Exact inputs (surds, fractions with long expansions) iterate until the
    remaining tail is provably below tol; float inputs that exhaust their
    precision first are returned unconverged.
    """
    terms_wanted = 400 if n_max is None else n_max + 1
    rep = continued_fraction(alpha, n_terms=terms_wanted)
    q = rep.q
    partial = []
    total = 0.0
    n_used = 0
    term = math.inf
    for n in range(len(q) - 1):
        term = math.log(q[n + 1]) / q[n]
        total += term
        partial.append(total)
        n_used = n + 1
        if n_max is None and q[n] > 10 and term < tol / 20:
            break
    if not partial:
        raise InputError("no continued-fraction terms available")
    # Denominators at least double every two steps, so once terms are tiny
    # the remainder is dominated by a geometric series on top of the last term.
    tail = 4.0 * term if math.isfinite(term) else None
    if rep.truncated and rep.exact:
        # rational input: the expansion terminated, the sum is complete
        converged = True
        tail = 0.0
    elif rep.truncated:
        converged = False  # float precision ran out before the tail was resolved
    else:
        converged = tail is not None and tail < tol
    return BryunoReport(kind="scalar", partial_sums=partial, value=total,
                        n_used=n_used, q=q[:n_used + 1], converged=converged,
                        tail_bound=tail)


def torus_distance(x: float) -> float:
    """Distance of x to the nearest integer."""
    return abs(x - round(x))


def _min_abs_dot_ball(omega: np.ndarray, radius: int, metric: str):
    """Exact minimum of the divisor metric over 0 < |nu|_1 <= radius.

    d = 1 and d = 2 use closed-form inner minimization; higher d falls back
    to brute force under a budget.
    """
    d = len(omega)
    best = math.inf
    best_nu = None
    if d == 1:
        w = float(omega[0])
        nus = np.arange(1, radius + 1, dtype=float)
        vals = np.abs(w * nus)
        if metric == "torus":
            vals = np.abs(vals - np.round(vals))
        i = int(np.argmin(vals))
        cand = [(float(vals[i]), (i + 1,))]
        for v, nu in cand:
            if v < best:
                best, best_nu = v, nu
    elif d == 2:
        w1, w2 = float(omega[0]), float(omega[1])
        if metric == "torus":
            raise InputError("torus metric is defined for scalar rotation numbers")
        for n2 in range(0, radius + 1):
            rem = radius - n2
            if n2 == 0:
                # nu = (n1, 0), n1 != 0
                v = abs(w1)
                if v < best:
                    best, best_nu = v, (1, 0)
                continue
            target = -w2 * n2 / w1 if w1 != 0 else 0.0
            cands = {math.floor(target), math.ceil(target)}
            cands |= {c + s for c in list(cands) for s in (-1, 1)}
            for n1 in cands:
                if abs(n1) > rem:
                    n1 = max(-rem, min(rem, n1))
                if n1 == 0 and n2 == 0:
                    continue
                v = abs(w1 * n1 + w2 * n2)
                if v < best:
                    best, best_nu = v, (int(n1), int(n2))
            # clamped endpoints as well
            for n1 in (-rem, rem):
                v = abs(w1 * n1 + w2 * n2)
                if v < best:
                    best, best_nu = v, (int(n1), int(n2))
    else:
        count = 0
        from itertools import product
        rng = range(-radius, radius + 1)
        for nu in product(rng, repeat=d):
            if all(c == 0 for c in nu):
                continue
            if sum(abs(c) for c in nu) > radius:
                continue
            count += 1
            if count > 3_000_000:
                raise BudgetError(
                    f"lattice search over |nu|_1 <= {radius} in dimension {d} "
                    "exceeds the search budget")
            v = abs(float(np.dot(omega, nu)))
            if v < best:
                best, best_nu = v, tuple(int(c) for c in nu)
    return best, best_nu


def bryuno_omega(omega: "RotationVector", n_max: int) -> BryunoReport:
    """Vector Brjuno sum sum_n 2^{-n} log(1/alpha_n) with brute-force alpha_n.

    alpha_n is the minimum of the divisor metric over 0 < |nu|_1 <= 2^n.
    Scalar rotation numbers are measured by distance of nu*omega to the
    integers (the natural metric for circle maps); vectors use |omega.nu|.
    Cost grows like 2^(n*(d-1)) per level for d >= 3, so keep n_max small.
    """
    if n_max < 1:
        raise InputError("n_max must be >= 1")
    w = omega.as_floats()
    metric = "torus" if omega.d == 1 else "linear"
    alphas = []
    partial = []
    total = 0.0
    for n in range(1, n_max + 1):
        a_n, nu_n = _min_abs_dot_ball(w, 2 ** n, metric)
        if a_n == 0.0 or omega.dot_is_exactly_zero(nu_n):
            raise InputError(
                f"rational dependence detected: omega . {nu_n} = 0 within search radius")
        alphas.append(a_n)
        total += math.log(1.0 / a_n) / (2 ** n)
        partial.append(total)
    # tail estimate from the Diophantine-style growth of the last level
    a_last = alphas[-1]
    tail = (math.log(1.0 / max(a_last, 1e-300)) + 2 * (n_max + 1)) * 2.0 ** (-n_max)
    return BryunoReport(kind="vector", partial_sums=partial, value=total,
                        n_used=n_max, alpha_n=alphas, converged=tail < 1e-9,
                        tail_bound=tail)


# -- Diophantine constants and scales ----------------------------------------

def diophantine_constant(omega: "RotationVector", tau: float, nu_max: int,
                         metric: str = "linear"):
    """Brute-force gamma estimate: min over 0 < |nu|_1 <= nu_max of |omega.nu| |nu|^tau.

    This is an estimate valid up to the recorded radius, not a certificate;
    callers must carry nu_max alongside the value.
    """
    if nu_max < 1:
        raise InputError("nu_max must be >= 1")
    w = omega.as_floats()
    d = len(w)
    best = math.inf
    best_nu = None
    if d == 1:
        nus = np.arange(1, nu_max + 1, dtype=float)
        vals = np.abs(w[0] * nus)
        if metric == "torus":
            vals = np.abs(vals - np.round(vals))
        scored = vals * nus ** tau
        i = int(np.argmin(scored))
        best, best_nu = float(scored[i]), (i + 1,)
        if vals[i] == 0.0:
            raise InputError(f"rational rotation number: nu = {i+1} gives a zero divisor")
    elif d == 2 and metric == "linear":
        for n2 in range(-nu_max, nu_max + 1):
            rem = nu_max - abs(n2)
            n1 = np.arange(-rem, rem + 1, dtype=float)
            if n2 == 0:
                n1 = n1[n1 != 0]
                if len(n1) == 0:
                    continue
            vals = np.abs(w[0] * n1 + w[1] * n2)
            l1 = np.abs(n1) + abs(n2)
            scored = vals * l1 ** tau
            i = int(np.argmin(scored))
            if scored[i] < best:
                best, best_nu = float(scored[i]), (int(n1[i]), int(n2))
    else:
        from itertools import product
        count = 0
        for nu in product(range(-nu_max, nu_max + 1), repeat=d):
            if all(c == 0 for c in nu) or sum(abs(c) for c in nu) > nu_max:
                continue
            count += 1
            if count > 3_000_000:
                raise BudgetError("diophantine_constant search budget exceeded")
            x = abs(float(np.dot(w, nu)))
            if metric == "torus":
                x = torus_distance(float(np.dot(w, nu)))
            s = x * sum(abs(c) for c in nu) ** tau
            if s < best:
                best, best_nu = s, tuple(nu)
    if best_nu is not None and omega.dot_is_exactly_zero(best_nu):
        raise InputError(f"rational dependence detected at nu = {best_nu}")
    return best, best_nu


def scale_of(nu, omega, gamma: float, metric: str = "linear") -> int:
    """Dyadic scale of a mode: -1 for nu = 0, 0 when |omega.nu| >= gamma,
    else the unique n >= 1 with 2^{-n} gamma <= |omega.nu| < 2^{-(n-1)} gamma.
    """
    nu = tuple(int(c) for c in nu)
    if all(c == 0 for c in nu):
        return -1
    if hasattr(omega, "as_floats"):
        x = omega.dot(nu)
    else:
        x = float(np.dot(np.asarray(omega, dtype=float), nu))
    if metric == "torus":
        x = torus_distance(x)
    return scale_of_abs(abs(x), gamma)


def scale_of_abs(x_abs: float, gamma: float) -> int:
    """Scale of a known divisor magnitude (see scale_of)."""
    if gamma <= 0:
        raise InputError("gamma must be positive")
    if x_abs >= gamma:
        return 0
    if x_abs <= 0:
        raise InputError("zero divisor has no scale; nu = 0 is scale -1")
    n = 1
    bound = 0.5 * gamma
    while x_abs < bound:
        n += 1
        bound *= 0.5
        if n > 4000:
            raise InputError("divisor too small for scale assignment")
    return n


# -- rotation vectors ----------------------------------------------------------

@dataclass
class RotationVector:
    """Frequency vector with optional exact components and cached metadata."""

    components: tuple
    d: int = 0
    gamma_estimate: float | None = None
    tau: float | None = None
    nu_max_used: int | None = None
    gamma_metric: str = "linear"
    _floats: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "d", len(comps))
        vals = np.array([c.value() if isinstance(c, Surd) else float(c)
                         for c in comps], dtype=float)
        object.__setattr__(self, "_floats", vals)
        if self.d < 1:
            raise InputError("rotation vector needs at least one component")

    # construction helpers
    @staticmethod
    def golden() -> "RotationVector":
        return RotationVector((surd_golden(),))

    @staticmethod
    def golden_pair() -> "RotationVector":
        return RotationVector((Surd(1, 0, 0, 1), surd_golden()))

    @staticmethod
    def from_floats(values) -> "RotationVector":
        return RotationVector(tuple(float(v) for v in values))

    @staticmethod
    def from_cf(preperiod, period) -> "RotationVector":
        return RotationVector((surd_from_cf(list(preperiod), list(period)),))

    def as_floats(self) -> np.ndarray:
        return self._floats.copy()

    def dot(self, nu) -> float:
        return float(np.dot(self._floats, np.asarray(nu, dtype=float)))

    def dot_is_exactly_zero(self, nu) -> bool:
        """Exact rational-dependence test where exact components allow it."""
        nu = tuple(int(c) for c in nu)
        rational = Fraction(0)
        irrational: dict[int, Fraction] = {}
        for c, n in zip(self.components, nu):
            if n == 0:
                continue
            if isinstance(c, Surd):
                s = c.normalized()
                rational += Fraction(n * s.a, s.c)
                if s.b != 0:
                    irrational[s.m] = irrational.get(s.m, Fraction(0)) + Fraction(n * s.b, s.c)
            else:
                # float component: fall back to the stored double, exactly
                rational += Fraction(n) * Fraction(*float(c).as_integer_ratio())
        return rational == 0 and all(v == 0 for v in irrational.values())

    def scalar(self):
        """The rotation number for d = 1 inputs (surd preserved)."""
        if self.d != 1:
            raise InputError("scalar() is only defined for d = 1")
        return self.components[0]

    def verify_independence(self, nu_max: int, metric: str = "linear") -> float:
        """Raise when some |nu|_1 <= nu_max gives omega.nu = 0; return the min."""
        w = self.as_floats()
        m = "torus" if (metric == "torus" and self.d == 1) else "linear"
        best, nu = _min_abs_dot_ball(w, nu_max, m)
        if best == 0.0 or self.dot_is_exactly_zero(nu):
            raise InputError(
                f"rationally dependent rotation vector: omega . {nu} = 0 "
                f"(|nu|_1 <= {nu_max})")
        return best

    def with_diophantine(self, tau: float, nu_max: int,
                         metric: str = "linear") -> "RotationVector":
        gamma, nu = diophantine_constant(self, tau, nu_max, metric=metric)
        self.gamma_estimate = gamma
        self.tau = tau
        self.nu_max_used = nu_max
        self.gamma_metric = metric
        return self
