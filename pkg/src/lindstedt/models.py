"""Order-by-order Lindstedt solvers for the four model families.

Variants
--------
maximal_torus   second-order angle equation on T^n, divisor -(omega.nu)^2
standard_map    discrete conjugation equation, divisor 2(cos(2 pi omega nu) - 1)
lower_tori      coupled (alpha, beta) angle blocks with beta zero-mode solves
dissipative     first-order response equation with an eps * d^2/dt^2 correction

Each solver walks orders k = 1..K, builds the composed right-hand side once
per order (compose) and then divides by the order-zero divisor (divide).
Zero Fourier modes are fixed per variant: free angle averages are pinned to
zero, beta and dissipative averages are solved from the nondegeneracy data.
Reality of the series is enforced, not assumed: each order is symmetrized
and the worst asymmetry is reported as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diophantine import RotationVector, torus_distance
from .errors import ContractError, InputError
from .series import (
    COEFF_DTYPE,
    FTSeries,
    ft_add,
    ft_component,
    ft_exp,
    ft_eval_grid,
    ft_linear,
    ft_mul,
    ft_one,
    ft_order_norms,
    ft_scale,
    ft_shift,
    ft_stack,
    ft_strip_unperturbed,
    ft_zero,
    hermitize,
)

VARIANTS = ("maximal_torus", "standard_map", "lower_tori", "dissipative")


@dataclass(frozen=True)
class Tolerances:
    stationary: float = 1e-10
    nondeg: float = 1e-8
    compatibility: float = 1e-12
    hermitian: float = 1e-12
    oracle: float = 1e-10
    anchor: float = 1e-10          # dissipative g(c0) = f_0 check


@dataclass(frozen=True)
class ForcingMode:
    """One Fourier mode of the forcing.

    For beta-dependent forcing the coefficient is a polynomial in
    (beta - beta0): beta_poly maps power multi-indices to complex
    coefficients and coeff holds its constant term.
    """

    nu: tuple[int, ...]
    coeff: complex
    beta_poly: dict | None = None


@dataclass(frozen=True)
class ForcingModes:
    dim_d: int
    modes: tuple[ForcingMode, ...]

    def __post_init__(self):
        seen = {}
        for m in self.modes:
            if len(m.nu) != self.dim_d:
                raise InputError(f"forcing mode {m.nu} has wrong dimension")
            if m.nu in seen:
                raise InputError(f"duplicate forcing mode {m.nu}")
            seen[m.nu] = m
        for m in self.modes:
            mnu = tuple(-c for c in m.nu)
            other = seen.get(mnu)
            if other is None:
                raise InputError(f"forcing mode {m.nu} has no conjugate partner {mnu}")
            if abs(m.coeff - np.conj(other.coeff)) > 1e-12 * max(1.0, abs(m.coeff)):
                raise InputError(f"forcing modes {m.nu}/{mnu} are not a hermitian pair")
            if (m.beta_poly is None) != (other.beta_poly is None):
                raise InputError(f"beta data of modes {m.nu}/{mnu} is inconsistent")
            if m.beta_poly is not None:
                for mu, c in m.beta_poly.items():
                    c2 = other.beta_poly.get(mu, 0.0)
                    if abs(c - np.conj(c2)) > 1e-12 * max(1.0, abs(c)):
                        raise InputError(
                            f"beta polynomial of modes {m.nu}/{mnu} is not hermitian")

    def support_radius(self) -> int:
        return max((sum(abs(c) for c in m.nu) for m in self.modes), default=0)

    def get(self, nu):
        nu = tuple(nu)
        for m in self.modes:
            if m.nu == nu:
                return m
        return None


def sin_forcing() -> ForcingModes:
    """sin x as a mode list: (2i)^{-1} nu0 at nu0 = +-1."""
    return ForcingModes(1, (
        ForcingMode((1,), -0.5j),
        ForcingMode((-1,), 0.5j),
    ))


def cosine_forcing(nu0, amplitude: float = 1.0, dim_d: int | None = None) -> ForcingModes:
    """amplitude * cos(nu0 . alpha)."""
    nu0 = tuple(int(c) for c in nu0)
    d = dim_d or len(nu0)
    half = amplitude / 2.0
    return ForcingModes(d, (
        ForcingMode(nu0, half),
        ForcingMode(tuple(-c for c in nu0), half),
    ))


def merge_forcings(a: ForcingModes, b: ForcingModes) -> ForcingModes:
    if a.dim_d != b.dim_d:
        raise InputError("forcing dimension mismatch")
    merged: dict = {}
    for m in a.modes + b.modes:
        if m.nu in merged:
            old = merged[m.nu]
            if (old.beta_poly is None) != (m.beta_poly is None):
                raise InputError("cannot merge beta and plain modes")
            if m.beta_poly is None:
                merged[m.nu] = ForcingMode(m.nu, old.coeff + m.coeff)
            else:
                poly = dict(old.beta_poly)
                for mu, c in m.beta_poly.items():
                    poly[mu] = poly.get(mu, 0.0) + c
                merged[m.nu] = ForcingMode(m.nu, old.coeff + m.coeff, poly)
        else:
            merged[m.nu] = m
    return ForcingModes(a.dim_d, tuple(merged[k] for k in sorted(merged)))


def taylor_of_exp(scale: complex, beta0: float, degree: int) -> dict:
    """Centered Taylor data of e^{scale*(beta0 + h)} in h, to the given degree."""
    base = np.exp(scale * beta0)
    return {(q,): base * scale ** q / math.factorial(q) for q in range(degree + 1)}


def taylor_of_cos(beta0: float, degree: int, amplitude: float = 1.0,
                  freq: float = 1.0) -> dict:
    """Centered Taylor data of amplitude*cos(freq*(beta0 + h))."""
    out = {}
    for q in range(degree + 1):
        dq = amplitude * freq ** q * math.cos(freq * beta0 + q * math.pi / 2.0)
        out[(q,)] = dq / math.factorial(q)
    return out


def taylor_of_sin(beta0: float, degree: int, amplitude: float = 1.0,
                  freq: float = 1.0) -> dict:
    """Centered Taylor data of amplitude*sin(freq*(beta0 + h))."""
    out = {}
    for q in range(degree + 1):
        dq = amplitude * freq ** q * math.sin(freq * beta0 + q * math.pi / 2.0)
        out[(q,)] = dq / math.factorial(q)
    return out


def merge_taylor(*polys: dict) -> dict:
    out: dict = {}
    for poly in polys:
        for mu, c in poly.items():
            out[mu] = out.get(mu, 0.0) + c
    return out


@dataclass
class ModelSpec:
    """Model family, dimensions, forcing and anchor data.

    dim_d is the Fourier dimension of the solved series; dim_n the number
    of solved components.  lower_tori splits dim_n = r + s into the free
    angle block and the beta block; dissipative carries the polynomial g
    (coefficients in ascending powers of x) and the anchor c0.
    """

    variant: str
    forcing: ForcingModes
    alpha0: np.ndarray | None = None
    beta0: np.ndarray | None = None
    c0: float | None = None
    g_poly: np.ndarray | None = None
    r: int = 0
    s: int = 0
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}")
        d = self.forcing.dim_d
        if self.variant == "standard_map":
            if d != 1:
                raise InputError("standard_map needs scalar Fourier modes")
            self.alpha0 = np.zeros(1)
        elif self.variant == "maximal_torus":
            if self.alpha0 is None:
                self.alpha0 = np.zeros(d)
            self.alpha0 = np.asarray(self.alpha0, dtype=float).reshape(d)
        elif self.variant == "lower_tori":
            if self.r < 1 or self.s < 1 or self.r != d:
                raise InputError("lower_tori needs r = Fourier dimension and s >= 1")
            if self.beta0 is None:
                self.beta0 = np.zeros(self.s)
            self.beta0 = np.asarray(self.beta0, dtype=float).reshape(self.s)
            if self.alpha0 is None:
                self.alpha0 = np.zeros(self.r)
            self.alpha0 = np.asarray(self.alpha0, dtype=float).reshape(self.r)
            self._init_lower()
        elif self.variant == "dissipative":
            if self.g_poly is None:
                raise InputError("dissipative model needs g polynomial coefficients")
            self.g_poly = np.asarray(self.g_poly, dtype=float)
            self._init_dissipative()

    # -- derived data -------------------------------------------------------

    @property
    def dim_d(self) -> int:
        return self.forcing.dim_d

    @property
    def dim_n(self) -> int:
        if self.variant == "lower_tori":
            return self.r + self.s
        if self.variant == "maximal_torus":
            return self.forcing.dim_d
        return 1

    @property
    def mode_bound(self) -> int:
        return max(1, self.forcing.support_radius())

    @property
    def divisor_metric(self) -> str:
        return "torus" if self.variant == "standard_map" else "linear"

    def divisor_arg(self, omega: RotationVector, nu) -> float:
        """|.|-argument used for scale assignment of the mode nu."""
        x = omega.dot(nu)
        return torus_distance(x) if self.variant == "standard_map" else x

    def delta0(self, x: float) -> complex:
        """Order-zero Fourier multiplier of the linear operator."""
        if self.variant == "standard_map":
            return 2.0 * (math.cos(2.0 * math.pi * x) - 1.0)
        if self.variant == "dissipative":
            return 1j * x
        return (1j * x) ** 2

    def delta1(self, x: float) -> complex:
        """Order-one multiplier (dissipative only; zero elsewhere)."""
        if self.variant == "dissipative":
            return (1j * x) ** 2
        return 0.0 + 0.0j

    def _init_lower(self):
        zero_mode = self.forcing.get((0,) * self.r)
        if zero_mode is None or zero_mode.beta_poly is None:
            raise InputError("lower_tori forcing needs a beta polynomial at nu = 0")
        grad = np.array([zero_mode.beta_poly.get(_unit(self.s, b), 0.0)
                         for b in range(self.s)], dtype=complex)
        if np.max(np.abs(grad.imag)) > 1e-12:
            raise InputError("mode-0 beta data must be real")
        if np.linalg.norm(grad.real) > self.tol.stationary:
            raise InputError(
                f"beta0 is not a stationary point: |grad| = {np.linalg.norm(grad.real):.3e}")
        self.hessian = _poly_hessian(zero_mode.beta_poly, self.s)
        sv = np.linalg.svd(self.hessian, compute_uv=False)
        if sv.min() <= self.tol.nondeg:
            raise InputError("degenerate beta block: Hessian is singular")
        # nondegeneracy matrix used by the zero-momentum propagator G = -A^{-1}
        self.nondeg_matrix = -self.hessian

    def _init_dissipative(self):
        f0_mode = self.forcing.get((0,) * self.dim_d)
        f0 = f0_mode.coeff.real if f0_mode is not None else 0.0
        if self.c0 is None:
            poly_desc = np.array(self.g_poly[::-1], dtype=float)
            poly_desc[-1] -= f0
            roots = np.roots(poly_desc)
            real = [r.real for r in roots if abs(r.imag) < 1e-9]
            if not real:
                raise InputError("g(c0) = f_0 has no real root; supply c0")
            self.c0 = float(sorted(real)[-1])
        g_c0 = float(np.polyval(self.g_poly[::-1], self.c0))
        if abs(g_c0 - f0) > self.tol.anchor * max(1.0, abs(f0)):
            raise InputError(f"anchor violates g(c0) = f_0: {g_c0} vs {f0}")
        # centered coefficients: g(c0 + h) = sum_j gc[j] h^j
        deg = len(self.g_poly) - 1
        gc = np.zeros(deg + 1)
        for j, a in enumerate(self.g_poly):
            for q in range(j + 1):
                gc[q] += a * math.comb(j, q) * self.c0 ** (j - q)
        self.g_centered = gc
        self.a = float(gc[1]) if deg >= 1 else 0.0
        if self.a == 0.0:
            raise InputError("degenerate dissipative anchor: dg/dx(c0) = 0")


def _unit(s: int, b: int) -> tuple[int, ...]:
    e = [0] * s
    e[b] = 1
    return tuple(e)


def _poly_hessian(poly: dict, s: int) -> np.ndarray:
    H = np.zeros((s, s))
    for b in range(s):
        for c in range(b, s):
            mu = list((0,) * s)
            mu[b] += 1
            mu[c] += 1
            coeff = poly.get(tuple(mu), 0.0)
            val = float(np.real(coeff)) * (2.0 if b == c else 1.0)
            H[b, c] = H[c, b] = val
    return H


# -- composition of the right-hand side --------------------------------------

def _poly_derivative(poly: dict, b: int) -> dict:
    out = {}
    for mu, c in poly.items():
        if mu[b] == 0:
            continue
        dmu = list(mu)
        dmu[b] -= 1
        out[tuple(dmu)] = out.get(tuple(dmu), 0.0) + c * mu[b]
    return out


def _poly_of_series(poly: dict, comps: list[FTSeries], K: int, d: int, Nf: int) -> FTSeries:
    """Evaluate a multivariate polynomial at scalar component series."""
    monomials: dict = {}

    def monomial(mu) -> FTSeries:
        if mu in monomials:
            return monomials[mu]
        if all(q == 0 for q in mu):
            m = ft_one(d, K, Nf)
        else:
            b = next(i for i, q in enumerate(mu) if q > 0)
            prev = list(mu)
            prev[b] -= 1
            m = ft_mul(monomial(tuple(prev)), comps[b])
        monomials[mu] = m
        return m

    acc = ft_zero(d, 1, K, Nf)
    for mu in sorted(poly):
        c = complex(poly[mu])
        if c == 0:
            continue
        acc = ft_add(acc, ft_scale(monomial(mu), c))
    return acc


class _Composed:
    """Composed right-hand-side data: a series plus the zero-mode scale.

    zero_scale[k] is the l1 size of the individual forcing-mode
    contributions to the (k, 0) coefficient; dividing the final (k, 0)
    value by it measures how sharply the compatibility sum cancelled.
    """

    def __init__(self, series: FTSeries, zero_scale: np.ndarray):
        self.series = series
        self.zero_scale = zero_scale


def _accumulate(parts, d, n, K, Nf):
    total = ft_zero(d, n, K, Nf)
    zero_scale = np.zeros(K + 1)
    zero = (0,) * d
    for p in parts:
        total = ft_add(total, p)
        for k in range(K + 1):
            zero_scale[k] += float(np.sum(np.abs(p.coeff(k, zero))))
    return _Composed(total, zero_scale)


def compose_gradient(spec: ModelSpec, series: FTSeries) -> _Composed:
    """[partial_alpha f] for the maximal torus (n = d components)."""
    d, K, Nf = spec.dim_d, series.max_order, series.mode_bound
    ubar = ft_strip_unperturbed(series)
    parts = []
    for m in spec.forcing.modes:
        inu = 1j * np.asarray(m.nu, dtype=float)
        w = ft_linear(ubar, inu)
        E = ft_exp(w)
        phase = np.exp(1j * float(np.dot(m.nu, spec.alpha0)))
        shifted = ft_shift(E, m.nu)
        comps = [ft_scale(shifted, inu[a] * m.coeff * phase) for a in range(d)]
        parts.append(ft_stack(comps))
    return _accumulate(parts, d, d, K, Nf)


def compose_standard(spec: ModelSpec, series: FTSeries) -> _Composed:
    """[f(alpha + u)] for the standard map (scalar)."""
    K, Nf = series.max_order, series.mode_bound
    ubar = ft_strip_unperturbed(series)
    parts = []
    for m in spec.forcing.modes:
        w = ft_scale(ubar, 1j * m.nu[0])
        E = ft_exp(w)
        parts.append(ft_scale(ft_shift(E, m.nu), m.coeff))
    return _accumulate(parts, 1, 1, K, Nf)


def compose_lower(spec: ModelSpec, series: FTSeries) -> tuple[_Composed, _Composed]:
    """([partial_alpha f], [partial_beta f]) for lower-dimensional tori."""
    d, K, Nf = spec.dim_d, series.max_order, series.mode_bound
    r, s = spec.r, spec.s
    ubar = ft_strip_unperturbed(series)
    beta_comps = [ft_component(ubar, r + b) for b in range(s)]
    parts_a, parts_b = [], []
    for m in spec.forcing.modes:
        if m.beta_poly is None:
            raise InputError(f"lower_tori mode {m.nu} lacks beta Taylor data")
        inu = 1j * np.asarray(m.nu, dtype=float)
        w = ft_linear(ubar, np.concatenate([inu, np.zeros(s)]))
        E = ft_exp(w)
        phase = np.exp(1j * float(np.dot(m.nu, spec.alpha0)))
        P = _poly_of_series(m.beta_poly, beta_comps, K, d, Nf)
        EP = ft_mul(E, P)
        shifted = ft_shift(EP, m.nu)
        parts_a.append(ft_stack(
            [ft_scale(shifted, inu[a] * phase) for a in range(r)]))
        dcomps = []
        for b in range(s):
            Pb = _poly_of_series(_poly_derivative(m.beta_poly, b), beta_comps, K, d, Nf)
            dcomps.append(ft_scale(ft_shift(ft_mul(E, Pb), m.nu), phase))
        parts_b.append(ft_stack(dcomps))
    return (_accumulate(parts_a, d, r, K, Nf), _accumulate(parts_b, d, s, K, Nf))


def compose_dissipative_g(spec: ModelSpec, series: FTSeries) -> _Composed:
    """[g(x)] around c0 (scalar), from the centered polynomial coefficients."""
    K, Nf = series.max_order, series.mode_bound
    d = spec.dim_d
    xbar = ft_strip_unperturbed(series)
    gc = spec.g_centered
    acc = ft_scale(ft_one(d, K, Nf), complex(gc[0]))
    power = ft_one(d, K, Nf)
    zero_scale = np.zeros(K + 1)
    zero = (0,) * d
    for j in range(1, len(gc)):
        power = ft_mul(power, xbar)
        if len(power) == 0:
            break
        if gc[j] != 0.0:
            term = ft_scale(power, complex(gc[j]))
            acc = ft_add(acc, term)
            for k in range(K + 1):
                zero_scale[k] += float(np.sum(np.abs(term.coeff(k, zero))))
    return _Composed(acc, zero_scale)


# -- solver -------------------------------------------------------------------

@dataclass
class SolveReport:
    """Series plus the diagnostics collected while solving."""

    variant: str
    max_order: int
    series: FTSeries
    compat_abs: list
    compat_rel: list
    min_divisor: list
    zero_mode_corrections: dict
    hermitian_violation: float
    gamma_estimate: float | None
    gamma_nu_max: int | None
    tau: float | None


def _candidate_modes(keys, bound: int, d: int):
    out = set()
    for nu in keys:
        if 0 < sum(abs(c) for c in nu) <= bound:
            out.add(nu)
    return sorted(out)


def solve_lindstedt(spec: ModelSpec, omega: RotationVector, K: int,
                    zero_modes: dict | None = None) -> SolveReport:
    """Solve the order-by-order recursion through order K.

    zero_modes optionally pins the free averages u^(k)_0 of the angle
    variants to nonzero vectors (they default to zero).
    """
    if K < 1:
        raise InputError("K must be >= 1")
    if omega.d != spec.dim_d:
        raise InputError(f"omega has dimension {omega.d}, model needs {spec.dim_d}")
    Nf = spec.mode_bound
    omega.verify_independence(max(K * Nf, 8), metric=spec.divisor_metric)
    if omega.gamma_estimate is None:
        tau = max(1.0, float(omega.d - 1)) if spec.variant != "standard_map" else 1.0
        omega.with_diophantine(tau, max(200, 4 * K * Nf), metric=spec.divisor_metric)

    d, n = spec.dim_d, spec.dim_n
    zero = (0,) * d
    coeffs: dict = {}
    if spec.variant == "maximal_torus":
        coeffs[(0, zero)] = np.asarray(spec.alpha0, dtype=COEFF_DTYPE)
    elif spec.variant == "lower_tori":
        coeffs[(0, zero)] = np.concatenate([spec.alpha0, spec.beta0]).astype(COEFF_DTYPE)
    elif spec.variant == "dissipative":
        coeffs[(0, zero)] = np.array([spec.c0], dtype=COEFF_DTYPE)

    min_div: list[float] = []
    zero_corr: dict = {}
    worst_herm = 0.0

    def current() -> FTSeries:
        return FTSeries(d, n, K, Nf, dict(coeffs))

    for k in range(1, K + 1):
        step_min = math.inf

        if spec.variant in ("maximal_torus", "standard_map"):
            comp = (compose_gradient if spec.variant == "maximal_torus"
                    else compose_standard)(spec, current())
            rhs = comp.series
            # maximal torus solves D u = -eps grad f, the map solves D u = eps f(.)
            sign = -1.0 if spec.variant == "maximal_torus" else 1.0
            for nu in _candidate_modes(rhs.keys_at_order(k - 1), k * Nf, d):
                d0 = spec.delta0(omega.dot(nu))
                step_min = min(step_min, abs(d0))
                val = sign * rhs.coeff(k - 1, nu) / d0
                if np.any(val != 0):
                    coeffs[(k, nu)] = val
            if zero_modes and k in zero_modes:
                coeffs[(k, zero)] = np.asarray(zero_modes[k], dtype=COEFF_DTYPE).reshape(n)

        elif spec.variant == "lower_tori":
            ga, gb = compose_lower(spec, current())
            cand = set(_candidate_modes(ga.series.keys_at_order(k - 1), k * Nf, d))
            cand |= set(_candidate_modes(gb.series.keys_at_order(k - 1), k * Nf, d))
            for nu in sorted(cand):
                d0 = spec.delta0(omega.dot(nu))
                step_min = min(step_min, abs(d0))
                val = -np.concatenate([ga.series.coeff(k - 1, nu),
                                       gb.series.coeff(k - 1, nu)]) / d0
                if np.any(val != 0):
                    coeffs[(k, nu)] = val
            # beta average from the nondegenerate zero-mode solve; the alpha
            # average stays free (zero unless overridden)
            _, gb2 = compose_lower(spec, current())
            phi = gb2.series.coeff(k, zero)
            beta_fix = -np.linalg.solve(spec.hessian.astype(complex), phi)
            fix = np.concatenate([np.zeros(spec.r, dtype=COEFF_DTYPE), beta_fix])
            if zero_modes and k in zero_modes:
                fix = fix + np.concatenate([
                    np.asarray(zero_modes[k], dtype=COEFF_DTYPE).reshape(spec.r),
                    np.zeros(spec.s, dtype=COEFF_DTYPE)])
            if np.any(fix != 0):
                coeffs[(k, zero)] = fix
            zero_corr[k] = fix.copy()

        else:  # dissipative
            gser = compose_dissipative_g(spec, current())
            cand = set(_candidate_modes(gser.series.keys_at_order(k - 1), k * Nf, d))
            cand |= set(_candidate_modes(current().keys_at_order(k - 1), k * Nf, d))
            if k == 1:
                cand |= {m.nu for m in spec.forcing.modes if any(m.nu)}
            for nu in sorted(cand):
                x = omega.dot(nu)
                d0 = spec.delta0(x)
                step_min = min(step_min, abs(d0))
                fmode = spec.forcing.get(nu)
                fv = fmode.coeff if (k == 1 and fmode is not None) else 0.0
                prev = current().coeff(k - 1, nu)[0]
                gv = gser.series.coeff(k - 1, nu)[0]
                val = (fv - spec.delta1(x) * prev - gv) / d0
                if val != 0:
                    coeffs[(k, nu)] = np.array([val], dtype=COEFF_DTYPE)
            g_after = compose_dissipative_g(spec, current())
            gk = g_after.series.coeff(k, zero)[0]
            x0 = -gk / spec.a
            if x0 != 0:
                coeffs[(k, zero)] = np.array([x0], dtype=COEFF_DTYPE)
            zero_corr[k] = np.array([x0], dtype=COEFF_DTYPE)

        fixed, viol = hermitize(current())
        worst_herm = max(worst_herm, viol)
        coeffs = dict(fixed.coeffs)
        min_div.append(step_min if math.isfinite(step_min) else 0.0)

    series = current()
    compat_abs, compat_rel = _compatibility_values(spec, omega, series)
    return SolveReport(
        variant=spec.variant, max_order=K, series=series,
        compat_abs=compat_abs, compat_rel=compat_rel,
        min_divisor=min_div, zero_mode_corrections=zero_corr,
        hermitian_violation=worst_herm,
        gamma_estimate=omega.gamma_estimate, gamma_nu_max=omega.nu_max_used,
        tau=omega.tau)


# -- compatibility diagnostics ------------------------------------------------

def _rel(value: float, scale: float) -> float:
    return value / scale if scale > 0 else (0.0 if value == 0.0 else math.inf)


def _compatibility_values(spec: ModelSpec, omega: RotationVector, series: FTSeries):
    """Zero-mode sums that the solved series must cancel, per equation order.

    Angle variants report the composed zero mode one order below the
    equation order (the forcing enters with one power of the perturbation);
    beta and dissipative rows are the post-correction residuals of the
    zero-mode solves, which the corrections should have annihilated.
    """
    K = series.max_order
    zero = (0,) * spec.dim_d
    abs_rows, rel_rows = [], []

    if spec.variant in ("maximal_torus", "standard_map"):
        comp = (compose_gradient if spec.variant == "maximal_torus"
                else compose_standard)(spec, series)
        for k in range(1, K + 1):
            v = float(np.max(np.abs(comp.series.coeff(k - 1, zero))))
            abs_rows.append(v)
            rel_rows.append(_rel(v, comp.zero_scale[k - 1]))
    elif spec.variant == "lower_tori":
        ga, gb = compose_lower(spec, series)
        for k in range(1, K + 1):
            va = float(np.max(np.abs(ga.series.coeff(k - 1, zero))))
            vb = float(np.max(np.abs(gb.series.coeff(k, zero))))
            abs_rows.append((va, vb))
            rel_rows.append((_rel(va, ga.zero_scale[k - 1]),
                             _rel(vb, gb.zero_scale[k])))
    else:
        gser = compose_dissipative_g(spec, series)
        f0_mode = spec.forcing.get(zero)
        f0 = f0_mode.coeff.real if f0_mode is not None else 0.0
        for k in range(1, K + 1):
            v = gser.series.coeff(k - 1, zero)[0]
            if k == 1:
                v = v - f0
            v = float(abs(v))
            # orders >= 2 were corrected at order k, report the residual there
            post = float(abs(gser.series.coeff(k, zero)[0]))
            abs_rows.append((v, post))
            rel_rows.append((_rel(v, max(gser.zero_scale[k - 1], abs(f0))),
                             _rel(post, gser.zero_scale[k])))
    return abs_rows, rel_rows


def compatibility_report(spec: ModelSpec, omega: RotationVector,
                         series: FTSeries) -> dict:
    """Per-order zero-mode compatibility values for a solved series."""
    abs_rows, rel_rows = _compatibility_values(spec, omega, series)
    return {
        "variant": spec.variant,
        "orders": list(range(1, series.max_order + 1)),
        "absolute": abs_rows,
        "relative": rel_rows,
    }


# -- residual verification ------------------------------------------------------

def _psi_grid(d: int, grid_n: int | None) -> np.ndarray:
    per_axis = grid_n if grid_n is not None else 64
    if d == 1:
        t = np.linspace(0.0, 2.0 * math.pi, per_axis, endpoint=False)
        return t.reshape(-1, 1)
    axes = [np.linspace(0.0, 2.0 * math.pi, per_axis, endpoint=False) for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _apply_multiplier(series: FTSeries, psis: np.ndarray, eps: float, mult) -> np.ndarray:
    """sum_{k,nu} eps^k mult(omega.nu placeholder handled by caller) e^{i nu.psi} c."""
    out = np.zeros((psis.shape[0], series.dim_n), dtype=COEFF_DTYPE)
    for (k, nu) in series.sorted_keys():
        m = mult(nu, k)
        if m == 0:
            continue
        phase = psis @ np.asarray(nu, dtype=float)
        out += (eps ** k) * m * np.exp(1j * phase)[:, None] * series.coeffs[(k, nu)][None, :]
    return out


def _forcing_eval(forcing: ForcingModes, psis: np.ndarray) -> np.ndarray:
    out = np.zeros(psis.shape[0], dtype=COEFF_DTYPE)
    for m in forcing.modes:
        out += m.coeff * np.exp(1j * (psis @ np.asarray(m.nu, dtype=float)))
    return out


def _poly_eval_multi(poly: dict, h: np.ndarray) -> np.ndarray:
    """Evaluate a centered multivariate polynomial on rows of h (m, s)."""
    out = np.zeros(h.shape[0], dtype=COEFF_DTYPE)
    for mu, c in poly.items():
        term = np.full(h.shape[0], complex(c), dtype=COEFF_DTYPE)
        for b, q in enumerate(mu):
            if q:
                term *= h[:, b] ** q
        out += term
    return out


def _residual_with_scale(spec: ModelSpec, omega: RotationVector, series: FTSeries,
                         eps: float, grid_n: int | None = None):
    """(sup |D u - eps F(u)|, magnitude reference for the cancellation)."""
    d = spec.dim_d
    psis = _psi_grid(d, grid_n)
    u = ft_eval_grid(series, psis, eps)
    if float(np.max(np.abs(u.imag))) > 1e-8 * max(1.0, float(np.max(np.abs(u)))):
        raise ContractError("series evaluation is not real; reality symmetry broken")
    u_real = u.real

    if spec.variant == "maximal_torus":
        lhs = _apply_multiplier(series, psis, eps,
                                lambda nu, k: spec.delta0(omega.dot(nu)))
        alpha = u_real + psis  # alpha0 already sits in the (0,0) coefficient
        rhs = np.zeros_like(lhs)
        for m in spec.forcing.modes:
            e = np.exp(1j * (alpha @ np.asarray(m.nu, dtype=float)))
            rhs += -eps * m.coeff * (1j * np.asarray(m.nu, dtype=float))[None, :] * e[:, None]
    elif spec.variant == "standard_map":
        lhs = _apply_multiplier(series, psis, eps,
                                lambda nu, k: spec.delta0(omega.dot(nu)))
        arg = psis[:, 0] + u_real[:, 0]
        rhs = np.zeros_like(lhs)
        for m in spec.forcing.modes:
            rhs[:, 0] += eps * m.coeff * np.exp(1j * m.nu[0] * arg)
    elif spec.variant == "lower_tori":
        lhs = _apply_multiplier(series, psis, eps,
                                lambda nu, k: spec.delta0(omega.dot(nu)))
        alpha = u_real[:, :spec.r] + psis
        bbar = u_real[:, spec.r:] - spec.beta0[None, :]
        rhs = np.zeros_like(lhs)
        for m in spec.forcing.modes:
            e = np.exp(1j * (alpha @ np.asarray(m.nu, dtype=float)))
            P = _poly_eval_multi(m.beta_poly, bbar)
            rhs[:, :spec.r] += -eps * (1j * np.asarray(m.nu, dtype=float))[None, :] \
                * (e * P)[:, None]
            for b in range(spec.s):
                Pb = _poly_eval_multi(_poly_derivative(m.beta_poly, b), bbar)
                rhs[:, spec.r + b] += -eps * e * Pb
    else:  # dissipative
        lhs = _apply_multiplier(
            series, psis, eps,
            lambda nu, k: spec.delta0(omega.dot(nu)) + eps * spec.delta1(omega.dot(nu)))
        g_vals = np.polyval(spec.g_poly[::-1], u_real[:, 0])
        f_vals = _forcing_eval(spec.forcing, psis)
        rhs = (eps * (f_vals - g_vals))[:, None]

    resid = float(np.max(np.abs(lhs - rhs)))
    scale = float(np.max(np.abs(lhs)) + np.max(np.abs(rhs)))
    return resid, max(scale, 1e-300)


def residual_eval(spec: ModelSpec, omega: RotationVector, series: FTSeries,
                  eps: float, grid_n: int | None = None) -> float:
    """Sup-norm defect of the truncated series in the model equation."""
    resid, _ = _residual_with_scale(spec, omega, series, eps, grid_n)
    return resid


def residual_order_check(spec: ModelSpec, omega: RotationVector, series: FTSeries,
                         eps1: float, eps2: float, grid_n: int | None = None) -> dict:
    """Fitted defect exponent p from residual(eps) ~ eps^p at two epsilons.

    A correct order-K solve leaves a defect of order K+1, so p should come
    out >= K + 0.8 for suitably small eps pairs.
    """
    if not (0 < eps2 < eps1):
        raise InputError("need 0 < eps2 < eps1")
    r1, s1 = _residual_with_scale(spec, omega, series, eps1, grid_n)
    r2, s2 = _residual_with_scale(spec, omega, series, eps2, grid_n)
    floor1, floor2 = 1e-13 * s1, 1e-13 * s2
    if r1 <= floor1 or r2 <= floor2:
        raise InputError(
            f"residuals {r1:.3e}/{r2:.3e} sit at the roundoff floor "
            f"({floor1:.1e}/{floor2:.1e}); decrease K or increase eps")
    p = math.log(r1 / r2) / math.log(eps1 / eps2)
    return {"p": p, "residuals": (r1, r2), "eps": (eps1, eps2),
            "max_order": series.max_order}


# -- stationary-point analysis -------------------------------------------------

@dataclass
class StationaryReport:
    gradient_norm: float
    hessian: np.ndarray
    hessian_eigenvalues: np.ndarray
    a_eigenvalues: np.ndarray          # eigenvalues of -Hessian (nondegeneracy data)
    distinct: bool
    classification: str
    hyperbolic_for: str | None
    elliptic_for: str | None


def stationary_point_check(f0_poly: dict, s: int,
                           tol_stationary: float = 1e-10,
                           tol_nondeg: float = 1e-8,
                           tol_distinct: float = 1e-9) -> StationaryReport:
    """Validate the beta anchor of the mode-0 forcing data.

    f0_poly holds the Taylor coefficients of f_0 centered at beta0 (power
    multi-index -> coefficient).  Raises when the linear part is not zero;
    otherwise reports the Hessian eigendata and the torus classification
    keyed on the sign of the nondegeneracy matrix -Hessian.
    """
    grad = np.array([float(np.real(f0_poly.get(_unit(s, b), 0.0))) for b in range(s)])
    gnorm = float(np.linalg.norm(grad))
    if gnorm > tol_stationary:
        raise InputError(f"beta0 is not a stationary point: |grad f_0| = {gnorm:.6g}")
    H = _poly_hessian(f0_poly, s)
    h_eigs = np.linalg.eigvalsh(H)
    a_eigs = np.sort(np.linalg.eigvalsh(-H))
    if np.min(np.abs(a_eigs)) <= tol_nondeg:
        raise InputError("degenerate stationary point: singular Hessian")
    distinct = bool(np.all(np.diff(a_eigs) > tol_distinct))
    if np.all(a_eigs > 0):
        cls, hyp, ell = "definite", "eps<0", "eps>0"
    elif np.all(a_eigs < 0):
        cls, hyp, ell = "definite", "eps>0", "eps<0"
    else:
        cls, hyp, ell = "mixed", None, None
    return StationaryReport(gradient_norm=gnorm, hessian=H,
                            hessian_eigenvalues=h_eigs, a_eigenvalues=a_eigs,
                            distinct=distinct, classification=cls,
                            hyperbolic_for=hyp, elliptic_for=ell)


# -- JSON ingestion --------------------------------------------------------------

def omega_from_json(obj) -> RotationVector:
    from .diophantine import Surd, surd_from_cf, surd_golden, surd_silver
    kind = obj.get("kind")
    if kind == "golden":
        return RotationVector.golden()
    if kind == "golden_pair":
        return RotationVector.golden_pair()
    if kind == "silver":
        return RotationVector((surd_silver(),))
    if kind == "floats":
        return RotationVector.from_floats(obj["values"])
    if kind == "cf":
        return RotationVector.from_cf(obj.get("preperiod", []), obj["period"])
    if kind == "surds":
        comps = tuple(Surd(int(c["a"]), int(c["b"]), int(c["m"]), int(c.get("c", 1)))
                      for c in obj["components"])
        return RotationVector(comps)
    raise InputError(f"unknown omega kind {kind!r}")


def _mode_from_json(entry, dim_d: int) -> ForcingMode:
    nu = tuple(int(c) for c in entry["nu"])
    coeff = complex(float(entry.get("re", 0.0)), float(entry.get("im", 0.0)))
    poly = None
    if "beta_taylor" in entry:
        poly = {}
        for term in entry["beta_taylor"]:
            mu = tuple(int(q) for q in term["powers"])
            poly[mu] = complex(float(term.get("re", 0.0)), float(term.get("im", 0.0)))
        coeff = poly.get(tuple(0 for _ in next(iter(poly))), coeff) if poly else coeff
    return ForcingMode(nu, coeff, poly)


def spec_from_json(obj) -> tuple[ModelSpec, RotationVector, int]:
    """Build (ModelSpec, omega, order) from a parsed model document."""
    try:
        variant = obj["model"]
        omega = omega_from_json(obj["omega"])
        K = int(obj["order"])
        dim_d = omega.d
        modes = tuple(_mode_from_json(e, dim_d) for e in obj.get("forcing", []))
        forcing = ForcingModes(dim_d, modes)
        tol_kwargs = {k: float(v) for k, v in obj.get("tolerances", {}).items()}
        tol = Tolerances(**tol_kwargs)
        kwargs = dict(variant=variant, forcing=forcing, tol=tol)
        if "alpha0" in obj:
            kwargs["alpha0"] = np.asarray(obj["alpha0"], dtype=float)
        if "beta0" in obj:
            kwargs["beta0"] = np.asarray(obj["beta0"], dtype=float)
        if "c0" in obj:
            kwargs["c0"] = float(obj["c0"])
        if "g_taylor" in obj:
            kwargs["g_poly"] = np.asarray(obj["g_taylor"], dtype=float)
        if variant == "lower_tori":
            kwargs["r"] = int(obj.get("r", dim_d))
            kwargs["s"] = int(obj["s"])
        spec = ModelSpec(**kwargs)
    except KeyError as exc:
        raise InputError(f"model document is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad model document: {exc}") from None
    if K < 1:
        raise InputError("order must be >= 1")
    return spec, omega, K
