"""Convergence, summability, measure and dynamical checks on solver output.

Radius estimates come from a least-squares fit of log norm_k over a tail
window (ratio tests are too fragile against small-divisor oscillation);
growth classification uses the sign of the second differences of
log norm_k.  The measure scan marks excluded perturbation strengths for
the square-root resonance conditions and integrates the excluded fraction
both on a grid and as an exact interval union.  The dissipative model can
be integrated directly with a fixed-step fourth-order scheme to verify
that the truncated response solution attracts nearby initial conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diophantine import RotationVector, bryuno_function
from .errors import InputError
from .models import ModelSpec, sin_forcing, solve_lindstedt
from .series import FTSeries, ft_order_norms


# -- growth classification -----------------------------------------------------

def growth_classification(values: np.ndarray, window: slice | None = None) -> dict:
    """Classify |a_k| growth as geometric or factorial-like.

    Factorial-like means the second differences of log|a_k| have positive
    mean with t-statistic above 3 over the tail window (default: last
    half); near-zero second differences are geometric.
    """
    a = np.asarray(values, dtype=float)
    ks = np.nonzero(a > 0)[0]
    if len(ks) < 5:
        raise InputError("growth classification needs at least 5 nonzero entries")
    logs = np.log(a[ks])
    d2 = np.diff(logs, 2)
    if window is None:
        window = slice(len(d2) // 2, len(d2))
    tail = d2[window]
    if len(tail) < 2:
        tail = d2
    mean = float(np.mean(tail))
    std = float(np.std(tail, ddof=1)) if len(tail) > 1 else 0.0
    if std == 0.0:
        t_stat = 0.0 if abs(mean) < 1e-12 else math.copysign(math.inf, mean)
    else:
        t_stat = mean / (std / math.sqrt(len(tail)))
    label = "factorial-like" if t_stat > 3.0 else "geometric"
    return {"label": label, "t_statistic": t_stat, "mean_second_difference": mean,
            "window_size": len(tail)}


# -- radius estimate -------------------------------------------------------------

@dataclass
class RadiusEstimate:
    norms: np.ndarray
    root_test: np.ndarray
    rho: float | None
    slope: float
    window: tuple[int, int]
    classification: str
    t_statistic: float


def radius_estimate(norms, window: tuple[int, int] | None = None) -> RadiusEstimate:
    """Convergence-radius estimate from per-order norms.

    Fits log norm_k ~ c - k log(rho) over the tail window (default last
    half of the nonzero orders) and reports rho = e^{-slope}.  Inputs
    classified factorial-like get no finite radius.
    """
    norms = np.asarray(norms, dtype=float)
    ks = np.nonzero(norms > 0)[0]
    ks = ks[ks >= 1]
    if len(ks) < 3:
        raise InputError("radius estimate needs at least 3 nonzero orders")
    logs = np.log(norms[ks])
    root_test = norms[ks] ** (1.0 / ks)
    if window is None:
        lo = len(ks) // 2
        window = (int(ks[lo]), int(ks[-1]))
    sel = (ks >= window[0]) & (ks <= window[1])
    if np.count_nonzero(sel) < 2:
        raise InputError("radius window contains fewer than 2 orders")
    A = np.column_stack([np.ones(np.count_nonzero(sel)), ks[sel].astype(float)])
    coef, *_ = np.linalg.lstsq(A, logs[sel], rcond=None)
    slope = float(coef[1])
    cls = {"label": "geometric", "t_statistic": 0.0}
    if len(ks) >= 5:
        cls = growth_classification(norms)
    rho = None if cls["label"] == "factorial-like" else float(math.exp(-slope))
    return RadiusEstimate(norms=norms, root_test=root_test, rho=rho, slope=slope,
                          window=window, classification=cls["label"],
                          t_statistic=float(cls["t_statistic"]))


# -- Brjuno-vs-radius ordering ----------------------------------------------------

def davie_compare(rotation_numbers: list, K: int, separation: float = 1.5) -> dict:
    """Brjuno value vs estimated radius for a family of rotation numbers.

    Solves the discrete conjugation model at order K for each rotation
    number, estimates the radius from the per-order norms, and checks that
    radius ranking reverses Brjuno ranking for pairs whose Brjuno values
    are separated by at least the given factor.  Pairs below the
    separation threshold are reported inconclusive: no ordering claim is
    made for them.
    """
    if not rotation_numbers:
        raise InputError("need at least one rotation number")
    spec = ModelSpec("standard_map", sin_forcing())
    rows = []
    for alpha in rotation_numbers:
        om = RotationVector((alpha,))
        b = bryuno_function(alpha)
        rep = solve_lindstedt(spec, om, K)
        est = radius_estimate(ft_order_norms(rep.series))
        rows.append({"alpha": float(om.as_floats()[0]), "bryuno": b.value,
                     "rho_estimate": est.rho, "slope": est.slope,
                     "classification": est.classification})
    pairs = []
    consistent = True
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            bi, bj = rows[i]["bryuno"], rows[j]["bryuno"]
            lo, hi = (i, j) if bi < bj else (j, i)
            ratio = rows[hi]["bryuno"] / max(rows[lo]["bryuno"], 1e-300)
            if ratio < separation:
                pairs.append({"pair": (i, j), "ratio": ratio, "verdict": "inconclusive"})
                continue
            ri, rj = rows[lo]["rho_estimate"], rows[hi]["rho_estimate"]
            ok = (ri is not None and rj is not None and ri > rj)
            consistent = consistent and ok
            pairs.append({"pair": (i, j), "ratio": ratio,
                          "verdict": "consistent" if ok else "violated"})
    return {"rows": rows, "pairs": pairs, "consistent": consistent,
            "separation": separation}


# -- Borel transform ---------------------------------------------------------------

def borel_transform(coeffs) -> dict:
    """Divide out k! and classify growth before and after.

    Factorial-like input turning geometric after the division is the
    summability signature of a divergent-but-resummable expansion;
    geometric input staying geometric is plain convergence.
    """
    a = np.asarray(coeffs, dtype=float)
    if len(a) < 9:
        raise InputError("Borel transform wants at least orders 0..8")
    b = np.array([v / math.factorial(k) for k, v in enumerate(a)])
    cls_a = growth_classification(np.abs(a))
    cls_b = growth_classification(np.abs(b))
    if cls_a["label"] == "factorial-like" and cls_b["label"] == "geometric":
        signature = "borel-summable signature"
    elif cls_a["label"] == "geometric" and cls_b["label"] == "geometric":
        signature = "convergent signature"
    else:
        signature = "unclassified"
    return {"transformed": b, "original_class": cls_a, "transformed_class": cls_b,
            "signature": signature}


# -- resonance measure scan ---------------------------------------------------------

@dataclass
class MeasureReport:
    eps0: float
    grid_n: int
    excluded_fraction: float          # from the exact interval union
    excluded_fraction_grid: float
    intervals: list
    per_nu: list
    m0: float
    analytic_bound_fraction: float    # shape check with unit constant, not a bound
    grid_warning: bool = False
    assumption_breach: str | None = None


def _interval_union_measure(intervals, lo: float, hi: float) -> float:
    clipped = []
    for a, b in intervals:
        a, b = max(a, lo), min(b, hi)
        if b > a:
            clipped.append((a, b))
    clipped.sort()
    total = 0.0
    cur_a, cur_b = None, None
    for a, b in clipped:
        if cur_b is None or a > cur_b:
            if cur_b is not None:
                total += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    if cur_b is not None:
        total += cur_b - cur_a
    return total


def melnikov_measure(a_list, gamma: float, tau_prime: float, eps0: float,
                     omega: RotationVector, nu_max: int, grid_n: int = 4000,
                     tau: float | None = None,
                     gamma_base: float | None = None) -> MeasureReport:
    """Excluded fraction of (0, eps0] for the square-root resonance conditions.

    A perturbation strength eps is excluded when some mode nu with
    m0 <= |nu|_1 <= nu_max and some a_i violate
    | |omega.nu| - sqrt(eps a_i) | > gamma |nu|^{-tau_prime}.  Modes below
    m0 = (gamma_base / 4 sqrt(eps0 A))^{-1/tau} cannot interfere (their
    divisor is pinned away from every resonance by the base Diophantine
    bound of omega, whose constant gamma_base defaults to the cached
    estimate) and are skipped.  The report carries both a grid count
    (auto-refined once when the grid is coarser than the thinnest
    interval) and the exact interval-union fraction, plus the closed-form
    decay shape evaluated with unit constant for comparison.
    """
    a_list = [float(a) for a in a_list]
    breach = None
    r = omega.d
    tau = float(tau if tau is not None else (omega.tau or max(1, r - 1)))
    if a_list and not tau_prime > tau + r:
        breach = f"tau'={tau_prime} does not exceed tau+r={tau + r}; decay not guaranteed"
    if eps0 <= 0:
        raise InputError("eps0 must be positive")
    if not a_list:
        return MeasureReport(eps0=eps0, grid_n=grid_n, excluded_fraction=0.0,
                             excluded_fraction_grid=0.0, intervals=[], per_nu=[],
                             m0=0.0, analytic_bound_fraction=0.0)
    if min(a_list) <= 0:
        raise InputError("resonance data a_i must be positive")
    A = max(a_list)
    a_min = min(a_list)
    if gamma_base is None:
        gamma_base = omega.gamma_estimate if omega.gamma_estimate else gamma
    m0 = (gamma_base / (4.0 * math.sqrt(eps0 * A))) ** (-1.0 / tau)

    intervals = []
    per_nu = []
    w = omega.as_floats()
    reach = math.sqrt(eps0 * A) + gamma  # |omega.nu| beyond this cannot reach
    from itertools import product as iproduct
    rng = range(-nu_max, nu_max + 1)
    for nu in iproduct(rng, repeat=r):
        l1 = sum(abs(c) for c in nu)
        if l1 == 0 or l1 > nu_max or l1 < m0:
            continue
        if nu[next(i for i, c in enumerate(nu) if c != 0)] < 0:
            continue  # +-nu give the same |omega.nu|
        x = abs(float(np.dot(w, nu)))
        if x > reach or x == 0.0:
            continue
        width = gamma * l1 ** (-tau_prime)
        contrib = 0.0
        for a_i in a_list:
            lo = max((x - width), 0.0) ** 2 / a_i
            hi = (x + width) ** 2 / a_i
            if lo < eps0 and hi > 0:
                intervals.append((lo, hi))
                contrib += min(hi, eps0) - max(lo, 0.0)
        if contrib > 0:
            per_nu.append({"nu": tuple(nu), "abs_dot": x, "width": width,
                           "excluded_length": contrib})

    excluded = _interval_union_measure(intervals, 0.0, eps0)
    fraction = excluded / eps0

    thinnest = min((b - a for a, b in intervals if b > a), default=math.inf)
    grid_warning = False
    g = grid_n
    for attempt in range(2):
        spacing = eps0 / g
        if spacing <= thinnest / 2 or not intervals:
            break
        if attempt == 0:
            g *= 8  # refine once, then flag
        else:
            grid_warning = True
    eps_grid = (np.arange(1, g + 1) / g) * eps0
    mask = np.zeros(g, dtype=bool)
    for a, b in intervals:
        mask |= (eps_grid >= a) & (eps_grid <= b)
    fraction_grid = float(np.count_nonzero(mask)) / g

    # closed-form decay shape (unit constant): gamma (sqrt(eps0 A)/gamma)^((tau'-r)/tau) sqrt(eps0/a) / eps0
    shape = gamma * (math.sqrt(eps0 * A) / gamma) ** ((tau_prime - r) / tau) \
        * math.sqrt(eps0 / a_min) / eps0
    return MeasureReport(eps0=eps0, grid_n=g, excluded_fraction=fraction,
                         excluded_fraction_grid=fraction_grid,
                         intervals=sorted(intervals), per_nu=per_nu, m0=m0,
                         analytic_bound_fraction=shape, grid_warning=grid_warning,
                         assumption_breach=breach)


# -- direct integration of the dissipative model -------------------------------------

@dataclass
class IntegrationReport:
    verdict: str
    eps: float
    t_final: float
    h: float
    halved: bool
    deviation_final_window: float
    samples_t: np.ndarray
    samples_x: np.ndarray


def _series_profile(series: FTSeries, eps: float):
    """Collapse eps into the coefficients: x(psi) = sum_nu C_nu e^{i nu psi}."""
    collapsed: dict = {}
    for (k, nu), v in series.coeffs.items():
        collapsed[nu] = collapsed.get(nu, 0.0 + 0.0j) + (eps ** k) * v[0]
    nus = np.array(sorted(collapsed), dtype=float)
    cs = np.array([collapsed[tuple(int(c) for c in nu)] for nu in nus])
    return nus, cs


def integrate_ode(spec: ModelSpec, omega: RotationVector, series: FTSeries,
                  eps: float, x_init: float, v_init: float, t_final: float,
                  h: float | None = None, tube_tol: float | None = None,
                  sample_every: int = 50) -> IntegrationReport:
    """Integrate the second-order dissipative equation with damping 1/eps.

    Classical fixed-step fourth-order Runge-Kutta for reproducibility.
    The verdict compares |x(t) - x_trunc(omega t)| over the last fifth of
    the run against tube_tol ("attracted" / "escaped"); models with
    dg/dx(c0) <= 0 get verdict "not applicable".
    """
    if spec.variant != "dissipative":
        raise InputError("integrate_ode applies to the dissipative model")
    if eps <= 0:
        raise InputError("eps must be positive (damping is 1/eps)")
    gamma_damp = 1.0 / eps
    w = omega.as_floats()
    if h is None:
        h = 1e-3 * (2.0 * math.pi / float(np.linalg.norm(w)))

    g_desc = spec.g_poly[::-1]
    f_modes = [(np.asarray(m.nu, dtype=float), m.coeff) for m in spec.forcing.modes]

    def f_of_t(t):
        tot = 0.0 + 0.0j
        for nu, c in f_modes:
            tot += c * np.exp(1j * float(np.dot(nu, w)) * t)
        return tot.real

    def rhs(t, y):
        x, v = y
        return np.array([v, f_of_t(t) - float(np.polyval(g_desc, x)) - gamma_damp * v])

    applicable = spec.a > 0
    blow_limit = 1e6 * max(1.0, abs(spec.c0), abs(x_init))

    def run(h_step):
        n_steps = int(math.ceil(t_final / h_step))
        y = np.array([x_init, v_init], dtype=float)
        t = 0.0
        ts, xs = [0.0], [y[0]]
        for i in range(n_steps):
            k1 = rhs(t, y)
            k2 = rhs(t + h_step / 2, y + h_step / 2 * k1)
            k3 = rhs(t + h_step / 2, y + h_step / 2 * k2)
            k4 = rhs(t + h_step, y + h_step * k3)
            y = y + (h_step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h_step
            if not np.isfinite(y).all() or abs(y[0]) > blow_limit:
                return None, None
            if (i + 1) % sample_every == 0 or i + 1 == n_steps:
                ts.append(t)
                xs.append(y[0])
        return np.array(ts), np.array(xs)

    halved = False
    ts, xs = run(h)
    if ts is None:
        halved = True
        h = h / 2.0
        ts, xs = run(h)
        if ts is None:
            raise InputError("integration unstable even after halving the step")

    # deviation from the truncated response over the final fifth of the run
    sel = ts >= 0.8 * t_final
    nus, cs = _series_profile(series, eps)
    psis = np.outer(ts[sel], w)  # (m, d)
    vals = np.zeros(len(ts[sel]), dtype=complex)
    for nu, c in zip(nus, cs):
        vals += c * np.exp(1j * (psis @ nu))
    deviation = float(np.max(np.abs(xs[sel] - vals.real)))

    if not applicable:
        verdict = "not applicable"
    elif tube_tol is None:
        verdict = "no tolerance supplied"
    else:
        verdict = "attracted" if deviation <= tube_tol else "escaped"
    return IntegrationReport(verdict=verdict, eps=eps, t_final=t_final, h=h,
                             halved=halved, deviation_final_window=deviation,
                             samples_t=ts, samples_x=xs)


def attractivity_check(spec: ModelSpec, omega: RotationVector, series: FTSeries,
                       eps: float, offset: float, t_final: float,
                       h: float | None = None) -> dict:
    """Matched-start calibration run plus an offset run.

    The tube tolerance is ten times the matched run's final-window
    deviation; the offset trajectory must fall inside it.
    """
    from .series import ft_eval
    d = spec.dim_d
    x0 = float(ft_eval(series, np.zeros(d), eps)[0].real)
    w = omega.as_floats()
    v0 = 0.0
    for (k, nu), v in series.coeffs.items():
        v0 += (eps ** k) * (1j * float(np.dot(nu, w)) * v[0]).real
    base = integrate_ode(spec, omega, series, eps, x0, v0, t_final, h=h)
    tol = 10.0 * base.deviation_final_window
    pert = integrate_ode(spec, omega, series, eps, x0 + offset, v0, t_final,
                         h=h, tube_tol=tol)
    return {"verdict": pert.verdict, "tube_tol": tol,
            "base_deviation": base.deviation_final_window,
            "offset_deviation": pert.deviation_final_window,
            "applicable": spec.a > 0, "h": base.h}
