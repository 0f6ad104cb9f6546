"""Truncated Fourier-Taylor series arithmetic.

A series value is a finite sum

    u(psi, eps) = sum_{k=0..K} eps^k sum_nu e^{i nu.psi} u_nu^(k),

with perturbation order k, Fourier mode nu in Z^d and coefficients in C^n.
Storage is a sparse map keyed by (k, nu); for trigonometric-polynomial
forcing of degree N_f every coefficient of the solved series satisfies
|nu|_1 <= k*N_f, and the map never holds keys outside that support (a
per-instance slack widens the bound for intermediate products).

All operations are pure and return new instances; convolution sums use
compensated (Kahan) accumulation with a fixed summation order so repeated
runs are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

# Coefficient dtype for every stored value.  Swapping in np.clongdouble here
# is the supported extended-precision build (see README); the default build
# is plain double precision.
COEFF_DTYPE = np.complex128

Key = tuple[int, tuple[int, ...]]


def _as_value(x, n: int) -> np.ndarray:
    v = np.asarray(x, dtype=COEFF_DTYPE).reshape(-1)
    if v.shape != (n,):
        raise InputError(f"coefficient value has length {v.shape}, expected ({n},)")
    return v


@dataclass(frozen=True)
class FTSeries:
    """Sparse truncated Fourier-Taylor series.

    Treated as immutable after construction: callers must not mutate
    ``coeffs`` or the stored arrays.
    """

    dim_d: int
    dim_n: int
    max_order: int
    mode_bound: int
    coeffs: dict = field(default_factory=dict)
    mode_slack: int = 0

    def __post_init__(self):
        if self.dim_d < 1 or self.dim_n < 1:
            raise InputError("dim_d and dim_n must be >= 1")
        if self.max_order < 0:
            raise InputError("max_order must be >= 0")
        for (k, nu), val in self.coeffs.items():
            if not (0 <= k <= self.max_order):
                raise InputError(f"order {k} outside 0..{self.max_order}")
            if len(nu) != self.dim_d:
                raise InputError(f"mode {nu} has wrong dimension (d={self.dim_d})")
            if val.shape != (self.dim_n,):
                raise InputError(f"value at {(k, nu)} has shape {val.shape}")
            if _l1(nu) > k * self.mode_bound + self.mode_slack:
                raise InputError(
                    f"mode {nu} at order {k} violates support bound "
                    f"|nu|_1 <= {k}*{self.mode_bound}+{self.mode_slack}"
                )

    # -- accessors ---------------------------------------------------------

    def coeff(self, k: int, nu: tuple[int, ...]) -> np.ndarray:
        """Coefficient at (k, nu); zeros when the key is absent."""
        v = self.coeffs.get((k, tuple(nu)))
        if v is None:
            return np.zeros(self.dim_n, dtype=COEFF_DTYPE)
        return v

    def keys_at_order(self, k: int):
        return sorted(nu for (kk, nu) in self.coeffs.keys() if kk == k)

    def sorted_keys(self):
        return sorted(self.coeffs.keys())

    def __len__(self):
        return len(self.coeffs)


def _l1(nu) -> int:
    return sum(abs(c) for c in nu)


def _prune(d: dict) -> dict:
    return {key: v for key, v in d.items() if np.any(v != 0)}


def ft_zero(dim_d: int, dim_n: int, max_order: int, mode_bound: int) -> FTSeries:
    return FTSeries(dim_d, dim_n, max_order, mode_bound, {})


def ft_one(dim_d: int, max_order: int, mode_bound: int) -> FTSeries:
    """Multiplicative identity: scalar 1 at (k=0, nu=0)."""
    zero = (0,) * dim_d
    return FTSeries(dim_d, 1, max_order, mode_bound,
                    {(0, zero): np.ones(1, dtype=COEFF_DTYPE)})


def ft_from_dict(dim_d, dim_n, max_order, mode_bound, items, mode_slack=0) -> FTSeries:
    coeffs = {}
    for (k, nu), v in items.items():
        coeffs[(int(k), tuple(int(c) for c in nu))] = _as_value(v, dim_n)
    return FTSeries(dim_d, dim_n, max_order, mode_bound, _prune(coeffs), mode_slack)


def _check_compat(a: FTSeries, b: FTSeries):
    if (a.dim_d, a.dim_n, a.max_order) != (b.dim_d, b.dim_n, b.max_order):
        raise InputError(
            "series mismatch: "
            f"(d={a.dim_d},n={a.dim_n},K={a.max_order}) vs (d={b.dim_d},n={b.dim_n},K={b.max_order})"
        )


def ft_add(a: FTSeries, b: FTSeries) -> FTSeries:
    """Coefficient-wise sum; support bound is the max of the inputs."""
    _check_compat(a, b)
    out = {key: v.copy() for key, v in a.coeffs.items()}
    for key, v in b.coeffs.items():
        if key in out:
            out[key] = out[key] + v
        else:
            out[key] = v.copy()
    return FTSeries(a.dim_d, a.dim_n, a.max_order,
                    max(a.mode_bound, b.mode_bound), _prune(out),
                    max(a.mode_slack, b.mode_slack))


def ft_scale(a: FTSeries, c) -> FTSeries:
    c = complex(c)
    out = {key: v * c for key, v in a.coeffs.items()}
    return FTSeries(a.dim_d, a.dim_n, a.max_order, a.mode_bound, _prune(out),
                    a.mode_slack)


def ft_neg(a: FTSeries) -> FTSeries:
    return ft_scale(a, -1.0)


class _Kahan:
    """Compensated accumulator for complex vectors, one slot per key."""

    def __init__(self, n):
        self.n = n
        self.sum = {}
        self.comp = {}

    def add(self, key, value):
        s = self.sum.get(key)
        if s is None:
            self.sum[key] = value.copy()
            self.comp[key] = np.zeros(self.n, dtype=COEFF_DTYPE)
            return
        c = self.comp[key]
        y = value - c
        t = s + y
        self.comp[key] = (t - s) - y
        self.sum[key] = t

    def result(self):
        return _prune(self.sum)


def ft_mul(a: FTSeries, b: FTSeries) -> FTSeries:
    """Convolution over both order and Fourier labels, truncated at max_order.

    Values multiply componentwise (scalar series are the main use).
    """
    _check_compat(a, b)
    K = a.max_order
    acc = _Kahan(a.dim_n)
    for (k1, nu1) in sorted(a.coeffs.keys()):
        v1 = a.coeffs[(k1, nu1)]
        for (k2, nu2) in sorted(b.coeffs.keys()):
            k = k1 + k2
            if k > K:
                continue
            nu = tuple(x + y for x, y in zip(nu1, nu2))
            acc.add((k, nu), v1 * b.coeffs[(k2, nu2)])
    return FTSeries(a.dim_d, a.dim_n, K, max(a.mode_bound, b.mode_bound),
                    acc.result(), a.mode_slack + b.mode_slack)


def ft_shift(a: FTSeries, nu0) -> FTSeries:
    """Multiply by e^{i nu0.psi}: shifts every Fourier label by nu0."""
    nu0 = tuple(int(c) for c in nu0)
    out = {(k, tuple(x + y for x, y in zip(nu, nu0))): v.copy()
           for (k, nu), v in a.coeffs.items()}
    return FTSeries(a.dim_d, a.dim_n, a.max_order, a.mode_bound, out,
                    a.mode_slack + _l1(nu0))


def ft_component(a: FTSeries, j: int) -> FTSeries:
    """Scalar series made of component j of a vector series."""
    out = {key: v[j:j + 1].copy() for key, v in a.coeffs.items()}
    return FTSeries(a.dim_d, 1, a.max_order, a.mode_bound, _prune(out), a.mode_slack)


def ft_stack(parts: list[FTSeries]) -> FTSeries:
    """Assemble a vector series from scalar component series."""
    n = len(parts)
    base = parts[0]
    keys = set()
    for p in parts:
        if (p.dim_d, p.max_order) != (base.dim_d, base.max_order) or p.dim_n != 1:
            raise InputError("ft_stack needs scalar series on a common grid")
        keys.update(p.coeffs.keys())
    out = {}
    for key in keys:
        v = np.zeros(n, dtype=COEFF_DTYPE)
        for j, p in enumerate(parts):
            w = p.coeffs.get(key)
            if w is not None:
                v[j] = w[0]
        out[key] = v
    return FTSeries(base.dim_d, n, base.max_order,
                    max(p.mode_bound for p in parts), _prune(out),
                    max(p.mode_slack for p in parts))


def ft_linear(a: FTSeries, weights) -> FTSeries:
    """Scalar series sum_j weights[j] * a_j (used for i*nu0 . u contractions)."""
    w = np.asarray(weights, dtype=COEFF_DTYPE)
    if w.shape != (a.dim_n,):
        raise InputError("weight vector has wrong length")
    out = {key: np.array([np.dot(w, v)], dtype=COEFF_DTYPE)
           for key, v in a.coeffs.items()}
    return FTSeries(a.dim_d, 1, a.max_order, a.mode_bound, _prune(out), a.mode_slack)


def ft_strip_unperturbed(a: FTSeries) -> FTSeries:
    """Drop the (k=0, nu=0) coefficient, keeping the perturbative part."""
    zero = (0, (0,) * a.dim_d)
    out = {key: v.copy() for key, v in a.coeffs.items() if key != zero}
    return FTSeries(a.dim_d, a.dim_n, a.max_order, a.mode_bound, out, a.mode_slack)


def ft_exp(w: FTSeries) -> FTSeries:
    """exp of a scalar series with no (k=0, nu=0) content: sum_s w^s / s!.

    The sum is finite because w starts at order >= 1, so w^s starts at
    order s and truncation stops the iteration.
    """
    if w.dim_n != 1:
        raise InputError("ft_exp takes a scalar series")
    zero = (0, (0,) * w.dim_d)
    if zero in w.coeffs or any(k == 0 for (k, _) in w.coeffs.keys()):
        raise InputError("ft_exp needs a series with no order-0 content")
    acc = ft_one(w.dim_d, w.max_order, w.mode_bound)
    term = acc
    for s in range(1, w.max_order + 1):
        term = ft_scale(ft_mul(term, w), 1.0 / s)
        if len(term) == 0:
            break
        acc = ft_add(acc, term)
    return acc


def ft_polyval(coeffs, w: FTSeries) -> FTSeries:
    """Polynomial sum_j coeffs[j] * w^j of a scalar series with no order-0 part."""
    if w.dim_n != 1:
        raise InputError("ft_polyval takes a scalar series")
    acc = ft_scale(ft_one(w.dim_d, w.max_order, w.mode_bound), complex(coeffs[0]))
    power = ft_one(w.dim_d, w.max_order, w.mode_bound)
    for j in range(1, len(coeffs)):
        power = ft_mul(power, w)
        if len(power) == 0:
            break
        c = complex(coeffs[j])
        if c != 0:
            acc = ft_add(acc, ft_scale(power, c))
    return acc


def ft_compose_analytic(modes, u: FTSeries) -> FTSeries:
    """Compose an analytic forcing F(u, psi) with a scalar series u.

    ``modes`` is a sequence of (nu0, dcoeffs, exact) triples describing
    F(u, psi) = sum_nu0 e^{i nu0.psi} F_nu0(u) via the derivative values
    dcoeffs[s] = d^s F_nu0 / du^s at the unperturbed point u0 (the (0,0)
    coefficient of u).  ``exact=True`` marks polynomial data (the list is
    complete); otherwise the truncation order must not outrun the supplied
    derivatives.

    Returns sum_nu0 shift_nu0( sum_s dcoeffs[s]/s! * (u-u0)^s ).
    """
    if u.dim_n != 1:
        raise InputError("ft_compose_analytic composes scalar series")
    for k, nu in u.coeffs.keys():
        if k == 0 and _l1(nu) > 0:
            raise InputError("order-0 part of u must be the single unperturbed coefficient")
    ubar = ft_strip_unperturbed(u)
    K = u.max_order
    total = None
    for nu0, dcoeffs, exact in modes:
        dcoeffs = np.asarray(dcoeffs, dtype=COEFF_DTYPE)
        if not exact and len(dcoeffs) < K + 1:
            raise InputError(
                f"Taylor data for mode {tuple(nu0)} has {len(dcoeffs)} derivatives, "
                f"order {K} needs {K + 1}"
            )
        taylor = [dcoeffs[s] / math.factorial(s) for s in range(len(dcoeffs))]
        part = ft_shift(ft_polyval(taylor, ubar), nu0)
        total = part if total is None else ft_add(total, part)
    if total is None:
        return ft_zero(u.dim_d, 1, K, u.mode_bound)
    return total


def ft_eval(u: FTSeries, psi, eps: float) -> np.ndarray:
    """Evaluate: sum_k eps^k sum_nu e^{i nu.psi} coeff(k, nu)."""
    psi = np.asarray(psi, dtype=float).reshape(-1)
    if psi.shape != (u.dim_d,):
        raise InputError("psi has wrong dimension")
    out = np.zeros(u.dim_n, dtype=COEFF_DTYPE)
    for (k, nu) in u.sorted_keys():
        phase = np.dot(np.asarray(nu, dtype=float), psi)
        out = out + (eps ** k) * np.exp(1j * phase) * u.coeffs[(k, nu)]
    return out


def ft_eval_grid(u: FTSeries, psis: np.ndarray, eps: float) -> np.ndarray:
    """Vectorized ft_eval over rows of psis (shape (m, d)) -> (m, n)."""
    psis = np.asarray(psis, dtype=float)
    if psis.ndim != 2 or psis.shape[1] != u.dim_d:
        raise InputError("psis must have shape (m, d)")
    out = np.zeros((psis.shape[0], u.dim_n), dtype=COEFF_DTYPE)
    for (k, nu) in u.sorted_keys():
        phase = psis @ np.asarray(nu, dtype=float)
        out += (eps ** k) * np.exp(1j * phase)[:, None] * u.coeffs[(k, nu)][None, :]
    return out


def ft_order_norms(u: FTSeries) -> np.ndarray:
    """Per-order l1 norms: norm_k = sum_nu sum_j |coeff(k, nu)_j|, k = 0..K."""
    norms = np.zeros(u.max_order + 1, dtype=float)
    for (k, nu), v in u.coeffs.items():
        norms[k] += float(np.sum(np.abs(v)))
    return norms


def ft_order_sup_norms(u: FTSeries) -> np.ndarray:
    """Per-order sup norms over stored modes."""
    norms = np.zeros(u.max_order + 1, dtype=float)
    for (k, nu), v in u.coeffs.items():
        norms[k] = max(norms[k], float(np.max(np.abs(v))))
    return norms


def hermitize(u: FTSeries) -> tuple[FTSeries, float]:
    """Enforce coeff(k,-nu) = conj(coeff(k,nu)); return the worst violation.

    The symmetrization averages the pair, so series that already satisfy
    the reality condition pass through with violation 0.
    """
    out = {}
    worst = 0.0
    for (k, nu), v in u.coeffs.items():
        mnu = tuple(-c for c in nu)
        w = u.coeffs.get((k, mnu))
        if w is None:
            w = np.zeros_like(v)
        sym = 0.5 * (v + np.conj(w))
        worst = max(worst, float(np.max(np.abs(v - np.conj(w)))))
        out[(k, nu)] = sym
    fixed = FTSeries(u.dim_d, u.dim_n, u.max_order, u.mode_bound, _prune(out),
                     u.mode_slack)
    return fixed, worst


# -- CSV serialization -----------------------------------------------------

def to_csv(u: FTSeries) -> str:
    """Serialize with header k,nu_1..nu_d,re_1..re_n,im_1..im_n.

    One row per stored coefficient, k ascending then nu lexicographic, so
    identical series produce byte-identical files.
    """
    cols = (["k"]
            + [f"nu_{i+1}" for i in range(u.dim_d)]
            + [f"re_{j+1}" for j in range(u.dim_n)]
            + [f"im_{j+1}" for j in range(u.dim_n)])
    lines = [",".join(cols)]
    for (k, nu) in u.sorted_keys():
        v = u.coeffs[(k, nu)]
        row = [str(k)] + [str(c) for c in nu]
        row += [repr(float(x.real)) for x in v]
        row += [repr(float(x.imag)) for x in v]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def from_csv(text: str, max_order: int, mode_bound: int, mode_slack: int = 0) -> FTSeries:
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    d = sum(1 for c in header if c.startswith("nu_"))
    n = sum(1 for c in header if c.startswith("re_"))
    if header[0] != "k" or d < 1 or n < 1:
        raise InputError("bad series CSV header")
    items = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        k = int(parts[0])
        nu = tuple(int(x) for x in parts[1:1 + d])
        re = [float(x) for x in parts[1 + d:1 + d + n]]
        im = [float(x) for x in parts[1 + d + n:1 + d + 2 * n]]
        items[(k, nu)] = np.array([complex(a, b) for a, b in zip(re, im)])
    return ft_from_dict(d, n, max_order, mode_bound, items, mode_slack)
