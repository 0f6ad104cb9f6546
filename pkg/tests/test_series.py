import math

import numpy as np
import pytest

from lindstedt.errors import InputError
from lindstedt.series import (
    FTSeries,
    from_csv,
    ft_add,
    ft_compose_analytic,
    ft_eval,
    ft_from_dict,
    ft_mul,
    ft_one,
    ft_order_norms,
    ft_scale,
    ft_shift,
    ft_zero,
    hermitize,
    to_csv,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def scalar(items, K=4, Nf=1, d=1, slack=0):
    return ft_from_dict(d, 1, K, Nf, items, mode_slack=slack)


def random_hermitian(rng, K=3, Nf=1, density=0.8):
    items = {}
    for k in range(1, K + 1):
        for nu in range(1, k * Nf + 1):
            if rng.random() < density:
                c = complex(rng.standard_normal(), rng.standard_normal())
                items[(k, (nu,))] = c
                items[(k, (-nu,))] = np.conj(c)
        if rng.random() < 0.5:
            items[(k, (0,))] = complex(rng.standard_normal(), 0.0)
    return scalar(items, K=K, Nf=Nf)


# -- addition -----------------------------------------------------------------

def test_add_identity():
    a = scalar({(1, (1,)): 1j, (2, (0,)): 2.0})
    z = ft_zero(1, 1, 4, 1)
    out = ft_add(a, z)
    assert out.coeffs.keys() == a.coeffs.keys()
    for key in a.coeffs:
        assert np.array_equal(out.coeffs[key], a.coeffs[key])


def test_add_inverse_is_zero():
    a = scalar({(1, (1,)): 1j, (3, (-2,)): 2.0 - 1.0j})
    out = ft_add(a, ft_scale(a, -1.0))
    assert len(out) == 0


def test_add_componentwise():
    a = scalar({(1, (1,)): 1j})
    b = scalar({(1, (1,)): 2.0})
    out = ft_add(a, b)
    assert out.coeff(1, (1,))[0] == 2.0 + 1.0j


def test_add_dimension_mismatch():
    a = scalar({(1, (1,)): 1.0})
    b = ft_from_dict(2, 1, 4, 1, {(1, (1, 0)): 1.0})
    with pytest.raises(InputError):
        ft_add(a, b)


# -- multiplication -------------------------------------------------------------

def test_mul_single_mode_convolution():
    # (eps e^{i psi}) * (eps e^{-i psi}) -> 1 at (k=2, nu=0)
    a = scalar({(1, (1,)): 1.0})
    b = scalar({(1, (-1,)): 1.0})
    out = ft_mul(a, b)
    assert set(out.coeffs) == {(2, (0,))}
    assert out.coeff(2, (0,))[0] == 1.0


def test_mul_identity():
    rng = np.random.default_rng(7)
    a = random_hermitian(rng)
    out = ft_mul(a, ft_one(1, a.max_order, a.mode_bound))
    assert out.coeffs.keys() == a.coeffs.keys()
    for key in a.coeffs:
        assert np.allclose(out.coeffs[key], a.coeffs[key], rtol=0, atol=0)


def test_mul_square_of_cosine_pair():
    # (eps(e^{i psi} + e^{-i psi}))^2: k=2 coefficients {2: 1, 0: 2, -2: 1},
    # by direct convolution of the two-term mode list
    a = scalar({(1, (1,)): 1.0, (1, (-1,)): 1.0})
    out = ft_mul(a, a)
    assert out.coeff(2, (2,))[0] == 1.0
    assert out.coeff(2, (0,))[0] == 2.0
    assert out.coeff(2, (-2,))[0] == 1.0


def test_mul_truncates_at_max_order():
    a = scalar({(3, (1,)): 1.0})
    out = ft_mul(a, a)
    assert len(out) == 0  # order 6 > K = 4


def test_mul_commutative_and_associative():
    rng = np.random.default_rng(11)
    for _ in range(5):
        a = random_hermitian(rng)
        b = random_hermitian(rng)
        c = random_hermitian(rng)
        ab = ft_mul(a, b)
        ba = ft_mul(b, a)
        for key in set(ab.coeffs) | set(ba.coeffs):
            assert abs(ab.coeff(*key)[0] - ba.coeff(*key)[0]) < 1e-12
        lhs = ft_mul(ft_mul(a, b), c)
        rhs = ft_mul(a, ft_mul(b, c))
        for key in set(lhs.coeffs) | set(rhs.coeffs):
            assert abs(lhs.coeff(*key)[0] - rhs.coeff(*key)[0]) < 1e-12


def test_mul_support_minkowski_sum():
    rng = np.random.default_rng(3)
    a = random_hermitian(rng)
    b = random_hermitian(rng)
    sup_a = set(a.coeffs)
    sup_b = set(b.coeffs)
    allowed = {(ka + kb, (na[0] + nb[0],))
               for (ka, na) in sup_a for (kb, nb) in sup_b}
    assert set(ft_mul(a, b).coeffs) <= allowed


# -- composition -----------------------------------------------------------------

def sin_modes(K):
    # sin(alpha + u): per mode nu0 = +-1, derivative ladder (i nu0)^s * (2i)^{-1} nu0
    out = []
    for nu0 in (1, -1):
        d = np.array([(nu0 / 2j) * (1j * nu0) ** s for s in range(K + 1)])
        out.append(((nu0,), d, False))
    return out


def test_compose_sin_at_zero():
    u = ft_zero(1, 1, 4, 1)
    out = ft_compose_analytic(sin_modes(4), u)
    assert abs(out.coeff(0, (1,))[0] - (-0.5j)) < 1e-15
    assert abs(out.coeff(0, (-1,))[0] - 0.5j) < 1e-15
    assert len(out) == 2


def test_compose_linear_returns_input():
    rng = np.random.default_rng(5)
    u = random_hermitian(rng)
    modes = [((0,), np.array([0.0, 1.0]), True)]  # F(u) = u - u0 ... u0 = 0 here
    out = ft_compose_analytic(modes, u)
    for key in set(u.coeffs) | set(out.coeffs):
        if key == (0, (0,)):
            continue
        assert abs(out.coeff(*key)[0] - u.coeff(*key)[0]) < 1e-15


def test_compose_square_matches_mul():
    rng = np.random.default_rng(13)
    u = random_hermitian(rng)
    u0 = u.coeff(0, (0,))[0]
    modes = [((0,), np.array([u0 ** 2, 2 * u0, 2.0]), True)]
    direct = ft_mul(u, u)
    composed = ft_compose_analytic(modes, u)
    for key in set(direct.coeffs) | set(composed.coeffs):
        assert abs(direct.coeff(*key)[0] - composed.coeff(*key)[0]) < 1e-12


def sm_delta0(x):
    return 2.0 * (math.cos(2.0 * math.pi * x) - 1.0)


def test_compose_reproduces_discrete_map_order2():
    # independent oracle: the second-order coefficient of the discrete-map
    # recursion, written as the bare double sum over (s=1) splittings
    omega = GOLDEN
    u1 = {nu: -1j * nu / (2.0 * sm_delta0(omega * nu)) for nu in (-1, 1)}
    u = scalar({(1, (nu,)): c for nu, c in u1.items()}, K=3)

    def oracle_k2(nu):
        total = 0.0j
        for nu0 in (1, -1):
            rest = nu - nu0
            if rest in u1:
                total += (-((1j * nu0) ** 2) / 2.0) * u1[rest]
        return total

    composed = ft_compose_analytic(sin_modes(3), u)
    for nu in (-2, -1, 1, 2):
        assert abs(composed.coeff(1, (nu,))[0] - oracle_k2(nu)) < 1e-14


def test_compose_taylor_exhaustion():
    u = scalar({(1, (1,)): 1.0, (1, (-1,)): 1.0}, K=6)
    short = [((1,), np.array([1.0, 1.0]), False)]
    with pytest.raises(InputError):
        ft_compose_analytic(short, u)


def test_compose_hermitian_preserved():
    rng = np.random.default_rng(17)
    u = random_hermitian(rng)
    out = ft_compose_analytic(sin_modes(u.max_order), u)
    _, viol = hermitize(out)
    assert viol < 1e-12


# -- evaluation ------------------------------------------------------------------

def test_eval_eps_zero():
    u = scalar({(0, (0,)): 3.0, (1, (1,)): 5.0})
    assert ft_eval(u, [0.3], 0.0)[0] == 3.0


def test_eval_single_coefficient():
    c = 2.0 - 1.0j
    u = scalar({(1, (1,)): c})
    psi, eps = 0.7, 0.2
    expected = eps * c * np.exp(1j * psi)
    assert abs(ft_eval(u, [psi], eps)[0] - expected) < 1e-15


def test_eval_discrete_map_order1_at_half_pi():
    # scalar evaluation of the first-order conjugation coefficients at
    # psi = pi/2; the oracle is the direct two-term sum
    omega = GOLDEN
    u1 = {nu: -1j * nu / (2.0 * sm_delta0(omega * nu)) for nu in (-1, 1)}
    u = scalar({(1, (nu,)): c for nu, c in u1.items()})
    eps, psi = 1e-2, math.pi / 2.0
    oracle = sum(eps * c * np.exp(1j * nu * psi) for nu, c in u1.items())
    got = ft_eval(u, [psi], eps)[0]
    assert abs(got - oracle) < 1e-15
    assert abs(got.imag) < 1e-15
    assert got.real == pytest.approx(eps / sm_delta0(omega), rel=1e-12)


# -- norms, reality, serialization ------------------------------------------------

def test_order_norms_zero_series():
    assert np.all(ft_order_norms(ft_zero(1, 1, 3, 1)) == 0.0)


def test_order_norms_single_coefficient():
    u = scalar({(2, (1,)): 3j}, K=2)
    assert np.array_equal(ft_order_norms(u), np.array([0.0, 0.0, 3.0]))


def test_hermitize_reports_violation():
    u = scalar({(1, (1,)): 1.0 + 1.0j, (1, (-1,)): 1.0 - 1.0j})
    _, viol = hermitize(u)
    assert viol == 0.0
    broken = scalar({(1, (1,)): 1.0, (1, (-1,)): 0.5})
    fixed, viol = hermitize(broken)
    assert viol == pytest.approx(0.5)
    assert fixed.coeff(1, (1,))[0] == pytest.approx(0.75)


def test_hermitian_preserved_by_add_and_mul():
    rng = np.random.default_rng(23)
    for _ in range(5):
        a = random_hermitian(rng)
        b = random_hermitian(rng)
        for out in (ft_add(a, b), ft_mul(a, b)):
            _, viol = hermitize(out)
            assert viol < 1e-12


def test_support_bound_enforced_on_construction():
    with pytest.raises(InputError):
        ft_from_dict(1, 1, 4, 1, {(1, (2,)): 1.0})


def test_csv_round_trip_and_ordering():
    u = ft_from_dict(2, 1, 3, 1, {
        (2, (1, 1)): 1.0 + 2.0j,
        (1, (0, 1)): -1.0j,
        (1, (0, -1)): 1.0j,
        (2, (-1, -1)): 1.0 - 2.0j,
    })
    text = to_csv(u)
    lines = text.strip().splitlines()
    assert lines[0] == "k,nu_1,nu_2,re_1,im_1"
    # k ascending then nu lexicographic
    keys = [tuple(ln.split(",")[:3]) for ln in lines[1:]]
    assert keys == sorted(keys, key=lambda t: (int(t[0]), (int(t[1]), int(t[2]))))
    back = from_csv(text, 3, 1)
    assert set(back.coeffs) == set(u.coeffs)
    for key in u.coeffs:
        assert np.array_equal(back.coeffs[key], u.coeffs[key])


def test_csv_deterministic():
    u = scalar({(1, (1,)): 1 / 3 + 1j / 7, (1, (-1,)): 1 / 3 - 1j / 7})
    assert to_csv(u) == to_csv(u)


def test_shift_moves_modes():
    u = scalar({(1, (1,)): 1.0})
    out = ft_shift(u, (2,))
    assert set(out.coeffs) == {(1, (3,))}
