"""Smooth reparametrisations of the functions that appear in exp maps and distances.

Each function here is analytic in ``q = |v|^2`` near ``q = 0`` even though the
textbook formula (``sin|v| / |v|``, ``asin(r)^2`` ...) goes through ``|v|``,
whose derivative blows up at zero. Working in ``q`` keeps first and second
derivatives finite at the origin, which the flow-map losses need because
``exp_x((t - s) v)`` is differentiated exactly at ``t = s``.

Values and derivatives (orders 0..3) use a truncated power series below a
per-function threshold and a symbolic closed form above it. The closed forms
are generated once with sympy, on first use.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .autodiff import Elementwise

MAX_ORDER = 3


def _coeffs_cos(n):
    return [Fraction((-1) ** k, factorial(2 * k)) for k in range(n)]


def _coeffs_sinc(n):
    return [Fraction((-1) ** k, factorial(2 * k + 1)) for k in range(n)]


def _coeffs_versinc(n):
    return [Fraction((-1) ** k, factorial(2 * k + 2)) for k in range(n)]


def _coeffs_tanhc(n):
    import sympy as sp

    out = []
    for k in range(1, n + 1):
        b = sp.bernoulli(2 * k)
        c = sp.Rational(2 ** (2 * k) * (2 ** (2 * k) - 1)) * b / sp.factorial(2 * k)
        out.append(Fraction(int(c.p), int(c.q)))
    return out


def _coeffs_asin_sq(n):
    return [Fraction(0)] + [
        Fraction(4**k, 2 * k * k * comb(2 * k, k)) for k in range(1, n)
    ]


def _coeffs_asinh_sq(n):
    return [Fraction(0)] + [
        Fraction((-1) ** (k + 1) * 4**k, 2 * k * k * comb(2 * k, k)) for k in range(1, n)
    ]


def _sym(name):
    import sympy as sp

    q = sp.Symbol("q", positive=True)
    z = sp.sqrt(q)
    return q, {
        "cos_sqrt": sp.cos(z),
        "sinc_sqrt": sp.sin(z) / z,
        "versinc_sqrt": (1 - sp.cos(z)) / q,
        "tanhc_sqrt": sp.tanh(z) / z,
        "asin_sq": sp.asin(z) ** 2,
        "asinh_sq": sp.asinh(z) ** 2,
    }[name]


# name -> (coefficient generator, number of terms, series threshold on q)
_FAMILIES = {
    "cos_sqrt": (_coeffs_cos, 24, 1.0),
    "sinc_sqrt": (_coeffs_sinc, 24, 1.0),
    "versinc_sqrt": (_coeffs_versinc, 24, 1.0),
    "tanhc_sqrt": (_coeffs_tanhc, 40, 0.5),
    "asin_sq": (_coeffs_asin_sq, 48, 0.3),
    "asinh_sq": (_coeffs_asinh_sq, 48, 0.3),
}


@lru_cache(maxsize=None)
def _series_poly(name: str, order: int) -> np.ndarray:
    """Coefficients (highest power first, for ``np.polyval``) of the ``order``-th derivative."""
    gen, n_terms, _ = _FAMILIES[name]
    c = gen(n_terms)
    d = []
    for n in range(order, len(c)):
        fall = 1
        for j in range(order):
            fall *= n - j
        d.append(float(c[n] * fall))
    return np.array(d[::-1])


@lru_cache(maxsize=None)
def _closed_form(name: str, order: int):
    import sympy as sp

    q, expr = _sym(name)
    return sp.lambdify(q, sp.diff(expr, q, order), "numpy")


def evaluate(name: str, order: int, q) -> np.ndarray:
    """``order``-th derivative of the named function at ``q`` (numpy in, numpy out)."""
    q = np.asarray(q, dtype=np.float64)
    _, _, thresh = _FAMILIES[name]
    small = q < thresh
    out = np.empty_like(q)
    if np.any(small):
        out[small] = np.polyval(_series_poly(name, order), q[small])
    if not np.all(small):
        big = ~small
        with np.errstate(invalid="ignore", divide="ignore"):
            out[big] = _closed_form(name, order)(q[big])
    return out


def _make(name: str) -> Elementwise:
    ops = [
        Elementwise(f"{name}^({k})", (lambda k: lambda x: evaluate(name, k, x))(k))
        for k in range(MAX_ORDER + 1)
    ]
    ops[0].name = name
    for k in range(MAX_ORDER):
        ops[k].deriv = ops[k + 1]
    return ops[0]


cos_sqrt = _make("cos_sqrt")  # cos(sqrt(q))
sinc_sqrt = _make("sinc_sqrt")  # sin(sqrt(q)) / sqrt(q)
versinc_sqrt = _make("versinc_sqrt")  # (1 - cos(sqrt(q))) / q
tanhc_sqrt = _make("tanhc_sqrt")  # tanh(sqrt(q)) / sqrt(q)
asin_sq = _make("asin_sq")  # asin(sqrt(q)) ** 2, for 0 <= q <= 1
asinh_sq = _make("asinh_sq")  # asinh(sqrt(q)) ** 2
