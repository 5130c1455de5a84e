"""Overflow-safe Wronskians of exponential sums.

For the free reference Hamiltonian every transformation function is a finite
sum ``f(x) = sum_i c_i exp(r_i x)``, so all derivatives are exact.  Before a
determinant is taken the dominant exponential of each row/column is factored
out; the factored exponents are added back into ``log_magnitude``.  The log
derivatives are obtained from the scaled matrix ``G`` via

    (log det G)'  = tr(G^-1 G')
    (log det G)'' = tr(G^-1 G'') - tr((G^-1 G')^2)

which avoids the cancellation ``W''/W - (W'/W)^2`` suffers in the tail, where
the potential is exponentially small compared with either term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


class NodalWronskianError(ArithmeticError):
    """The Wronskian vanishes (or changes sign) where it must not."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class FactorizationEnergyError(ValueError):
    """Evaluation requested exactly at one of the factorization energies."""


@dataclass(frozen=True)
class ExpSum:
    """``f(x) = sum c_i exp(rate_i x)``; coefficients and rates may be complex."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((c, r) for c, r in self.terms if c != 0)
        if not terms:
            raise ValueError("ExpSum needs at least one nonzero coefficient")
        for _, r in terms:
            if not np.isfinite(r):
                raise ValueError("rates must be finite")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def exp(cls, rate, coef=1.0):
        return cls(((coef, rate),))

    @classmethod
    def sinh(cls, rate):
        return cls(((0.5, rate), (-0.5, -rate)))

    @classmethod
    def mixed(cls, rate, ratio):
        """``exp(rate x) + ratio * exp(-rate x)``."""
        return cls(((1.0, rate), (ratio, -rate)))

    @classmethod
    def sin(cls, k):
        return cls(((-0.5j, 1j * k), (0.5j, -1j * k)))

    @classmethod
    def plane_wave(cls, k):
        """``exp(i k x)``; ``k`` may be complex."""
        return cls(((1.0, 1j * k),))

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(c) or np.iscomplexobj(r) for c, r in self.terms)

    @property
    def dominant_rate(self) -> float:
        return max(float(np.real(r)) for _, r in self.terms)

    @property
    def energy(self):
        """Eigenvalue ``alpha`` of ``-d^2/dx^2``; all terms must share ``rate**2``."""
        sq = [r * r for _, r in self.terms]
        if not np.allclose(sq, sq[0], rtol=1e-13, atol=1e-300):
            raise ValueError("ExpSum is not an eigenfunction of the free Hamiltonian")
        return -sq[0]

    def derivative(self, n: int = 1) -> "ExpSum":
        return ExpSum(tuple((c * r**n, r) for c, r in self.terms))

    def __call__(self, x, order: int = 0):
        x = np.asarray(x)
        out = sum(c * r**order * np.exp(r * x) for c, r in self.terms)
        return out

    def scaled(self, x, order: int = 0, shift: float = 0.0):
        """``f^(order)(x) * exp(-shift x)`` without forming the large factor."""
        x = np.asarray(x)
        return sum(c * r**order * np.exp((r - shift) * x) for c, r in self.terms)


# Internal: entries are sums of c * x**p * exp(r x) with p in {0, 1}.  Integrals
# of products of exponential sums only ever produce p = 1 through a zero rate.
def _product_antiderivative(f: ExpSum, g: ExpSum):
    terms = []
    for c1, r1 in f.terms:
        for c2, r2 in g.terms:
            r = r1 + r2
            if r == 0:
                terms.append((c1 * c2, 1, 0.0))
            else:
                terms.append((c1 * c2 / r, 0, r))
    return terms


def _function_terms(f: ExpSum, order: int = 0):
    return [(c * r**order, 0, r) for c, r in f.terms]


def _eval_terms(terms, x, shift):
    """Value, first and second derivative of ``entry * exp(-shift x)``."""
    g0 = np.zeros(x.shape, dtype=complex)
    g1 = np.zeros_like(g0)
    g2 = np.zeros_like(g0)
    for c, p, r in terms:
        mu = r - shift
        e = c * np.exp(mu * x)
        if p == 0:
            g0 += e
            g1 += mu * e
            g2 += mu * mu * e
        else:
            g0 += x * e
            g1 += (1.0 + mu * x) * e
            g2 += (2.0 * mu + mu * mu * x) * e
    return g0, g1, g2


def _entry_rate(terms) -> float:
    return max(float(np.real(r)) for _, _, r in terms)


@dataclass
class WronskianValue:
    """Log-scaled Wronskian.  Fields are arrays when evaluated on an x array.

    ``sign`` is +-1 for real Wronskians, a unit complex phase otherwise, and 0
    where the determinant vanishes (ratio fields are NaN there).
    ``log_second_derivative`` is ``(log W)''`` computed without cancellation;
    it is what the potential formula consumes.
    """

    log_magnitude: np.ndarray
    sign: np.ndarray
    w_prime_over_w: np.ndarray
    w_second_over_w: np.ndarray
    log_second_derivative: np.ndarray

    @property
    def valid(self):
        return self.sign != 0

    @property
    def value(self):
        return self.sign * np.exp(self.log_magnitude)

    def scaled_by(self, log_factor, sign=1.0) -> "WronskianValue":
        return WronskianValue(
            self.log_magnitude + log_factor,
            self.sign * sign,
            self.w_prime_over_w,
            self.w_second_over_w,
            self.log_second_derivative,
        )

    def item(self, i=None) -> "WronskianValue":
        pick = (lambda a: a[i]) if i is not None else (lambda a: a)
        return WronskianValue(*(pick(getattr(self, f)) for f in _FIELDS))


_FIELDS = (
    "log_magnitude",
    "sign",
    "w_prime_over_w",
    "w_second_over_w",
    "log_second_derivative",
)


def _scaled_determinant(entries, row_shift, col_shift, x, need_derivatives=True):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(entries)
    g = np.zeros((3, x.size, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            g0, g1, g2 = _eval_terms(entries[i][j], x, row_shift[i] + col_shift[j])
            g[0, :, i, j] = g0
            g[1, :, i, j] = g1
            g[2, :, i, j] = g2
    is_complex = bool(np.any(np.abs(g.imag) > 0))
    if not is_complex:
        g = g.real
    sign, logdet = np.linalg.slogdet(g[0])
    total_shift = float(np.sum(row_shift) + np.sum(col_shift))
    logdet = logdet + total_shift * x

    d1 = np.full(x.shape, np.nan, dtype=g.dtype)
    d2 = np.full(x.shape, np.nan, dtype=g.dtype)
    ok = sign != 0
    if need_derivatives and np.any(ok):
        a1 = np.linalg.solve(g[0][ok], g[1][ok])
        a2 = np.linalg.solve(g[0][ok], g[2][ok])
        d1[ok] = np.trace(a1, axis1=1, axis2=2) + total_shift
        d2[ok] = np.trace(a2, axis1=1, axis2=2) - np.einsum("nij,nji->n", a1, a1)
    return sign, logdet, d1, d2


def _pack(sign, logdet, d1, d2, scalar):
    w1 = d1
    w2 = d2 + d1 * d1
    val = WronskianValue(logdet, sign, w1, w2, d2)
    return val.item(0) if scalar else val


def wronskian(funcs: Sequence[ExpSum], x) -> WronskianValue:
    """``W(f_1, ..., f_N)(x)`` with ``W'/W`` and ``W''/W``.

    Column ``j`` is scaled by ``exp(rho_j x)`` with ``rho_j`` the dominant rate
    of ``f_j``.  Raises NodalWronskianError if the determinant is exactly zero
    at any requested point.
    """
    funcs = list(funcs)
    if not funcs:
        raise ValueError("need at least one function")
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(funcs)
    entries = [[_function_terms(f, i) for f in funcs] for i in range(n)]
    rows = [0.0] * n
    cols = [f.dominant_rate for f in funcs]
    sign, logdet, d1, d2 = _scaled_determinant(entries, rows, cols, xs)
    if np.any(sign == 0):
        bad = xs[sign == 0]
        raise NodalWronskianError(f"Wronskian vanishes at x = {bad[0]:g} fm", x=bad[0])
    return _pack(sign, logdet, d1, d2, scalar)


def wronskian_values(funcs: Sequence[ExpSum], x):
    """Plain values of ``W(f_1..f_N)`` (complex allowed), no derivatives.

    Returns ``(sign_or_phase, log_magnitude)``; zero determinants are returned
    as sign 0 rather than raised.
    """
    funcs = list(funcs)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(funcs)
    entries = [[_function_terms(f, i) for f in funcs] for i in range(n)]
    cols = [f.dominant_rate for f in funcs]
    sign, logdet, _, _ = _scaled_determinant(entries, [0.0] * n, cols, xs, False)
    return sign, logdet


def pair_w2(u: ExpSum, c: float, x0_at_infinity: bool, x):
    """``c + int_{x0}^x u(t)^2 dt`` with ``x0 = 0`` or ``x0 = infinity``.

    The sign of ``c`` must be non-negative for ``x0 = 0`` and non-positive for
    ``x0 = infinity``; otherwise the result may have a node on (0, inf).
    """
    c = float(c)
    if x0_at_infinity and c > 0:
        raise NodalWronskianError("x0 = infinity needs c <= 0 for a nodeless W2")
    if not x0_at_infinity and c < 0:
        raise NodalWronskianError("x0 = 0 needs c >= 0 for a nodeless W2")
    terms = _pair_entry_terms(u, c, x0_at_infinity)
    g0, _, _ = _eval_terms(terms, np.atleast_1d(np.asarray(x, dtype=float)), 0.0)
    out = g0.real if not u.is_complex else g0
    return out[0] if np.ndim(x) == 0 else out


def _pair_entry_terms(u: ExpSum, c: float, x0_at_infinity: bool):
    anti = _product_antiderivative(u, u)
    if x0_at_infinity:
        if any(p == 1 or np.real(r) >= 0 for _, p, r in anti):
            raise ValueError("x0 = infinity requires an exponentially decaying u")
        const = c
    else:
        # subtract F(0); the x-linear terms vanish there
        const = c - sum(cf for cf, p, r in anti if p == 0)
    terms = list(anti)
    if const != 0:
        terms.append((const, 0, 0.0))
    return terms


@dataclass(frozen=True)
class PairEntry:
    """Diagonal block for a same-energy pair: ``c + int_{x0}^x u^2``."""

    c: float
    x0_at_infinity: bool = True


def _alphas(funcs):
    return [f.energy for f in funcs]


def _block_terms(p: ExpSum, q: ExpSum, pair: PairEntry | None):
    if pair is not None:
        return _pair_entry_terms(p, pair.c, pair.x0_at_infinity)
    return _product_antiderivative(p, q)


def _reduced_layout(odd, even, pairs):
    m = len(odd)
    a_odd, a_even = _alphas(odd), _alphas(even)
    pairs = dict(pairs or {})
    entries = []
    prefactor_log = 0.0
    prefactor_sign = 1.0
    for k in range(m):
        row = []
        for l in range(m):
            pair = pairs.get((k, l))
            coincident = np.isclose(a_odd[k], a_even[l], rtol=1e-13, atol=0)
            if coincident and pair is None:
                raise ValueError(
                    f"coincident factorization energies at block ({k}, {l}) "
                    "need a PairEntry"
                )
            if pair is not None and not coincident:
                raise ValueError(f"PairEntry at ({k}, {l}) but energies differ")
            if not coincident:
                d = a_odd[k] - a_even[l]
                prefactor_log += float(np.log(abs(d)))
                prefactor_sign *= np.sign(np.real(d)) if np.isreal(d) else d / abs(d)
            row.append(_block_terms(odd[k], even[l], pair))
        entries.append(row)
    # dominant scaling; coincident blocks may grow faster than the product
    rows = [f.dominant_rate for f in odd]
    cols = [f.dominant_rate for f in even]
    for (k, l) in pairs:
        rate = _entry_rate(entries[k][l])
        if rate > rows[k] + cols[l]:
            half = 0.5 * rate
            rows[k] = max(rows[k], half)
            cols[l] = max(cols[l], half)
    return entries, rows, cols, prefactor_log, prefactor_sign


def reduced_even(
    odd: Sequence[ExpSum],
    even: Sequence[ExpSum],
    x,
    pairs: Mapping[tuple, PairEntry] | None = None,
) -> WronskianValue:
    """Wronskian of ``(odd_1, even_1, ..., odd_m, even_m)`` through an m x m determinant.

    Block ``(k, l)`` is ``W(odd_k, even_l) / (alpha_k - alpha_l)``, i.e. the
    antiderivative of ``odd_k * even_l``; a coincident pair listed in ``pairs``
    uses ``c + int u^2`` instead.  With no coincident pairs the result equals
    the direct Wronskian; otherwise it is the limit Wronskian with the
    vanishing factor dropped from the prefactor.
    """
    odd, even = list(odd), list(even)
    if len(odd) != len(even) or not odd:
        raise ValueError("need m >= 1 odd and m even functions")
    m = len(odd)
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    entries, rows, cols, plog, psign = _reduced_layout(odd, even, pairs)
    sign, logdet, d1, d2 = _scaled_determinant(entries, rows, cols, xs)
    if np.any(sign == 0):
        bad = xs[sign == 0]
        raise NodalWronskianError(f"Wronskian vanishes at x = {bad[0]:g} fm", x=bad[0])
    psign = psign * (-1.0) ** (m * (m - 1) // 2)
    return _pack(sign * psign, logdet + plog, d1, d2, scalar)


def reduced_odd(
    psi: ExpSum,
    odd: Sequence[ExpSum],
    even: Sequence[ExpSum],
    x,
    pairs: Mapping[tuple, PairEntry] | None = None,
) -> WronskianValue:
    """``W(psi, odd_1, even_1, ..., odd_m, even_m)`` through a bordered determinant.

    ``psi`` must be an eigenfunction of the free Hamiltonian with energy ``E``
    different from every ``even`` factorization energy.
    """
    odd, even = list(odd), list(even)
    m = len(odd)
    if len(even) != m:
        raise ValueError("odd and even must have equal length")
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if m == 0:
        entries = [[_function_terms(psi)]]
        sign, logdet, d1, d2 = _scaled_determinant(entries, [0.0], [psi.dominant_rate], xs)
        return _pack(sign, logdet, d1, d2, scalar)

    energy = psi.energy
    a_even = _alphas(even)
    for a in a_even:
        if np.isclose(energy, a, rtol=1e-13, atol=1e-15):
            raise FactorizationEnergyError(
                "E coincides with a factorization energy; use the reduced "
                "Wronskian formula for psi_N(x, i a_j)"
            )
    inner, rows, cols, plog, psign = _reduced_layout(odd, even, pairs)
    border_row = [_function_terms(psi)] + [
        _product_antiderivative(psi, q) for q in even
    ]
    entries = [border_row] + [
        [_function_terms(odd[k])] + inner[k] for k in range(m)
    ]
    row_shift = [float(np.real(psi.dominant_rate))] + rows
    col_shift = [0.0] + cols
    for a in a_even:
        d = a - energy
        plog += float(np.log(abs(d)))
        psign = psign * (d / abs(d))
    sign, logdet, d1, d2 = _scaled_determinant(entries, row_shift, col_shift, xs)
    psign = psign * (-1.0) ** (m * (m - 1) // 2)
    if np.isrealobj(sign) and np.isreal(psign):
        psign = float(np.real(psign))
    return _pack(sign * psign, logdet + plog, d1, d2, scalar)
