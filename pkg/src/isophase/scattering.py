"""Jost functions, S-matrix, phase shifts and effective-range parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainSpec, PoleSet, RegularA, RegularB, SameEnergyPair, SingularDecaying, SingularMixed
from .core import DEFAULT_POLICY, NumericPolicy
from .wronskian import ExpSum, wronskian_values


class JostPoleError(ZeroDivisionError):
    pass


class LimitNotConvergedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class JostFactor:
    """Rational structure of ``F(k)``: ``k**nu_power * prod(k - i z) * prod(k**2 + p**2) / prod(k + i p)``."""

    zeros: tuple
    poles: tuple
    nu_power: int
    pair_levels: tuple = ()

    def __call__(self, k):
        k = np.asarray(k, dtype=complex)
        num = k**self.nu_power
        for z in self.zeros:
            num = num * (k - 1j * z)
        for kap in self.pair_levels:
            num = num * (k * k + kap * kap)
        den = np.ones_like(k)
        for p in self.poles:
            den = den * (k + 1j * p)
        if np.any(den == 0):
            raise JostPoleError("Jost function evaluated at a pole k = -i b")
        out = num / den
        return complex(out) if out.ndim == 0 else out


def jost_factor(chain: ChainSpec) -> JostFactor:
    zeros = tuple(f.a for f in chain.functions if isinstance(f, (SingularDecaying, SingularMixed)))
    poles = tuple(f.pole for f in chain.functions if isinstance(f, (RegularA, RegularB)))
    levels = tuple(f.kappa for f in chain.functions if isinstance(f, SameEnergyPair))
    return JostFactor(zeros, poles, chain.nu, levels)


def jost(chain: ChainSpec, k):
    """Closed-form Jost function of the chain potential (free reference, ``F0 = 1``)."""
    return jost_factor(chain)(k)


def phase_shift(poles: PoleSet, k):
    """``delta(k) = -sum arctan(k/a_j) - sum arctan(k/b_j)`` in radians.

    Terms are summed in sorted order so equal multisets give identical bits.
    """
    k = np.asarray(k, dtype=float)
    d = np.zeros_like(k)
    for p in sorted(poles.a + poles.b):
        d = d - np.arctan(k / p)
    return float(d) if d.ndim == 0 else d


def phase_shift_at_infinity(poles: PoleSet) -> float:
    return -0.5 * math.pi * sum(math.copysign(1.0, p) for p in poles.a + poles.b)


def s_matrix(poles: PoleSet, k, via="phase"):
    """``S(k) = exp(2 i delta)``.

    ``via="jost"`` evaluates ``(-1)**nu F(-k)/F(k)`` with the regular-family
    Jost function ``k**nu prod(k - i a)/prod(k + i b)``, ``nu = |b| - |a|``; the
    sign accounts for the ``nu pi / 2`` offset in the asymptotic phase.
    """
    k = np.asarray(k, dtype=float)
    if via == "phase":
        out = np.exp(2j * np.asarray(phase_shift(poles, k)))
    elif via == "jost":
        nu = len(poles.b) - len(poles.a)
        f = JostFactor(poles.a, poles.b, nu)
        kk = np.where(k == 0, 1.0, k)
        out = (-1.0) ** nu * f(-kk) / f(kk)
        out = np.where(k == 0, 1.0 + 0j, out)
    else:
        raise ValueError(f"unknown route {via!r}")
    return complex(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Observables:
    scattering_length: float
    effective_range: float

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.scattering_length)


def observables(poles: PoleSet) -> Observables:
    """Scattering length and effective range from the pole sums.

    An inverse-pole sum that cancels to rounding level returns an infinite
    scattering length and a NaN effective range instead of raising.
    """
    ps = sorted(poles.a + poles.b)
    s1 = math.fsum(1.0 / p for p in ps)
    s3 = math.fsum(1.0 / p**3 for p in ps)
    if not ps or abs(s1) <= 1e-12 * math.fsum(1.0 / abs(p) for p in ps):
        return Observables(math.inf, math.nan)
    a = s1
    r = (2.0 * a / 3.0) * (1.0 - s3 / a**3)
    return Observables(a, r)


@dataclass
class LevinsonReport:
    delta_zero: float
    delta_infinity: float
    lhs: float
    rhs: float
    n_levels: int
    nu: int
    passed: bool


def levinson_check(chain: ChainSpec, tol=1e-12) -> LevinsonReport:
    poles = chain.poles
    d0 = phase_shift(poles, 0.0)
    dinf = phase_shift_at_infinity(poles)
    lhs = d0 - dinf
    rhs = chain.levinson_rhs()
    return LevinsonReport(d0, dinf, lhs, rhs, chain.n_levels, chain.nu, abs(lhs - rhs) <= tol)


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def _extrapolate_origin(g, x0):
    """Cubic extrapolation of g(x) to x = 0 from samples at x0, 2 x0, 3 x0, 4 x0."""
    return 4 * g(x0) - 6 * g(2 * x0) + 4 * g(3 * x0) - g(4 * x0)


def jost_from_solution(chain: ChainSpec, policy: NumericPolicy = DEFAULT_POLICY, tol=1e-6):
    """Jost function from the transformed Jost solution, for verification.

    ``f(x, k) = W(u_1..u_N, e^{ikx}) / W(u_1..u_N)``; the nu-weighted origin
    limit is extrapolated from points above ``grid_min`` and divided by
    ``e^{-ikx} f(x, k)`` at ``grid_max``.  Chains without same-energy pairs only.
    """
    from .potential import _paired_values, chain_wronskian

    nu = chain.nu
    norm = (1j) ** nu * _double_factorial(2 * nu - 1)

    def solution(k, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        psi0 = ExpSum.plane_wave(k)
        if not chain.functions:
            return np.exp(1j * k * xs)
        if chain.pairs:
            sn, ln = _paired_values(chain, psi0, xs)
            w = chain_wronskian(chain, xs)
            sd, ld = w.sign, w.log_magnitude
        else:
            funcs = chain.exp_sums()
            sn, ln = wronskian_values(funcs + [psi0], xs)
            sd, ld = wronskian_values(funcs, xs)
        return sn / sd * np.exp(ln - ld)

    def F(k):
        k = float(k)
        if k == 0:
            raise ValueError("the Jost limit is evaluated for k != 0")

        def weighted(x):
            return complex((k * x) ** nu * solution(k, x)[0] / norm)

        origin = _extrapolate_origin(weighted, policy.grid_min)
        check = _extrapolate_origin(weighted, 2 * policy.grid_min)
        if abs(origin - check) > tol * max(abs(origin), 1e-300):
            raise LimitNotConvergedError(
                f"origin limit unstable at k = {k}: {origin} vs {check}"
            )
        xf = policy.grid_max
        far = complex(np.exp(-1j * k * xf) * solution(k, xf)[0])
        far2 = complex(np.exp(-1j * k * 0.8 * xf) * solution(k, 0.8 * xf)[0])
        if abs(far - far2) > tol * abs(far):
            raise LimitNotConvergedError(f"asymptotic limit unstable at k = {k}")
        return origin / far

    return np.vectorize(F, otypes=[complex])
