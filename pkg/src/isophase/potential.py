"""Potentials generated by transformation chains, plus reference potentials.

All chain potentials start from the free particle, ``V0 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainError, ChainSpec, SameEnergyPair, validate
from .core import DEFAULT_CONSTANTS, DEFAULT_POLICY, Constants, DomainError, NumericPolicy
from .wronskian import (
    ExpSum,
    NodalWronskianError,
    PairEntry,
    WronskianValue,
    reduced_even,
    reduced_odd,
    wronskian,
    wronskian_values,
)


@dataclass
class PotentialTable:
    grid: np.ndarray
    values: np.ndarray
    nu: int
    bound_states: list
    provenance: str = ""
    label: str = ""

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape:
            raise ValueError("grid and values differ in shape")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")

    def values_mev(self, c: Constants = DEFAULT_CONSTANTS):
        return self.values * c.mev_per_inverse_fm2

    def to_tsv(self, units_mev=False, c: Constants = DEFAULT_CONSTANTS) -> str:
        head = "# x_fm\tV_fm^-2" + ("\tV_MeV" if units_mev else "")
        lines = [head]
        mev = self.values_mev(c)
        for i, (x, v) in enumerate(zip(self.grid, self.values)):
            row = f"{x:.12g}\t{v:.12g}"
            if units_mev:
                row += f"\t{mev[i]:.12g}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def _arrangement(chain: ChainSpec):
    """Split a chain into (psi, odd, even, pairs) for the reduced determinants."""
    plain = [f.exp_sum() for f in chain.functions if not isinstance(f, SameEnergyPair)]
    paired = [f for f in chain.functions if isinstance(f, SameEnergyPair)]
    psi = plain.pop(0) if len(plain) % 2 else None
    odd, even = plain[0::2], plain[1::2]
    pairs = {}
    for p in paired:
        u = p.exp_sum()
        pairs[(len(odd), len(even))] = PairEntry(p.c, p.x0_at_infinity)
        odd.append(u)
        even.append(u)
    return psi, odd, even, pairs


def chain_wronskian(chain: ChainSpec, x) -> WronskianValue:
    """Wronskian of the chain; reduced determinants when same-energy pairs are present.

    For chains containing pairs the result is the limit Wronskian, correct up
    to a constant factor, which the potential and eigenfunction ratios do not see.
    """
    if not chain.functions:
        raise ChainError("empty chain has no Wronskian")
    if not chain.pairs:
        return wronskian(chain.exp_sums(), x)
    psi, odd, even, pairs = _arrangement(chain)
    if psi is None:
        return reduced_even(odd, even, x, pairs)
    return reduced_odd(psi, odd, even, x, pairs)


def potential_values(chain: ChainSpec, x, check_nodes=True):
    """``V_N(x) = -2 (log W)''`` on an array of x > 0 (fm^-2)."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if not chain.functions:
        out = np.zeros_like(xs)
        return out[0] if np.ndim(x) == 0 else out
    if np.any(xs <= 0):
        raise DomainError("potential is evaluated for x > 0 only")
    w = chain_wronskian(chain, xs)
    if check_nodes:
        _check_nodeless(w.sign, xs)
    out = -2.0 * np.real(w.log_second_derivative)
    return out[0] if np.ndim(x) == 0 else out


def _check_nodeless(sign, xs):
    s = np.real(np.atleast_1d(sign))
    flips = np.nonzero(s[1:] * s[:-1] <= 0)[0]
    if s.size and s[0] == 0:
        raise NodalWronskianError(f"Wronskian vanishes at x = {xs[0]:g} fm", x=xs[0])
    if flips.size:
        x_bad = xs[flips[0] + 1]
        raise NodalWronskianError(
            f"Wronskian changes sign near x = {x_bad:g} fm; chain is not admissible",
            x=x_bad,
        )


def build_potential(chain: ChainSpec, policy: NumericPolicy = DEFAULT_POLICY) -> PotentialTable:
    report = validate(chain)
    if not report.ok:
        raise ChainError("; ".join(report.violations))
    grid = policy.grid()
    values = potential_values(chain, grid)
    return PotentialTable(
        grid, values, chain.nu, chain.bound_state_energies, chain.digest(), chain.label
    )


class ChainPotential:
    """Callable ``V(x)`` for a chain, with the singularity strength attached."""

    def __init__(self, chain: ChainSpec, policy: NumericPolicy = DEFAULT_POLICY):
        report = validate(chain)
        if not report.ok:
            raise ChainError("; ".join(report.violations))
        self.chain = chain
        self.nu = chain.nu
        self.policy = policy

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(xs)
        small = xs < self.policy.grid_min
        # below grid_min the determinant is not trusted; use the analytic core
        out[small] = self.nu * (self.nu + 1) / xs[small] ** 2
        if np.any(~small):
            out[~small] = potential_values(self.chain, xs[~small])
        return out[0] if np.ndim(x) == 0 else out

    def __repr__(self):
        return f"ChainPotential({self.chain.label or self.chain.digest()})"


def first_order_step(v0, u: ExpSum, x):
    """One Darboux step: ``V1 = V0 - 2 w'`` with ``w = u'/u``.

    ``v0`` is a callable or an array already sampled on ``x``.
    """
    xs = np.asarray(x, dtype=float)
    s = u.dominant_rate
    f0 = u.scaled(xs, 0, s)
    if np.any(np.real(f0[1:] * f0[:-1]) <= 0) or np.any(f0 == 0):
        raise NodalWronskianError("transformation function has a node on the grid")
    w = u.scaled(xs, 1, s) / f0
    wp = u.scaled(xs, 2, s) / f0 - w * w
    base = v0(xs) if callable(v0) else np.asarray(v0, dtype=float)
    return np.real(base - 2.0 * wp)


def composed_potential(chain: ChainSpec, x):
    """``V_N`` by composing N first-order steps pointwise (no determinants).

    Every remaining function is carried through its log-derivative
    ``y = phi'/phi``.  A step with superpotential ``w`` maps
    ``phi -> -phi' + w phi`` and the potential ``V -> V - 2 w'``.  Only chains
    without same-energy pairs are supported.
    """
    if chain.pairs:
        raise ChainError("composition route does not handle same-energy pairs")
    xs = np.asarray(x, dtype=float)
    funcs = chain.exp_sums()
    alphas = [f.energy for f in funcs]
    y = []
    for f in funcs:
        s = f.dominant_rate
        y.append(np.real(f.scaled(xs, 1, s) / f.scaled(xs, 0, s)))
    v = np.zeros_like(xs)
    for step in range(len(funcs)):
        w = y[step]
        wp = (v - alphas[step]) - w * w
        for j in range(step + 1, len(funcs)):
            y[j] = (wp + w * y[j] - (v - alphas[j])) / (w - y[j])
        v = v - 2.0 * wp
    return v


def _plain_wronskian(funcs, x):
    if not funcs:
        return np.ones(np.shape(x)), np.zeros(np.shape(x))
    return wronskian_values(funcs, x)


def eigenfunction(chain: ChainSpec, k, x, psi0: ExpSum | None = None):
    """Solution of the transformed equation at ``E = k**2``.

    ``psi0`` defaults to ``sin(k x)``.  For ``k = i a_j`` with ``a_j`` a
    factorization pole, the Wronskian with ``u_j`` removed replaces the
    bordered one.  For chains with same-energy pairs the result is defined up
    to a constant factor.  The Wronskian ratio equals ``(-1)**N L psi0`` with
    ``L = prod(-d/dx + w_j)``; the sign is folded in.  Returns complex values.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if not chain.functions:
        psi = (psi0 or ExpSum.sin(k))(xs)
        return psi[0] if np.ndim(x) == 0 else psi
    k = complex(k)
    energy = k * k
    special = None
    for idx, f in enumerate(chain.functions):
        if np.isclose(-f.pole**2, energy, rtol=1e-13, atol=1e-15):
            special = idx
    if special is not None:
        out = _reduced_member_solution(chain, special, xs)
    elif not chain.pairs:
        psi0 = psi0 or ExpSum.sin(k)
        funcs = chain.exp_sums()
        sn, ln = wronskian_values(funcs + [psi0], xs)
        sd, ld = wronskian_values(funcs, xs)
        if np.any(sd == 0):
            raise NodalWronskianError("Wronskian vanishes on the evaluation grid")
        out = sn / sd * np.exp(ln - ld)
    else:
        psi0 = psi0 or ExpSum.sin(k)
        out = _paired_solution(chain, psi0, xs)
    out = (-1) ** len(chain.functions) * out
    return out[0] if np.ndim(x) == 0 else out


def _reduced_member_solution(chain, idx, xs):
    # one member of a same-energy pair survives in the numerator Wronskian
    f = chain.functions[idx]
    rest = ChainSpec(tuple(g for i, g in enumerate(chain.functions) if i != idx))
    extra = f.exp_sum() if isinstance(f, SameEnergyPair) else None
    if rest.pairs and extra is not None:
        sn, ln = _paired_values(rest, extra, xs)
    elif rest.pairs:
        w = chain_wronskian(rest, xs)
        sn, ln = w.sign, w.log_magnitude
    else:
        sn, ln = _plain_wronskian(rest.exp_sums() + ([extra] if extra else []), xs)
    w = chain_wronskian(chain, xs)
    return sn / w.sign * np.exp(ln - w.log_magnitude)


def _paired_values(chain, psi0, xs):
    """Sign and log-magnitude of ``W(chain..., psi0)`` via reduced determinants."""
    psi, odd, even, pairs = _arrangement(chain)
    if psi is None:
        w = reduced_odd(psi0, odd, even, xs, pairs)
    else:
        shifted = {(k + 1, l + 1): v for (k, l), v in pairs.items()}
        w = reduced_even([psi0] + odd, [psi] + even, xs, shifted)
    return w.sign, w.log_magnitude


def _paired_solution(chain, psi0, xs):
    sn, ln = _paired_values(chain, psi0, xs)
    w = chain_wronskian(chain, xs)
    return sn / w.sign * np.exp(ln - w.log_magnitude)


def integral_pair_solution(u: ExpSum, c: float, psi0: ExpSum, x, x0_at_infinity=True):
    """``psi0 - u/W2 * int_{x0}^x u psi0`` for a lone same-energy pair."""
    from .wronskian import _eval_terms, _pair_entry_terms, _product_antiderivative

    xs = np.asarray(x, dtype=float)
    w2 = _eval_terms(_pair_entry_terms(u, c, x0_at_infinity), xs, 0.0)[0]
    anti = _product_antiderivative(u, psi0)
    integral = _eval_terms(anti, xs, 0.0)[0]
    if not x0_at_infinity:
        integral = integral - _eval_terms(anti, np.zeros(1), 0.0)[0][0]
    return psi0(xs) - u(xs) / w2 * integral


def reference_reid68(x, c: Constants | None = None):
    """Reid68 1S0 potential in MeV."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs <= 0):
        raise DomainError("Reid68 is defined for x > 0")
    mu = 0.7 * xs
    return (-10.463 * np.exp(-mu) - 1650.6 * np.exp(-4 * mu) + 6484.2 * np.exp(-7 * mu)) / mu


def reference_kukulin(x, c: Constants | None = None):
    """Deep Moscow-type potential in MeV."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs <= 0):
        raise DomainError("the deep reference potential is defined for x > 0")
    return -1106.21 * np.exp(-1.6 * xs**2) - 10.464 * np.exp(-0.7 * xs) / (0.7 * xs) * (
        1.0 - np.exp(-3.0 * xs)
    )


class MevPotential:
    """Wrap a MeV-valued closed form as a callable in fm^-2."""

    def __init__(self, func, nu=0, c: Constants = DEFAULT_CONSTANTS, name=""):
        self.func = func
        self.nu = nu
        self.c = c
        self.name = name or func.__name__

    def __call__(self, x):
        return np.asarray(self.func(x)) / self.c.mev_per_inverse_fm2

    def __repr__(self):
        return f"MevPotential({self.name})"


class TabulatedPotential:
    """Cubic interpolation of a PotentialTable; zero beyond the table."""

    def __init__(self, table: PotentialTable):
        from scipy.interpolate import CubicSpline

        self.table = table
        self.nu = table.nu
        self._spline = CubicSpline(table.grid, table.values)

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        out = np.where(xs > self.table.grid[-1], 0.0, self._spline(np.clip(xs, self.table.grid[0], None)))
        return out


def well_profile(values, grid):
    """Depth and position of the deepest point of a sampled potential."""
    i = int(np.argmin(values))
    return float(values[i]), float(grid[i])
