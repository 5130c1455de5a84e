"""Independent Numerov solver for the radial equation ``-psi'' + V psi = E psi``.

Used to check the analytic constructions: phase shifts of built potentials,
bound-state energies and phase equivalence between chains.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations

import numpy as np
from scipy.optimize import brentq

from .chain import ChainSpec
from .core import DEFAULT_POLICY, DomainError, NumericPolicy, k_from_elab
from .potential import ChainPotential, PotentialTable, TabulatedPotential

_BIG = 1e150


class TailTooSlowError(ArithmeticError):
    """Phase did not stabilise before the largest matching radius."""


class VerificationError(AssertionError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    x_start: float = 10 * DEFAULT_POLICY.grid_min
    x_match: float = 20.0
    step: float = 2.5e-3
    nu_origin: int | None = None
    tol: float = 1e-6
    x_max: float = 200.0
    growth: float = 1.5

    def __post_init__(self):
        if self.x_start < DEFAULT_POLICY.grid_min:
            raise DomainError("x_start must be >= grid_min")
        if not self.x_start < self.x_match <= self.x_max:
            raise DomainError("need x_start < x_match <= x_max")
        if self.step <= 0 or self.tol <= 0 or self.growth <= 1:
            raise DomainError("step, tol must be positive and growth > 1")

    @classmethod
    def from_policy(cls, policy: NumericPolicy, **kw):
        return cls(x_start=10 * policy.grid_min, **kw)


@dataclass
class Wavefunction:
    """Samples of the regular solution; true values are ``psi * exp(log_scale)``."""

    x: np.ndarray
    psi: np.ndarray
    log_scale: np.ndarray
    energy: float
    nodes: int


def as_potential(potential):
    if isinstance(potential, PotentialTable):
        return TabulatedPotential(potential)
    if isinstance(potential, ChainSpec):
        return ChainPotential(potential)
    if not callable(potential):
        raise TypeError("potential must be callable, a PotentialTable or a ChainSpec")
    return potential


def _nu_of(potential, cfg: SolverConfig) -> int:
    if cfg.nu_origin is not None:
        return cfg.nu_origin
    return int(getattr(potential, "nu", 0))


def _grid(cfg: SolverConfig, x_end: float) -> np.ndarray:
    n = int(math.ceil((x_end - cfg.x_start) / cfg.step))
    return cfg.x_start + cfg.step * np.arange(n + 1)


def _start_values(x, v, energy, nu):
    # x**(nu+1) (1 + s x**2); the regular part of V is read off the first sample
    v_reg = v[0] - nu * (nu + 1) / x[0] ** 2
    s = (v_reg - energy) / (2.0 * (2 * nu + 3))
    return x[:2] ** (nu + 1) * (1.0 + s * x[:2] ** 2)


def _jumps(pot, x):
    """Jump-point corrections for potentials that declare ``discontinuities``.

    Returns ``{index: (V-, V+, dV')}`` for jumps lying on grid points, where
    ``dV'`` is the jump of the derivative, and the mean of the one-sided limits
    to store as the sampled value there.
    """
    out = {}
    positions = getattr(pot, "discontinuities", ())
    if not positions or len(x) < 5:
        return out, None
    h = x[1] - x[0]
    v_fix = {}
    for xj in positions:
        n = int(round((xj - x[0]) / h))
        if not 2 <= n < len(x) - 2 or abs(x[n] - xj) > 1e-9 * h:
            continue
        eps = 1e-9 * max(1.0, abs(xj))
        vm, vp = float(pot(xj - eps)), float(pot(xj + eps))
        vs = np.asarray(pot(x[n - 2:n + 3]), dtype=float)
        dvp = (-3 * vp + 4 * vs[3] - vs[4]) / (2 * h)
        dvm = (3 * vm - 4 * vs[1] + vs[0]) / (2 * h)
        out[n] = (vm, vp, dvp - dvm)
        v_fix[n] = 0.5 * (vp + vm)
    return out, v_fix


def _numerov(x, v, energy, nu, psi_init=None, jumps=None):
    """Run the recurrence; returns scaled samples, log scales and the node count.

    ``jumps`` maps grid indices to ``(V-, V+, dV')`` at a discontinuity of V.
    The neighbouring steps use the one-sided values and the step across the
    jump carries a correction term, which keeps fourth order.
    """
    h = x[1] - x[0]
    h2 = h * h
    q = 1.0 + h2 * (energy - v) / 12.0
    a = ((12.0 - 10.0 * q[1:-1]) / q[2:]).tolist()
    b = (q[:-2] / q[2:]).tolist()
    for n, (vm, vp, ddv) in (jumps or {}).items():
        if not 2 <= n < len(x) - 2:
            continue
        dv = vp - vm
        q_left = 1.0 + h2 * (energy - vm) / 12.0
        q_right = 1.0 + h2 * (energy - vp) / 12.0
        a[n - 2] = (12.0 - 10.0 * q[n - 1]) / q_left
        b[n - 2] = q[n - 2] / q_left
        b[n] = q_right / q[n + 2]
        lead = q[n + 1] - h2 * dv / 24.0
        mid = 12.0 - 10.0 * q[n] - h2 * h2 * dv * dv / 48.0 + h2 * h * ddv / 12.0
        a[n - 1] = mid / lead
        b[n - 1] = (q[n - 1] + h2 * dv / 24.0) / lead
    p0, p1 = psi_init if psi_init is not None else _start_values(x, v, energy, nu)
    out = [float(p0), float(p1)]
    scale_at = []  # (index, log factor) rescaling events
    nodes = 0
    for n in range(len(a)):
        p2 = a[n] * p1 - b[n] * p0
        if p2 * p1 < 0:
            nodes += 1
        if abs(p2) > _BIG:
            scale_at.append((n + 2, math.log(abs(p2))))
            f = 1.0 / abs(p2)
            p1 *= f
            p2 *= f
            out[-1] = p1
        out.append(p2)
        p0, p1 = p1, p2
    log_scale = np.zeros(len(out))
    for idx, lf in scale_at:
        # samples from idx - 1 on carry the new scale
        log_scale[idx - 1:] += lf
    return np.array(out), log_scale, nodes


def _sample(pot, x):
    v = np.asarray(pot(x), dtype=float)
    jumps, v_fix = _jumps(pot, x)
    for n, val in (v_fix or {}).items():
        v[n] = val
    return v, jumps


def integrate_regular(potential, energy: float, cfg: SolverConfig = SolverConfig(), x_end=None) -> Wavefunction:
    """Outward Numerov integration from ``x_start`` with ``psi ~ x**(nu+1)``."""
    pot = as_potential(potential)
    nu = _nu_of(pot, cfg)
    x = _grid(cfg, cfg.x_match if x_end is None else x_end)
    v, jumps = _sample(pot, x)
    psi, ls, nodes = _numerov(x, v, float(energy), nu, jumps=jumps)
    return Wavefunction(x, psi, ls, float(energy), nodes)


def discrete_wavenumber(k: float, h: float) -> float:
    """Wavenumber of the exact free solution of the Numerov recurrence."""
    t = h * h * k * k / 12.0
    return math.acos((1.0 - 5.0 * t) / (1.0 + t)) / h


def _phase_at(wf: Wavefunction, m: int, k: float, nu: int) -> float:
    h = wf.x[1] - wf.x[0]
    kt = discrete_wavenumber(k, h)
    x1, x2 = wf.x[m], wf.x[m + 1]
    p1 = wf.psi[m]
    p2 = wf.psi[m + 1] * math.exp(wf.log_scale[m + 1] - wf.log_scale[m])
    phi = math.atan2(
        p2 * math.sin(kt * x1) - p1 * math.sin(kt * x2),
        p1 * math.cos(kt * x2) - p2 * math.cos(kt * x1),
    )
    return wrap_phase(phi + 0.5 * nu * math.pi)


def wrap_phase(d):
    """Reduce modulo pi into (-pi/2, pi/2]."""
    out = -np.mod(-np.asarray(d, dtype=float) + 0.5 * np.pi, np.pi) + 0.5 * np.pi
    return float(out) if np.ndim(out) == 0 else out


def extract_phase(potential, k: float, cfg: SolverConfig = SolverConfig()) -> float:
    """Phase shift modulo pi in (-pi/2, pi/2] at momentum k (fm^-1)."""
    if k <= 0:
        raise DomainError("extract_phase needs k > 0")
    pot = as_potential(potential)
    nu = _nu_of(pot, cfg)
    radii = []
    r = cfg.x_match
    while r < cfg.x_max:
        radii.append(r)
        r *= cfg.growth
    radii.append(cfg.x_max)
    x = _grid(cfg, radii[-1] + 2 * cfg.step)
    jumps = _jumps(pot, x)[0]
    wf = None
    prev = None
    done = 0
    # integrate segment by segment so that short-range potentials stop early
    for r in radii:
        stop = min(int(math.ceil((r - cfg.x_start) / cfg.step)) + 2, len(x))
        if wf is None:
            v, _ = _sample(pot, x[:stop])
            psi, ls, nodes = _numerov(x[:stop], v, k * k, nu, jumps=jumps)
        else:
            lo = done - 2
            v, _ = _sample(pot, x[lo:stop])
            seg_jumps = {n - lo: j for n, j in jumps.items() if lo < n < stop}
            init = (wf.psi[-2] * math.exp(wf.log_scale[-2] - wf.log_scale[-1]), wf.psi[-1])
            tail, tls, tn = _numerov(x[lo:stop], v, k * k, nu, psi_init=init, jumps=seg_jumps)
            psi = np.concatenate([wf.psi, tail[2:]])
            ls = np.concatenate([wf.log_scale, wf.log_scale[-1] + tls[2:]])
            nodes = wf.nodes + tn
        wf = Wavefunction(x[:stop], psi, ls, k * k, nodes)
        done = stop
        d = _phase_at(wf, stop - 2, k, nu)
        if prev is not None and abs(wrap_phase(d - prev)) < cfg.tol:
            return d
        prev = d
    raise TailTooSlowError(f"phase at k = {k} still moving at x = {cfg.x_max} fm")


def unwrap_phases(deltas, anchor: float = 0.0):
    """Continuous branch of phases known modulo pi, starting nearest ``anchor``."""
    d = np.asarray(deltas, dtype=float)
    if d.size == 0:
        return d
    out = np.empty_like(d)
    out[0] = anchor + wrap_phase(d[0] - anchor)
    for i in range(1, d.size):
        out[i] = out[i - 1] + wrap_phase(d[i] - out[i - 1])
    return out


def phase_curve(potential, ks, cfg: SolverConfig = SolverConfig(), anchor: float = 0.0):
    """Phases on an increasing k grid, made continuous in k."""
    pot = as_potential(potential)
    return unwrap_phases([extract_phase(pot, float(k), cfg) for k in ks], anchor)


def _mismatch(energy, x, v, m, nu, jumps):
    """Normalised discrete Wronskian between outward and inward solutions at x[m]."""
    out, ols, _ = _numerov(x[: m + 2], v[: m + 2], energy, nu, jumps=jumps)
    kappa = math.sqrt(-energy)
    last = len(x) - 1
    xr = x[m:][::-1]
    vr = v[m:][::-1]
    rev = {last - n: (vp, vm, ddv) for n, (vm, vp, ddv) in jumps.items() if n > m}
    tail = np.exp(-kappa * (xr[:2] - xr[0]))
    inw, ils, _ = _numerov(xr, vr, energy, nu, psi_init=tuple(tail), jumps=rev)
    o0 = out[m]
    o1 = out[m + 1] * math.exp(ols[m + 1] - ols[m])
    i0 = inw[-1]
    i1 = inw[-2] * math.exp(ils[-2] - ils[-1])
    return (o0 * i1 - o1 * i0) / (math.hypot(o0, o1) * math.hypot(i0, i1))


def bound_states(potential, search_window=(-30.0, 0.0), cfg: SolverConfig = SolverConfig(), rel_tol=1e-12):
    """Bound-state energies (fm^-2) inside ``search_window``, ascending.

    Node counting of the regular solution brackets each level; the level is
    then located where outward and inward solutions join smoothly at the
    outer turning point.  A window without levels gives an empty list.
    """
    lo, hi = map(float, search_window)
    if not lo < hi <= 0:
        raise DomainError("search window must satisfy lo < hi <= 0")
    pot = as_potential(potential)
    nu = _nu_of(pot, cfg)
    hi = min(hi, -1e-8)
    x_probe = _grid(cfg, 30.0)
    v_probe = np.asarray(pot(x_probe), dtype=float)
    if not np.any(v_probe < hi):
        return []
    x_end = min(cfg.x_max, _outer_turning_point(x_probe, v_probe, -1e-3) + 25.0 / math.sqrt(-hi))
    x = _grid(cfg, x_end)
    v, jumps = _sample(pot, x)

    def count(e):
        return _numerov(x, v, e, nu, jumps=jumps)[2]

    brackets = []
    stack = [(lo, hi, count(lo), count(hi))]
    while stack:
        a, b, na, nb = stack.pop()
        if nb == na:
            continue
        if nb - na == 1 and (b - a) <= 1e-3 * max(1.0, abs(a)):
            brackets.append((a, b))
            continue
        c = 0.5 * (a + b)
        nc = count(c)
        stack.append((a, c, na, nc))
        stack.append((c, b, nc, nb))
    return [_refine_level(pot, a, b, cfg, nu, rel_tol, x_probe, v_probe) for a, b in sorted(brackets)]


def _outer_turning_point(x, v, energy):
    inside = np.nonzero(v < energy)[0]
    return float(x[inside[-1]]) if inside.size else float(x[0])


def _refine_level(pot, a, b, cfg, nu, rel_tol, x_probe, v_probe):
    x_turn = _outer_turning_point(x_probe, v_probe, 0.5 * (a + b))
    x_end = min(cfg.x_max, x_turn + 25.0 / math.sqrt(-b) + 1.0)
    x = _grid(cfg, x_end)
    v, jumps = _sample(pot, x)
    m = min(max(int(np.searchsorted(x, x_turn)), 2), len(x) - 4)
    for j in sorted(jumps):
        # keep the matching pair clear of a discontinuity
        if abs(j - m) <= 3:
            m = j + 4

    def f(e):
        return _mismatch(e, x, v, m, nu, jumps)

    if f(a) * f(b) < 0:
        return brentq(f, a, b, xtol=1e-14, rtol=max(rel_tol, 4e-16))
    # no clean sign change: fall back to node-count bisection
    n_a = _numerov(x, v, a, nu, jumps=jumps)[2]
    while b - a > rel_tol * abs(a):
        c = 0.5 * (a + b)
        if _numerov(x, v, c, nu, jumps=jumps)[2] > n_a:
            b = c
        else:
            a = c
    return 0.5 * (a + b)


@dataclass
class EquivalenceReport:
    labels: list
    energies_mev: list
    analytic_deg: list
    numeric_deg: dict
    max_pairwise_deg: dict
    max_vs_analytic_deg: dict
    threshold_deg: float
    passed: bool = field(default=False)

    def to_json(self) -> dict:
        return asdict(self)


def verify_phase_equivalence(chains, energies_mev, cfg: SolverConfig = SolverConfig(), threshold_deg=0.2, policy=DEFAULT_POLICY):
    """Extract phases for each chain potential and compare them pairwise and to the analytic phase."""
    from .scattering import phase_shift

    chains = list(chains)
    if not chains:
        raise ValueError("need at least one chain")
    keys = {c.poles.sorted().key() for c in chains}
    if len(keys) != 1:
        raise ValueError("chains must share one pole set")
    energies = [float(e) for e in energies_mev]
    ks = np.asarray(k_from_elab(np.asarray(energies)), dtype=float)
    analytic = np.degrees(np.atleast_1d(phase_shift(chains[0].poles, ks)))
    labels = []
    numeric = {}
    for i, ch in enumerate(chains):
        label = ch.label or f"chain{i}"
        if label in numeric:
            label = f"{label}#{i}"
        labels.append(label)
        pot = ChainPotential(ch, policy)
        numeric[label] = [math.degrees(extract_phase(pot, float(k), cfg)) for k in ks]
    vs_analytic = {
        lab: float(np.max(np.abs(np.degrees(wrap_phase(np.radians(np.array(numeric[lab]) - analytic))))))
        for lab in labels
    }
    pairwise = {}
    for p, q in combinations(labels, 2):
        diff = np.radians(np.array(numeric[p]) - np.array(numeric[q]))
        pairwise[f"{p}|{q}"] = float(np.max(np.abs(np.degrees(wrap_phase(diff)))))
    ok = all(d < threshold_deg for d in pairwise.values()) and all(
        d < threshold_deg for d in vs_analytic.values()
    )
    return EquivalenceReport(
        labels, energies, analytic.tolist(), numeric, pairwise, vs_analytic, threshold_deg, ok
    )


class SquareWell:
    """``V = depth`` for ``x < width``, zero outside (fm^-2, fm)."""

    nu = 0

    def __init__(self, depth: float, width: float):
        self.depth = depth
        self.width = width

    @property
    def discontinuities(self):
        return (self.width,)

    def __call__(self, x):
        return np.where(np.asarray(x) < self.width, self.depth, 0.0)

    def regular_solution(self, energy: float, x):
        """Closed-form regular solution normalised to ``psi'(0) = 1``."""
        xs = np.asarray(x, dtype=float)
        q = np.sqrt(complex(energy - self.depth))
        k = np.sqrt(complex(energy))
        inside = np.sin(q * xs) / q
        r = self.width
        amp = np.sin(q * r) / q
        slope = np.cos(q * r)
        outside = amp * np.cos(k * (xs - r)) + slope * np.sin(k * (xs - r)) / k
        return np.real(np.where(xs < r, inside, outside))

    def phase_shift(self, k: float) -> float:
        q = math.sqrt(k * k - self.depth)
        r = self.width
        return wrap_phase(math.atan(k * math.tan(q * r) / q) - k * r)


def free_potential(x):
    return np.zeros_like(np.asarray(x, dtype=float))


free_potential.nu = 0


def with_step(cfg: SolverConfig, step: float) -> SolverConfig:
    return replace(cfg, step=step)
