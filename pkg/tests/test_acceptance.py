"""Acceptance criteria 1-10; each prints one PASS/FAIL line."""

import math
import time

import numpy as np
from hypothesis import given, settings, strategies as st

from conftest import ACCEPTANCE_LINES
from isophase.chain import S1_POLES, PoleSet, deep_chain, enumerate_configurations, shallow_chain, v8_chain
from isophase.core import DEFAULT_CONSTANTS, k_from_elab
from isophase.fit import (
    bundled_dataset_path,
    fit_poles,
    load_dataset,
    model_degrees,
    model_jacobian,
    synthetic_dataset,
)
from isophase.oracle import SolverConfig, bound_states, verify_phase_equivalence
from isophase.potential import ChainPotential, composed_potential, potential_values
from isophase.scattering import jost, jost_from_solution, levinson_check, observables, phase_shift, s_matrix
from isophase.wronskian import reduced_even, wronskian
from test_wronskian import random_set

A3, A4 = 4.165, 3.7944
ENERGIES = [1.0, 10.0, 50.0, 100.0, 200.0, 350.0]


def report(n, name, ok, detail):
    line = f"criterion {n} {'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_1_table_round_trip():
    t0 = time.perf_counter()
    data = load_dataset(bundled_dataset_path(), delta_column=2)
    model = np.degrees(phase_shift(S1_POLES, data.momenta()))
    dev = float(np.max(np.abs(model - data.delta_deg)))
    dt = time.perf_counter() - t0
    report(1, "table round trip", len(data) == 28 and dev <= 0.05 and dt < 1.0,
           f"28 rows, max |dev| = {dev:.4f} deg, {dt:.3f} s")


def test_2_observables():
    t0 = time.perf_counter()
    obs = observables(S1_POLES)
    dt = time.perf_counter() - t0
    ok = -23.75 <= obs.scattering_length <= -23.65 and 2.60 <= obs.effective_range <= 2.64 and dt < 1.0
    report(2, "observables", ok, f"a = {obs.scattering_length:.4f} fm, r = {obs.effective_range:.4f} fm")


def test_3_jost_limit():
    t0 = time.perf_counter()
    k = np.linspace(0.05, 5.0, 20)
    num = jost_from_solution(shallow_chain())(k)
    rel = float(np.max(np.abs(num / jost(shallow_chain(), k) - 1)))
    dt = time.perf_counter() - t0
    report(3, "Jost law vs numerical limit", rel < 1e-3 and dt < 10.0, f"max rel dev {rel:.2e}, {dt:.2f} s")


def test_4_short_range():
    x = 1e-3
    shallow = x * x * potential_values(shallow_chain(), x)
    deep = x * x * potential_values(deep_chain(0.0), x)
    ok = abs(shallow / 6 - 1) <= 0.01 and abs(deep) < 0.01
    report(4, "short-range law", ok, f"shallow x^2 V = {shallow:.5f}, deep x^2 V = {deep:.2e}")


def test_5_phase_equivalence():
    t0 = time.perf_counter()
    chains = [shallow_chain(), deep_chain(0.0), deep_chain(1e6), deep_chain(-0.95), v8_chain()]
    rep = verify_phase_equivalence(chains, ENERGIES, SolverConfig(), threshold_deg=0.2)
    dt = time.perf_counter() - t0
    worst = max(list(rep.max_pairwise_deg.values()) + list(rep.max_vs_analytic_deg.values()))
    report(5, "oracle phase equivalence", rep.passed and dt < 60.0,
           f"{len(chains)} potentials, max dev {worst:.4f} deg, {dt:.1f} s")


def test_6_bound_states():
    t0 = time.perf_counter()
    found = {}
    ok = True
    cases = [
        ("shallow", shallow_chain(), [], 0.0),
        ("deep A=0", deep_chain(0.0), [-A3**2], 1e-3),
        ("deep A=1e6", deep_chain(1e6), [-A3**2], 1e-3),
        ("deep A=-0.95", deep_chain(-0.95), [-A3**2], 1e-3),
        ("v8", v8_chain(), [-A4**2], 5e-3),
    ]
    for name, chain, expected, tol in cases:
        levels = bound_states(ChainPotential(chain), (-30.0, 0.0), SolverConfig())
        found[name] = levels
        ok &= len(levels) == len(expected) and all(abs(e / r - 1) <= tol for e, r in zip(levels, expected))
    v8_mev = -found["v8"][0] * DEFAULT_CONSTANTS.mev_per_inverse_fm2 if found["v8"] else math.nan
    ok &= abs(v8_mev / 596.4 - 1) <= 5e-3
    dt = time.perf_counter() - t0
    ok &= dt < 30.0
    summary = ", ".join(f"{n}: {[round(e, 4) for e in v]}" for n, v in found.items())
    report(6, "bound-state ledger", ok, f"{summary}; V8 level {v8_mev:.2f} MeV; {dt:.1f} s")


@st.composite
def admissible_poles(draw):
    n = draw(st.integers(1, 4))
    mags = sorted(draw(st.lists(st.floats(0.05, 6.0), min_size=2 * n, max_size=2 * n, unique=True)))
    if min(np.diff(mags)) < 1e-6:
        mags = [0.1 * (i + 1) + 0.013 * i for i in range(2 * n)]
    n_neg = draw(st.integers(0, n))
    perm = draw(st.permutations(range(2 * n)))
    a = tuple((-1 if i < n_neg else 1) * mags[perm[i]] for i in range(n))
    return PoleSet(a=a, b=tuple(mags[perm[i]] for i in range(n, 2 * n)))


RANDOM_RESULTS = []


@settings(max_examples=50, deadline=None, derandomize=True)
@given(admissible_poles())
def _levinson_random(poles):
    configs = enumerate_configurations(poles)
    RANDOM_RESULTS.append(all(levinson_check(c).passed for c in configs) and len(configs) >= 1)


def test_7_levinson():
    s1 = [levinson_check(c).passed for c in enumerate_configurations(S1_POLES)]
    RANDOM_RESULTS.clear()
    _levinson_random()
    ok = all(s1) and len(s1) == 2 and len(RANDOM_RESULTS) >= 50 and all(RANDOM_RESULTS)
    report(7, "Levinson suite", ok, f"1S0: {sum(s1)}/{len(s1)}, random: {sum(RANDOM_RESULTS)}/{len(RANDOM_RESULTS)}")


def test_8_wronskian_paths():
    x = np.linspace(0.1, 10.0, 400)
    crum = potential_values(shallow_chain(), x)
    comp = composed_potential(shallow_chain(), x)
    scale = np.maximum(np.abs(crum), 1e-3 * np.max(np.abs(crum)))
    crum_dev = float(np.max(np.abs(crum - comp) / scale))
    red_dev = 0.0
    xs = np.linspace(0.05, 12.0, 40)
    for n in (4, 6):
        for seed in range(5):
            funcs = random_set(np.random.default_rng(1000 + 10 * n + seed), n)
            direct = wronskian(funcs, xs)
            red = reduced_even(funcs[0::2], funcs[1::2], xs)
            if np.any(red.sign != direct.sign):
                red_dev = math.inf
            red_dev = max(red_dev, float(np.max(np.abs(red.log_magnitude - direct.log_magnitude))))
    report(8, "Wronskian path equivalence", crum_dev < 1e-6 and red_dev < 1e-8,
           f"Crum vs composition {crum_dev:.2e}, reduced vs direct log|W| {red_dev:.2e}")


def test_9_fit_round_trip():
    t0 = time.perf_counter()
    data = load_dataset(bundled_dataset_path(), delta_column=2)
    res = fit_poles(data, 3)
    got = np.sort(np.array(res.poles.a + res.poles.b))
    ref = np.sort(np.array(S1_POLES.a + S1_POLES.b))
    table_dev = float(np.max(np.abs(got / ref - 1)))
    grid = np.array([0.1, 0.5, 1, 2, 5, 10, 20, 30, 50, 75, 100, 150, 200, 250, 300, 350.0])
    synth_dev = 0.0
    for truth in (PoleSet(a=(-0.3, 2.5), b=(0.8, 1.7)), PoleSet(a=(-0.9, -0.2, 3.1), b=(0.5, 1.4, 4.0))):
        fit = fit_poles(synthetic_dataset(truth, grid), len(truth.b))
        g = np.sort(np.array(fit.poles.a + fit.poles.b))
        t = np.sort(np.array(truth.a + truth.b))
        synth_dev = max(synth_dev, float(np.max(np.abs(g / t - 1))))
    dt = time.perf_counter() - t0
    ok = res.converged and table_dev < 0.01 and synth_dev < 1e-8 and dt < 120.0
    report(9, "fit round trip", ok,
           f"table poles max rel dev {table_dev:.4f}, synthetic {synth_dev:.1e}, {dt:.1f} s")


def test_10_unitarity_and_consistency():
    rng = np.random.default_rng(5)
    k = rng.uniform(1e-3, 10.0, 100)
    unit = float(np.max(np.abs(np.abs(s_matrix(S1_POLES, k)) - 1)))
    routes = float(np.max(np.abs(s_matrix(S1_POLES, k) - s_matrix(S1_POLES, k, via="jost"))))
    kk = np.asarray(k_from_elab(np.array(ENERGIES)))
    jac_dev = 0.0
    for _ in range(5):
        p = rng.uniform(np.log(0.03), np.log(5.0), 6)
        signs = (-1, -1, 1)
        jac = model_jacobian(p, signs, kk)
        fd = np.empty_like(jac)
        h = 1e-6
        for j in range(6):
            e = np.zeros(6)
            e[j] = h
            fd[:, j] = (model_degrees(p + e, signs, kk) - model_degrees(p - e, signs, kk)) / (2 * h)
        scale = np.maximum(np.abs(jac), 1e-3 * np.max(np.abs(jac)))
        jac_dev = max(jac_dev, float(np.max(np.abs(jac - fd) / scale)))
    ok = unit < 1e-12 and routes < 1e-10 and jac_dev < 1e-6
    report(10, "unitarity and consistency", ok,
           f"||S|-1| {unit:.1e}, route diff {routes:.1e}, Jacobian rel dev {jac_dev:.1e}")
