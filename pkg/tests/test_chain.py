import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isophase.chain import (
    S1_POLES,
    ChainError,
    ChainSpec,
    LevelOrderingError,
    NoPhasePreservingLevelError,
    PoleSet,
    RegularA,
    RegularB,
    SameEnergyPair,
    SingularDecaying,
    SingularMixed,
    UnsupportedConfigurationError,
    deep_chain,
    enumerate_configurations,
    extend_with_pair,
    shallow_chain,
    v8_chain,
    validate,
)
from isophase.core import potential_mev_from_wavenumber_units
from isophase.scattering import jost


def test_shallow_chain_ledger():
    chain = ChainSpec(
        (
            RegularA(4.165), RegularB(0.6152), RegularB(2.0424), RegularB(4.6),
            SingularDecaying(-0.0401), SingularDecaying(-0.7540),
        )
    )
    r = validate(chain)
    assert r.ok and r.nu == 2 and r.n_levels == 0


def test_deep_chain_ledger():
    r = validate(deep_chain(0.0))
    assert r.ok and r.nu == 0 and r.n_levels == 1
    assert deep_chain(0.0).bound_state_energies == pytest.approx([-4.165**2])


def test_too_many_singular():
    chain = ChainSpec((RegularB(1.0), SingularDecaying(-0.5), SingularDecaying(-0.7)))
    r = validate(chain)
    assert not r.ok
    assert any("exceeds regular count" in v for v in r.violations)


@pytest.mark.parametrize(
    "func, needle",
    [
        (RegularB(-1.0), "b > 0"),
        (RegularA(-1.0), "a > 0"),
        (SingularDecaying(0.5), "a < 0"),
        (SingularMixed(1.0, -1.0), "collapse"),
        (SingularMixed(1.0, -3.0), "collapse"),
        (SameEnergyPair(-1.0, 0.2, True), "c <= 0"),
        (SameEnergyPair(-1.0, -0.2, False), "c >= 0"),
        (SameEnergyPair(1.0, -0.2, True), "kappa < 0"),
    ],
)
def test_variant_rules(func, needle):
    chain = ChainSpec((RegularB(5.0), RegularB(6.0), RegularB(7.0), func))
    r = validate(chain)
    assert not r.ok
    assert any(needle in v for v in r.violations)


def test_repeated_pole_rejected():
    r = validate(ChainSpec((RegularB(1.0), RegularA(1.0))))
    assert not r.ok


def test_pole_set_invariants():
    with pytest.raises(ChainError):
        PoleSet(a=(0.0,), b=(1.0,))
    with pytest.raises(ChainError):
        PoleSet(a=(-1.0,), b=(-1.0,))
    with pytest.raises(ChainError):
        PoleSet(a=(-1.0,), b=(1.0,))
    PoleSet(a=(-1e-9,), b=(1.0,))  # small but nonzero is fine


def test_pole_set_counts():
    assert S1_POLES.n_minus == 2
    assert S1_POLES.n_plus == 4


def test_canonical_order_is_deterministic():
    a = ChainSpec((SingularDecaying(-0.5), RegularB(2.0), RegularB(1.0)))
    b = ChainSpec((RegularB(1.0), SingularDecaying(-0.5), RegularB(2.0)))
    assert a.functions == b.functions
    assert a.digest() == b.digest()


def test_json_round_trip():
    for chain in (shallow_chain(), deep_chain(1e6), v8_chain()):
        text = json.dumps(chain.to_json())
        back = ChainSpec.from_json(json.loads(text))
        assert back.functions == chain.functions


def test_chain_json_record_format():
    rec = v8_chain().to_json()
    assert {"type": "pair", "kappa": -3.7944, "c": -0.155, "x0": "infinity"} in rec
    assert {"type": "singular_mixed", "a": 4.165, "ratio": 0.0} in deep_chain(0.0).to_json()


def test_pole_json_round_trip():
    assert PoleSet.from_json(json.loads(json.dumps(S1_POLES.to_json()))) == S1_POLES


def test_bad_record():
    with pytest.raises(ChainError):
        ChainSpec.from_json([{"type": "nonsense"}])


def test_enumerate_s1():
    configs = enumerate_configurations(S1_POLES)
    assert sorted(c.label for c in configs) == ["deep", "shallow"]
    by = {c.label: c for c in configs}
    assert (by["shallow"].nu, by["shallow"].n_levels) == (2, 0)
    assert (by["deep"].nu, by["deep"].n_levels) == (0, 1)


def test_enumerate_balanced_gives_one_regular_deep():
    configs = enumerate_configurations(PoleSet(a=(-0.5, -1.5), b=(1.0, 2.0)))
    assert len(configs) == 1
    assert configs[0].label == "deep" and configs[0].nu == 0


def test_enumerate_empty():
    configs = enumerate_configurations(PoleSet())
    assert len(configs) == 1 and configs[0].functions == ()


def test_enumerate_unsupported():
    with pytest.raises(UnsupportedConfigurationError):
        enumerate_configurations(PoleSet(a=(-0.5, -1.5, -2.5), b=(1.0,)))


def test_v8_construction():
    chain = v8_chain()
    assert chain.nu == 0 and chain.n_levels == 1
    assert potential_mev_from_wavenumber_units(chain.bound_state_energies[0]) == pytest.approx(-596.42, abs=0.05)
    assert validate(chain).ok


def test_pair_needs_nu_two():
    with pytest.raises(NoPhasePreservingLevelError):
        extend_with_pair(deep_chain(0.0), -5.0, -0.1)


def test_pair_ordering_against_existing_level():
    base = ChainSpec.from_poles(PoleSet(a=(-0.3, 1.0, 2.0), b=(0.5, 1.5, 3.0)), mixed=(1.0,), ratio=0.0)
    assert base.nu == 2 and base.n_levels == 1
    with pytest.raises(LevelOrderingError):
        extend_with_pair(base, -0.8, -0.1)
    assert extend_with_pair(base, -1.2, -0.1).n_levels == 2


def test_configurations_differ_by_real_jost_ratio():
    k = np.linspace(0.01, 5.0, 60)
    configs = enumerate_configurations(S1_POLES)
    f = [jost(c.with_ratio(0.0), k) for c in configs]
    ratio = f[0] / f[1]
    assert np.max(np.abs(ratio.imag) / np.abs(ratio)) < 1e-12


@st.composite
def admissible_poles(draw):
    n = draw(st.integers(1, 4))
    mags = draw(st.lists(st.floats(0.05, 5.0), min_size=2 * n, max_size=2 * n, unique=True))
    mags = sorted(mags)
    if min(np.diff(mags)) < 1e-3:
        mags = [0.1 * (i + 1) + 0.013 * i for i in range(2 * n)]
    signs = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    a = tuple(s * m for s, m in zip(signs, mags[:n]))
    return PoleSet(a=a, b=tuple(mags[n:]))


@settings(max_examples=50, deadline=None)
@given(admissible_poles())
def test_ledger_identity(poles):
    for c in enumerate_configurations(poles):
        assert validate(c.with_ratio(0.0)).ok
        assert c.nu == poles.n_plus - poles.n_minus - 2 * c.n_levels
        if c.N % 2 == 0:
            assert c.n_levels + c.nu / 2 == pytest.approx((poles.n_plus - poles.n_minus) / 2)


@settings(max_examples=30, deadline=None)
@given(st.floats(-6.0, -0.1), st.floats(-1.0, 0.0))
def test_extend_then_validate(kappa, c):
    try:
        chain = extend_with_pair(shallow_chain(), kappa, c)
    except ChainError:
        return
    assert validate(chain).ok
