"""Pole sets, transformation-function chains and their admissibility rules."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Union

from .wronskian import ExpSum


class ChainError(ValueError):
    """Base class for inadmissible chain operations."""


class UnsupportedConfigurationError(ChainError):
    pass


class NoPhasePreservingLevelError(ChainError):
    pass


class LevelOrderingError(ChainError):
    pass


@dataclass(frozen=True)
class PoleSet:
    """Imaginary S-matrix poles in fm^-1: ``a`` of either sign, ``b`` positive.

    The ``a`` and ``b`` lists need not have equal length; a chain may carry
    unpaired regular functions (``b`` only) or, in inadmissible cases, more
    negative poles than positive ones (rejected by ``enumerate_configurations``).
    """

    a: tuple = ()
    b: tuple = ()

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        b = tuple(float(v) for v in self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if any(v == 0 or not math.isfinite(v) for v in a):
            raise ChainError("a-poles must be finite and nonzero")
        if any(not (v > 0 and math.isfinite(v)) for v in b):
            raise ChainError("b-poles must be finite and strictly positive")
        mags = [abs(v) for v in a + b]
        if len(set(mags)) != len(mags):
            raise ChainError("poles must be pairwise distinct in absolute value")

    @property
    def n_minus(self) -> int:
        return sum(1 for v in self.a if v < 0)

    @property
    def n_plus(self) -> int:
        return sum(1 for v in self.a if v > 0) + len(self.b)

    def sorted(self) -> "PoleSet":
        return PoleSet(tuple(sorted(self.a)), tuple(sorted(self.b)))

    def key(self):
        s = self.sorted()
        return (s.a, s.b)

    def to_json(self) -> dict:
        return {"a": list(self.a), "b": list(self.b)}

    @classmethod
    def from_json(cls, obj) -> "PoleSet":
        return cls(tuple(obj.get("a", ())), tuple(obj.get("b", ())))


# Transformation functions for the free reference Hamiltonian.


@dataclass(frozen=True)
class RegularB:
    """``sinh(b x)``: regular member of the b-family."""

    b: float
    family = "regular"

    @property
    def pole(self):
        return self.b

    def exp_sum(self):
        return ExpSum.sinh(self.b)

    def to_json(self):
        return {"type": "regular_b", "b": self.b}


@dataclass(frozen=True)
class RegularA:
    """``sinh(a x)`` for a positive a-pole moved into the regular family."""

    a: float
    family = "regular"

    @property
    def pole(self):
        return self.a

    def exp_sum(self):
        return ExpSum.sinh(self.a)

    def to_json(self):
        return {"type": "regular_a", "a": self.a}


@dataclass(frozen=True)
class SingularDecaying:
    """``exp(a x)`` with ``a < 0``."""

    a: float
    family = "singular"

    @property
    def pole(self):
        return self.a

    def exp_sum(self):
        return ExpSum.exp(self.a)

    def to_json(self):
        return {"type": "singular_decaying", "a": self.a}


@dataclass(frozen=True)
class SingularMixed:
    """``exp(a x) + ratio * exp(-a x)`` with ``a > 0``; carries a level at ``-a**2``.

    ``ratio = -1`` is the regular ``sinh`` (collapse limit) and is excluded,
    as is everything below it, where the function acquires a node.  ``ratio``
    may be ``None`` while a configuration is still symbolic.
    """

    a: float
    ratio: float | None = None
    family = "singular"

    @property
    def pole(self):
        return self.a

    def exp_sum(self):
        if self.ratio is None:
            raise ChainError(f"SingularMixed(a={self.a}) has no ratio assigned")
        return ExpSum.mixed(self.a, self.ratio)

    def to_json(self):
        return {"type": "singular_mixed", "a": self.a, "ratio": self.ratio}


@dataclass(frozen=True)
class SameEnergyPair:
    """Two coincident transformation functions ``exp(kappa x)``, ``kappa < 0``.

    Their joint Wronskian block is ``c + int_{x0}^x exp(2 kappa t) dt``.
    """

    kappa: float
    c: float
    x0_at_infinity: bool = True
    family = "pair"

    @property
    def pole(self):
        return self.kappa

    def exp_sum(self):
        return ExpSum.exp(self.kappa)

    def to_json(self):
        return {
            "type": "pair",
            "kappa": self.kappa,
            "c": self.c,
            "x0": "infinity" if self.x0_at_infinity else "zero",
        }


TransformationFunction = Union[RegularB, RegularA, SingularDecaying, SingularMixed, SameEnergyPair]

_FROM_JSON = {
    "regular_b": lambda d: RegularB(float(d["b"])),
    "regular_a": lambda d: RegularA(float(d["a"])),
    "singular_decaying": lambda d: SingularDecaying(float(d["a"])),
    "singular_mixed": lambda d: SingularMixed(
        float(d["a"]), None if d.get("ratio") is None else float(d["ratio"])
    ),
    "pair": lambda d: SameEnergyPair(
        float(d["kappa"]), float(d["c"]), d.get("x0", "infinity") != "zero"
    ),
}


def function_from_json(d) -> TransformationFunction:
    try:
        return _FROM_JSON[d["type"]](d)
    except KeyError as exc:
        raise ChainError(f"bad transformation-function record {d!r}") from exc


def _canonical_key(f):
    order = {"regular": 0, "singular": 1, "pair": 2}[f.family]
    return (order, abs(f.pole))


@dataclass(frozen=True)
class ChainSpec:
    """Ordered transformation functions, canonicalized on construction."""

    functions: tuple = ()
    label: str = ""

    def __post_init__(self):
        funcs = tuple(sorted(self.functions, key=_canonical_key))
        object.__setattr__(self, "functions", funcs)

    # ledger -----------------------------------------------------------------
    @property
    def regular(self):
        return [f for f in self.functions if f.family == "regular"]

    @property
    def singular(self):
        return [f for f in self.functions if f.family == "singular"]

    @property
    def pairs(self):
        return [f for f in self.functions if f.family == "pair"]

    @property
    def nu(self) -> int:
        return len(self.regular) - len(self.singular) - 2 * len(self.pairs)

    @property
    def n_plus(self) -> int:
        return len(self.regular) + sum(1 for f in self.singular if f.pole > 0)

    @property
    def n_minus(self) -> int:
        return sum(1 for f in self.singular if f.pole < 0)

    @property
    def N(self) -> int:
        return len(self.regular) + len(self.singular) + 2 * len(self.pairs)

    @property
    def bound_state_energies(self) -> list:
        levels = [-f.a**2 for f in self.singular if isinstance(f, SingularMixed)]
        levels += [-f.kappa**2 for f in self.pairs]
        return sorted(levels)

    @property
    def n_levels(self) -> int:
        return len(self.bound_state_energies)

    @property
    def poles(self) -> PoleSet:
        a = [f.pole for f in self.functions if isinstance(f, (SingularDecaying, SingularMixed, RegularA))]
        b = [f.b for f in self.functions if isinstance(f, RegularB)]
        return PoleSet(tuple(a), tuple(b))

    def levinson_rhs(self) -> float:
        """``(levels + nu / 2) * pi`` as predicted by the ledger."""
        return (self.n_levels + 0.5 * self.nu) * math.pi

    # construction -----------------------------------------------------------
    def exp_sums(self, expand_pairs=True) -> list:
        out = []
        for f in self.functions:
            out.append(f.exp_sum())
            if expand_pairs and f.family == "pair":
                out.append(f.exp_sum())
        return out

    def with_ratio(self, ratio, a=None) -> "ChainSpec":
        """Fill the ratio of every (or the given) SingularMixed entry."""
        funcs = [
            replace(f, ratio=float(ratio))
            if isinstance(f, SingularMixed) and (a is None or f.a == a)
            else f
            for f in self.functions
        ]
        return ChainSpec(tuple(funcs), self.label)

    def to_json(self) -> list:
        return [f.to_json() for f in self.functions]

    @classmethod
    def from_json(cls, records, label="") -> "ChainSpec":
        return cls(tuple(function_from_json(r) for r in records), label)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_poles(cls, poles: PoleSet, mixed=(), ratio=None, label="") -> "ChainSpec":
        """Chain over ``poles`` with the positive a-poles in ``mixed`` made singular."""
        mixed = set(mixed)
        funcs = [RegularB(b) for b in poles.b]
        for a in poles.a:
            if a < 0:
                funcs.append(SingularDecaying(a))
            elif a in mixed:
                funcs.append(SingularMixed(a, ratio))
            else:
                funcs.append(RegularA(a))
        return cls(tuple(funcs), label)


@dataclass
class ValidationReport:
    ok: bool
    nu: int
    n_levels: int
    N: int
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate(chain: ChainSpec) -> ValidationReport:
    v = []
    for f in chain.functions:
        if isinstance(f, RegularB) and not f.b > 0:
            v.append(f"RegularB needs b > 0, got {f.b}")
        if isinstance(f, RegularA) and not f.a > 0:
            v.append(f"RegularA needs a > 0, got {f.a}")
        if isinstance(f, SingularDecaying) and not f.a < 0:
            v.append(f"SingularDecaying needs a < 0, got {f.a}")
        if isinstance(f, SingularMixed):
            if not f.a > 0:
                v.append(f"SingularMixed needs a > 0, got {f.a}")
            if f.ratio is not None and f.ratio <= -1:
                v.append(
                    f"SingularMixed(a={f.a}) ratio {f.ratio} <= -1: collapse limit "
                    "or nodal transformation function"
                )
        if isinstance(f, SameEnergyPair):
            if not f.kappa < 0:
                v.append(f"SameEnergyPair needs kappa < 0, got {f.kappa}")
            if f.x0_at_infinity and f.c > 0:
                v.append("SameEnergyPair with x0 = infinity needs c <= 0")
            if not f.x0_at_infinity and f.c < 0:
                v.append("SameEnergyPair with x0 = 0 needs c >= 0")
    mags = [abs(f.pole) for f in chain.functions]
    if any(m == 0 for m in mags):
        v.append("zero pole")
    if len(set(mags)) != len(mags):
        v.append("factorization energies must be distinct")
    n_reg, n_sing = len(chain.regular), len(chain.singular)
    if n_sing > n_reg:
        v.append(f"singular count {n_sing} exceeds regular count {n_reg}")
    elif chain.nu < 0:
        v.append("same-energy pairs exceed the available singularity strength")
    # pair levels must lie below every level carried by a singular function
    mixed_levels = [-f.a**2 for f in chain.singular if isinstance(f, SingularMixed)]
    for p in chain.pairs:
        if any(-p.kappa**2 >= e for e in mixed_levels):
            v.append(f"pair level -{p.kappa}^2 is not below the existing levels")
    return ValidationReport(not v, chain.nu, chain.n_levels, chain.N, v)


def enumerate_configurations(poles: PoleSet) -> list:
    """All admissible family assignments of the positive a-poles.

    Labels: ``shallow`` (no mixed functions, maximal nu), ``deep`` (maximal
    number of levels), ``intermediate`` otherwise.  When only one assignment
    exists it is labelled ``deep`` if nu <= 1 and ``shallow`` otherwise.
    SingularMixed ratios are left as ``None``.
    """
    n_minus, n_plus = poles.n_minus, poles.n_plus
    if n_minus > n_plus:
        raise UnsupportedConfigurationError(
            f"n_- = {n_minus} exceeds n_+ = {n_plus}; needs l-changing chains"
        )
    positive = sorted(a for a in poles.a if a > 0)
    gamma = (n_plus - n_minus) // 2
    max_mixed = min(gamma, len(positive))
    configs = []
    for size in range(max_mixed + 1):
        for subset in itertools.combinations(positive, size):
            configs.append(ChainSpec.from_poles(poles, mixed=subset))
    if len(configs) == 1:
        only = configs[0]
        return [replace(only, label="deep" if only.nu <= 1 else "shallow")]
    out = []
    for c in configs:
        if c.n_levels == 0:
            label = "shallow"
        elif c.n_levels == max_mixed:
            label = "deep"
        else:
            label = "intermediate"
        out.append(replace(c, label=label))
    return out


def extend_with_pair(chain: ChainSpec, kappa: float, c: float, x0_at_infinity=True) -> ChainSpec:
    """Insert a level at ``-kappa**2`` without changing the phase shift.

    Requires nu >= 2; the new level must lie below all existing ones.
    """
    if chain.nu < 2:
        raise NoPhasePreservingLevelError(
            f"nu = {chain.nu}: no phase-preserving level insertion below nu = 2"
        )
    existing = chain.bound_state_energies
    if any(-kappa**2 >= e for e in existing):
        raise LevelOrderingError(
            f"new level -{abs(kappa)}^2 must lie below existing levels {existing}"
        )
    pair = SameEnergyPair(float(kappa), float(c), x0_at_infinity)
    new = ChainSpec(chain.functions + (pair,), chain.label)
    report = validate(new)
    if not report.ok:
        raise ChainError("; ".join(report.violations))
    return new


S1_POLES = PoleSet(a=(-0.0401, -0.7540, 4.1650), b=(0.6152, 2.0424, 4.6000))


def shallow_chain(poles: PoleSet = S1_POLES) -> ChainSpec:
    return ChainSpec.from_poles(poles, label="shallow")


def deep_chain(ratio: float, poles: PoleSet = S1_POLES) -> ChainSpec:
    """Deep chain with every positive a-pole carrying a level of the given ratio."""
    positive = [a for a in poles.a if a > 0]
    return ChainSpec.from_poles(poles, mixed=positive, ratio=ratio, label=f"deep:A={ratio:g}")


def v8_chain(kappa: float = -3.7944, c: float = -0.155, poles: PoleSet = S1_POLES) -> ChainSpec:
    out = extend_with_pair(shallow_chain(poles), kappa, c)
    return replace(out, label=f"v8:kappa={kappa:g},c={c:g}")
