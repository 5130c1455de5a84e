"""Physical constants, unit conversions and numeric policy.

Internally every quantity uses the ``E = k**2`` convention: lengths in fm,
momenta in fm^-1, energies and potentials in fm^-2.  MeV only appears at the
I/O boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a conversion."""


@dataclass(frozen=True)
class Constants:
    """Nucleon mass and hbar*c in MeV and MeV fm."""

    m_n: float = 940.0
    hbar_c: float = 197.33

    def __post_init__(self):
        if not (self.m_n > 0 and self.hbar_c > 0):
            raise DomainError("m_n and hbar_c must be strictly positive")

    @property
    def mev_per_inverse_fm2(self) -> float:
        """hbar^2/(2 mu) with reduced mass mu = m_n / 2."""
        return self.hbar_c**2 / self.m_n


DEFAULT_CONSTANTS = Constants()


@dataclass(frozen=True)
class NumericPolicy:
    grid_min: float = 1e-3
    grid_max: float = 25.0
    grid_step: float = 5e-3
    det_rel_tol: float = 1e-10
    ode_tol: float = 1e-9

    def __post_init__(self):
        if not 0 < self.grid_min < self.grid_max:
            raise DomainError("need 0 < grid_min < grid_max")
        if self.grid_step <= 0:
            raise DomainError("grid_step must be positive")
        for name in ("det_rel_tol", "ode_tol"):
            tol = getattr(self, name)
            if not 0 < tol < 1:
                raise DomainError(f"{name} must lie in (0, 1)")

    def grid(self) -> np.ndarray:
        n = int(round((self.grid_max - self.grid_min) / self.grid_step))
        return self.grid_min + self.grid_step * np.arange(n + 1)


DEFAULT_POLICY = NumericPolicy()


def k_from_elab(e_lab, c: Constants = DEFAULT_CONSTANTS):
    """Centre-of-mass momentum (fm^-1) for a laboratory energy in MeV.

    Accepts scalars or arrays.
    """
    e = np.asarray(e_lab, dtype=float)
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise DomainError("laboratory energy must be finite and >= 0")
    k = np.sqrt(c.m_n * e / (2.0 * c.hbar_c**2))
    return float(k) if k.ndim == 0 else k


def elab_from_k(k, c: Constants = DEFAULT_CONSTANTS):
    kk = np.asarray(k, dtype=float)
    if np.any(kk < 0):
        raise DomainError("momentum must be >= 0")
    e = 2.0 * c.hbar_c**2 * kk**2 / c.m_n
    return float(e) if e.ndim == 0 else e


def potential_mev_from_wavenumber_units(v, c: Constants = DEFAULT_CONSTANTS):
    """Convert a potential (or energy) from fm^-2 to MeV."""
    out = np.asarray(v, dtype=float) * c.mev_per_inverse_fm2
    return float(out) if out.ndim == 0 else out


def wavenumber_units_from_mev(v, c: Constants = DEFAULT_CONSTANTS):
    out = np.asarray(v, dtype=float) / c.mev_per_inverse_fm2
    return float(out) if out.ndim == 0 else out
