"""Least-squares fit of imaginary S-matrix poles to tabulated phase shifts."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .chain import ChainError, PoleSet
from .core import DEFAULT_CONSTANTS, Constants, k_from_elab
from .scattering import observables, phase_shift

RAD2DEG = 180.0 / math.pi


class DatasetError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class FitError(RuntimeError):
    """No start converged; ``best`` holds the lowest-rss attempt, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class PhaseShiftDataset:
    e_lab: np.ndarray
    delta_deg: np.ndarray
    weights: np.ndarray
    source: str = ""

    def __post_init__(self):
        e = np.asarray(self.e_lab, dtype=float)
        d = np.asarray(self.delta_deg, dtype=float)
        w = np.ones_like(e) if self.weights is None else np.asarray(self.weights, dtype=float)
        if not (e.shape == d.shape == w.shape and e.ndim == 1):
            raise DatasetError("energy, phase and weight columns differ in length")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(d)) and np.all(np.isfinite(w))):
            raise DatasetError("non-finite value in dataset")
        if np.any(e <= 0):
            raise DatasetError("laboratory energies must be positive")
        if np.any(np.diff(e) <= 0):
            raise DatasetError("laboratory energies must be strictly increasing")
        if np.any(w <= 0):
            raise DatasetError("weights must be positive")
        object.__setattr__(self, "e_lab", e)
        object.__setattr__(self, "delta_deg", d)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.e_lab.size

    @classmethod
    def from_rows(cls, rows, source=""):
        rows = list(rows)
        if not rows:
            raise DatasetError("empty dataset")
        cols = list(zip(*[(r[0], r[1], r[2] if len(r) > 2 else 1.0) for r in rows]))
        return cls(np.array(cols[0]), np.array(cols[1]), np.array(cols[2]), source)

    def momenta(self, c: Constants = DEFAULT_CONSTANTS) -> np.ndarray:
        return np.asarray(k_from_elab(self.e_lab, c), dtype=float)

    def scaled_weights(self, factor: float) -> "PhaseShiftDataset":
        return PhaseShiftDataset(self.e_lab, self.delta_deg, self.weights * factor, self.source)


def parse_dataset(text: str, delta_column=1, weight_column=None, source="") -> PhaseShiftDataset:
    """Parse CSV/TSV text: energy in column 0, phase in ``delta_column``.

    Lines starting with ``#`` and blank lines are skipped.  Errors carry the
    1-based line number.
    """
    rows = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        delim = "\t" if "\t" in stripped else ","
        fields = [f.strip() for f in next(csv.reader([stripped], delimiter=delim))]
        if delim == "," and len(fields) == 1:
            fields = stripped.split()
        need = max(delta_column, weight_column or 0) + 1
        if len(fields) < need:
            raise DatasetError(f"expected at least {need} columns, found {len(fields)}", lineno)
        try:
            e = float(fields[0])
            d = float(fields[delta_column])
            w = float(fields[weight_column]) if weight_column is not None else 1.0
        except ValueError as exc:
            raise DatasetError(f"cannot parse number ({exc})", lineno) from None
        if rows and e <= rows[-1][0]:
            raise DatasetError("energies must be strictly increasing", lineno)
        if weight_column is not None and not w > 0:
            raise DatasetError("weight must be positive", lineno)
        rows.append((e, d, w))
    return PhaseShiftDataset.from_rows(rows, source)


def load_dataset(path, delta_column=1, weight_column=None) -> PhaseShiftDataset:
    text = Path(path).read_text(encoding="utf-8")
    return parse_dataset(text, delta_column, weight_column, source=str(path))


def bundled_dataset_path() -> Path:
    return Path(__file__).with_name("data") / "np_1s0_stoks.csv"


def model_degrees(params, signs, k):
    """Phase in degrees; ``params`` = log|a| (n values) then log b (n values)."""
    n = len(signs)
    a = np.asarray(signs) * np.exp(params[:n])
    b = np.exp(params[n:])
    poles = np.concatenate([a, b])
    return -RAD2DEG * np.sum(np.arctan(k[:, None] / poles[None, :]), axis=1)


def model_jacobian(params, signs, k):
    """d(delta_deg)/d(params); uses d(-arctan(k/p))/dp = k/(k^2 + p^2) and dp/dlog|p| = p."""
    n = len(signs)
    a = np.asarray(signs) * np.exp(params[:n])
    b = np.exp(params[n:])
    poles = np.concatenate([a, b])
    kk = k[:, None]
    return RAD2DEG * kk * poles[None, :] / (kk * kk + poles[None, :] ** 2)


@dataclass
class FitResult:
    poles: PoleSet
    rss: float
    residuals: np.ndarray
    iterations: int
    converged: bool
    starts_tried: int
    gradient_norm: float = 0.0
    n: int = 0
    failures: list = field(default_factory=list)

    def report(self) -> dict:
        obs = observables(self.poles) if self.n else None
        return {
            "n": self.n,
            "poles": self.poles.to_json(),
            "rss_deg2": self.rss,
            "residuals_deg": [float(r) for r in self.residuals],
            "iterations": self.iterations,
            "converged": self.converged,
            "starts_tried": self.starts_tried,
            "gradient_norm": self.gradient_norm,
            "scattering_length_fm": None if obs is None or obs.degenerate else obs.scattering_length,
            "effective_range_fm": None if obs is None or obs.degenerate else obs.effective_range,
        }


def _start_points(n, seeds, max_starts):
    """(signs, params) pairs covering every count of negative a's."""
    if seeds is not None and not isinstance(seeds, (int, np.integer)):
        out = []
        for ps in seeds:
            if len(ps.a) != n or len(ps.b) != n:
                raise ValueError("seed pole sets must have n a's and n b's")
            signs = tuple(int(math.copysign(1, v)) for v in ps.a)
            out.append((signs, np.log(np.abs(np.concatenate([ps.a, ps.b])))))
        return out
    rng = np.random.default_rng(0 if seeds is None else int(seeds))
    patterns = [tuple([-1] * m + [1] * (n - m)) for m in range(n + 1)]
    per = max(1, max_starts // len(patterns))
    lo, hi = math.log(0.02), math.log(6.0)
    out = []
    for i in range(per):
        for signs in patterns:
            if len(out) >= max_starts:
                return out
            out.append((signs, rng.uniform(lo, hi, size=2 * n)))
    return out


def _poles_from(params, signs):
    n = len(signs)
    return PoleSet(
        a=tuple(float(s * math.exp(p)) for s, p in zip(signs, params[:n])),
        b=tuple(float(math.exp(p)) for p in params[n:]),
    ).sorted()


def fit_poles(
    data: PhaseShiftDataset,
    n: int,
    seeds=None,
    max_starts=200,
    max_iterations=500,
    c: Constants = DEFAULT_CONSTANTS,
    grad_tol=1e-6,
) -> FitResult:
    """Fit ``n`` a-poles and ``n`` b-poles to the dataset.

    ``seeds`` is an integer RNG seed or a sequence of starting PoleSets.  The
    phase only depends on the signed multiset of poles, so positive a's and
    b's are interchangeable; the labelling is the one of the winning start.
    A start counts as converged when the optimiser stopped on one of its
    tolerances and the rss gradient norm is at most ``grad_tol * max(1, rss)``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    k = data.momenta(c)
    sw = np.sqrt(data.weights)
    if n == 0:
        res = -data.delta_deg
        return FitResult(PoleSet((), ()), float(np.sum(data.weights * res**2)), res, 0, True, 0, 0.0, 0)
    if len(data) < 2 * n + 1:
        raise DatasetError(f"{len(data)} rows cannot constrain {2 * n} poles (need {2 * n + 1})")
    results = []
    failures = []
    starts = _start_points(n, seeds, max_starts)
    for signs, x0 in starts:

        def fun(p, signs=signs):
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                return sw * (model_degrees(p, signs, k) - data.delta_deg)

        def jac(p, signs=signs):
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                return sw[:, None] * model_jacobian(p, signs, k)

        try:
            sol = least_squares(
                fun, x0, jac=jac, method="lm", ftol=1e-12, xtol=1e-12, gtol=1e-10,
                max_nfev=max_iterations,
            )
        except (ValueError, FloatingPointError) as exc:
            failures.append(str(exc))
            continue
        if not np.all(np.isfinite(sol.x)) or np.any(np.abs(sol.x) > 30):
            failures.append("parameters diverged")
            continue
        try:
            poles = _poles_from(sol.x, signs)
        except ChainError as exc:
            failures.append(str(exc))
            continue
        resid = sol.fun / sw
        rss = float(np.sum(sol.fun**2))
        grad = float(np.linalg.norm(sol.jac.T @ sol.fun))
        converged = sol.status > 0 and grad <= grad_tol * max(1.0, rss)
        results.append(FitResult(poles, rss, resid, int(sol.nfev), converged, len(starts), grad, n))
    if not results:
        raise FitError(f"no start produced a valid pole set ({len(failures)} failures)")
    good = [r for r in results if r.converged]
    pool = good or results
    best = min(pool, key=lambda r: (r.rss, r.poles.key()))
    best.failures = failures
    if not good:
        raise FitError("no start converged", best)
    return best


@dataclass
class ScanEntry:
    n: int
    result: FitResult | None
    error: str | None = None

    @property
    def rss(self):
        return self.result.rss if self.result is not None else math.nan


def model_scan(data: PhaseShiftDataset, n_max: int, seeds=None, max_starts=200, c: Constants = DEFAULT_CONSTANTS):
    """Fit n = 1..n_max; failures are recorded per n instead of aborting."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if len(data) < 3:
        raise DatasetError(f"{len(data)} rows are too few for any pole fit")
    out = []
    for n in range(1, n_max + 1):
        try:
            out.append(ScanEntry(n, fit_poles(data, n, seeds, max_starts, c=c)))
        except (FitError, DatasetError) as exc:
            out.append(ScanEntry(n, getattr(exc, "best", None), str(exc)))
    return out


def synthetic_dataset(poles: PoleSet, e_lab, c: Constants = DEFAULT_CONSTANTS) -> PhaseShiftDataset:
    """Noise-free phases generated from a pole set."""
    e = np.asarray(e_lab, dtype=float)
    d = np.degrees(np.atleast_1d(phase_shift(poles, k_from_elab(e, c))))
    return PhaseShiftDataset(e, d, np.ones_like(e), "synthetic")
