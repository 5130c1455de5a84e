"""Command-line entry point: fit, build, phases, observables, verify, compare."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .chain import (
    S1_POLES,
    ChainError,
    ChainSpec,
    PoleSet,
    SingularMixed,
    enumerate_configurations,
    extend_with_pair,
    validate,
)
from .core import Constants, DomainError, NumericPolicy, k_from_elab, potential_mev_from_wavenumber_units
from .fit import DatasetError, FitError, bundled_dataset_path, fit_poles, load_dataset, model_scan
from .oracle import SolverConfig, TailTooSlowError, bound_states, verify_phase_equivalence
from .potential import build_potential, potential_values, reference_kukulin, reference_reid68
from .scattering import LimitNotConvergedError, levinson_check, observables, phase_shift
from .wronskian import NodalWronskianError

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4, 5

CONFIG_ENV = "ISOPHASE_CONFIG"
CONFIG_FILE = "isophase.toml"
CONFIG_KEYS = {"m_n": float, "hbar_c": float, "grid_min": float, "grid_max": float, "grid_step": float, "out": str}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class VerificationFailed(Exception):
    pass


# configuration ------------------------------------------------------------


def parse_flat_config(text: str, source="") -> dict:
    """``key = value`` lines; ``#`` comments; quoted or bare values; no tables."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") or "=" not in line:
            raise CliError(f"{source}:{lineno}: expected flat 'key = value'", EXIT_VALIDATION)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise CliError(f"{source}:{lineno}: unknown key {key!r}", EXIT_VALIDATION)
        value = value.strip("\"'")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise CliError(f"{source}:{lineno}: bad value for {key}", EXIT_VALIDATION) from None
    return out


def discover_config(flag_path):
    """Config file from the flag, then the environment, then ./isophase.toml."""
    if flag_path:
        path = Path(flag_path)
    elif os.environ.get(CONFIG_ENV):
        path = Path(os.environ[CONFIG_ENV])
    elif Path(CONFIG_FILE).is_file():
        path = Path(CONFIG_FILE)
    else:
        return {}, None
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}", EXIT_IO) from None
    return parse_flat_config(text, str(path)), str(path)


@dataclass
class Settings:
    constants: Constants
    policy: NumericPolicy
    out: Path
    dry_run: bool
    config_path: str | None

    def snapshot(self) -> dict:
        return {
            "constants": asdict(self.constants),
            "policy": asdict(self.policy),
            "config_file": self.config_path,
        }


def resolve_settings(args) -> Settings:
    cfg, path = discover_config(args.config_file)

    def pick(flag, key, default):
        return flag if flag is not None else cfg.get(key, default)

    try:
        constants = Constants(pick(args.mn, "m_n", 940.0), pick(args.hbarc, "hbar_c", 197.33))
        policy = NumericPolicy(
            grid_min=pick(args.grid_min, "grid_min", 1e-3),
            grid_max=pick(args.grid_max, "grid_max", 25.0),
            grid_step=pick(args.grid_step, "grid_step", 5e-3),
        )
    except DomainError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from None
    return Settings(constants, policy, Path(pick(args.out, "out", ".")), args.dry_run, path)


# output ---------------------------------------------------------------------


def fmt(x) -> str:
    return format(float(x), ".12g")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    arguments: dict
    inputs: dict
    config: dict
    tool_version: str = __version__
    outputs: list = field(default_factory=list)


class Writer:
    def __init__(self, settings: Settings, command: str, arguments: dict):
        self.settings = settings
        self.manifest = RunManifest(command, arguments, {}, settings.snapshot())

    def add_input(self, path):
        if path is None:
            return
        try:
            self.manifest.inputs[str(path)] = sha256_file(path)
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None

    def text(self, name: str, content: str):
        if self.settings.dry_run:
            print(f"[dry-run] would write {self.settings.out / name}")
            return
        path = self.settings.out / name
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(content)
        except OSError as exc:
            raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None
        self.manifest.outputs.append({"path": name, "sha256": hashlib.sha256(content.encode()).hexdigest()})

    def json(self, name: str, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")

    def table(self, name: str, header: str, columns):
        rows = ["\t".join(fmt(v) for v in row) for row in zip(*columns)]
        self.text(name, header + "\n" + "\n".join(rows) + "\n")

    def finish(self):
        if self.settings.dry_run:
            return
        manifest = asdict(self.manifest)
        self.text(f"{self.manifest.command}.manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# inputs -----------------------------------------------------------------------


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}", EXIT_VALIDATION) from None


def load_poles(path, writer: Writer) -> PoleSet:
    if path is None:
        return S1_POLES
    writer.add_input(path)
    obj = read_json(path)
    if isinstance(obj, dict) and "poles" in obj:
        obj = obj["poles"]
    try:
        return PoleSet.from_json(obj)
    except (ChainError, AttributeError, TypeError, ValueError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_VALIDATION) from None


def parse_shorthand(text: str, poles: PoleSet) -> ChainSpec:
    """``shallow``, ``deep[:A<i>=<ratio>,...]`` or ``v8[:kappa=<v>,c=<v>]``."""
    name, _, rest = text.partition(":")
    opts = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise CliError(f"bad option {item!r} in {text!r}", EXIT_VALIDATION)
        try:
            opts[key.strip()] = float(value)
        except ValueError:
            raise CliError(f"bad number {value!r} in {text!r}", EXIT_VALIDATION) from None
    positive = [a for a in poles.a if a > 0]
    try:
        if name == "shallow" and not opts:
            return ChainSpec.from_poles(poles, label="shallow")
        if name == "deep":
            ratios = {a: 0.0 for a in positive}
            for key, value in opts.items():
                idx = int(key[1:]) - 1 if key[:1] in "Aa" and key[1:].isdigit() else -1
                if not 0 <= idx < len(poles.a) or poles.a[idx] <= 0:
                    raise CliError(f"{key} does not name a positive a-pole", EXIT_VALIDATION)
                ratios[poles.a[idx]] = value
            chain = ChainSpec.from_poles(poles, mixed=positive, label=text)
            funcs = tuple(
                SingularMixed(f.a, ratios[f.a]) if isinstance(f, SingularMixed) else f for f in chain.functions
            )
            return ChainSpec(funcs, text)
        if name == "v8" and set(opts) <= {"kappa", "c"}:
            base = ChainSpec.from_poles(poles, label=text)
            new = extend_with_pair(base, opts.get("kappa", -3.7944), opts.get("c", -0.155))
            return ChainSpec(new.functions, text)
    except ChainError as exc:
        raise CliError(f"{text}: {exc}", EXIT_VALIDATION) from None
    raise CliError(f"unknown configuration {text!r}", EXIT_VALIDATION)


def load_chain(args, poles: PoleSet, writer: Writer) -> ChainSpec:
    if getattr(args, "chain", None):
        writer.add_input(args.chain)
        obj = read_json(args.chain)
        records = obj.get("functions", obj) if isinstance(obj, dict) else obj
        try:
            chain = ChainSpec.from_json(records, label=Path(args.chain).stem)
        except (ChainError, TypeError, ValueError) as exc:
            raise CliError(f"{args.chain}: {exc}", EXIT_VALIDATION) from None
    else:
        chain = parse_shorthand(getattr(args, "config", None) or "shallow", poles)
    report = validate(chain)
    if not report.ok:
        raise CliError("invalid chain:\n  " + "\n  ".join(report.violations), EXIT_VALIDATION)
    if chain.poles.key() != poles.key() and args.poles is not None and not getattr(args, "chain", None):
        raise CliError("chain poles differ from the pole file", EXIT_VALIDATION)
    return chain


def parse_grid(text: str, name: str):
    """``start:stop:step`` (stop included when hit) or a comma list."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(None)
            start, stop, step = parts
            if step is None:
                return start, stop
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9))
            return [start + i * step for i in range(n + 1)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise CliError(f"bad {name} specification {text!r}", EXIT_VALIDATION) from None


# subcommands -----------------------------------------------------------------


def cmd_fit(args, s: Settings):
    w = Writer(s, "fit", {"data": args.data, "n": args.n, "scan": args.scan, "weights": args.weights,
                          "column": args.column, "starts": args.starts, "seed": args.seed})
    data_path = args.data or str(bundled_dataset_path())
    w.add_input(data_path)
    try:
        data = load_dataset(data_path, args.column, args.weight_column if args.weights else None)
    except OSError as exc:
        raise CliError(f"cannot read {data_path}: {exc.strerror}", EXIT_IO) from None
    except DatasetError as exc:
        raise CliError(f"{data_path}: {exc}", EXIT_VALIDATION) from None
    if args.n is None and args.scan is None:
        raise CliError("give --n or --scan", EXIT_VALIDATION)
    if s.dry_run:
        print(f"dataset {data_path}: {len(data)} rows ok")
        w.text("poles.json", "")
        return EXIT_OK
    if args.scan is not None:
        try:
            scan = model_scan(data, args.scan, args.seed, args.starts, c=s.constants)
        except DatasetError as exc:
            raise CliError(str(exc), EXIT_VALIDATION) from None
        w.table(
            "scan.tsv",
            "# n\trss_deg2\tconverged",
            [[e.n for e in scan], [e.rss for e in scan], [int(bool(e.result and e.result.converged)) for e in scan]],
        )
        w.json("scan_report.json", [
            {"n": e.n, "error": e.error, "fit": e.result.report() if e.result else None} for e in scan
        ])
        for e in scan:
            print(f"n={e.n}\trss={fmt(e.rss)}" + (f"\t({e.error})" if e.error else ""))
    if args.n is not None:
        try:
            res = fit_poles(data, args.n, args.seed, args.starts, c=s.constants)
        except DatasetError as exc:
            raise CliError(str(exc), EXIT_VALIDATION) from None
        except FitError as exc:
            if exc.best is not None:
                w.json("fit_report.json", exc.best.report())
                w.finish()
            raise CliError(str(exc), EXIT_NUMERICAL) from None
        w.json("poles.json", res.poles.to_json())
        w.json("fit_report.json", res.report())
        print(f"a = {', '.join(fmt(v) for v in res.poles.a)}")
        print(f"b = {', '.join(fmt(v) for v in res.poles.b)}")
        print(f"rss = {fmt(res.rss)} deg^2")
    w.finish()
    return EXIT_OK


def cmd_build(args, s: Settings):
    w = Writer(s, "build", {"poles": args.poles, "chain": args.chain, "config": args.config, "units": args.units})
    poles = load_poles(args.poles, w)
    chain = load_chain(args, poles, w)
    if s.dry_run:
        print(f"chain {chain.label or chain.digest()} valid: nu={chain.nu}, levels={chain.n_levels}")
        w.text("potential.tsv", "")
        return EXIT_OK
    table = build_potential(chain, s.policy)
    w.text("potential.tsv", table.to_tsv(units_mev=args.units == "MeV", c=s.constants))
    w.json("chain.json", {"label": chain.label, "functions": chain.to_json(), "nu": chain.nu,
                          "levels_fm^-2": chain.bound_state_energies})
    w.finish()
    print(f"nu = {chain.nu}; x^2 V at {fmt(table.grid[0])} fm = {fmt(table.grid[0] ** 2 * table.values[0])}")
    return EXIT_OK


def cmd_phases(args, s: Settings):
    w = Writer(s, "phases", {"poles": args.poles, "energies": args.energies})
    poles = load_poles(args.poles, w)
    energies = np.array(parse_grid(args.energies, "energy"), dtype=float)
    try:
        k = np.atleast_1d(k_from_elab(energies, s.constants))
    except DomainError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from None
    delta = np.degrees(np.atleast_1d(phase_shift(poles, k)))
    w.table("phases.tsv", "# E_lab_MeV\tk_fm^-1\tdelta_deg", [energies, k, delta])
    w.finish()
    return EXIT_OK


def cmd_observables(args, s: Settings):
    w = Writer(s, "observables", {"poles": args.poles})
    poles = load_poles(args.poles, w)
    obs = observables(poles)
    lev = []
    try:
        configs = enumerate_configurations(poles)
    except ChainError as exc:
        configs = []
        print(f"levinson: {exc}")
    for c in configs:
        r = levinson_check(c)
        lev.append({"label": c.label, "nu": r.nu, "levels": r.n_levels, "lhs": r.lhs, "rhs": r.rhs, "passed": r.passed})
    out = {
        "scattering_length_fm": None if obs.degenerate else obs.scattering_length,
        "effective_range_fm": None if obs.degenerate else obs.effective_range,
        "degenerate": obs.degenerate,
        "levinson": lev,
    }
    w.json("observables.json", out)
    w.finish()
    if obs.degenerate:
        print("scattering length infinite (inverse-pole sum vanishes)")
    else:
        print(f"a = {obs.scattering_length:.4f} fm")
        print(f"r = {obs.effective_range:.4f} fm")
    return EXIT_OK if all(r["passed"] for r in lev) else EXIT_VERIFY


def _verify_chains(args, poles):
    chains = []
    if args.all_configs:
        ratios = parse_grid(args.ratios, "ratio")
        for c in enumerate_configurations(poles):
            if any(isinstance(f, SingularMixed) for f in c.functions):
                for r in ratios:
                    chains.append(ChainSpec(c.with_ratio(r).functions, f"{c.label}:A={fmt(r)}"))
            else:
                chains.append(c)
    for text in args.config or []:
        chains.append(parse_shorthand(text, poles))
    if not chains:
        chains.append(ChainSpec.from_poles(poles, label="shallow"))
    for c in chains:
        report = validate(c)
        if not report.ok:
            raise CliError(f"invalid chain {c.label}: " + "; ".join(report.violations), EXIT_VALIDATION)
    return chains


def cmd_verify(args, s: Settings):
    w = Writer(s, "verify", {"poles": args.poles, "all_configs": args.all_configs, "config": args.config,
                             "energies": args.energies, "ratios": args.ratios})
    poles = load_poles(args.poles, w)
    chains = _verify_chains(args, poles)
    energies = parse_grid(args.energies, "energy")
    if s.dry_run:
        print(f"{len(chains)} chains, {len(energies)} energies")
        w.text("verify_report.json", "")
        return EXIT_OK
    cfg = SolverConfig.from_policy(s.policy)
    eq = verify_phase_equivalence(chains, energies, cfg, policy=s.policy)
    levels = []
    floor = -1.5 * max(abs(p) for p in poles.a + poles.b) ** 2 - 10.0
    from .potential import ChainPotential

    for c in chains:
        found = bound_states(ChainPotential(c, s.policy), (floor, 0.0), cfg)
        expected = sorted(c.bound_state_energies)
        ok = len(found) == len(expected) and all(
            abs(f / e - 1) < 1e-3 for f, e in zip(found, expected)
        )
        levels.append({"label": c.label, "expected_fm^-2": expected, "found_fm^-2": found, "passed": ok})
    report = {"phase_equivalence": eq.to_json(), "bound_states": levels}
    passed = eq.passed and all(l["passed"] for l in levels)
    report["passed"] = passed
    w.json("verify_report.json", report)
    w.finish()
    worst = max(list(eq.max_pairwise_deg.values()) + list(eq.max_vs_analytic_deg.values()) + [0.0])
    print(f"{len(chains)} chains, {len(energies)} energies, max deviation {worst:.4g} deg")
    for l in levels:
        print(f"{l['label']}: levels {[round(v, 4) for v in l['found_fm^-2']]} {'ok' if l['passed'] else 'MISMATCH'}")
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_VERIFY


REFERENCES = {"reid68": reference_reid68, "kukulin": reference_kukulin}


def cmd_compare(args, s: Settings):
    w = Writer(s, "compare", {"poles": args.poles, "against": args.against, "range": args.range, "step": args.step})
    poles = load_poles(args.poles, w)
    lo, hi = parse_grid(args.range, "range")[:2] if ":" in args.range else (None, None)
    if lo is None or not 0 < lo < hi:
        raise CliError("--range must be lo:hi with 0 < lo < hi", EXIT_VALIDATION)
    n = int(round((hi - lo) / args.step))
    x = lo + args.step * np.arange(n + 1)
    shallow = ChainSpec.from_poles(poles, label="shallow")
    v6 = potential_mev_from_wavenumber_units(potential_values(shallow, x), s.constants)
    cols, names = [x, v6], ["x_fm", "V6_MeV"]
    try:
        v8 = parse_shorthand(args.v8, poles)
        cols.append(potential_mev_from_wavenumber_units(potential_values(v8, x), s.constants))
        names.append("V8_MeV")
    except CliError as exc:
        print(f"V8 column skipped: {exc}")
    against = ["reid68", "kukulin"] if args.against == "all" else [args.against]
    summary = {}
    for name in against:
        ref = REFERENCES[name](x)
        cols.append(ref)
        names.append(f"{name}_MeV")
        window = (x >= max(lo, 1.0)) & (x <= min(hi, 5.0))
        if np.any(window):
            dev = float(np.max(np.abs(v6[window] - ref[window])))
            depth = float(np.max(np.abs(ref[window])))
            summary[name] = {"max_abs_dev_MeV_1_5fm": dev, "ref_max_abs_MeV_1_5fm": depth,
                             "relative": dev / depth if depth else None}
    logs = []
    for c, nm in zip(cols[1:], names[1:]):
        with np.errstate(divide="ignore"):
            logs.append(np.log10(np.abs(c)))
        names.append(f"log10_abs_{nm}")
    w.table("compare.tsv", "# " + "\t".join(names), cols + logs)
    w.json("compare_summary.json", summary)
    w.finish()
    for name, d in summary.items():
        print(f"{name}: max |V6 - ref| on [1, 5] fm = {d['max_abs_dev_MeV_1_5fm']:.3f} MeV "
              f"(ref max {d['ref_max_abs_MeV_1_5fm']:.3f} MeV)")
    return EXIT_OK


# parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mn", type=float, help="nucleon mass, MeV")
    common.add_argument("--hbarc", type=float, help="hbar c, MeV fm")
    common.add_argument("--grid-min", type=float)
    common.add_argument("--grid-max", type=float)
    common.add_argument("--grid-step", type=float)
    common.add_argument("--out", help="output directory")
    common.add_argument("--config-file", help=f"flat key=value settings (else ${CONFIG_ENV}, else ./{CONFIG_FILE})")
    common.add_argument("--dry-run", action="store_true", help="validate inputs, write nothing")

    p = argparse.ArgumentParser(prog="isophase", description="Phase-equivalent potentials from S-matrix poles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", parents=[common], help="fit poles to a phase-shift table")
    f.add_argument("--data", help="CSV/TSV: E_lab_MeV, delta_deg[, weight]; default: bundled 1S0 table")
    f.add_argument("--n", type=int, help="number of a-poles (and of b-poles)")
    f.add_argument("--scan", type=int, metavar="N_MAX", help="fit n = 1..N_MAX and report rss")
    f.add_argument("--column", type=int, default=1, help="phase column index (0-based)")
    f.add_argument("--weights", action="store_true", help="read weights from --weight-column")
    f.add_argument("--weight-column", type=int, default=2)
    f.add_argument("--starts", type=int, default=200)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("build", parents=[common], help="tabulate the potential of a chain")
    b.add_argument("--poles", help="poles.json; default: 1S0 poles")
    b.add_argument("--chain", help="chain.json (list of transformation-function records)")
    b.add_argument("--config", help="shallow | deep[:A3=<ratio>] | v8[:kappa=<v>,c=<v>]")
    b.add_argument("--units", choices=["fm", "MeV"], default="fm", help="MeV adds a MeV column")
    b.set_defaults(func=cmd_build)

    ph = sub.add_parser("phases", parents=[common], help="phase-shift table")
    ph.add_argument("--poles")
    ph.add_argument("--energies", default="1:350:1", help="start:stop:step or comma list, MeV")
    ph.set_defaults(func=cmd_phases)

    o = sub.add_parser("observables", parents=[common], help="scattering length, effective range, Levinson")
    o.add_argument("--poles")
    o.set_defaults(func=cmd_observables)

    v = sub.add_parser("verify", parents=[common], help="numerical check of phase equivalence and levels")
    v.add_argument("--poles")
    v.add_argument("--all-configs", action="store_true", help="every admissible family assignment")
    v.add_argument("--ratios", default="0,1e6,-0.95", help="ratios used for mixed functions")
    v.add_argument("--config", action="append", help="extra chain shorthand (repeatable)")
    v.add_argument("--energies", default="1,10,50,100,200,350", help="start:stop:step or comma list, MeV")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", parents=[common], help="V6/V8 against reference potentials")
    c.add_argument("--poles")
    c.add_argument("--against", choices=["reid68", "kukulin", "all"], default="all")
    c.add_argument("--range", default="0.1:5", help="lo:hi in fm")
    c.add_argument("--step", type=float, default=0.01)
    c.add_argument("--v8", default="v8:kappa=-3.7944,c=-0.155")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        return args.func(args, settings)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ChainError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NodalWronskianError, LimitNotConvergedError, TailTooSlowError, FitError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
