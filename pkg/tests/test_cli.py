import json

import numpy as np
import pytest

from isophase import cli
from isophase.chain import S1_POLES
from isophase.cli import main
from isophase.oracle import verify_phase_equivalence


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def read_table(path):
    return np.loadtxt(path, comments="#", delimiter="\t", ndmin=2)


@pytest.fixture
def poles_file(tmp_path):
    path = tmp_path / "poles.json"
    path.write_text(json.dumps(S1_POLES.to_json()))
    return path


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "0.1.0" in capsys.readouterr().out


def test_fit_delta6_column(tmp_path):
    assert run(tmp_path, "fit", "--n", "3", "--column", "2") == 0
    poles = json.loads((tmp_path / "poles.json").read_text())
    got = np.sort(poles["a"] + poles["b"])
    ref = np.sort(S1_POLES.a + S1_POLES.b)
    assert np.max(np.abs(got / ref - 1)) < 0.01
    report = json.loads((tmp_path / "fit_report.json").read_text())
    assert report["converged"]
    manifest = json.loads((tmp_path / "fit.manifest.json").read_text())
    assert {o["path"] for o in manifest["outputs"]} == {"poles.json", "fit_report.json"}
    assert len(manifest["inputs"]) == 1


def test_fit_scan(tmp_path):
    assert run(tmp_path, "fit", "--scan", "3", "--starts", "30") == 0
    table = read_table(tmp_path / "scan.tsv")
    assert list(table[:, 0]) == [1, 2, 3]
    assert table[2, 1] < table[1, 1] < table[0, 1]


def test_fit_missing_file(tmp_path, capsys):
    assert run(tmp_path, "fit", "--data", str(tmp_path / "nope.csv"), "--n", "1") == 2
    assert "nope.csv" in capsys.readouterr().err


def test_fit_bad_row(tmp_path, capsys):
    data = tmp_path / "bad.csv"
    data.write_text("1,2\n2,x\n")
    assert run(tmp_path, "fit", "--data", str(data), "--n", "1") == 3
    assert "line 2" in capsys.readouterr().err


def test_fit_needs_n_or_scan(tmp_path):
    assert run(tmp_path, "fit") == 3


def test_fit_with_weights(tmp_path):
    data = tmp_path / "w.tsv"
    rows = [(e, float(np.degrees(-np.arctan(e / 50.0))), 1.0 + i) for i, e in enumerate([1, 5, 10, 20, 50, 100])]
    data.write_text("".join(f"{e}\t{d}\t{w}\n" for e, d, w in rows))
    assert run(tmp_path, "fit", "--data", str(data), "--n", "1", "--weights", "--starts", "10") == 0


def test_build_shallow(tmp_path, poles_file):
    assert run(tmp_path, "build", "--poles", str(poles_file), "--config", "shallow", "--units", "MeV") == 0
    lines = (tmp_path / "potential.tsv").read_text().splitlines()
    assert lines[0] == "# x_fm\tV_fm^-2\tV_MeV"
    table = read_table(tmp_path / "potential.tsv")
    x, v = table[0, 0], table[0, 1]
    assert x * x * v == pytest.approx(6.0, rel=0.01)
    assert np.allclose(table[:, 2], table[:, 1] * 41.424605, rtol=1e-6)
    chain = json.loads((tmp_path / "chain.json").read_text())
    assert chain["nu"] == 2


def test_build_deep_shift(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["build", "--config", "deep:A3=0", "--out", str(a)]) == 0
    assert main(["build", "--config", "deep:A3=1e6", "--out", str(b)]) == 0
    ta, tb = read_table(a / "potential.tsv"), read_table(b / "potential.tsv")
    assert tb[np.argmin(tb[:, 1]), 0] > ta[np.argmin(ta[:, 1]), 0]
    assert tb[:, 1].min() == pytest.approx(ta[:, 1].min(), rel=0.01)


def test_build_v8(tmp_path):
    assert run(tmp_path, "build", "--config", "v8:kappa=-3.7944,c=-0.155") == 0
    chain = json.loads((tmp_path / "chain.json").read_text())
    assert chain["nu"] == 0 and len(chain["levels_fm^-2"]) == 1


def test_build_chain_file(tmp_path):
    path = tmp_path / "chain.in.json"
    from isophase.chain import shallow_chain

    path.write_text(json.dumps(shallow_chain().to_json()))
    assert run(tmp_path, "build", "--chain", str(path)) == 0


@pytest.mark.parametrize("config", ["deep:A3=-2", "deep:A9=1", "v8:kappa=-4,c=0.5", "bogus", "deep:A3=x"])
def test_build_invalid_chain(tmp_path, config):
    assert run(tmp_path, "build", "--config", config) == 3


def test_build_nodal_chain(tmp_path, capsys):
    assert run(tmp_path, "build", "--config", "v8:kappa=-1") == 4
    assert "x = 1.2" in capsys.readouterr().err


def test_build_bad_poles(tmp_path):
    path = tmp_path / "p.json"
    path.write_text('{"a": [0.0], "b": [1.0]}')
    assert run(tmp_path, "build", "--poles", str(path)) == 3
    path.write_text("{not json")
    assert run(tmp_path, "build", "--poles", str(path)) == 3
    assert run(tmp_path, "build", "--poles", str(tmp_path / "missing.json")) == 2


def test_phases(tmp_path):
    assert run(tmp_path, "phases", "--energies", "0.1,350") == 0
    text = (tmp_path / "phases.tsv").read_text()
    assert text.splitlines()[0] == "# E_lab_MeV\tk_fm^-1\tdelta_deg"
    table = read_table(tmp_path / "phases.tsv")
    assert table[0, 2] == pytest.approx(38.422, abs=0.05)
    assert table[1, 2] == pytest.approx(-10.074, abs=0.05)


def test_phases_default_grid(tmp_path):
    assert run(tmp_path, "phases") == 0
    assert read_table(tmp_path / "phases.tsv").shape == (350, 3)


def test_phases_bad_grid(tmp_path):
    assert run(tmp_path, "phases", "--energies", "1:x") == 3
    assert run(tmp_path, "phases", "--energies=-1,2") == 3


def test_observables(tmp_path, poles_file, capsys):
    assert run(tmp_path, "observables", "--poles", str(poles_file)) == 0
    out = json.loads((tmp_path / "observables.json").read_text())
    assert -23.75 <= out["scattering_length_fm"] <= -23.65
    assert 2.60 <= out["effective_range_fm"] <= 2.64
    assert {r["label"] for r in out["levinson"]} == {"shallow", "deep"}
    assert all(r["passed"] for r in out["levinson"])
    assert "a = -23.69" in capsys.readouterr().out


def test_verify_small(tmp_path):
    code = run(tmp_path, "verify", "--all-configs", "--ratios", "0", "--config", "v8", "--energies", "10,100")
    assert code == 0
    report = json.loads((tmp_path / "verify_report.json").read_text())
    assert report["passed"]
    assert len(report["bound_states"]) == 3


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    def strict(chains, energies, cfg, policy):
        return verify_phase_equivalence(chains, energies, cfg, threshold_deg=1e-12, policy=policy)

    monkeypatch.setattr(cli, "verify_phase_equivalence", strict)
    code = run(tmp_path, "verify", "--all-configs", "--ratios", "0", "--energies", "100")
    assert code == 5
    assert not json.loads((tmp_path / "verify_report.json").read_text())["passed"]


def test_verify_bad_ratio(tmp_path):
    assert run(tmp_path, "verify", "--all-configs", "--ratios", "-2") == 3


def test_compare(tmp_path):
    assert run(tmp_path, "compare", "--against", "reid68", "--range", "0.1:5") == 0
    lines = (tmp_path / "compare.tsv").read_text().splitlines()
    head = lines[0].lstrip("# ").split("\t")
    assert head[:4] == ["x_fm", "V6_MeV", "V8_MeV", "reid68_MeV"]
    assert "log10_abs_V6_MeV" in head
    summary = json.loads((tmp_path / "compare_summary.json").read_text())
    assert summary["reid68"]["relative"] < 0.25


def test_compare_bad_range(tmp_path):
    assert run(tmp_path, "compare", "--range", "5:1") == 3


def test_dry_run_writes_nothing(tmp_path):
    out = tmp_path / "dry"
    for argv in (
        ["fit", "--n", "1"],
        ["build", "--config", "shallow"],
        ["phases"],
        ["observables"],
        ["verify", "--energies", "10"],
        ["compare"],
    ):
        assert main([*argv, "--out", str(out), "--dry-run"]) == 0
    assert not out.exists()


def test_tables_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["build", "--config", "deep:A3=1e6", "--out", str(out)]) == 0
        assert main(["phases", "--energies", "1:50:7", "--out", str(out)]) == 0
        assert main(["fit", "--n", "2", "--starts", "20", "--out", str(out)]) == 0
    for name in ("potential.tsv", "phases.tsv", "poles.json", "fit_report.json", "build.manifest.json",
                 "phases.manifest.json", "fit.manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert b"\r\n" not in (a / "potential.tsv").read_bytes()


def test_manifest_lists_outputs(tmp_path):
    assert run(tmp_path, "compare") == 0
    manifest = json.loads((tmp_path / "compare.manifest.json").read_text())
    assert {o["path"] for o in manifest["outputs"]} == {"compare.tsv", "compare_summary.json"}
    assert manifest["command"] == "compare"
    assert manifest["config"]["constants"]["m_n"] == 940.0


def test_config_precedence(tmp_path, monkeypatch):
    work = tmp_path / "work"
    work.mkdir()
    monkeypatch.chdir(work)
    monkeypatch.delenv("ISOPHASE_CONFIG", raising=False)
    (work / "isophase.toml").write_text("grid_max = 10\nout = 'local'\n")
    env_cfg = tmp_path / "env.toml"
    env_cfg.write_text("grid_max = 12\nout = 'from_env'\n")
    flag_cfg = tmp_path / "flag.toml"
    flag_cfg.write_text("grid_max = 14  # comment\nout = \"from_flag\"\n")

    def grid_max(out):
        return round(read_table(work / out / "potential.tsv")[-1, 0], 2)

    assert main(["build"]) == 0
    assert grid_max("local") == pytest.approx(10.0)
    monkeypatch.setenv("ISOPHASE_CONFIG", str(env_cfg))
    assert main(["build"]) == 0
    assert grid_max("from_env") == pytest.approx(12.0)
    assert main(["build", "--config-file", str(flag_cfg)]) == 0
    assert grid_max("from_flag") == pytest.approx(14.0)
    assert main(["build", "--config-file", str(flag_cfg), "--grid-max", "16", "--out", "cli"]) == 0
    assert grid_max("cli") == pytest.approx(16.0)


def test_bad_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[table]\n")
    assert run(tmp_path, "phases", "--config-file", str(cfg)) == 3
    cfg.write_text("colour = 3\n")
    assert run(tmp_path, "phases", "--config-file", str(cfg)) == 3
    assert run(tmp_path, "phases", "--config-file", str(tmp_path / "none.toml")) == 2


def test_bad_constants(tmp_path):
    assert run(tmp_path, "phases", "--mn", "-1") == 3
