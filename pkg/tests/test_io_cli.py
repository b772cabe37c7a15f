import csv
import subprocess
import sys

import numpy as np
import pytest

from eaisim.cli import main
from eaisim.interferometry import direct_H, direct_modes
from eaisim.io import Table, h_matrix_table, mode_table, read_csv, write_csv
from eaisim.model import ghz_to_omega
from eaisim.interferometry import ProbeSet

TINY = """\
name: tiny
description: Two dipoles. Used by the command-line tests
system:
  generator: chain
  count: 2
  spacing_mm: 0.1
  defaults: {{f0_ghz: 300, gamma_ghz: 20, alpha: 0.005}}
frequencies: {{start: 200, stop: 400, step: 5}}
analysis_ghz: 300
source: {{position: [10, 10, 0], green: near}}
scan: {{kind: line, start: [-2, 5, 0], stop: [2, 5, 0], count: 9, green: near, reference: [0, 5, 0]}}
probes: {{kind: line, start: [-2.5, 5, 0], stop: [2.5, 5, 0], count: 6, green: near}}
precision_digits: 30
expected:
  - observable: peaks
    origin: computed
    values: {peaks}
    tol: 5
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY.format(peaks="[240, 345]"))
    return p


# -- CSV ---------------------------------------------------------------------

def test_csv_round_trip_keeps_17_digits(tmp_path, rng):
    data = rng.normal(size=(5, 3)) * 10.0 ** rng.integers(-20, 20, size=(5, 3))
    path = write_csv(Table.from_array(["a", "b", "c"], data), tmp_path / "t.csv")
    back = read_csv(path)
    assert back.columns == ["a", "b", "c"]
    np.testing.assert_array_equal(np.array(back.rows), data)


def test_complex_columns_split(tmp_path):
    t = Table(["k", "z"], [[0, 1 + 1j], [1, -2.0 + 0j]])
    lines = write_csv(t, tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "k,z_re,z_im"
    assert lines[1] == "0,1,1"
    t.complex_format = "ampphase"
    lines = write_csv(t, tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "k,z_amp,z_phase_deg"
    assert lines[2] == "1,2,180"


def test_empty_table_writes_header_only(tmp_path):
    path = write_csv(Table.from_array(["f_ghz", "power"], np.empty((0, 2))), tmp_path / "e.csv")
    assert path.read_text() == "f_ghz,power\n"


def test_table_validation():
    with pytest.raises(ValueError):
        Table(["a", "b"], [[1]])
    with pytest.raises(ValueError):
        Table(["a"], [], "polar")


def test_h_matrix_dump_layout(tmp_path, five_chain):
    w = ghz_to_omega(280.0)
    probes = ProbeSet.line([-2.5, 5, 0], [2.5, 5, 0], 6)
    H = direct_H(five_chain, w, probes)
    modes = direct_modes(five_chain, w)
    path = write_csv(h_matrix_table(H, modes, [190.0, 240.0, 290.0, 330.0, 390.0]), tmp_path / "h.csv")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["block", "row"] + [f"p{j}" for j in range(6)]
    blocks = [r[0] for r in rows[1:]]
    assert blocks == ["amplitude"] * 6 + ["phase_deg"] * 6 + ["eigenvalue", "resonance_ghz"]
    assert float(rows[1][2]) == pytest.approx(abs(H.values[0, 0]), rel=1e-15)
    assert float(rows[13][2]) == 1.0 and rows[13][-1] == "nan"
    mt = mode_table(modes)
    assert mt.columns == ["mode", "eigenvalue", "site", "z"] and len(mt.rows) == 25


# -- CLI ---------------------------------------------------------------------

def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_scenarios(capsys):
    code, out, _ = run(["list-scenarios"], capsys)
    assert code == 0 and "octagon-defect" in out and "twentyone-chain" in out


@pytest.mark.parametrize("command", ["spectrum", "scan", "fringe", "visibility", "recover", "converge"])
def test_commands_write_csv(command, tiny, tmp_path, capsys):
    out_dir = tmp_path / "out"
    code, out, err = run([command, "--scenario", str(tiny), "--out", str(out_dir), "--max-probes", "4"], capsys)
    assert code == 0, err
    written = sorted(p.name for p in out_dir.iterdir())
    assert written and all(n.startswith("tiny_") and n.endswith(".csv") for n in written)
    assert any(f"_{command}_" in n for n in written)


def test_output_dir_from_environment(tiny, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("EAISIM_OUTPUT_DIR", str(tmp_path / "env"))
    assert run(["scan", "--scenario", str(tiny)], capsys)[0] == 0
    assert (tmp_path / "env" / "tiny_scan_300.csv").exists()


def test_same_seed_gives_identical_bytes(tiny, tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        code, _, err = run(["fringe", "--scenario", str(tiny), "--out", str(d), "--noise-snr", "50",
                            "--seed", "7"], capsys)
        assert code == 0, err
        outs.append((d / "tiny_fringe_300.csv").read_bytes())
    assert outs[0] == outs[1]


def test_regress_exit_codes(tiny, tmp_path, capsys):
    code, out, _ = run(["regress", "--scenario", str(tiny), "--out", str(tmp_path)], capsys)
    assert code == 0 and "overall: PASS" in out
    assert (tmp_path / "tiny_regress_300.csv").exists()
    tiny.write_text(TINY.format(peaks="[100, 500]"))
    code, out, _ = run(["regress", "--scenario", str(tiny), "--out", str(tmp_path)], capsys)
    assert code == 2 and "FAIL" in out


def test_recover_with_too_few_probes_warns(tiny, tmp_path, capsys):
    code, out, _ = run(["recover", "--scenario", str(tiny), "--probes", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "warning: partial recovery" in out


@pytest.mark.parametrize("argv,needle", [
    ([], "command"),
    (["spectrum"], "--scenario"),
    (["spectrum", "--scenario", "nowhere"], "unknown scenario"),
    (["scan", "--scenario", "two-dipole", "--freq", "-3"], "positive"),
    (["fringe", "--scenario", "two-dipole", "--phase-steps", "2"], "phase-steps"),
    (["fringe", "--scenario", "two-dipole", "--pair", "0", "9"], "pair"),
    (["spectrum", "--scenario", "two-dipole", "--freqs", "1:2"], "start:stop:step"),
    (["bogus"], "invalid choice"),
])
def test_usage_and_config_errors_exit_1(argv, needle, capsys, tmp_path):
    code, _, err = run(argv + ["--out", str(tmp_path)], capsys)
    assert code == 1
    assert needle in err


def test_empty_dipole_list_reports_line(tmp_path, capsys):
    p = tmp_path / "empty.yaml"
    p.write_text("name: empty\nsystem:\n  dipoles: []\nfrequencies: {start: 1, stop: 2, step: 1}\n")
    code, _, err = run(["spectrum", "--scenario", str(p)], capsys)
    assert code == 1 and "config error" in err and "system" in err


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "eaisim.cli", "list-scenarios"], capture_output=True, text=True)
    assert proc.returncode == 0 and "two-dipole" in proc.stdout
