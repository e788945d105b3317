import subprocess
import sys

import pytest

from peaked.cli import EXIT_CHECK_FAILED, EXIT_INTEGRITY, EXIT_INVALID, EXIT_OK, EXIT_PARTIAL, build_parser, main

SWEEP = """\
n: [4]
tau_r: 3
tau_p: [1, 2]
instances: 3
optimizer: {max_iters: 40, restarts: 2}
"""


@pytest.fixture
def sweep(tmp_path):
    path = tmp_path / "sweep.yaml"
    path.write_text(SWEEP)
    return path


def test_all_subcommands_exist():
    parser = build_parser()
    for cmd in ("rarity", "peak-sweep", "entropy-profile", "scaling-fit", "oracle-check", "resume"):
        args = parser.parse_args([cmd, "m.yaml", "--seed", "3", "--out", "o", "--workers", "2"])
        assert args.command == cmd and args.seed == 3 and args.workers == 2


def test_success_writes_outputs(sweep, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["peak-sweep", str(sweep), "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert text.startswith("# peak-sweep")
    assert "mean_delta" in text
    names = {p.name for p in out.iterdir()}
    assert {"record.json", "rows.tsv", "manifest.json", "plot_peak_sweep_n4.tsv", "fig_peak_sweep.png"} <= names


def test_no_figures(sweep, tmp_path):
    out = tmp_path / "o"
    assert main(["peak-sweep", str(sweep), "--out", str(out), "--no-figures"]) == EXIT_OK
    assert not list(out.glob("*.png"))


def test_validation_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("n: [5]\ntau_r: sideways\n")
    assert main(["rarity", str(bad), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "n:" in err and "tau_r:" in err
    assert main(["rarity", str(tmp_path / "missing.yaml")]) == EXIT_INVALID


def test_kind_mismatch(sweep, tmp_path):
    sweep.write_text(SWEEP + "kind: rarity\n")
    assert main(["peak-sweep", str(sweep), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_partial_then_resume(sweep, tmp_path):
    out = tmp_path / "o"
    assert main(["peak-sweep", str(sweep), "--out", str(out), "--stop-after", "2", "--no-figures"]) == EXIT_PARTIAL
    assert (out / "PARTIAL").exists()
    assert main(["resume", str(out), "--no-figures"]) == EXIT_OK
    assert not (out / "PARTIAL").exists()
    ref = tmp_path / "ref"
    assert main(["peak-sweep", str(sweep), "--out", str(ref), "--no-figures"]) == EXIT_OK
    from peaked.experiments import load

    assert load(out).equivalent(load(ref))


def test_resume_from_manifest_file(sweep, tmp_path):
    out = tmp_path / "o"
    main(["peak-sweep", str(sweep), "--out", str(out), "--stop-after", "1", "--no-figures"])
    sweep.write_text(SWEEP + "kind: peak-sweep\n")
    assert main(["resume", str(sweep), "--out", str(out), "--no-figures"]) == EXIT_OK


def test_integrity_error(sweep, tmp_path):
    out = tmp_path / "o"
    main(["peak-sweep", str(sweep), "--out", str(out), "--stop-after", "1", "--no-figures"])
    (out / "manifest.json").write_text("{not json")
    assert main(["resume", str(out)]) == EXIT_INTEGRITY
    assert main(["resume", str(tmp_path)]) == EXIT_INTEGRITY


def test_seed_override_changes_rows(sweep, tmp_path):
    from peaked.experiments import load

    main(["peak-sweep", str(sweep), "--out", str(tmp_path / "a"), "--no-figures"])
    main(["peak-sweep", str(sweep), "--out", str(tmp_path / "b"), "--seed", "11", "--no-figures"])
    a, b = load(tmp_path / "a"), load(tmp_path / "b")
    assert [r["seed"] for r in a.rows] != [r["seed"] for r in b.rows]


def test_oracle_check_exit_codes(tmp_path, monkeypatch):
    path = tmp_path / "o.yaml"
    path.write_text("n: [2, 4]\ninstances: 300\nbrute_force_instances: 2\noptimizer: {max_iters: 400, restarts: 3}\n")
    assert main(["oracle-check", str(path), "--out", str(tmp_path / "ok"), "--no-figures"]) == EXIT_OK

    import peaked.experiments as ex

    real = ex.oracle_checks
    monkeypatch.setattr(ex, "oracle_checks", lambda rows: [dict(c, passed=False) for c in real(rows)])
    assert main(["oracle-check", str(path), "--out", str(tmp_path / "bad"), "--no-figures"]) == EXIT_CHECK_FAILED


def test_console_entry_point(sweep, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "peaked.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
