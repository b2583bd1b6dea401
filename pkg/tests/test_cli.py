import csv
import math
import subprocess
import sys
from dataclasses import dataclass

import numpy as np
import pytest

from cylcop.circular import TWO_PI, vm_fit_ml
from cylcop.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, read_provenance


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def minute_data(path, hours=12, seed=0, degrees=True, blank_every=0):
    """Minute records with integer-valued (tied) angles and concentrations."""
    rng = np.random.default_rng(seed)
    n = 60 * hours
    stamps = np.datetime64("2011-03-01T00:00") + np.arange(n).astype("timedelta64[m]")
    theta = np.round(rng.vonmises(1.0, 1.0, n) % TWO_PI * (180 / math.pi if degrees else 1))
    x = np.round(np.exp(rng.normal(2.5, 0.6, n)))
    rows = []
    for i in range(n):
        cell = "" if blank_every and i % blank_every == 0 else f"{x[i]:g}"
        rows.append([str(stamps[i]), f"{theta[i]:g}", cell])
    return write_csv(path, ["timestamp", "theta", "x"], rows)


@pytest.fixture
def smooth_file(tmp_path):
    rng = np.random.default_rng(1)
    theta = rng.vonmises(math.pi, 2.0, 300) % TWO_PI
    x = rng.normal(size=300) + 0.5 * np.cos(theta)
    return write_csv(tmp_path / "smooth.csv", ["theta", "x"], zip(theta, x))


class TestPrep:
    def test_hourly_counts_and_provenance(self, tmp_path):
        src = minute_data(tmp_path / "raw.csv", hours=12)
        out = str(tmp_path / "out.csv")
        assert main(["prep", src, "-o", out, "--degrees", "--hourly", "--limit", "3", "--perturb",
                     "--seed", "5"]) == EXIT_OK
        rows = read_rows(out)
        assert len(rows) == 12
        assert set(rows[0]) == {"timestamp", "theta", "x", "at_limit"}
        prov = read_provenance(out + ".prov")
        assert prov["seed"] == "5" and prov["rows_read"] == "720" and prov["rows_out"] == "12"
        assert all(0 <= float(r["theta"]) < TWO_PI for r in rows)

    def test_boxcox_zero_of_e_is_one(self, tmp_path):
        src = write_csv(tmp_path / "e.csv", ["theta", "x"], [[0.5, math.e], [1.0, 1.0]])
        out = str(tmp_path / "o.csv")
        assert main(["prep", src, "-o", out, "--boxcox", "0"]) == EXIT_OK
        assert [float(r["x"]) for r in read_rows(out)] == pytest.approx([1.0, 0.0], abs=1e-15)

    def test_deterministic(self, tmp_path):
        src = minute_data(tmp_path / "raw.csv")
        outs = []
        for k in range(2):
            out = str(tmp_path / f"o{k}.csv")
            assert main(["prep", src, "-o", out, "--degrees", "--hourly", "--perturb", "--seed", "3",
                         "--boxcox", "0"]) == EXIT_OK
            outs.append(open(out, "rb").read())
        assert outs[0] == outs[1]

    def test_seed_recorded_when_drawn(self, tmp_path):
        src = minute_data(tmp_path / "raw.csv")
        out = str(tmp_path / "o.csv")
        assert main(["prep", src, "-o", out, "--hourly", "--perturb"]) == EXIT_OK
        seed = int(read_provenance(out + ".prov")["seed"])
        again = str(tmp_path / "again.csv")
        assert main(["prep", src, "-o", again, "--hourly", "--perturb", "--seed", str(seed)]) == EXIT_OK
        assert open(out, "rb").read() == open(again, "rb").read()

    def test_idempotent_without_perturbation(self, tmp_path):
        src = minute_data(tmp_path / "raw.csv", degrees=False)
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        flags = ["--hourly", "--limit", "3"]
        assert main(["prep", src, "-o", a, *flags]) == EXIT_OK
        assert main(["prep", a, "-o", b, *flags]) == EXIT_OK
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_limit_fills_blank_cells(self, tmp_path):
        src = minute_data(tmp_path / "raw.csv", blank_every=7)
        out = str(tmp_path / "o.csv")
        assert main(["prep", src, "-o", out, "--limit", "3"]) == EXIT_OK
        rows = read_rows(out)
        assert len(rows) == 720
        assert rows[0]["x"] == "3.0" and rows[0]["at_limit"] == "1"

    def test_blank_cells_without_limit_are_bad_rows(self, tmp_path, capsys):
        src = minute_data(tmp_path / "raw.csv", blank_every=7)
        assert main(["prep", src, "-o", str(tmp_path / "o.csv")]) == EXIT_DATA
        err = capsys.readouterr().err
        assert "line 2 " in err and "line 9 " in err

    def test_few_bad_rows_are_skipped(self, tmp_path, caplog):
        src = minute_data(tmp_path / "raw.csv", blank_every=50)
        out = str(tmp_path / "o.csv")
        assert main(["prep", src, "-o", out]) == EXIT_OK
        assert len(read_rows(out)) == 720 - 15
        assert "line 2 " in caplog.text

    def test_unsorted_timestamps(self, tmp_path):
        src = write_csv(tmp_path / "u.csv", ["timestamp", "theta", "x"],
                        [["2011-01-01T01:00", 1, 2], ["2011-01-01T00:00", 1, 2]])
        assert main(["prep", src, "-o", str(tmp_path / "o.csv"), "--hourly"]) == EXIT_DATA

    @pytest.mark.parametrize("header", [["theta"], ["angle", "x"]])
    def test_bad_header(self, tmp_path, header):
        src = write_csv(tmp_path / "h.csv", header, [[1.0] * len(header)])
        assert main(["prep", src, "-o", str(tmp_path / "o.csv")]) == EXIT_DATA

    def test_missing_file(self, tmp_path):
        assert main(["prep", str(tmp_path / "nope.csv"), "-o", str(tmp_path / "o.csv")]) == EXIT_DATA

    def test_perturb_on_constant_data(self, tmp_path):
        src = write_csv(tmp_path / "c.csv", ["theta", "x"], [[1.0, 2.0]] * 20)
        assert main(["prep", src, "-o", str(tmp_path / "o.csv"), "--perturb", "--seed", "1"]) == EXIT_DATA


class TestFit:
    def test_grid_and_summary(self, tmp_path, smooth_file):
        out = str(tmp_path / "g.csv")
        assert main(["fit", smooth_file, "-o", out, "--variant", "cnp", "--grid", "40x30"]) == EXIT_OK
        rows = read_rows(out)
        assert len(rows) == 1200
        dens = np.array([float(r["density"]) for r in rows])
        theta = np.array([float(r["theta"]) for r in rows])
        assert np.all(dens >= 0) and theta.min() == 0.0 and theta.max() < TWO_PI
        summary = read_provenance(out + ".summary")
        assert summary["variant"] == "CNP" and float(summary["runtime_seconds"]) >= 0
        assert {"nu", "h", "copula_diag", "copula_off"} <= set(summary)

    def test_bandwidth_echo(self, tmp_path, smooth_file):
        out = str(tmp_path / "g.csv")
        assert main(["fit", smooth_file, "-o", out, "--variant", "jwnp", "--bandwidth", "nu=78.56",
                     "--summary", str(tmp_path / "s.txt")]) == EXIT_OK
        assert read_provenance(tmp_path / "s.txt")["nu"] == "78.56"

    def test_ties_point_to_prep(self, tmp_path, capsys):
        src = minute_data(tmp_path / "raw.csv")
        assert main(["fit", src, "-o", str(tmp_path / "g.csv"), "--variant", "cnp", "--degrees"]) == EXIT_DATA
        assert "cylcop prep --perturb" in capsys.readouterr().err

    def test_prep_then_fit(self, tmp_path):
        src = minute_data(tmp_path / "raw.csv", hours=48)
        mid, out = str(tmp_path / "p.csv"), str(tmp_path / "g.csv")
        assert main(["prep", src, "-o", mid, "--degrees", "--hourly", "--perturb", "--seed", "2",
                     "--boxcox", "0"]) == EXIT_OK
        assert main(["fit", mid, "-o", out, "--variant", "csp", "--grid", "32x32"]) == EXIT_OK

    def test_too_few_rows(self, tmp_path):
        src = write_csv(tmp_path / "s.csv", ["theta", "x"], [[i * 0.1, i] for i in range(5)])
        assert main(["fit", src, "-o", str(tmp_path / "g.csv"), "--variant", "jwp"]) == EXIT_NUMERIC

    @pytest.mark.parametrize("flags", [["--grid", "10by10"], ["--bandwidth", "bogus=1"], ["--bandwidth", "nu"],
                                       ["--bandwidth", "copula_off=0.1"], ["--x-range", "3,1"],
                                       ["--variant", "xyz"]])
    def test_usage_errors(self, tmp_path, smooth_file, flags):
        argv = ["fit", smooth_file, "-o", str(tmp_path / "g.csv")]
        if "--variant" not in flags:
            argv += ["--variant", "cnp"]
        code = None
        try:
            code = main(argv + flags)
        except SystemExit as exc:
            code = exc.code
        assert code == EXIT_USAGE


class TestSimulate:
    def test_header_only(self, tmp_path):
        out = str(tmp_path / "s.csv")
        assert main(["simulate", "--example", "1", "--n", "0", "-o", out]) == EXIT_OK
        assert open(out).read() == "theta,x\n"

    def test_deterministic(self, tmp_path):
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        for path in (a, b):
            assert main(["simulate", "--example", "1", "--n", "5000", "--seed", "7", "-o", path]) == EXIT_OK
        assert open(a, "rb").read() == open(b, "rb").read()
        assert read_provenance(a + ".prov")["seed"] == "7"

    def test_example_four_location(self, tmp_path):
        out = str(tmp_path / "s.csv")
        assert main(["simulate", "--example", "4", "--n", "5000", "-o", out]) == EXIT_OK
        theta = np.array([float(r["theta"]) for r in read_rows(out)])
        assert abs(vm_fit_ml(theta).mu - math.pi / 2) < 0.1

    def test_params_override(self, tmp_path):
        out = str(tmp_path / "s.csv")
        assert main(["simulate", "--example", "2", "--n", "10", "--params", "kappa=1,mu=0",
                     "--params", "kappa_marg=3", "-o", out]) == EXIT_OK
        prov = read_provenance(out + ".prov")
        assert (prov["kappa"], prov["mu"], prov["kappa_marg"]) == ("1.0", "0.0", "3.0")

    def test_stdout(self, capsys):
        assert main(["simulate", "--example", "3", "--n", "3"]) == EXIT_OK
        assert len(capsys.readouterr().out.splitlines()) == 4

    @pytest.mark.parametrize("flags", [["--params", "alpha=1"], ["--params", "kappa"], ["--n", "-1"]])
    def test_usage_errors(self, flags):
        argv = ["simulate", "--example", "1", "--n", "10"]
        assert main(argv + flags) == EXIT_USAGE

    def test_bad_alpha_is_usage_error(self):
        assert main(["simulate", "--example", "3", "--n", "10", "--params", "alpha=5"]) == EXIT_USAGE


@dataclass(frozen=True)
class ConfigCase:
    name: str
    text: str
    code: int
    needle: str = ""


CONFIG_CASES = [
    ConfigCase("ok", "[study]\nexample = 1\nvariants = jwp\nsample_sizes = 50, 100\nreplicates = 50\n"
               "master_seed = 3\nn_theta = 32\nn_x = 32\n", EXIT_OK),
    ConfigCase("unknown_key", "[study]\nexample = 1\nreplicatez = 3\n", EXIT_USAGE, "replicatez"),
    ConfigCase("unknown_section", "[study]\nexample = 1\n[grid]\nn = 3\n", EXIT_USAGE, "grid"),
    ConfigCase("bad_value", "[study]\nexample = 1\nreplicates = many\n", EXIT_USAGE, "replicates"),
    ConfigCase("bad_param", "[study]\nexample = 1\n[params]\nalpha = 0.1\n", EXIT_USAGE, "alpha"),
    ConfigCase("no_study", "[params]\nkappa = 1\n", EXIT_USAGE, "study"),
]


@pytest.mark.parametrize("case", CONFIG_CASES, ids=[c.name for c in CONFIG_CASES])
def test_study_config(tmp_path, capsys, case):
    cfg = tmp_path / "study.ini"
    cfg.write_text(case.text)
    code = main(["study", str(cfg), "--out-dir", str(tmp_path / "out")])
    assert code == case.code
    if case.needle:
        assert case.needle in capsys.readouterr().err
    else:
        summary = read_rows(tmp_path / "out" / "study_summary.csv")
        assert [(r["variant"], r["n"]) for r in summary] == [("JWP", "50"), ("JWP", "100")]
        assert len(read_rows(tmp_path / "out" / "study_trace.csv")) == 100


def test_study_deterministic(tmp_path):
    cfg = tmp_path / "study.ini"
    cfg.write_text("[study]\nexample = 3\nvariants = jwp, csp\nsample_sizes = 30\nreplicates = 3\n"
                   "n_theta = 32\nn_x = 32\n[params]\nalpha = 0.1\n")
    outs = []
    for k, workers in enumerate(("1", "2")):
        d = tmp_path / f"o{k}"
        assert main(["study", str(cfg), "--out-dir", str(d), "--prefix", "r", "--workers", workers]) == EXIT_OK
        outs.append([(d / f).read_bytes() for f in ("r_trace.csv", "r_summary.csv", "r_summary.csv.prov")])
    assert outs[0] == outs[1]
    assert read_provenance(tmp_path / "o0" / "r_summary.csv.prov")["params"] == "alpha=0.1"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cylcop", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("cylcop ")


def test_missing_subcommand():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE
