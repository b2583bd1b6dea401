import csv
import math
from dataclasses import dataclass, replace

import numpy as np
import pytest

from conftest import gl_panels
from cylcop import study
from cylcop.circular import TWO_PI
from cylcop.copulas import Independence
from cylcop.errors import DomainError, FitError, IntegrationError, StudyAbortedError
from cylcop.joint import fit_joint, make_example_density
from cylcop.quadrature import simpson_nodes, simpson_weights
from cylcop.simulation import GENERATOR_ID, simulate
from cylcop.study import (
    CylinderGrid,
    StudyConfig,
    default_x_range,
    ise,
    relative_efficiency,
    run_study,
    write_summary_csv,
    write_trace_csv,
)

SMALL = StudyConfig(example_id=1, sample_sizes=(50, 100), replicates=4, variants=("JWP", "JWSP"),
                    n_theta=32, n_x=32, master_seed=7)


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_simpson_exact_for_cubics(degree):
    x, w = simpson_nodes(-1.0, 2.0, 6), simpson_weights(-1.0, 2.0, 6)
    assert w @ x ** degree == pytest.approx((2.0 ** (degree + 1) - (-1.0) ** (degree + 1)) / (degree + 1), rel=1e-14)


@pytest.mark.parametrize("n", [0, 3])
def test_simpson_rejects_odd(n):
    with pytest.raises(ValueError):
        simpson_weights(0.0, 1.0, n)


class TestGrid:
    def test_nodes(self):
        g = CylinderGrid(100, 100, (-4, 4))
        assert g.theta.size == 101 and g.theta[-1] == pytest.approx(TWO_PI)
        assert g.integrate(np.ones((101, 101))) == pytest.approx(8 * TWO_PI, rel=1e-14)

    @pytest.mark.parametrize("kw", [dict(n_theta=30), dict(n_x=33), dict(x_range=(1.0, 1.0))])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            CylinderGrid(**kw)

    def test_default_x_range(self):
        lo, hi = default_x_range(make_example_density(1))
        assert lo == pytest.approx(-4.719016, abs=1e-5) and hi == pytest.approx(4.719016, abs=1e-5)


class TestIse:
    def test_truth_against_itself(self):
        m = make_example_density(2)
        assert ise(m, m, CylinderGrid()) == pytest.approx(0.0, abs=1e-12)

    def test_example_one_against_independence(self):
        truth = make_example_density(1)
        indep = truth.with_copula(Independence())
        lo, hi = default_x_range(truth)
        t, wt = gl_panels(0.0, TWO_PI, 40, 20)
        x, wx = gl_panels(lo, hi, 40, 20)
        oracle = wt @ (truth.density_grid(t, x) - indep.density_grid(t, x)) ** 2 @ wx
        assert ise(indep, truth, CylinderGrid(100, 100, (lo, hi))) == pytest.approx(oracle, abs=1e-6)

    def test_grid_convergence(self):
        truth = make_example_density(1)
        fit = fit_joint(simulate(truth, 200, 5), "CNP")
        grid = CylinderGrid(100, 100, default_x_range(truth))
        coarse, fine = ise(fit, truth, grid), ise(fit, truth, grid.refined())
        assert abs(coarse - fine) < 0.01 * fine

    def test_non_finite_reports_coordinates(self):
        class Broken:
            def density_grid(self, t, x):
                out = np.ones((t.size, x.size))
                out[3, 5] = np.nan
                return out

        grid = CylinderGrid(32, 32, (-1, 1))
        with pytest.raises(IntegrationError, match=r"theta=.*x="):
            ise(Broken(), make_example_density(1), grid)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(example_id=5), dict(replicates=0), dict(sample_sizes=()),
                                    dict(sample_sizes=(5,)), dict(variants=("ABC",)), dict(master_seed=-1),
                                    dict(circular_family="cardioid")])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            StudyConfig(**kw)

    @pytest.mark.parametrize("example, family", [(1, "uniform"), (2, "vonmises"), (3, "vonmises"), (4, "vonmises")])
    def test_family_default(self, example, family):
        assert StudyConfig(example_id=example).circular_family == family

    def test_variants_upper_cased(self):
        assert StudyConfig(variants=("jwp", "cnp")).variants == ("JWP", "CNP")


@pytest.fixture(scope="module")
def small_report():
    return run_study(SMALL)


class TestRunStudy:
    def test_shape_and_seeds(self, small_report):
        assert small_report.seeds == [7 ^ r for r in range(4)]
        assert small_report.generator == GENERATOR_ID
        for key, trace in small_report.ise.items():
            assert trace.shape == (4,) and np.all(trace >= 0)
            assert small_report.mise(*key) == pytest.approx(trace.mean(), abs=1e-12)

    def test_replicate_matches_direct_computation(self, small_report):
        truth = make_example_density(1)
        sample = simulate(truth, 100, 7 ^ 2)
        model = fit_joint(sample, "JWSP", study.FitOptions(circular_family="uniform"))
        assert small_report.ise[("JWSP", 100)][2] == ise(model, truth, small_report.grid)

    def test_deterministic(self, small_report):
        again = run_study(SMALL)
        for key in small_report.ise:
            np.testing.assert_array_equal(small_report.ise[key], again.ise[key])

    def test_workers_parity(self, small_report):
        par = run_study(replace(SMALL, workers=2))
        assert par.runtime["workers"] == 2
        for key in small_report.ise:
            np.testing.assert_array_equal(small_report.ise[key], par.ise[key])

    def test_relative_efficiency(self, small_report):
        eff = relative_efficiency(small_report)
        assert eff[("JWP", 50)] == 1.0
        assert eff[("JWSP", 100)] == pytest.approx(small_report.mise("JWP", 100) / small_report.mise("JWSP", 100))
        with pytest.raises(DomainError):
            relative_efficiency(small_report, "CNP")

    def test_csv_layout(self, small_report, tmp_path):
        write_trace_csv(small_report, tmp_path / "t.csv")
        write_summary_csv(small_report, tmp_path / "s.csv")
        with open(tmp_path / "t.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["example_id", "variant", "n", "replicate", "ise", "seed"]
        assert len(rows) == 1 + 2 * 2 * 4
        assert rows[1][:4] == ["1", "JWP", "50", "0"] and rows[1][5] == "7"
        assert float(rows[1][4]) == small_report.ise[("JWP", 50)][0]
        with open(tmp_path / "s.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["variant", "n", "mise", "rel_eff"]
        assert len(rows) == 5 and float(rows[1][3]) == 1.0

    def test_summary_without_baseline(self, tmp_path):
        rep = run_study(replace(SMALL, variants=("JWSP",), sample_sizes=(50,), replicates=2))
        write_summary_csv(rep, tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().splitlines()[1].endswith(",")


@dataclass(frozen=True)
class AbortCase:
    fail_every: int
    aborts: bool


@pytest.mark.parametrize("case", [AbortCase(1, True), AbortCase(30, True), AbortCase(60, False), AbortCase(0, False)],
                         ids=["all", "over_2pct", "under_2pct", "none"])
def test_failure_threshold(monkeypatch, case):
    calls = {"k": 0}
    real = study.fit_joint

    def flaky(sample, variant, options=None):
        calls["k"] += 1
        if case.fail_every and calls["k"] % case.fail_every == 0:
            raise FitError("injected")
        return real(sample, variant, options)

    monkeypatch.setattr(study, "fit_joint", flaky)
    cfg = StudyConfig(example_id=1, sample_sizes=(30,), replicates=60, variants=("JWP",), n_theta=32, n_x=32)
    if case.aborts:
        with pytest.raises(StudyAbortedError):
            run_study(cfg)
    else:
        assert run_study(cfg).failures("JWP", 30) == (60 // case.fail_every if case.fail_every else 0)


def test_single_failure_is_excluded(monkeypatch):
    real = study.fit_joint
    state = {"k": 0}

    def once(sample, variant, options=None):
        state["k"] += 1
        if state["k"] == 3:
            raise FitError("injected")
        return real(sample, variant, options)

    monkeypatch.setattr(study, "fit_joint", once)
    rep = run_study(StudyConfig(example_id=1, sample_sizes=(30,), replicates=100, variants=("JWP",),
                                n_theta=32, n_x=32))
    trace = rep.ise[("JWP", 30)]
    assert rep.failures("JWP", 30) == 1 and math.isnan(trace[2])
    assert rep.mise("JWP", 30) == pytest.approx(np.nanmean(trace), abs=1e-15)


def test_jwp_mise_decreases_with_n():
    rep = run_study(StudyConfig(example_id=1, sample_sizes=(50, 100, 500), replicates=100, variants=("JWP",),
                                master_seed=3))
    m = [rep.median_ise("JWP", n) for n in (50, 100, 500)]
    assert m[0] > m[1] > m[2]
    assert [rep.mise("JWP", n) for n in (50, 100, 500)] == sorted(rep.mise("JWP", n) for n in (50, 100, 500))[::-1]


def test_grid_adequacy():
    cfg = StudyConfig(example_id=2, sample_sizes=(100,), replicates=5, variants=("JWP", "CNP"), master_seed=4)
    base = run_study(cfg)
    fine = run_study(replace(cfg, n_theta=200, n_x=200))
    for key in base.ise:
        assert base.mise(*key) == pytest.approx(fine.mise(*key), rel=0.03)
