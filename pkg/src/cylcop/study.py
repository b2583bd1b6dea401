"""Monte Carlo MISE study over the simulation examples.

Every replicate ``r`` draws its sample with seed ``master_seed ^ r`` (shared
by all variants and sample sizes), fits each variant and integrates the
squared error against the true density by composite Simpson on a fixed
cylinder grid. Replicates may run in worker processes; results are reduced
in replicate order so the report does not depend on scheduling.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import logging
import math
import os
import time

import numpy as np

from .circular import TWO_PI
from .errors import CylcopError, DomainError, IntegrationError, StudyAbortedError
from .joint import CIRCULAR_FAMILIES, VARIANTS, FitOptions, fit_joint, make_example_density
from .quadrature import simpson_nodes, simpson_weights
from .simulation import GENERATOR_ID, simulate

__all__ = [
    "CylinderGrid",
    "StudyConfig",
    "StudyReport",
    "default_x_range",
    "ise",
    "relative_efficiency",
    "run_study",
    "write_summary_csv",
    "write_trace_csv",
]

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.02
WORKERS_ENV = "CYLCOP_WORKERS"
_TAIL = 1e-4


@dataclass(frozen=True, eq=False)
class CylinderGrid:
    """Tensor composite-Simpson rule on ``[0, 2 pi] x [x_lo, x_hi]``."""

    n_theta: int = 100
    n_x: int = 100
    x_range: tuple = (-4.0, 4.0)

    def __post_init__(self):
        for name in ("n_theta", "n_x"):
            k = getattr(self, name)
            if k < 32 or k % 2:
                raise DomainError(f"{name} must be an even number >= 32, got {k}")
        lo, hi = (float(t) for t in self.x_range)
        if not lo < hi:
            raise DomainError(f"x_range must be increasing, got {self.x_range}")
        object.__setattr__(self, "x_range", (lo, hi))
        object.__setattr__(self, "theta", simpson_nodes(0.0, TWO_PI, self.n_theta))
        object.__setattr__(self, "x", simpson_nodes(lo, hi, self.n_x))
        object.__setattr__(self, "w_theta", simpson_weights(0.0, TWO_PI, self.n_theta))
        object.__setattr__(self, "w_x", simpson_weights(lo, hi, self.n_x))

    def integrate(self, values):
        return float(self.w_theta @ values @ self.w_x)

    def refined(self):
        return CylinderGrid(2 * self.n_theta, 2 * self.n_x, self.x_range)


def default_x_range(truth):
    """Linear-marginal quantiles at 1e-4 and 1 - 1e-4, widened by one sd."""
    lin = truth.linear
    sd = float(lin.scale)
    return float(lin.quantile(_TAIL)) - sd, float(lin.quantile(1.0 - _TAIL)) + sd


def _grid_values(model, grid, label):
    vals = np.asarray(model.density_grid(grid.theta, grid.x), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise IntegrationError(f"non-finite {label} density at theta={grid.theta[i]!r}, x={grid.x[j]!r}")
    return vals


def ise(estimate, truth, grid, truth_values=None):
    """Integrated squared error of ``estimate`` against ``truth`` on ``grid``."""
    p = truth_values if truth_values is not None else _grid_values(truth, grid, "true")
    q = _grid_values(estimate, grid, "estimated")
    return grid.integrate((q - p) ** 2)


@dataclass(frozen=True)
class StudyConfig:
    example_id: int = 1
    params: dict = field(default_factory=dict)
    sample_sizes: tuple = (50, 100, 500, 1000)
    replicates: int = 200
    variants: tuple = VARIANTS
    n_theta: int = 100
    n_x: int = 100
    x_range: tuple = None
    master_seed: int = 0
    workers: int = None
    # parametric circular marginal; None picks the example's own family
    # (circular uniform for example 1, von Mises otherwise)
    circular_family: str = None

    def __post_init__(self):
        if self.example_id not in (1, 2, 3, 4):
            raise DomainError(f"example_id must be 1..4, got {self.example_id!r}")
        if int(self.replicates) < 1:
            raise DomainError("replicates must be >= 1")
        if not self.sample_sizes or any(int(n) < 10 for n in self.sample_sizes):
            raise DomainError("sample_sizes must be non-empty with every n >= 10")
        variants = tuple(str(v).upper() for v in self.variants)
        bad = [v for v in variants if v not in VARIANTS]
        if bad or not variants:
            raise DomainError(f"unknown variant(s) {bad}; choose from {VARIANTS}")
        object.__setattr__(self, "variants", variants)
        family = self.circular_family
        if family is None:
            family = "uniform" if self.example_id == 1 else "vonmises"
        if family not in CIRCULAR_FAMILIES:
            raise DomainError(f"circular_family must be one of {CIRCULAR_FAMILIES}, got {family!r}")
        object.__setattr__(self, "circular_family", family)
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        if int(self.master_seed) < 0:
            raise DomainError("master_seed must be >= 0")


@dataclass
class StudyReport:
    config: StudyConfig
    grid: CylinderGrid
    ise: dict  # (variant, n) -> array over replicates, NaN where the fit failed
    seeds: list
    generator: str = GENERATOR_ID
    runtime: dict = field(default_factory=dict)

    def mise(self, variant, n):
        trace = self.ise[(variant, n)]
        return float(np.mean(trace[np.isfinite(trace)]))

    def median_ise(self, variant, n):
        trace = self.ise[(variant, n)]
        return float(np.median(trace[np.isfinite(trace)]))

    def failures(self, variant, n):
        return int(np.sum(~np.isfinite(self.ise[(variant, n)])))

    def table(self):
        return {key: self.mise(*key) for key in self.ise}


def relative_efficiency(report, baseline_variant="JWP"):
    """``MISE(baseline) / MISE(variant)`` per (variant, n)."""
    base = str(baseline_variant).upper()
    if base not in report.config.variants:
        raise DomainError(f"baseline variant {base} is not in the report")
    return {(v, n): report.mise(base, n) / report.mise(v, n) for (v, n) in report.ise}


def _replicate(args):
    """One replicate at one sample size: ISE per variant (NaN on failure)."""
    config, grid, truth_values, n, seed = args
    truth = make_example_density(config.example_id, **config.params)
    sample = simulate(truth, n, seed)
    options = FitOptions(circular_family=config.circular_family)
    out = []
    for variant in config.variants:
        try:
            model = fit_joint(sample, variant, options)
            out.append(ise(model, truth, grid, truth_values))
        except CylcopError as exc:
            log.warning("replicate seed=%d n=%d %s failed: %s", seed, n, variant, exc)
            out.append(math.nan)
    return out


def _worker_count(config):
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get(WORKERS_ENV, "").strip()
    return max(1, int(env)) if env else 1


def run_study(config):
    """Run the Monte Carlo study described by ``config``."""
    start = time.perf_counter()
    truth = make_example_density(config.example_id, **config.params)
    x_range = config.x_range if config.x_range is not None else default_x_range(truth)
    grid = CylinderGrid(config.n_theta, config.n_x, x_range)
    truth_values = _grid_values(truth, grid, "true")
    seeds = [int(config.master_seed) ^ r for r in range(int(config.replicates))]
    jobs = [(config, grid, truth_values, n, seed) for n in config.sample_sizes for seed in seeds]
    workers = _worker_count(config)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        results = [_replicate(job) for job in jobs]
    traces = {}
    r = len(seeds)
    for k, n in enumerate(config.sample_sizes):
        block = np.array(results[k * r:(k + 1) * r], dtype=float).reshape(r, len(config.variants))
        for j, variant in enumerate(config.variants):
            traces[(variant, n)] = block[:, j]
    report = StudyReport(config, grid, traces, seeds,
                         runtime={"seconds": time.perf_counter() - start, "workers": workers})
    for (variant, n), trace in traces.items():
        failed = report.failures(variant, n)
        if failed >= MAX_FAILURE_FRACTION * r:
            raise StudyAbortedError(f"{variant} at n={n}: {failed} of {r} replicates failed")
    return report


def _fmt(x):
    return "" if x is None or not math.isfinite(x) else repr(float(x))


def write_trace_csv(report, path):
    """One row per variant x n x replicate."""
    cfg = report.config
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["example_id", "variant", "n", "replicate", "ise", "seed"])
        for variant in cfg.variants:
            for n in cfg.sample_sizes:
                for r, (val, seed) in enumerate(zip(report.ise[(variant, n)], report.seeds)):
                    w.writerow([cfg.example_id, variant, n, r, _fmt(val), seed])


def write_summary_csv(report, path, baseline="JWP"):
    """One row per variant x n; ``rel_eff`` is empty without the baseline."""
    cfg = report.config
    eff = relative_efficiency(report, baseline) if baseline.upper() in cfg.variants else {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "n", "mise", "rel_eff"])
        for variant in cfg.variants:
            for n in cfg.sample_sizes:
                w.writerow([variant, n, _fmt(report.mise(variant, n)), _fmt(eff.get((variant, n)))])
