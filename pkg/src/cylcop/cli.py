"""Command-line front end: ``cylcop {prep,fit,simulate,study}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every output file gets a provenance sidecar (``<output>.prov``) holding
``# key=value`` lines that reconstruct the run.
"""
import argparse
import configparser
import csv
import hashlib
import io
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .circular import TWO_PI, wrap_angle
from .copulas import BandwidthMatrix
from .errors import (
    CapabilityError,
    DataError,
    DomainError,
    FitError,
    IntegrationError,
    StudyAbortedError,
    TiedDataError,
)
from .joint import CIRCULAR_FAMILIES, VARIANTS, CylindricalSample, FitOptions, fit_joint, make_example_density
from .linear import boxcox
from .prep import PerturbationSpec, flag_detection_limit, hourly_average, perturb_circular, perturb_linear
from .simulation import GENERATOR_ID, INVERSION_METHODS, simulate
from .study import WORKERS_ENV, StudyConfig, run_study, write_summary_csv, write_trace_csv

log = logging.getLogger("cylcop")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MAX_BAD_FRACTION = 0.05
_BANDWIDTH_KEYS = ("nu", "h", "joining_nu", "copula_diag", "copula_off")


class UsageError(Exception):
    """Bad flags or configuration values (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x):
    return repr(float(x))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_provenance(path, items):
    """Sidecar of ``# key=value`` lines, in insertion order."""
    with open(path, "w", newline="") as fh:
        for key, value in items.items():
            fh.write(f"# {key}={value}\n")


def read_provenance(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#") and "=" in line:
                key, value = line[1:].strip().split("=", 1)
                out[key.strip()] = value.strip()
    return out


# --------------------------------------------------------------------------
# dataset ingestion


def read_dataset(path, degrees=False, limit=None, need_time=False):
    """Parse a ``timestamp,theta,x`` CSV (timestamp optional).

    Returns ``(timestamps or None, theta, x, report)``. Unusable rows are
    dropped with a warning naming their line numbers; more than 5% bad rows
    raises :class:`DataError`. Empty ``x`` cells take ``limit`` when given.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file (a header with theta and x is required)")
    header = [h.strip().lower() for h in rows[0]]
    missing = [c for c in ("theta", "x") if c not in header]
    if missing:
        raise DataError(f"{path}: header lacks column(s) {missing}")
    if need_time and "timestamp" not in header:
        raise DataError(f"{path}: hourly averaging needs a timestamp column")
    i_t, i_x = header.index("theta"), header.index("x")
    i_s = header.index("timestamp") if "timestamp" in header else None
    stamps, theta, x, bad, filled = [], [], [], [], 0
    for line, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        try:
            t = float(row[i_t])
            cell = row[i_x].strip()
            if cell == "" and limit is not None:
                v, filled = float(limit), filled + 1
            else:
                v = float(cell)
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ValueError("non-finite value")
            s = None
            if i_s is not None:
                s = row[i_s].strip()
                if need_time:
                    s = np.datetime64(s, "s")
        except (ValueError, IndexError) as exc:
            bad.append((line, str(exc)))
            continue
        stamps.append(s)
        theta.append(t)
        x.append(v)
    total = len(theta) + len(bad)
    if bad:
        where = ", ".join(f"line {ln} ({msg})" for ln, msg in bad[:10])
        more = f" and {len(bad) - 10} more" if len(bad) > 10 else ""
        if len(bad) > MAX_BAD_FRACTION * total:
            raise DataError(f"{path}: {len(bad)} of {total} rows unparseable: {where}{more}")
        log.warning("%s: skipped %d unparseable row(s): %s%s", path, len(bad), where, more)
    theta = np.asarray(theta, dtype=float)
    if degrees:
        theta = np.deg2rad(theta)
    theta = np.asarray(wrap_angle(theta), dtype=float).reshape(-1)
    report = {"rows_read": total, "rows_bad": len(bad), "x_filled_with_limit": filled}
    ts = stamps if i_s is not None else None
    if need_time:
        ts = np.asarray(stamps, dtype="datetime64[s]")
    return ts, theta, np.asarray(x, dtype=float), report


def write_dataset(path, theta, x, timestamps=None, flags=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = (["timestamp"] if timestamps is not None else []) + ["theta", "x"]
        w.writerow(header + (["at_limit"] if flags is not None else []))
        for i in range(len(theta)):
            row = [str(timestamps[i])] if timestamps is not None else []
            row += [_fmt(theta[i]), _fmt(x[i])]
            if flags is not None:
                row.append(int(flags[i]))
            w.writerow(row)


# --------------------------------------------------------------------------
# commands


def cmd_prep(args):
    """unit conversion -> hourly -> detection flag -> perturb -> Box-Cox."""
    stamps, theta, x, report = read_dataset(args.input, args.degrees, args.limit, need_time=args.hourly)
    if args.hourly:
        hours, theta_h = hourly_average(stamps, theta, circular=True)
        _, x = hourly_average(stamps, x)
        theta = theta_h
        stamps = [str(h) for h in hours.astype("datetime64[m]")]
    flags = flag_detection_limit(x, args.limit) if args.limit is not None else None
    prov = {"command": "prep", "version": __version__, "input": args.input,
            "input_sha256": _sha256(args.input), "output": args.output,
            "degrees": args.degrees, "hourly": args.hourly, "limit": args.limit}
    prov.update(report)
    seed = None
    if args.perturb:
        seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % (2 ** 63))
        spec = PerturbationSpec(seed=seed)
        rng = np.random.Generator(np.random.PCG64(seed))
        n = len(x)
        # draw order is part of the contract: circular first, then linear
        theta = perturb_circular(theta, spec, rng)
        x = perturb_linear(x, spec, rng)
        prov.update(perturb=True, seed=seed, generator=GENERATOR_ID,
                    d=_fmt(n ** spec.d_exponent), b_factor=spec.b_factor, noise_kappa=spec.noise_kappa)
    else:
        prov.update(perturb=False, seed=args.seed)
    if args.boxcox is not None:
        x = np.atleast_1d(boxcox(x, args.boxcox))
    prov.update(boxcox=args.boxcox, rows_out=len(x),
                at_limit=int(flags.sum()) if flags is not None else "")
    write_dataset(args.output, theta, x, stamps, flags)
    write_provenance(args.output + ".prov", prov)
    log.info("prep: %d rows -> %d rows written to %s", report["rows_read"], len(x), args.output)
    return EXIT_OK


def _parse_grid(text):
    try:
        a, b = text.lower().split("x")
        n_theta, n_x = int(a), int(b)
    except ValueError:
        raise UsageError(f"--grid expects NxM, got {text!r}") from None
    if n_theta < 2 or n_x < 2:
        raise UsageError("--grid dimensions must be >= 2")
    return n_theta, n_x


def _parse_pairs(items, flag):
    out = {}
    for item in items or ():
        for part in item.split(","):
            if not part.strip():
                continue
            key, sep, value = part.partition("=")
            try:
                if not sep:
                    raise ValueError
                out[key.strip()] = float(value)
            except ValueError:
                raise UsageError(f"{flag} expects KEY=VALUE, got {part!r}") from None
    return out


def _fit_options(args):
    bw = _parse_pairs(args.bandwidth, "--bandwidth")
    unknown = sorted(set(bw) - set(_BANDWIDTH_KEYS))
    if unknown:
        raise UsageError(f"unknown --bandwidth key(s) {unknown}; choose from {list(_BANDWIDTH_KEYS)}")
    copula_bw = None
    if "copula_diag" in bw or "copula_off" in bw:
        try:
            copula_bw = BandwidthMatrix(bw["copula_diag"], bw.get("copula_off", 0.0))
        except KeyError:
            raise UsageError("copula_off needs copula_diag") from None
        except DomainError as exc:
            raise UsageError(str(exc)) from None
    try:
        return FitOptions(nu=bw.get("nu"), h=bw.get("h"), joining_nu=bw.get("joining_nu"),
                          copula_bandwidth=copula_bw, sign=args.sign, circular_family=args.circular_family)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def cmd_fit(args):
    n_theta, n_x = _parse_grid(args.grid)
    options = _fit_options(args)
    _, theta, x, _ = read_dataset(args.input, args.degrees)
    start = time.perf_counter()
    model = fit_joint(CylindricalSample(theta, x), args.variant, options)
    if args.x_range:
        lo, hi = _parse_range(args.x_range)
    else:
        pad = 0.25 * float(np.ptp(x)) if x.size else 1.0
        lo, hi = float(x.min()) - pad, float(x.max()) + pad
    t_nodes = TWO_PI * np.arange(n_theta) / n_theta
    x_nodes = np.linspace(lo, hi, n_x)
    dens = np.maximum(model.density_grid(t_nodes, x_nodes), 0.0)
    runtime = time.perf_counter() - start
    if not np.all(np.isfinite(dens)):
        raise IntegrationError("fitted density is not finite on the output grid")
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "x", "density"])
        for i, t in enumerate(t_nodes):
            for j, xv in enumerate(x_nodes):
                w.writerow([_fmt(t), _fmt(xv), _fmt(dens[i, j])])
    summary = {"command": "fit", "version": __version__, "input": args.input,
               "input_sha256": _sha256(args.input), "variant": model.variant, "n": len(theta),
               "degrees": args.degrees, "grid": f"{n_theta}x{n_x}", "x_range": f"{_fmt(lo)},{_fmt(hi)}",
               "sign": options.sign, "circular_family": options.circular_family}
    summary.update({k: _fmt(v) if isinstance(v, float) else v for k, v in model.info.items()})
    summary["runtime_seconds"] = f"{runtime:.3f}"
    write_provenance(args.summary or args.output + ".summary", summary)
    log.info("fit %s on %d rows in %.3f s", model.variant, len(theta), runtime)
    return EXIT_OK


def _parse_range(text):
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"range expects LO,HI, got {text!r}") from None
    if not lo < hi:
        raise UsageError(f"range must be increasing, got {text!r}")
    return lo, hi


def cmd_simulate(args):
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    params = _parse_pairs(args.params, "--params")
    try:
        model = make_example_density(args.example, **params)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    sample = simulate(model, args.n, args.seed, method=args.method)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "x"])
    for t, xv in zip(sample.theta, sample.x):
        w.writerow([_fmt(t), _fmt(xv)])
    if args.output in (None, "-"):
        sys.stdout.write(buf.getvalue())
        return EXIT_OK
    with open(args.output, "w", newline="") as fh:
        fh.write(buf.getvalue())
    prov = {"command": "simulate", "version": __version__, "example": args.example, "n": args.n,
            "seed": args.seed, "method": args.method, "generator": GENERATOR_ID}
    prov.update({k: _fmt(v) if isinstance(v, float) else v for k, v in model.info.items() if k != "example"})
    write_provenance(args.output + ".prov", prov)
    return EXIT_OK


# [study] keys -> converter; [params] holds example parameter overrides
_STUDY_KEYS = {
    "example": int,
    "variants": lambda s: tuple(v.strip().upper() for v in s.split(",") if v.strip()),
    "sample_sizes": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
    "replicates": int,
    "master_seed": int,
    "n_theta": int,
    "n_x": int,
    "x_range": lambda s: tuple(float(v) for v in s.split(",")),
    "circular_family": lambda s: s.strip() or None,
    "workers": int,
}


def load_study_config(path):
    """Read an INI-style study config into a :class:`StudyConfig`."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    for section in parser.sections():
        if section not in ("study", "params"):
            raise UsageError(f"{path}: unknown section [{section}]")
    if not parser.has_section("study"):
        raise UsageError(f"{path}: missing [study] section")
    kwargs = {}
    for key, raw in parser.items("study"):
        if key not in _STUDY_KEYS:
            raise UsageError(f"{path}: unknown key '{key}' in [study]")
        try:
            kwargs["example_id" if key == "example" else key] = _STUDY_KEYS[key](raw)
        except ValueError:
            raise UsageError(f"{path}: invalid value for '{key}': {raw!r}") from None
    params = {}
    if parser.has_section("params"):
        for key, raw in parser.items("params"):
            try:
                params[key] = float(raw)
            except ValueError:
                raise UsageError(f"{path}: invalid value for '{key}': {raw!r}") from None
    kwargs["params"] = params
    try:
        config = StudyConfig(**kwargs)
        make_example_density(config.example_id, **params)
    except DomainError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return config


def cmd_study(args):
    config = load_study_config(args.config)
    if args.workers is not None:
        config = StudyConfig(**{**config.__dict__, "workers": args.workers})
    os.makedirs(args.out_dir, exist_ok=True)
    report = run_study(config)
    trace = os.path.join(args.out_dir, f"{args.prefix}_trace.csv")
    summary = os.path.join(args.out_dir, f"{args.prefix}_summary.csv")
    write_trace_csv(report, trace)
    write_summary_csv(report, summary)
    g = report.grid
    prov = {"command": "study", "version": __version__, "config": args.config,
            "config_sha256": _sha256(args.config), "example": config.example_id,
            "params": ",".join(f"{k}={_fmt(v)}" for k, v in sorted(config.params.items())),
            "variants": ",".join(config.variants),
            "sample_sizes": ",".join(str(n) for n in config.sample_sizes),
            "replicates": config.replicates, "master_seed": config.master_seed,
            "seed_rule": "master_seed XOR replicate", "generator": report.generator,
            "circular_family": config.circular_family,
            "grid": f"{g.n_theta}x{g.n_x}", "x_range": f"{_fmt(g.x_range[0])},{_fmt(g.x_range[1])}"}
    write_provenance(summary + ".prov", prov)
    log.info("study finished in %.1f s with %d worker(s)", report.runtime["seconds"], report.runtime["workers"])
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="cylcop", description="Circular-linear density estimation via copulas.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("prep", help="preprocess a raw CSV (hourly, flag, perturb, Box-Cox)")
    q.add_argument("input")
    q.add_argument("-o", "--output", required=True)
    q.add_argument("--degrees", action="store_true", help="theta column is in degrees")
    q.add_argument("--hourly", action="store_true", help="average within calendar hours")
    q.add_argument("--limit", type=float, help="detection limit: flag values <= L, fill empty x with L")
    q.add_argument("--perturb", action="store_true", help="break ties with random perturbation")
    q.add_argument("--boxcox", type=float, metavar="LAMBDA", help="apply the Box-Cox transform to x")
    q.add_argument("--seed", type=int)
    q.set_defaults(func=cmd_prep)

    q = sub.add_parser("fit", help="fit one estimation variant and export a density grid")
    q.add_argument("input")
    q.add_argument("-o", "--output", required=True, help="grid CSV (theta, x, density)")
    q.add_argument("--variant", required=True, type=str.upper, choices=VARIANTS)
    q.add_argument("--grid", default="100x100", help="NxM points in theta and x (default 100x100)")
    q.add_argument("--x-range", help="LO,HI for the grid's linear axis (default: data range padded 25%%)")
    q.add_argument("--bandwidth", action="append", metavar="KEY=VALUE",
                   help=f"fix a bandwidth instead of selecting it; keys {', '.join(_BANDWIDTH_KEYS)}")
    q.add_argument("--sign", choices=("minus", "plus"), default="minus", help="J&W link sign")
    q.add_argument("--circular-family", choices=CIRCULAR_FAMILIES, default="vonmises",
                   help="parametric circular marginal for JWP, JWSP and CSP")
    q.add_argument("--degrees", action="store_true", help="theta column is in degrees")
    q.add_argument("--summary", help="summary path (default <output>.summary)")
    q.set_defaults(func=cmd_fit)

    q = sub.add_parser("simulate", help="draw a sample from a simulation example")
    q.add_argument("--example", type=int, required=True, choices=(1, 2, 3, 4))
    q.add_argument("--params", action="append", metavar="KEY=VALUE[,KEY=VALUE]")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--method", choices=INVERSION_METHODS, default="auto")
    q.add_argument("-o", "--output", help="CSV path (default stdout)")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("study", help="run a Monte Carlo MISE study from a config file")
    q.add_argument("config")
    q.add_argument("--out-dir", default=".")
    q.add_argument("--prefix", default="study")
    q.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    q.set_defaults(func=cmd_study)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cylcop {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TiedDataError, DataError, DomainError, OSError) as exc:
        print(f"cylcop {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, IntegrationError, StudyAbortedError, CapabilityError, FloatingPointError) as exc:
        print(f"cylcop {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
