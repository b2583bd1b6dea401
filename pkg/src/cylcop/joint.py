"""Joint circular-linear densities: the four simulation examples and the
five estimation variants.

A joint density is ``p(theta, x) = c(Psi(theta), F(x)) phi(theta) f(x)``
where ``Psi``/``phi`` is the circular marginal, ``F``/``f`` the linear one
and ``c`` a circular-linear copula density.

Variants
--------
JWP   von Mises + normal ML marginals, von Mises ML joining density.
JWSP  ML marginals, circular kernel joining density.
JWNP  kernel marginals, circular kernel joining density.
CSP   ML marginals, kernel copula.
CNP   kernel marginals, kernel copula.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .circular import TWO_PI, VonMisesParams, vm_fit_ml, wrap_angle
from .copulas import (
    BandwidthMatrix,
    Independence,
    JWLinkCopula,
    QSCopula,
    kernel_copula_fit,
    reflected_frank,
)
from .errors import DomainError, FitError, TiedDataError
from .linear import NormalParams, normal_fit_ml
from .smoothing import ckde_fit, lkde_fit

__all__ = [
    "CIRCULAR_FAMILIES",
    "VARIANTS",
    "CylindricalSample",
    "FitOptions",
    "JointDensityModel",
    "example_defaults",
    "fit_joint",
    "joint_eval",
    "joint_eval_grid",
    "jw_density",
    "make_example_density",
    "pseudo_observations",
]

VARIANTS = ("JWP", "JWSP", "JWNP", "CSP", "CNP")
CIRCULAR_FAMILIES = ("vonmises", "uniform")
_PARAMETRIC_MARGINALS = {"JWP", "JWSP", "CSP"}
_PREP_HINT = "run data prep with tie-breaking perturbation (cylcop prep --perturb)"


@dataclass(frozen=True, eq=False)
class CylindricalSample:
    """Paired angles (wrapped to [0, 2 pi)) and real values."""

    theta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float).ravel()
        if theta.shape != x.shape:
            raise DomainError("theta and x must have the same length")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(x))):
            raise DomainError("sample contains non-finite values")
        theta = wrap_angle(theta)
        theta.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "x", x)

    def __len__(self):
        return self.theta.size


def _as_sample(sample):
    if isinstance(sample, CylindricalSample):
        return sample
    arr = np.asarray(sample, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("expected a CylindricalSample or an (n, 2) array of (theta, x)")
    return CylindricalSample(arr[:, 0], arr[:, 1])


@dataclass(frozen=True, eq=False)
class JointDensityModel:
    """Copula composition of a circular and a linear marginal model."""

    circular: object
    linear: object
    copula: object
    variant: str = "analytic"
    info: dict = field(default_factory=dict)

    def density(self, theta, x):
        theta, x = np.broadcast_arrays(np.asarray(theta, float), np.asarray(x, float))
        t = wrap_angle(theta)
        u = np.asarray(self.circular.cdf(t))
        v = np.asarray(self.linear.cdf(x))
        c = np.asarray(self.copula.density(u, v))
        out = c * self.circular.density(t) * self.linear.density(x)
        return out if np.ndim(out) else float(out)

    def density_grid(self, theta, x):
        """Matrix of densities, rows following ``theta`` and columns ``x``."""
        t = wrap_angle(np.asarray(theta, float).ravel())
        x = np.asarray(x, float).ravel()
        u = np.asarray(self.circular.cdf(t), float)
        v = np.asarray(self.linear.cdf(x), float)
        c = self.copula.density_grid(u, v)
        phi = np.asarray(self.circular.density(t), float)
        f = np.asarray(self.linear.density(x), float)
        return c * phi[:, None] * f[None, :]

    def with_copula(self, copula):
        return JointDensityModel(self.circular, self.linear, copula, self.variant, dict(self.info))


def joint_eval(model, theta, x):
    return model.density(theta, x)


def joint_eval_grid(model, theta_grid, x_grid):
    return model.density_grid(theta_grid, x_grid)


def jw_density(theta, x, joining, circ_marg, lin_marg, sign="minus"):
    """Johnson-Wehrly density ``2 pi g(2 pi (Psi(theta) -/+ F(x))) phi(theta) f(x)``."""
    return JointDensityModel(circ_marg, lin_marg, JWLinkCopula(joining, sign)).density(theta, x)


# --------------------------------------------------------------------------
# the four simulation examples

_EXAMPLES = {
    1: {"mu": math.pi, "kappa": 2.0},
    2: {"mu": math.pi, "kappa": 5.0, "mu_marg": math.pi / 2, "kappa_marg": 2.0},
    3: {"alpha": 1.0 / TWO_PI, "mu_marg": math.pi / 2, "kappa_marg": 0.5},
    4: {"alpha": 10.0, "mu_marg": math.pi / 2, "kappa_marg": 0.5},
}


def example_defaults(example_id):
    if example_id not in _EXAMPLES:
        raise DomainError(f"example id must be one of 1..4, got {example_id!r}")
    return dict(_EXAMPLES[example_id])


def make_example_density(example_id, **params):
    """Analytic joint density of simulation example 1-4.

    Keyword overrides: ``mu``, ``kappa`` (joining density, examples 1-2),
    ``alpha`` (copula, examples 3-4), ``mu_marg``, ``kappa_marg`` (von Mises
    circular marginal, examples 2-4). The linear marginal is N(0, 1).
    """
    p = example_defaults(example_id)
    unknown = set(params) - set(p)
    if unknown:
        raise DomainError(f"unknown parameter(s) for example {example_id}: {sorted(unknown)}")
    p.update({k: float(v) for k, v in params.items()})
    linear = NormalParams(0.0, 1.0)
    if example_id == 1:
        circular = VonMisesParams(0.0, 0.0)
    else:
        circular = VonMisesParams(p["mu_marg"], p["kappa_marg"])
    if example_id in (1, 2):
        copula = JWLinkCopula(VonMisesParams(p["mu"], p["kappa"]), "minus")
    elif example_id == 3:
        copula = QSCopula(p["alpha"])
    else:
        copula = reflected_frank(p["alpha"])
    return JointDensityModel(circular, linear, copula, "analytic", {"example": example_id, **p})


# --------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class FitOptions:
    """Bandwidth overrides; ``None`` means select from the data.

    nu          circular marginal kernel concentration (JWNP, CNP)
    h           linear marginal kernel bandwidth (JWNP, CNP)
    joining_nu  joining density kernel concentration (JWSP, JWNP)
    copula_bandwidth  BandwidthMatrix or (diag, off) (CSP, CNP)
    sign        J&W link sign for the artificial sample
    circular_family   parametric circular marginal (JWP, JWSP, CSP):
                ``vonmises`` (ML fit) or ``uniform`` (von Mises with kappa
                fixed at 0, no free parameters)
    """

    nu: float = None
    h: float = None
    joining_nu: float = None
    copula_bandwidth: object = None
    sign: str = "minus"
    circular_family: str = "vonmises"

    def __post_init__(self):
        if self.circular_family not in CIRCULAR_FAMILIES:
            raise DomainError(f"circular_family must be one of {CIRCULAR_FAMILIES}, got {self.circular_family!r}")
        if self.sign not in ("minus", "plus"):
            raise DomainError(f"sign must be 'minus' or 'plus', got {self.sign!r}")


def pseudo_observations(circular, linear, sample):
    """``(Psi(theta_i), F(x_i))`` clamped into the unit square."""
    u = np.clip(np.asarray(circular.cdf(sample.theta), float), 0.0, 1.0)
    v = np.clip(np.asarray(linear.cdf(sample.x), float), 0.0, 1.0)
    return np.column_stack([u, v])


def _needs_selection(variant, opts):
    if variant in ("JWNP", "CNP") and (opts.nu is None or opts.h is None):
        return True
    if variant in ("JWSP", "JWNP") and opts.joining_nu is None:
        return True
    return variant in ("CSP", "CNP") and opts.copula_bandwidth is None


def _check_ties(sample, variant):
    for name, col in (("theta", sample.theta), ("x", sample.x)):
        if np.unique(col).size < col.size:
            raise TiedDataError(f"{variant}: exact ties in {name} make bandwidth selection unreliable; {_PREP_HINT}")


def fit_joint(sample, variant, options=None):
    """Fit one of the five estimation variants to a cylindrical sample."""
    sample = _as_sample(sample)
    variant = str(variant).upper()
    if variant not in VARIANTS:
        raise DomainError(f"variant must be one of {VARIANTS}, got {variant!r}")
    opts = options or FitOptions()
    n = len(sample)
    if n < 10:
        raise FitError(f"{variant}: need at least 10 observations, got {n}")
    if _needs_selection(variant, opts):
        _check_ties(sample, variant)
    try:
        if variant in _PARAMETRIC_MARGINALS:
            if opts.circular_family == "uniform":
                circular = VonMisesParams(0.0, 0.0)
            else:
                circular = vm_fit_ml(sample.theta)
            linear = normal_fit_ml(sample.x)
        else:
            circular = ckde_fit(sample.theta, opts.nu)
            linear = lkde_fit(sample.x, opts.h)
        if variant.startswith("JW"):
            u = np.asarray(circular.cdf(sample.theta), float)
            v = np.asarray(linear.cdf(sample.x), float)
            sgn = -1.0 if opts.sign == "minus" else 1.0
            xi = np.mod(TWO_PI * (u + sgn * v), TWO_PI)
            joining = vm_fit_ml(xi) if variant == "JWP" else ckde_fit(xi, opts.joining_nu)
            copula = JWLinkCopula(joining, opts.sign)
        else:
            bw = opts.copula_bandwidth
            if bw is not None and not isinstance(bw, BandwidthMatrix):
                bw = BandwidthMatrix(*bw)
            copula = kernel_copula_fit(pseudo_observations(circular, linear, sample), bw)
    except FitError as exc:
        raise type(exc)(f"{variant}: {exc}") from exc
    return JointDensityModel(circular, linear, copula, variant, _summary(circular, linear, copula))


def _summary(circular, linear, copula):
    info = {}
    if isinstance(circular, VonMisesParams):
        info.update(circ_mu=circular.mu, circ_kappa=circular.kappa)
    else:
        info["nu"] = circular.nu
    if isinstance(linear, NormalParams):
        info.update(lin_mean=linear.mean, lin_sd=linear.sd)
    else:
        info["h"] = linear.h
    if isinstance(copula, JWLinkCopula):
        g = copula.joining
        if isinstance(g, VonMisesParams):
            info.update(joining_mu=g.mu, joining_kappa=g.kappa)
        else:
            info["joining_nu"] = g.nu
    elif isinstance(copula, Independence):
        pass
    else:
        info.update(copula_diag=copula.bandwidth.diag, copula_off=copula.bandwidth.off)
    return info
