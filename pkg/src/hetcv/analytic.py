"""Closed-form densities, moments and correlation functions for heterogeneous
diffusion and heterogeneous Cattaneo-Vernotte (finite-speed) transport with
diffusivity ``D(x) = B (lam + |x|)^(2 - 2/beta)``.

Conventions
-----------
* ``alpha`` is the stochastic interpretation: 0 Hanggi-Klimontovich,
  1/2 Stratonovich, 1 Ito.
* ``upsilon = sqrt(B/tau)`` is the front speed in the transformed coordinate
  ``y = beta [(lam + |x|)^(1/beta) - lam^(1/beta)]``.
* Wave-front delta components are returned as explicit atoms, never smeared.

Front structure of the ``lam = 0`` solution depends on ``nu``:

``nu == 1/2``
    a delta of weight ``exp(-t/(2 tau))/2`` at each front;
``1/2 < nu < 1``
    no atom; the density has an integrable ``(x_f - |x|)^(nu - 3/2)`` spike;
``nu < 1/2``
    the continuous part is non-integrable at the front and the solution is a
    distribution whose mass is recovered as a Hadamard finite part. Such
    results carry ``front == "hypersingular"`` and are not measures.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy import special as sp

from . import specfun
from .errors import ConvergenceError, DomainError
from .laplace import LaplaceImage, invert_gaver_stehfest

FORMS = ("HK", "Stratonovich", "Ito")
_FORM_ALIASES = {
    "hk": "HK",
    "hanggi": "HK",
    "s": "Stratonovich",
    "stratonovich": "Stratonovich",
    "i": "Ito",
    "ito": "Ito",
}
_HALF_TOL = 1e-12


def canonical_form(form: str) -> str:
    try:
        return _FORM_ALIASES[form.lower()]
    except KeyError:
        raise DomainError(f"unknown interpretation {form!r}; expected one of {FORMS}") from None


def interpretation_factor(form: str, alpha: float) -> float:
    """``A(alpha)`` in the chosen form; the fictitious drift is ``A(alpha) D'(x)``."""
    form = canonical_form(form)
    if form == "HK":
        return -alpha
    if form == "Stratonovich":
        return 0.5 - alpha
    return 1.0 - alpha


@dataclass(frozen=True)
class ModelParams:
    """Model parameters shared by every evaluator.

    ``lam`` is the cusp offset, ``beta`` the heterogeneity exponent, ``B`` the
    diffusivity scale, ``tau`` the relaxation time (0 means the diffusion
    limit) and ``alpha`` the interpretation.
    """

    lam: float = 0.0
    beta: float = 1.0
    B: float = 1.0
    tau: float = 0.0
    alpha: float = 0.5

    def __post_init__(self):
        if not self.lam >= 0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        if not self.beta > 0:
            raise DomainError(f"beta must be > 0, got {self.beta}")
        if not self.B > 0:
            raise DomainError(f"B must be > 0, got {self.B}")
        if not self.tau >= 0:
            raise DomainError(f"tau must be >= 0, got {self.tau}")
        if not 0 <= self.alpha <= 1:
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}")

    @classmethod
    def from_upsilon(cls, upsilon: float, tau: float, **kw) -> "ModelParams":
        return cls(B=upsilon**2 * tau, tau=tau, **kw)

    @property
    def upsilon(self) -> float:
        if self.tau <= 0:
            raise DomainError("upsilon = sqrt(B/tau) needs tau > 0")
        return math.sqrt(self.B / self.tau)

    @property
    def nu(self) -> float:
        return (1 - 2 * self.alpha) * (1 - self.beta) / 2 + 0.5

    @property
    def a(self) -> float:
        return 0.5 + (1 + self.alpha) * (1 - self.beta) / self.beta

    @property
    def valid_cmf(self) -> bool:
        return 0 < self.nu <= 1.5

    @property
    def lambda0_ok(self) -> bool:
        return self.nu < 1

    @property
    def nu_is_half(self) -> bool:
        return abs(self.nu - 0.5) < _HALF_TOL

    def replace(self, **kw) -> "ModelParams":
        d = dict(lam=self.lam, beta=self.beta, B=self.B, tau=self.tau, alpha=self.alpha)
        d.update(kw)
        return ModelParams(**d)


@dataclass
class PdfResult:
    """Density on a grid plus point atoms at wave fronts."""

    grid: np.ndarray
    density: np.ndarray
    atoms: list = field(default_factory=list)
    support: tuple = (-math.inf, math.inf)
    front: str = "none"
    singular_origin: bool = False
    numerical: bool = False

    @property
    def atom_mass(self) -> float:
        return float(sum(w for _, w in self.atoms))

    def trapezoid_mass(self) -> float:
        d = np.where(np.isfinite(self.density), self.density, 0.0)
        return float(np.trapezoid(d, self.grid)) + self.atom_mass

    def moment(self, k: int) -> float:
        d = np.where(np.isfinite(self.density), self.density, 0.0)
        return float(np.trapezoid(d * self.grid**k, self.grid)) + float(
            sum(w * x**k for x, w in self.atoms)
        )

    def to_dict(self) -> dict:
        return {
            "support": list(self.support),
            "atoms": [{"x": x, "weight": w} for x, w in self.atoms],
            "front": self.front,
            "singular_origin": self.singular_origin,
            "numerical": self.numerical,
        }


@dataclass
class MsdCurve:
    times: np.ndarray
    msd: np.ndarray
    exponent_short: float = math.nan
    exponent_long: float = math.nan
    stderr: np.ndarray | None = None
    tamsd: np.ndarray | None = None


# ---------------------------------------------------------------- diffusivity


def diffusivity(p: ModelParams, x):
    """``B (lam + |x|)^(2 - 2/beta)``; ``inf`` where it diverges (lam=0, x=0, beta<1)."""
    u = p.lam + np.abs(np.asarray(x, dtype=float))
    e = 2.0 - 2.0 / p.beta
    with np.errstate(divide="ignore"):
        out = p.B * np.where(u == 0, 0.0 if e > 0 else (1.0 if e == 0 else np.inf), u**e)
    return float(out) if np.ndim(out) == 0 else out


def diffusivity_derivative(p: ModelParams, x):
    x = np.asarray(x, dtype=float)
    u = p.lam + np.abs(x)
    e = 1.0 - 2.0 / p.beta
    if np.any((u == 0) & (e < 0)):
        raise DomainError("D'(x) is singular at x=0 for lambda=0 and beta<2")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = p.B * (2.0 - 2.0 / p.beta) * np.sign(x) * np.where(u == 0, 0.0, u**e)
    return float(out) if np.ndim(out) == 0 else out


def fictitious_drift(p: ModelParams, form: str, x):
    return interpretation_factor(form, p.alpha) * diffusivity_derivative(p, x)


def transformed_coordinate(p: ModelParams, x):
    """``y = beta [(lam + |x|)^(1/beta) - lam^(1/beta)]``, nonnegative."""
    u = p.lam + np.abs(np.asarray(x, dtype=float))
    return p.beta * (u ** (1 / p.beta) - p.lam ** (1 / p.beta))


def position_from_transformed(p: ModelParams, y):
    """Inverse of :func:`transformed_coordinate`, returning ``|x|``."""
    y = np.abs(np.asarray(y, dtype=float))
    return (y / p.beta + p.lam ** (1 / p.beta)) ** p.beta - p.lam


def arrival_time(p: ModelParams, x) -> float:
    return float(transformed_coordinate(p, x)) / p.upsilon


def support_interval(p: ModelParams, t: float) -> tuple:
    h = (p.upsilon * t / p.beta + p.lam ** (1 / p.beta)) ** p.beta - p.lam
    return (-h, h)


def default_grid(p: ModelParams, t: float, n: int = 400) -> np.ndarray:
    """Symmetric cell-centred grid over the support; never contains 0 or the fronts."""
    _, h = support_interval(p, t)
    n += n % 2
    edges = np.linspace(-h, h, n + 1)
    return 0.5 * (edges[1:] + edges[:-1])


# ------------------------------------------------------ heterogeneous diffusion


def _gauss(z, t, B):
    return np.exp(-(z**2) / (4 * B * t)) / np.sqrt(4 * np.pi * B * t)


def pdf_hd(p: ModelParams, x, t: float):
    """Heterogeneous-diffusion density (``tau -> 0``, ``lam = 0``)."""
    if p.lam != 0:
        raise DomainError("pdf_hd is the lambda=0 closed form")
    if not p.lambda0_ok:
        raise DomainError(f"pdf_hd requires nu < 1, got nu={p.nu}")
    if not t > 0:
        raise DomainError("t must be positive")
    x = np.abs(np.asarray(x, dtype=float))
    nu, beta = p.nu, p.beta
    e = 2 * p.alpha * (1 - beta) / beta
    with np.errstate(divide="ignore"):
        power = np.where(x == 0, 0.0 if e > 0 else (1.0 if e == 0 else np.inf), x**e)
    pref = math.sqrt(math.pi) / math.gamma(1 - nu) * (beta**2 / (4 * p.B * t)) ** (0.5 - nu)
    out = pref * power * _gauss(beta * x ** (1 / beta), t, p.B)
    return float(out) if np.ndim(out) == 0 else out


def pdf_hd_result(p: ModelParams, grid, t: float) -> PdfResult:
    grid = np.asarray(grid, dtype=float)
    e = 2 * p.alpha * (1 - p.beta) / p.beta
    return PdfResult(grid, pdf_hd(p, grid, t), singular_origin=e < 0)


def msd_hd(p: ModelParams, t):
    if p.lam != 0 or not p.lambda0_ok:
        raise DomainError("msd_hd requires lambda=0 and nu < 1")
    nu, beta = p.nu, p.beta
    c = (2 / beta) ** (2 * beta) * math.gamma(1 + beta - nu) / math.gamma(1 - nu)
    return c * (p.B * np.asarray(t, dtype=float)) ** beta


def autocorrelation_hd(p: ModelParams, t1: float, t2: float) -> float:
    """``<x(t1) x(t2)>`` for Stratonovich heterogeneous diffusion, ``0 < t1 < t2``.

    Normalized so that ``t2 -> t1`` recovers :func:`msd_hd` (for ``beta = 1``
    it is the Brownian covariance ``2 B t1``).
    """
    if not 0 < t1 < t2:
        raise DomainError("need 0 < t1 < t2")
    if p.alpha != 0.5 or p.lam != 0:
        raise DomainError("autocorrelation_hd is the alpha=1/2, lambda=0 result")
    b = p.beta
    pref = (
        2 ** (b + 1)
        * math.gamma(1 + b)
        * math.gamma(1 + b / 2)
        / (math.sqrt(math.pi) * b ** (2 * b) * math.gamma((1 + b) / 2))
    )
    f = specfun.hyp2f1((1 - b) / 2, 1 + b / 2, 1.5, -t1 / (t2 - t1))
    return pref * (p.B * t1) ** ((1 + b) / 2) * (p.B * (t2 - t1)) ** ((b - 1) / 2) * f


def tamsd_hd(p: ModelParams, lag: float, horizon: float) -> float:
    """Leading-order ensemble mean of the time-averaged MSD, ``lag << horizon``."""
    if not 0 < lag <= horizon / 10:
        raise DomainError("tamsd_hd needs 0 < lag <= horizon/10")
    return float(msd_hd(p, lag)) * (lag / horizon) ** (1 - p.beta)


def eb_ratio_leading(beta: float, lag: float, horizon: float) -> float:
    """Leading-order ``<TA-MSD>/MSD(lag)`` for Stratonovich heterogeneous diffusion from the origin.

    Linearizing ``x = f(z)`` around Brownian ``z`` gives
    ``beta/(2 beta - 1) (lag/horizon)^(1 - beta)``; the prefactor equals 1 only
    at ``beta = 1``. For ``beta <= 1/2`` the time average picks up a
    logarithmic origin contribution and no power-law form exists.
    """
    if not beta > 0.5:
        raise DomainError("leading-order EB ratio needs beta > 1/2")
    if not 0 < lag <= horizon / 10:
        raise DomainError("need 0 < lag <= horizon/10")
    return beta / (2 * beta - 1) * (lag / horizon) ** (1 - beta)


# ------------------------------------------------------------ Laplace space


def _log_pdf_cv_hat(p: ModelParams, x: float, s: float, delay: float = 0.0) -> float:
    ups, beta, nu = p.upsilon, p.beta, p.nu
    q = math.sqrt(s * s + s / p.tau)
    s_minus_q = -(s / p.tau) / (s + q)
    ax = abs(x)
    if p.lam > 0:
        zx = beta / ups * (p.lam + ax) ** (1 / beta) * q
        z0 = beta / ups * p.lam ** (1 / beta) * q
        yv = (zx - z0) / q  # arrival time y/upsilon
        out = (
            (nu - 1) / beta * math.log(p.lam)
            - math.log(2 * ups)
            + p.a * math.log(p.lam + ax)
            + math.log((s + 1 / p.tau) / q)
            + math.log(sp.kve(abs(nu), zx))
            - math.log(sp.kve(abs(nu - 1), z0))
        )
        return out - yv * q + delay * s if delay == 0 else out + yv * s_minus_q + (delay - yv) * s
    if not p.lambda0_ok:
        raise DomainError("lambda=0 Laplace solution needs nu < 1")
    if ax == 0:
        raise DomainError("lambda=0 Laplace solution is singular at x=0")
    C = beta * ax ** (1 / beta) / ups
    out = (
        (1 - nu) * math.log(beta / (2 * ups))
        + p.a * math.log(ax)
        - math.log(ups)
        - math.lgamma(1 - nu)
        + math.log(s + 1 / p.tau)
        - nu * math.log(q)
        + math.log(sp.kve(abs(nu), C * q))
    )
    return out - C * q if delay == 0 else out + C * s_minus_q + (delay - C) * s


def pdf_cv_hat(p: ModelParams, x: float, s: float) -> float:
    """Laplace transform in time of the heterogeneous CV density at ``x``.

    ``lam > 0`` uses the Macdonald-ratio solution; ``lam = 0`` its small-``lam``
    limit (requires ``nu < 1``).
    """
    if not s > 0:
        raise DomainError("s must be positive")
    if p.tau <= 0:
        raise DomainError("pdf_cv_hat needs tau > 0")
    return math.exp(_log_pdf_cv_hat(p, x, s))


def laplace_image(p: ModelParams, x: float) -> LaplaceImage:
    """:class:`LaplaceImage` of the CV density at ``x`` with its arrival time declared."""
    d = arrival_time(p, x)
    return LaplaceImage(
        eval=lambda s: pdf_cv_hat(p, x, s),
        delay=d,
        delayed_eval=lambda s: math.exp(_log_pdf_cv_hat(p, x, s, delay=d)),
    )


def pdf_cv_numeric(p: ModelParams, grid, t: float, n_terms: int | None = None) -> PdfResult:
    """Time-domain density by numerical Laplace inversion (any lam, nu).

    Front atoms are not resolved; only the continuous part is returned.
    """
    grid = np.asarray(grid, dtype=float)
    lo, hi = support_interval(p, t)
    kw = {} if n_terms is None else {"n_terms": n_terms}
    dens = np.array(
        [invert_gaver_stehfest(laplace_image(p, x), t, **kw) if lo < x < hi else 0.0 for x in grid]
    )
    return PdfResult(grid, dens, support=(lo, hi), numerical=True, front="unresolved")


# --------------------------------------------------------- CV time domain


def cv_density(y, t: float, upsilon: float, tau: float):
    """Continuous part of the classical telegrapher density (zero at and beyond ``|y| >= upsilon t``)."""
    y = np.abs(np.asarray(y, dtype=float))
    L2 = (upsilon * t) ** 2 - y**2
    inside = L2 > 0
    L = np.sqrt(np.where(inside, L2, 1.0))
    z = L / (2 * tau * upsilon)
    damp = np.exp(z - t / (2 * tau))
    # upsilon t / Lambda * I1(z), written through I1(z)/z to survive Lambda -> 0
    with np.errstate(invalid="ignore", divide="ignore"):
        i1z = np.where(z < 1e-8, 0.5 * np.exp(-z), sp.ive(1, z) / np.where(z < 1e-8, 1.0, z))
    bracket = sp.ive(0, z) + t / (2 * tau) * i1z
    out = np.where(inside, 0.5 * damp * bracket / (2 * tau * upsilon), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def cv_front_weight(t: float, tau: float) -> float:
    """Weight of each of the two telegrapher front atoms."""
    return 0.5 * math.exp(-t / (2 * tau))


def cv_expectation(g: Callable[[float], float], t: float, upsilon: float, tau: float) -> float:
    """``E[g(|y|)]`` under the telegrapher density, atoms included."""
    ut = upsilon * t
    body, _ = integrate.quad(lambda y: g(y) * cv_density(y, t, upsilon, tau), 0, ut, limit=200, epsabs=1e-13, epsrel=1e-11)
    return 2 * body + 2 * cv_front_weight(t, tau) * g(ut)


def _require_cv(p):
    if p.tau <= 0:
        raise DomainError("CV evaluators need tau > 0")


def _lambda0_prefactor(p: ModelParams) -> float:
    nu, beta, ups = p.nu, p.beta, p.upsilon
    return (4 * p.tau * ups**2 / beta**2) ** (nu - 0.5) * math.sqrt(math.pi) / (2 * math.gamma(1 - nu))


def _lambda0_front_kernel(p: ModelParams, w, t):
    """``exp(-t/2tau) (Lambda/ups)^(nu-1/2) / (2 tau ups) [I_{nu-1/2} + ups t/Lambda I_{nu-3/2}]``
    as a function of ``w = beta |x|^(1/beta)``."""
    nu, ups, tau = p.nu, p.upsilon, p.tau
    w = np.asarray(w, dtype=float)
    L2 = (ups * t) ** 2 - w**2
    inside = L2 > 0
    L = np.sqrt(np.where(inside, L2, 1.0))
    z = L / (2 * tau * ups)
    damp = np.exp(z - t / (2 * tau))
    if abs(nu - 0.5) < _HALF_TOL:
        with np.errstate(invalid="ignore", divide="ignore"):
            i1z = np.where(z < 1e-8, 0.5 * np.exp(-z), sp.ive(1, z) / np.where(z < 1e-8, 1.0, z))
        bracket = sp.ive(0, z) + t / (2 * tau) * i1z
    else:
        bracket = sp.ive(nu - 0.5, z) + ups * t / L * sp.ive(nu - 1.5, z)
    val = damp * (L / ups) ** (nu - 0.5) / (2 * tau * ups) * bracket
    return np.where(inside, val, 0.0)


def pdf_cv_lambda0_density(p: ModelParams, x, t: float):
    """Continuous part of the ``lam = 0`` heterogeneous CV density."""
    _require_cv(p)
    if p.lam != 0:
        raise DomainError("pdf_cv_lambda0 requires lambda=0")
    if not p.lambda0_ok:
        raise DomainError(f"lambda=0 closed form requires nu < 1, got nu={p.nu}")
    x = np.abs(np.asarray(x, dtype=float))
    beta = p.beta
    e = 2 * p.alpha * (1 / beta - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(x == 0, 0.0 if e > 0 else (1.0 if e == 0 else np.inf), x**e)
        w = beta * x ** (1 / beta)
        out = _lambda0_prefactor(p) * power * _lambda0_front_kernel(p, w, t)
        out = np.where(np.isnan(out), np.inf, out)
    return float(out) if np.ndim(out) == 0 else out


def _front_kind(p: ModelParams) -> str:
    if p.nu_is_half:
        return "atom"
    return "integrable" if p.nu > 0.5 else "hypersingular"


def pdf_cv_lambda0(p: ModelParams, grid, t: float) -> PdfResult:
    """Heterogeneous CV density for ``lam = 0`` and any interpretation with ``nu < 1``."""
    grid = np.asarray(grid, dtype=float)
    dens = pdf_cv_lambda0_density(p, grid, t)
    lo, hi = support_interval(p, t)
    atoms = []
    if p.nu_is_half:
        w = cv_front_weight(t, p.tau)
        atoms = [(lo, w), (hi, w)]
    e = 2 * p.alpha * (1 / p.beta - 1)
    return PdfResult(grid, dens, atoms, (lo, hi), front=_front_kind(p), singular_origin=e < 0)


def pdf_cv_nu_half(p: ModelParams, grid, t: float) -> PdfResult:
    """Stratonovich (``nu = 1/2``) density for ``lam >= 0``: ``(lam+|x|)^(1/beta-1) P_CV(y, t)``."""
    _require_cv(p)
    if not p.nu_is_half:
        raise DomainError("pdf_cv_nu_half requires nu = 1/2 (alpha = 1/2 or beta = 1)")
    grid = np.asarray(grid, dtype=float)
    u = p.lam + np.abs(grid)
    y = transformed_coordinate(p, grid)
    with np.errstate(divide="ignore"):
        jac = np.where(u == 0, np.inf if p.beta > 1 else (1.0 if p.beta == 1 else 0.0), u ** (1 / p.beta - 1))
    dens = np.where(y < p.upsilon * t, jac * cv_density(y, t, p.upsilon, p.tau), 0.0)
    dens = np.nan_to_num(dens, nan=np.inf)
    lo, hi = support_interval(p, t)
    w = cv_front_weight(t, p.tau)
    return PdfResult(
        grid, dens, [(lo, w), (hi, w)], (lo, hi), front="atom", singular_origin=(p.lam == 0 and p.beta > 1)
    )


THREE_HALF_CASES = ((1.0, 3.0), (0.0, 5.0))


def _threehalf_check(p):
    _require_cv(p)
    if (p.alpha, p.beta) not in THREE_HALF_CASES:
        raise DomainError("pdf_cv_nu_threehalf covers (alpha, beta) = (1, 3) or (0, 5)")
    if not p.lam > 0:
        raise DomainError("pdf_cv_nu_threehalf requires lambda > 0")


def _threehalf_coefs(p, u):
    b, a, lam = p.beta, p.a, p.lam
    c1 = lam ** (1 / b) * u ** (a - 1 / (2 * b))
    c2 = lam ** (1 / b) / (2 * b) * u ** (a - 3 / (2 * b))
    return c1, c2


def telegraph_step_integral(y: float, t: float, upsilon: float, tau: float) -> float:
    """Inverse transform of ``exp(-(y/ups) sqrt(s^2+s/tau)) / s`` at ``t`` (continuous in ``t`` after the front)."""
    if y <= 0:
        return 1.0
    t0 = y / upsilon
    if t <= t0:
        return 0.0
    # xi = t0 + u^2 removes the square-root endpoint behaviour
    def integrand(u):
        xi = t0 + u * u
        r = math.sqrt(max(upsilon**2 * xi * xi - y * y, 0.0))
        z = r / (2 * tau * upsilon)
        ratio = 0.5 / (2 * tau * upsilon) if z < 1e-8 else sp.ive(1, z) / r
        return 2 * u * math.exp(z - xi / (2 * tau)) * ratio

    val, err = integrate.quad(integrand, 0.0, math.sqrt(t - t0), limit=200, epsabs=1e-13, epsrel=1e-11)
    if not math.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
        raise ConvergenceError(f"front integral did not converge (err={err:g})", partial=val)
    return math.exp(-y / (2 * tau * upsilon)) + y / (2 * tau) * val


def pdf_cv_nu_threehalf_density(p: ModelParams, x, t: float):
    _threehalf_check(p)
    x = np.abs(np.atleast_1d(np.asarray(x, dtype=float)))
    u = p.lam + x
    y = transformed_coordinate(p, x)
    c1, c2 = _threehalf_coefs(p, u)
    ut = p.upsilon * t
    out = np.zeros_like(x)
    for i, yi in enumerate(y):
        if yi < ut:
            out[i] = c1[i] * cv_density(yi, t, p.upsilon, p.tau) + c2[i] * telegraph_step_integral(
                yi, t, p.upsilon, p.tau
            )
    return out


def pdf_cv_nu_threehalf(p: ModelParams, grid, t: float) -> PdfResult:
    """``nu = 3/2`` closed form for ``lam > 0``: ``(alpha, beta) = (1, 3)`` or ``(0, 5)``.

    The ``(0, 5)`` case reuses the same two-term expression with
    ``beta = 5``; its normalization should be checked with :func:`total_mass`.
    """
    grid = np.asarray(grid, dtype=float)
    dens = pdf_cv_nu_threehalf_density(p, grid, t)
    lo, hi = support_interval(p, t)
    u_f = p.lam + hi
    c1, _ = _threehalf_coefs(p, u_f)
    w = c1 * cv_front_weight(t, p.tau) / u_f ** (1 / p.beta - 1)
    return PdfResult(grid, dens, [(lo, w), (hi, w)], (lo, hi), front="atom")


def pdf_cv(p: ModelParams, grid, t: float) -> PdfResult:
    """Dispatch to the closed form that covers ``p``; fall back to numerical inversion."""
    if p.lam == 0:
        return pdf_cv_lambda0(p, grid, t)
    if p.nu_is_half:
        return pdf_cv_nu_half(p, grid, t)
    if (p.alpha, p.beta) in THREE_HALF_CASES:
        return pdf_cv_nu_threehalf(p, grid, t)
    return pdf_cv_numeric(p, grid, t)


# ---------------------------------------------------------------- mass


def _lambda0_mass_density(p, w, t):
    """Mass density of the lam=0 continuous part in ``w = beta |x|^(1/beta)``, both sides."""
    w = np.asarray(w, dtype=float)
    return 2 * _lambda0_prefactor(p) * (w / p.beta) ** (1 - 2 * p.nu) * _lambda0_front_kernel(p, w, t)


def _lambda0_front_coefficient(p, t):
    """``lim (ups t - w)^(3/2 - nu) * mass density`` at the front (nu != 1/2)."""
    nu, ups, tau = p.nu, p.upsilon, p.tau
    ut = ups * t
    c = 1 / (2 * tau * ups)
    # ups t / Lambda * Lambda^(nu-1/2) ups^(1/2-nu) * (c Lambda/2)^(nu-3/2)/Gamma(nu-1/2), Lambda^2 = (ut-w)(ut+w)
    lead = ut * ups ** (0.5 - nu) * (c / 2) ** (nu - 1.5) / math.gamma(nu - 0.5) * (2 * ut) ** (nu - 1.5)
    return 2 * _lambda0_prefactor(p) * (ut / p.beta) ** (1 - 2 * p.nu) * math.exp(-t / (2 * tau)) / (2 * tau * ups) * lead


def total_mass(p: ModelParams, t: float) -> float:
    """Quadrature of the continuous part plus atom weights over the whole line.

    For ``lam = 0`` and ``nu < 1/2`` the front term is a Hadamard finite part.
    """
    _require_cv(p)
    if p.lam == 0:
        return _lambda0_mass(p, t)
    lo, hi = support_interval(p, t)
    if p.nu_is_half:
        res = pdf_cv_nu_half(p, [hi], t)
        f = lambda x: float(pdf_cv_nu_half(p, [x], t).density[0])
    elif (p.alpha, p.beta) in THREE_HALF_CASES:
        res = pdf_cv_nu_threehalf(p, [hi], t)
        f = lambda x: float(pdf_cv_nu_threehalf_density(p, x, t)[0])
    else:
        raise DomainError("no closed form for this (lambda, nu); use pdf_cv_numeric")
    body, _ = integrate.quad(f, 0, hi, limit=400, epsabs=1e-12, epsrel=1e-10)
    return 2 * body + res.atom_mass


_JACOBI_NODES = 96


def _lambda0_mass(p, t):
    ut = p.upsilon * t
    nu, beta = p.nu, p.beta
    mid = 0.5 * ut
    # origin half: the mass density is w^(1-2nu) times a smooth factor
    smooth0 = lambda w: 2 * _lambda0_prefactor(p) * beta ** (2 * nu - 1) * float(_lambda0_front_kernel(p, w, t))
    left, _ = integrate.quad(smooth0, 0, mid, weight="alg", wvar=(1 - 2 * nu, 0), limit=400)
    f = lambda w: float(_lambda0_mass_density(p, w, t))
    if p.nu_is_half:
        right, _ = integrate.quad(f, mid, ut, limit=400, epsabs=1e-13, epsrel=1e-11)
        return left + right + 2 * cv_front_weight(t, p.tau)
    # front half: f = (ut - w)^(nu - 3/2) h(w) with h analytic up to the front;
    # Gauss-Jacobi nodes never touch the endpoint
    half = 0.5 * (ut - mid)
    h = lambda w: f(w) * (ut - w) ** (1.5 - nu)
    if nu > 0.5:
        xs, ws = sp.roots_jacobi(_JACOBI_NODES, nu - 1.5, 0.0)
        w_nodes = mid + half * (xs + 1)
        return left + half ** (nu - 0.5) * float(np.dot(ws, [h(w) for w in w_nodes]))
    # Hadamard finite part: integrate h - h(front) exactly, the remainder by quadrature
    h_front = _lambda0_front_coefficient(p, t)
    xs, ws = sp.roots_jacobi(_JACOBI_NODES, nu - 0.5, 0.0)
    w_nodes = mid + half * (xs + 1)
    g = np.array([(h(w) - h_front) / (ut - w) for w in w_nodes])
    reg = half ** (nu + 0.5) * float(np.dot(ws, g))
    fp = h_front * (ut - mid) ** (nu - 0.5) / (nu - 0.5)
    return left + reg + fp


# ------------------------------------------------------------- moments


def moments_lambda0(p: ModelParams, m: int, t: float) -> float:
    """Even moment ``<x^(2m)>`` of the ``lam = 0`` CV solution."""
    _require_cv(p)
    if p.lam != 0 or not p.lambda0_ok:
        raise DomainError("moments_lambda0 needs lambda=0 and nu<1")
    if m < 1 or int(m) != m:
        raise DomainError("m must be a positive integer")
    bm = p.beta * m
    if 1 + bm - p.nu <= 0:
        raise DomainError("1 + beta m - nu must be positive")
    c = (
        (2 * p.upsilon / p.beta) ** (2 * bm)
        * math.gamma(1 + bm)
        * math.gamma(1 + bm - p.nu)
        / math.gamma(1 - p.nu)
    )
    return c * t ** (2 * bm) * specfun.mittag_leffler3((1.0, 1 + 2 * bm, bm), -t / p.tau)


def _loglog_slope(f, lo, hi, n=9):
    ts = np.geomspace(lo, hi, n)
    vals = np.array([f(t) for t in ts])
    slope, _ = np.polyfit(np.log(ts), np.log(vals), 1)
    return float(slope)


def msd_cv(p: ModelParams, times: Sequence[float]) -> MsdCurve:
    """MSD of the ``lam = 0`` CV solution with short/long log-log slopes.

    Slopes are least-squares fits over ``[1e-3 tau, 1e-2 tau]`` and ``[1e2 tau, 1e3 tau]``.
    """
    times = np.asarray(times, dtype=float)
    f = lambda t: moments_lambda0(p, 1, t)
    msd = np.array([f(t) for t in times])
    return MsdCurve(
        times,
        msd,
        exponent_short=_loglog_slope(f, 1e-3 * p.tau, 1e-2 * p.tau),
        exponent_long=_loglog_slope(f, 1e2 * p.tau, 1e3 * p.tau),
    )


def msd_lambda(p: ModelParams, t: float) -> float:
    """MSD of the Stratonovich solution with ``lam >= 0`` for ``beta`` in {1/2, 3/2}."""
    _require_cv(p)
    if p.alpha != 0.5 or p.beta not in (0.5, 1.5):
        raise DomainError("msd_lambda covers alpha=1/2 with beta in {1/2, 3/2}")
    ups, tau, lam = p.upsilon, p.tau, p.lam
    E = lambda b, c: specfun.mittag_leffler3((1.0, b, c), -t / tau)
    if p.beta == 0.5:
        closed = 2 * ups * t * E(2, 0.5) + 2 * lam**2
        g = lambda y: math.sqrt(2 * y + lam**2)
    else:
        closed = (
            16 / 9 * (ups * t) ** 3 * E(4, 1.5)
            + 8 * lam ** (2 / 3) / 3 * (ups * t) ** 2 * E(3, 1)
            + 2 * lam ** (4 / 3) * ups * t * E(2, 0.5)
            + 2 * lam**2
        )
        g = lambda y: (2 * y / 3 + lam ** (2 / 3)) ** 1.5
    if lam == 0:
        return closed
    # expectation over the whole line of y, atoms included
    return closed - 2 * lam * cv_expectation(g, t, ups, tau)


# -------------------------------------------------------- validation identities


def _scaled_F(p, X, s, nu):
    b1 = p.beta * math.sqrt(p.tau * s * s + s) / math.sqrt(p.B)
    xi0 = p.lam + X
    z0 = b1 * xi0 ** (1 / p.beta)

    def F(Xp):
        xi = p.lam + Xp
        z = b1 * xi ** (1 / p.beta)
        return xi**p.a * sp.kve(abs(nu), z) * math.exp(-(z - z0))

    return F, b1


def ode_residual(p: ModelParams, X: float, s: float, nu_shift: float = 0.0) -> float:
    """Normalized residual of the radial Bessel-type ODE solved by the Laplace-space profile.

    ``nu_shift`` perturbs the order of the Macdonald function (negative control).
    """
    if not (p.lam > 0 and X > 0 and s > 0):
        raise DomainError("ode_residual needs lambda>0, X>0, s>0")
    F, b1 = _scaled_F(p, X, s, p.nu + nu_shift)
    xi = p.lam + X
    z = b1 * xi ** (1 / p.beta)
    # one step per ~1/20 of the local length scale, kept inside the domain
    h = 0.02 * min(xi, xi * p.beta / (z + p.beta))
    c1 = [1 / 60, -3 / 20, 3 / 4, 0.0, -3 / 4, 3 / 20, -1 / 60]
    c2 = [1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90]
    vals = [F(X + k * h) for k in (3, 2, 1, 0, -1, -2, -3)]
    d1 = sum(c * v for c, v in zip(c1, vals)) / h
    d2 = sum(c * v for c, v in zip(c2, vals)) / h**2
    f0 = vals[3]
    al, be = p.alpha, p.beta
    t1 = d2
    t2 = 2 * (al + 1) * (be - 1) / (be * xi) * d1
    t3 = 2 * al / be**2 * (be - 1) * (be - 2) / xi**2 * f0
    t4 = -(p.tau * s * s + s) / (p.B * xi ** (2 - 2 / be)) * f0
    terms = (t1, t2, t3, t4)
    return abs(sum(terms)) / max(abs(v) for v in terms)


def is_completely_monotone(fn: Callable[[float], float], s_grid, order: int) -> bool:
    """True iff all divided differences of order ``k <= order`` have sign ``(-1)^k``."""
    s = np.asarray(s_grid, dtype=float)
    if len(s) < order + 1 or np.any(np.diff(s) <= 0):
        raise DomainError("s_grid must be increasing with at least order+1 points")
    dd = np.array([fn(v) for v in s], dtype=float)
    if not np.all(dd > 0):
        return False
    for k in range(1, order + 1):
        dd = (dd[1:] - dd[:-1]) / (s[k:] - s[:-k])
        if not np.all((-1) ** k * dd > 0):
            return False
    return True


def cm_check(p: ModelParams, x: float, s_grid, order: int = 4) -> bool:
    """Complete-monotonicity surrogate for ``s -> pdf_cv_hat(p, x, s)``."""
    if not p.valid_cmf:
        raise DomainError(f"cm_check needs 0 < nu <= 3/2, got nu={p.nu}")
    return is_completely_monotone(lambda s: pdf_cv_hat(p, x, s), s_grid, order)
