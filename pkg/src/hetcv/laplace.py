"""Numerical inverse Laplace transform on the real axis (Gaver-Stehfest).

Only real, positive values of the transform variable are ever requested, which
is what makes the method usable with real-order Macdonald functions.

Images with a known arrival time (a transform of the form ``exp(-d s) G(s)``)
may declare it as ``delay``; the inversion is then carried out on ``G`` at
``t - d``. A delta at the origin of ``G`` contributes nothing to a Gaver-Stehfest
sum because the weights add up to zero, so wave-front atoms do not pollute the
result.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence

import mpmath
import numpy as np

from .errors import ConvergenceError, DomainError

log = logging.getLogger(__name__)

DEFAULT_TERMS = 16
DIAGNOSTIC_THRESHOLD = 1e-4

__all__ = [
    "LaplaceImage",
    "InversionResult",
    "stehfest_weights",
    "invert_gaver_stehfest",
    "invert_on_grid",
    "DEFAULT_TERMS",
    "DIAGNOSTIC_THRESHOLD",
]


@dataclass(frozen=True)
class LaplaceImage:
    """A Laplace-space function sampled on the positive real axis.

    Parameters
    ----------
    eval : callable
        ``s -> F(s)`` for real ``s >= domain_floor``.
    domain_floor : float
        Smallest admissible ``s``.
    delay : float
        Known arrival time ``d``; ``f(t) = 0`` for ``t < d``.
    delayed_eval : callable, optional
        ``s -> exp(d s) F(s)`` computed without overflow. If omitted and
        ``delay > 0`` the product is formed directly.
    """

    eval: Callable[[float], float]
    domain_floor: float = 0.0
    delay: float = 0.0
    delayed_eval: Optional[Callable[[float], float]] = None

    def shifted(self) -> Callable[[float], float]:
        if self.delay <= 0.0:
            return self.eval
        if self.delayed_eval is not None:
            return self.delayed_eval
        d = self.delay
        return lambda s: math.exp(d * s) * self.eval(s)


@lru_cache(maxsize=None)
def _weights_exact(n: int) -> tuple:
    half = n // 2
    out = []
    for k in range(1, n + 1):
        acc = Fraction(0)
        for j in range((k + 1) // 2, min(k, half) + 1):
            num = j**half * math.factorial(2 * j)
            den = (
                math.factorial(half - j)
                * math.factorial(j)
                * math.factorial(j - 1)
                * math.factorial(k - j)
                * math.factorial(2 * j - k)
            )
            acc += Fraction(num, den)
        out.append((-1) ** (k + half) * acc)
    return tuple(out)


def stehfest_weights(n: int) -> np.ndarray:
    """Stehfest coefficients ``V_1..V_n`` as floats (exact rationals rounded once)."""
    _check_terms(n, max_terms=None)
    return np.array([float(v) for v in _weights_exact(n)])


def _check_terms(n, max_terms=20):
    if n % 2 or n < 2:
        raise DomainError(f"n_terms must be an even integer >= 2, got {n}")
    if max_terms is not None and not 8 <= n <= max_terms:
        raise DomainError(f"n_terms must lie in [8, {max_terms}] in double precision, got {n}")


def _as_image(F) -> LaplaceImage:
    return F if isinstance(F, LaplaceImage) else LaplaceImage(F)


def _gs_sum(fn, t, n, floor):
    ln2t = math.log(2.0) / t
    if ln2t < floor:
        raise DomainError(f"smallest abscissa {ln2t:g} below image domain floor {floor:g}")
    w = stehfest_weights(n)
    vals = np.array([fn((k + 1) * ln2t) for k in range(n)], dtype=float)
    terms = w * vals
    total = math.fsum(terms) * ln2t
    if not math.isfinite(total):
        raise ConvergenceError(f"non-finite Gaver-Stehfest sum at t={t:g}", partial=total)
    return total


def invert_gaver_stehfest(F, t: float, n_terms: int = DEFAULT_TERMS) -> float:
    """Gaver-Stehfest estimate of ``f(t)`` from its Laplace image ``F``.

    ``F`` may be a plain callable or a :class:`LaplaceImage`.
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    _check_terms(n_terms)
    img = _as_image(F)
    tt = t - img.delay
    if tt <= 0.0:
        return 0.0
    return _gs_sum(img.shifted(), tt, n_terms, img.domain_floor)


@dataclass
class InversionResult:
    times: np.ndarray
    values: np.ndarray
    diagnostic: np.ndarray
    threshold: float = DIAGNOSTIC_THRESHOLD

    @property
    def flagged(self) -> np.ndarray:
        return self.diagnostic > self.threshold

    def __iter__(self):
        return iter(self.values)


def invert_on_grid(
    F,
    times: Sequence[float],
    n_terms: int = DEFAULT_TERMS,
    threshold: float = DIAGNOSTIC_THRESHOLD,
) -> InversionResult:
    """Invert on a strictly increasing time grid.

    The diagnostic at each point is ``|f_n - f_{n-2}|``; points above
    ``threshold`` raise a :class:`RuntimeWarning` (typical near jumps).
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0):
        raise DomainError("times must be a strictly increasing 1-d sequence")
    img = _as_image(F)
    vals = np.array([invert_gaver_stehfest(img, t, n_terms) for t in times])
    coarse = np.array([invert_gaver_stehfest(img, t, n_terms - 2) for t in times])
    diag = np.abs(vals - coarse)
    res = InversionResult(times, vals, diag, threshold)
    if np.any(res.flagged):
        bad = times[res.flagged]
        warnings.warn(
            f"Gaver-Stehfest unstable at t={bad.tolist()} (diagnostic > {threshold:g}); "
            "the signal is probably discontinuous there",
            RuntimeWarning,
            stacklevel=2,
        )
    return res


def invert_gaver_stehfest_mp(fn, t, n_terms=32, dps=None):
    """Extended-precision Gaver-Stehfest used internally by :mod:`hetcv.specfun`.

    ``fn`` must accept and return :mod:`mpmath` numbers.
    """
    dps = dps or max(30, int(1.1 * n_terms) + 10)
    with mpmath.workdps(dps):
        t = mpmath.mpf(t)
        ln2t = mpmath.log(2) / t
        acc = mpmath.mpf(0)
        for k, v in enumerate(_weights_exact(n_terms), start=1):
            acc += mpmath.mpf(v.numerator) / v.denominator * fn(k * ln2t)
        return acc * ln2t
