"""Mean-field noisy voter model and its diffusion approximation.

Per-capita rates for ``n`` agents in state 1 out of ``N``::

    pi+(n) = (N - n)/N * [A/2 + (1 - A) n/N]
    pi-(n) = n/N * [A/2 + (1 - A) (N - n)/N]

The total event rate is ``N (pi+ + pi-)``, so that with ``x = n/N`` the drift
is ``F = pi+ - pi-`` and the diffusion coefficient ``D = (pi+ + pi-)/N`` of a
Fokker-Planck equation with the ``1/2 d^2/dx^2 (D W)`` convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .montecarlo import block_rng


@dataclass(frozen=True)
class VoterParams:
    N: int
    A: float
    beta: float = 2.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise DomainError("N must be an integer >= 2")
        if not 0 <= self.A <= 1:
            raise DomainError(f"A must lie in [0, 1], got {self.A}")
        if self.beta == 0:
            raise DomainError("beta must be nonzero")

    @property
    def B(self) -> float:
        """Diffusion scale of the transformed variable."""
        return self.beta**2 * (1 - self.A) / (4 * self.N)


@dataclass
class VoterPath:
    times: np.ndarray
    counts: np.ndarray
    absorbed: bool = False
    N: int = 1

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.N


def rates(p: VoterParams, n):
    """``(pi_plus, pi_minus)`` at ``n`` (scalar or array)."""
    n_arr = np.asarray(n)
    if np.any((n_arr < 0) | (n_arr > p.N)):
        raise DomainError(f"n must lie in [0, {p.N}]")
    # integer counts on both sides keep the n -> N - n relabeling exact
    x, y = n_arr / p.N, (p.N - n_arr) / p.N
    plus = y * (p.A / 2 + (1 - p.A) * x)
    minus = x * (p.A / 2 + (1 - p.A) * y)
    if np.ndim(plus) == 0:
        return float(plus), float(minus)
    return plus, minus


def drift_diffusion(p: VoterParams, x):
    """``(F, D)`` of the diffusion approximation at ``x = n/N``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise DomainError("x must lie in [0, 1]")
    F = p.A / 2 * (1 - 2 * x)
    D = p.A / (2 * p.N) + 2 / p.N * (1 - p.A) * x * (1 - x)
    if np.ndim(F) == 0:
        return float(F), float(D)
    return F, D


def rates_from_fp(D_fn, F_fn, N: int, x):
    """Rates ``pi+- = N D/2 +- F/2`` realizing a given drift and diffusion."""
    x_arr = np.asarray(x, dtype=float)
    D = np.asarray(D_fn(x_arr), dtype=float)
    F = np.asarray(F_fn(x_arr), dtype=float)
    plus = N / 2 * D + F / 2
    minus = N / 2 * D - F / 2
    neg = (plus < 0) | (minus < 0)
    if np.any(neg):
        bad = np.atleast_1d(x_arr)[np.atleast_1d(neg)][0] if x_arr.ndim else float(x_arr)
        raise DomainError(f"negative transition rate at x={bad}: need N D(x) >= |F(x)|")
    if np.ndim(plus) == 0:
        return float(plus), float(minus)
    return plus, minus


def heterogeneous_rates(N: int, B: float, lam: float, beta: float, alpha: float, x):
    """Voter rates whose diffusion approximation is heterogeneous diffusion.

    Uses ``D(x) = B (lam + |x|)^(2 - 2/beta)`` and the Ito drift ``(1 - alpha) D'(x)``.
    """
    def D(u):
        return B * (lam + np.abs(u)) ** (2 - 2 / beta)

    def F(u):
        return (1 - alpha) * B * (2 - 2 / beta) * np.sign(u) * (lam + np.abs(u)) ** (1 - 2 / beta)

    return rates_from_fp(D, F, N, x)


def transform_return(x, beta: float):
    """``y = [x/(1-x)]^(beta/2)`` for ``0 < x < 1``."""
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise DomainError("x must lie strictly inside (0, 1)")
    out = (x / (1 - x)) ** (beta / 2)
    return float(out) if np.ndim(out) == 0 else out


def regime_coefficients(p: VoterParams, y, regime: str):
    """Closed-form drift and noise amplitude of the transformed variable in one regime.

    ``regime`` is ``"upper"`` (``n >> N - n``) or ``"lower"`` (``n << N - n``).
    The two regimes are not joined.

    Returns
    -------
    drift, noise : float or ndarray
        ``-A|beta|/2 * y^(1 +- 2/|beta|)`` and ``sqrt(2B) * y^(1 +- 1/|beta|)``.
    """
    if regime not in ("upper", "lower"):
        raise DomainError("regime must be 'upper' or 'lower'")
    sgn = 1.0 if regime == "upper" else -1.0
    b = abs(p.beta)
    y = np.asarray(y, dtype=float)
    drift = -p.A * b / 2 * y ** (1 + sgn * 2 / b)
    noise = math.sqrt(2 * p.B) * y ** (1 + sgn / b)
    return drift, noise


def bessel_force(z, p: VoterParams):
    """``(F(z), V(z))`` with ``F = -A beta^2 / (2 z)`` and ``V = (A beta^2/2) ln z``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("z must be positive")
    c = p.A * p.beta**2 / 2
    F, V = -c / z, c * np.log(z)
    if np.ndim(F) == 0:
        return float(F), float(V)
    return F, V


# --------------------------------------------------------------- simulation


def _check_n0(p, n0):
    if int(n0) != n0 or not 0 <= n0 <= p.N:
        raise DomainError(f"n0 must be an integer in [0, {p.N}]")


def _absorbed(p, n):
    return p.A == 0 and n in (0, p.N)


def simulate_voter(p: VoterParams, n0: int, t_end: float, seed: int = 0, method: str = "gillespie", dt: float | None = None) -> VoterPath:
    """Agent-level path of ``n(t)``.

    ``"gillespie"`` is event driven. ``"discrete"`` updates on a fixed step
    ``dt`` (default: one expected event per step at the largest total rate),
    moving by at most one agent per step.
    """
    _check_n0(p, n0)
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    rng = block_rng(seed, 0)
    N = p.N
    if method == "gillespie":
        times, counts = [0.0], [int(n0)]
        t, n = 0.0, int(n0)
        while True:
            plus, minus = rates(p, n)
            total = N * (plus + minus)
            if total == 0:
                break
            t += rng.exponential(1 / total)
            if t > t_end:
                break
            n += 1 if rng.random() * (plus + minus) < plus else -1
            times.append(t)
            counts.append(n)
        times.append(t_end)
        counts.append(n)
        return VoterPath(np.array(times), np.array(counts), _absorbed(p, n), N)
    if method == "discrete":
        if dt is None:
            dt = 1.0 / (N * (p.A / 2 + (1 - p.A) / 2 + 0.5))
        steps = int(math.ceil(t_end / dt))
        counts = np.empty(steps + 1, dtype=np.int64)
        counts[0] = n = int(n0)
        u = rng.random(steps)
        for i in range(steps):
            plus, minus = rates(p, n)
            pp, pm = N * plus * dt, N * minus * dt
            if pp + pm > 1:
                raise DomainError("dt too large: jump probability exceeds 1")
            if u[i] < pp:
                n += 1
            elif u[i] < pp + pm:
                n -= 1
            counts[i + 1] = n
        return VoterPath(np.arange(steps + 1) * dt, counts, _absorbed(p, n), N)
    raise DomainError(f"unknown method {method!r}")


def voter_endpoints(p: VoterParams, n0: int, t_end: float, n_rep: int, seed: int = 0) -> np.ndarray:
    """Counts at ``t_end`` of ``n_rep`` independent Gillespie replicas (vectorized)."""
    _check_n0(p, n0)
    rng = block_rng(seed, 0)
    n = np.full(n_rep, int(n0))
    t = np.zeros(n_rep)
    live = np.ones(n_rep, bool)
    while live.any():
        idx = np.nonzero(live)[0]
        plus, minus = rates(p, n[idx])
        total = p.N * (plus + minus)
        stuck = total == 0
        wait = rng.exponential(1.0, idx.size) / np.where(stuck, 1.0, total)
        t_new = t[idx] + wait
        done = stuck | (t_new > t_end)
        step = np.where(rng.random(idx.size) * (plus + minus) < plus, 1, -1)
        go = ~done
        n[idx[go]] += step[go]
        t[idx[go]] = t_new[go]
        live[idx[done]] = False
    return n


def simulate_voter_langevin(p: VoterParams, x0, dt: float, t_end: float, seed: int = 0, n_rep: int = 1):
    """Euler-Maruyama paths of ``dx = F dt + sqrt(D dt) xi`` reflected into ``(1/(2N), 1 - 1/(2N))``.

    Returns ``(times, x)`` with ``x`` of shape ``(n_rep, n_steps + 1)``.
    """
    eps = 1 / (2 * p.N)
    if not eps <= x0 <= 1 - eps:
        raise DomainError(f"x0 must lie in [{eps}, {1 - eps}]")
    if not (dt > 0 and t_end > dt):
        raise DomainError("need 0 < dt < t_end")
    steps = int(round(t_end / dt))
    rng = block_rng(seed, 0)
    x = np.full(n_rep, float(x0))
    out = np.empty((n_rep, steps + 1))
    out[:, 0] = x
    sq = math.sqrt(dt)
    for i in range(steps):
        F, D = drift_diffusion(p, x)
        x = x + F * dt + np.sqrt(D) * sq * rng.standard_normal(n_rep)
        x = np.where(x < eps, 2 * eps - x, x)
        x = np.where(x > 1 - eps, 2 * (1 - eps) - x, x)
        x = np.clip(x, eps, 1 - eps)
        out[:, i + 1] = x
    return np.arange(steps + 1) * dt, out


def stationary_histogram(samples, N: int, bins: int = 20):
    """Histogram of fractions ``x`` on ``[0, 1]``; returns ``(edges, counts)``."""
    counts, edges = np.histogram(np.asarray(samples, dtype=float), bins=bins, range=(0, 1))
    return edges, counts
