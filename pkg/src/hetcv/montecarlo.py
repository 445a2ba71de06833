"""Trajectory engines and ensemble estimators.

Two engines are provided:

* :func:`simulate_hd` integrates heterogeneous diffusion with Euler-Maruyama.
  The default ``"lamperti"`` scheme works in the variance-stabilized coordinate
  ``z = sign(x) beta [(lam + |x|)^(1/beta) - lam^(1/beta)] / sqrt(B)``, where the
  noise is additive and the Ito drift is ``(1 - 2 alpha)(1 - 1/beta) sqrt(B) / u``
  with ``u = (lam + |x|)^(1/beta)``. The ``"direct"`` scheme integrates
  ``dx = (1 - alpha) D'(x) dt + sqrt(2 D(x)) dW`` in ``x``.
* :func:`simulate_telegrapher` moves ballistically at speed ``upsilon`` in the
  coordinate ``y`` and flips direction at Poisson times with rate ``1/(2 tau)``.

Randomness is drawn per fixed-size block of trajectories; block ``k`` uses
``SeedSequence(seed, spawn_key=(k,))``. Results therefore do not depend on how
blocks are distributed over workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .analytic import FORMS, ModelParams, PdfResult, MsdCurve, canonical_form, support_interval
from .errors import DomainError

BLOCK_SIZE = 4096
OVERFLOW_GUARD = 1e12
_ALPHA_OF_FORM = {"HK": 0.0, "Stratonovich": 0.5, "Ito": 1.0}


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``interpretation`` fixes ``alpha`` (HK 0, Stratonovich 1/2, Ito 1); when
    ``None`` the model's own ``alpha`` is used. ``regularization`` replaces
    ``lam`` when ``lam == 0`` and the dynamics are singular at the origin.
    ``record_every`` keeps one sample per that many steps.
    """

    model: ModelParams
    dt: float
    t_end: float
    n_traj: int
    seed: int = 0
    interpretation: str | None = None
    regularization: float = 1e-4
    x0: float = 0.0
    record_every: int = 1
    scheme: str = "lamperti"
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise DomainError("dt and t_end must be positive")
        if self.dt > self.t_end / 100 * (1 + 1e-12):
            raise DomainError("dt must not exceed t_end/100")
        if self.n_traj < 1:
            raise DomainError("n_traj must be >= 1")
        if self.regularization < 0:
            raise DomainError("regularization must be >= 0")
        if self.record_every < 1 or self.block_size < 1:
            raise DomainError("record_every and block_size must be >= 1")
        if self.scheme not in ("lamperti", "direct"):
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.interpretation is not None:
            canonical_form(self.interpretation)

    @property
    def alpha(self) -> float:
        if self.interpretation is None:
            return self.model.alpha
        return _ALPHA_OF_FORM[canonical_form(self.interpretation)]

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def effective_model(self, singular: bool) -> ModelParams:
        lam = self.model.lam
        if lam == 0 and singular:
            lam = self.regularization
        return self.model.replace(lam=lam, alpha=self.alpha)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = asdict(self.model)
        return d


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    seed_stream: int


@dataclass
class Ensemble:
    """Paths sampled on a common time grid, shape ``(n_traj, n_times)``.

    ``at_front`` marks telegrapher samples sitting exactly on a wave front
    (no direction change yet); ``flagged`` marks diverged paths.
    """

    times: np.ndarray
    positions: np.ndarray
    seed: int
    config: dict = field(default_factory=dict)
    at_front: np.ndarray | None = None
    flagged: np.ndarray | None = None
    engine: str = "hd"
    model: ModelParams | None = None

    @property
    def n_traj(self) -> int:
        return self.positions.shape[0]

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(self.times, self.positions[i], i)

    def time_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"t={t} is not a sample time of this ensemble")
        return j

    @classmethod
    def from_paths(cls, times, positions, seed: int = 0) -> "Ensemble":
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        return cls(np.asarray(times, dtype=float), positions, seed)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Generator for trajectory block ``block`` derived from the root ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


def _blocks(n, size):
    return [(k, k * size, min(n, (k + 1) * size)) for k in range(math.ceil(n / size))]


def _run_blocks(fn, cfg, workers):
    parts = _blocks(cfg.n_traj, cfg.block_size)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(lambda b: fn(*b), parts))
    else:
        out = [fn(*b) for b in parts]
    return out


# ---------------------------------------------------------- diffusion engine


def _to_z(p: ModelParams, x):
    u = p.lam + np.abs(x)
    return np.sign(x) * p.beta * (u ** (1 / p.beta) - p.lam ** (1 / p.beta)) / math.sqrt(p.B)


def _from_z(p: ModelParams, z):
    r = (math.sqrt(p.B) * np.abs(z) / p.beta + p.lam ** (1 / p.beta)) ** p.beta - p.lam
    return np.sign(z) * r


def euler_maruyama(p: ModelParams, x0, dW: np.ndarray, dt: float, scheme: str = "lamperti", record_every: int = 1):
    """Integrate heterogeneous diffusion driven by given Wiener increments.

    Parameters
    ----------
    p : ModelParams
        ``p.alpha`` selects the interpretation; ``p.lam`` should be positive
        wherever the dynamics are singular at the origin.
    x0 : float or array
        Initial positions, broadcast to ``dW.shape[0]``.
    dW : ndarray, shape (n_paths, n_steps)
        Wiener increments with variance ``dt``.

    Returns
    -------
    positions : ndarray, shape (n_paths, n_steps // record_every + 1)
    diverged : ndarray of bool
    """
    n, steps = dW.shape
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    out = np.empty((n, steps // record_every + 1))
    out[:, 0] = x
    bad = np.zeros(n, dtype=bool)
    beta, lam, B = p.beta, p.lam, p.B
    if scheme == "lamperti":
        z = _to_z(p, x)
        k = (1 - 2 * p.alpha) * (1 - 1 / beta) * math.sqrt(B)
        c0 = lam ** (1 / beta)
        sq2 = math.sqrt(2.0)
        for i in range(steps):
            if k != 0.0:
                with np.errstate(divide="ignore", invalid="ignore"):
                    drift = k * np.sign(z) / (math.sqrt(B) * np.abs(z) / beta + c0)
                z = z + drift * dt + sq2 * dW[:, i]
            else:
                z = z + sq2 * dW[:, i]
            if (i + 1) % record_every == 0:
                out[:, (i + 1) // record_every] = _from_z(p, z)
    elif scheme == "direct":
        e1, e2 = 1 - 2 / beta, 2 - 2 / beta
        for i in range(steps):
            u = lam + np.abs(x)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                D = B * u**e2
                dD = B * e2 * np.sign(x) * u**e1
            x = x + (1 - p.alpha) * dD * dt + np.sqrt(2 * D) * dW[:, i]
            if (i + 1) % record_every == 0:
                out[:, (i + 1) // record_every] = x
    else:
        raise DomainError(f"unknown scheme {scheme!r}")
    bad = ~np.all(np.isfinite(out) & (np.abs(out) < OVERFLOW_GUARD), axis=1)
    out[bad] = np.nan
    return out, bad


def _hd_singular(cfg: SimConfig) -> bool:
    m = cfg.model
    # D(0) = 0 (beta > 1) freezes the origin; D(0) = inf (beta < 1) and the drift blow up
    return m.beta != 1


def simulate_hd(cfg: SimConfig, workers: int = 1) -> Ensemble:
    """Euler-Maruyama ensemble of heterogeneous diffusion (``tau`` is ignored)."""
    p = cfg.effective_model(_hd_singular(cfg))
    steps = cfg.n_steps

    def run(block, lo, hi):
        rng = block_rng(cfg.seed, block)
        dW = rng.standard_normal((hi - lo, steps)) * math.sqrt(cfg.dt)
        return euler_maruyama(p, cfg.x0, dW, cfg.dt, cfg.scheme, cfg.record_every)

    parts = _run_blocks(run, cfg, workers)
    pos = np.concatenate([a for a, _ in parts])
    bad = np.concatenate([b for _, b in parts])
    times = np.arange(pos.shape[1]) * cfg.dt * cfg.record_every
    meta = cfg.to_dict()
    meta["effective_lambda"] = p.lam
    meta["alpha"] = p.alpha
    return Ensemble(times, pos, cfg.seed, meta, None, bad, "hd", p)


# --------------------------------------------------------- telegrapher engine


def telegraph_paths(rng: np.random.Generator, n: int, times: np.ndarray, speed: float, rate: float):
    """Exact ballistic motion with Poisson direction changes.

    Returns ``(y, flips)`` sampled at ``times`` (which must start at 0);
    ``flips`` counts direction changes so far.
    """
    y = np.zeros((n, len(times)))
    flips = np.zeros((n, len(times)), dtype=np.int64)
    pos = np.zeros(n)
    count = np.zeros(n, dtype=np.int64)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    wait = rng.exponential(1 / rate, n)
    for j in range(1, len(times)):
        remaining = np.full(n, times[j] - times[j - 1])
        while True:
            hit = wait < remaining
            if not hit.any():
                break
            idx = np.nonzero(hit)[0]
            pos[idx] += sign[idx] * speed * wait[idx]
            remaining[idx] -= wait[idx]
            sign[idx] = -sign[idx]
            count[idx] += 1
            wait[idx] = rng.exponential(1 / rate, idx.size)
        pos += sign * speed * remaining
        wait -= remaining
        y[:, j] = pos
        flips[:, j] = count
    return y, flips


def simulate_telegrapher(cfg: SimConfig, times=None, workers: int = 1) -> Ensemble:
    """Telegrapher ensemble for the Stratonovich model (``alpha = 1/2``).

    Sample times default to ``0, dt*record_every, ..., t_end``; no time
    discretization error is involved.
    """
    m = cfg.model
    if m.tau <= 0:
        raise DomainError("telegrapher engine needs tau > 0")
    if cfg.alpha != 0.5:
        raise DomainError("telegrapher dynamics exist only in the Stratonovich interpretation")
    if cfg.x0 != 0:
        raise DomainError("telegrapher paths start at the origin")
    p = m.replace(alpha=0.5)
    if times is None:
        step = cfg.dt * cfg.record_every
        times = np.arange(0, int(round(cfg.t_end / step)) + 1) * step
    times = np.asarray(times, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise DomainError("times must start at 0 and increase")
    ups, rate = p.upsilon, 1 / (2 * p.tau)

    def run(block, lo, hi):
        rng = block_rng(cfg.seed, block)
        y, flips = telegraph_paths(rng, hi - lo, times, ups, rate)
        front = flips == 0
        # no flip yet: exactly on the front
        y[front] = np.sign(y[front]) * ups * times[np.nonzero(front)[1]]
        return np.sign(y) * _abs_x(p, y), front

    parts = _run_blocks(run, cfg, workers)
    pos = np.concatenate([a for a, _ in parts])
    front = np.concatenate([b for _, b in parts])
    front[:, 0] = False
    return Ensemble(times, pos, cfg.seed, cfg.to_dict(), front, np.zeros(len(pos), bool), "telegrapher", p)


def _abs_x(p, y):
    return (np.abs(y) / p.beta + p.lam ** (1 / p.beta)) ** p.beta - p.lam


# ---------------------------------------------------------------- estimators


def _valid(e: Ensemble):
    if e.n_traj == 0:
        raise DomainError("empty ensemble")
    ok = np.ones(e.n_traj, bool) if e.flagged is None else ~e.flagged
    if not ok.any():
        raise DomainError("every trajectory diverged")
    return e.positions[ok]


def estimate_msd(e: Ensemble, times=None) -> MsdCurve:
    """Ensemble mean of ``x(t)^2`` with its standard error."""
    pos = _valid(e)
    idx = np.arange(len(e.times)) if times is None else np.array([e.time_index(t) for t in times])
    sq = pos[:, idx] ** 2
    n = sq.shape[0]
    msd = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(len(idx), np.nan)
    return MsdCurve(e.times[idx], msd, stderr=se)


def _lag_steps(times, lag):
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt, rtol=1e-9, atol=0):
        raise DomainError("TA-MSD needs uniformly sampled times")
    k = int(round(lag / dt))
    if k < 1 or abs(k * dt - lag) > 1e-9 * max(lag, 1):
        raise DomainError(f"lag {lag} is not a multiple of the sampling step {dt}")
    horizon = times[-1] - times[0]
    if lag > horizon / 10 * (1 + 1e-12):
        raise DomainError("lag must not exceed horizon/10")
    return k, dt, horizon


def _tamsd_rows(pos, k, dt, horizon):
    d = (pos[:, k:] - pos[:, :-k]) ** 2
    return np.trapezoid(d, dx=dt, axis=1) / (horizon - k * dt)


def estimate_tamsd(traj: Trajectory, lag: float) -> float:
    """Sliding-window time average of squared increments over ``lag`` (trapezoid rule)."""
    k, dt, horizon = _lag_steps(np.asarray(traj.times), lag)
    return float(_tamsd_rows(np.asarray(traj.positions)[None, :], k, dt, horizon)[0])


def estimate_tamsd_ensemble(e: Ensemble, lags) -> np.ndarray:
    pos = _valid(e)
    out = []
    for lag in np.atleast_1d(lags):
        k, dt, horizon = _lag_steps(e.times, lag)
        out.append(_tamsd_rows(pos, k, dt, horizon).mean())
    return np.array(out)


def estimate_eb(e: Ensemble, lag: float, horizon: float | None = None) -> float:
    """Ratio of the mean TA-MSD at ``lag`` to the ensemble MSD at ``lag``."""
    if horizon is not None:
        j = e.time_index(horizon)
        e = Ensemble(e.times[: j + 1], e.positions[:, : j + 1], e.seed, e.config, None, e.flagged)
    pos = _valid(e)
    msd = float(np.mean(pos[:, e.time_index(lag)] ** 2))
    if msd == 0:
        raise DomainError("zero MSD at the lag time")
    return float(estimate_tamsd_ensemble(e, [lag])[0]) / msd


def histogram_pdf(e: Ensemble, t: float, bins: int = 50, range=None) -> PdfResult:
    """Normalized histogram at time ``t`` with front samples counted as atoms.

    Telegrapher ensembles carry an exact front marker; otherwise samples within
    one bin of the support edge are treated as front mass when the ensemble
    knows its support.
    """
    if bins < 10:
        raise DomainError("bins must be >= 10")
    j = e.time_index(t)
    ok = np.ones(e.n_traj, bool) if e.flagged is None else ~e.flagged
    x = e.positions[ok, j]
    n = x.size
    if n == 0:
        raise DomainError("empty ensemble")
    front = np.zeros(n, bool) if e.at_front is None else e.at_front[ok, j]
    support = (-math.inf, math.inf)
    if e.engine == "telegrapher" and e.model is not None:
        support = support_interval(e.model, t)
    if range is None:
        lo, hi = (support if math.isfinite(support[1]) else (x.min(), x.max()))
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
    else:
        lo, hi = range
    width = (hi - lo) / bins
    if e.at_front is None and math.isfinite(support[1]):
        front = np.abs(x) >= support[1] - width
    counts, edges = np.histogram(x[~front], bins=bins, range=(lo, hi))
    centres = 0.5 * (edges[1:] + edges[:-1])
    atoms = []
    if front.any():
        atoms = [(support[0], float(np.sum(x[front] < 0)) / n), (support[1], float(np.sum(x[front] > 0)) / n)]
    return PdfResult(centres, counts / (n * width), atoms, support, front="atom" if atoms else "none")


__all__ = [
    "FORMS",
    "SimConfig",
    "Trajectory",
    "Ensemble",
    "block_rng",
    "euler_maruyama",
    "simulate_hd",
    "simulate_telegrapher",
    "telegraph_paths",
    "estimate_msd",
    "estimate_tamsd",
    "estimate_tamsd_ensemble",
    "estimate_eb",
    "histogram_pdf",
]
