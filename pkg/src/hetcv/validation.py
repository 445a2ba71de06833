"""Acceptance checks shared by ``hetcv validate`` and the test suite.

Each check returns a :class:`CheckResult`; a check passes only if both its
numerical condition and its runtime budget are met.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats
from scipy import special as sp

from . import analytic as an
from . import montecarlo as mc
from . import specfun, voter
from .laplace import invert_gaver_stehfest


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    runtime: float
    budget: float
    rows: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} ({self.runtime:.3g}s / budget {self.budget:g}s)"


def _timed(number, name, budget, fn):
    t0 = time.perf_counter()
    ok, detail, rows = fn()
    dt = time.perf_counter() - t0
    return CheckResult(number, name, bool(ok) and dt < budget, detail, dt, budget, rows)


def cv_params(lam=0.0, beta=1.0, alpha=0.5, upsilon=1.0, tau=0.1):
    return an.ModelParams.from_upsilon(upsilon, tau, lam=lam, beta=beta, alpha=alpha)


# --------------------------------------------------------------------- 1


def check_support() -> CheckResult:
    def run():
        rows = []
        for beta, want in ((0.5, 1.19), (1.5, 0.85)):
            p = cv_params(lam=0.25, beta=beta)
            t0 = time.perf_counter()
            lo, hi = an.support_interval(p, 1.0)
            el = time.perf_counter() - t0
            rows.append((beta, lo, hi, el))
        ok = all(abs(hi - w) <= 0.01 and abs(lo + w) <= 0.01 and el < 1e-3 for (b, lo, hi, el), w in zip(rows, (1.19, 0.85)))
        detail = ", ".join(f"beta={b}: +-{hi:.4f}" for b, _, hi, _ in rows)
        return ok, detail, rows

    return _timed(1, "support endpoints", 1.0, run)


# --------------------------------------------------------------------- 2


def _classical_cv(y, t, ups, tau):
    # independent transcription with unscaled Bessel functions
    L = math.sqrt(ups**2 * t**2 - y**2)
    z = L / (2 * tau * ups)
    return 0.5 * math.exp(-t / (2 * tau)) / (2 * tau * ups) * (sp.i0(z) + ups * t / L * sp.i1(z))


def check_cv_reduction() -> CheckResult:
    def run():
        p = cv_params()
        worst_rel, worst_atom, worst_norm = 0.0, 0.0, 0.0
        for t in (0.5, 1.0, 2.0):
            lo, hi = an.support_interval(p, t)
            xs = np.linspace(-0.99 * hi, 0.99 * hi, 201)
            res = an.pdf_cv_lambda0(p, xs, t)
            ref = np.array([_classical_cv(abs(x), t, 1.0, 0.1) for x in xs])
            worst_rel = max(worst_rel, float(np.max(np.abs(res.density - ref) / ref)))
            w = math.exp(-t / 0.2) / 2
            worst_atom = max(worst_atom, max(abs(a - w) for _, a in res.atoms))
            assert [x for x, _ in res.atoms] == [lo, hi]
            worst_norm = max(worst_norm, abs(an.total_mass(p, t) - 1))
        ok = worst_rel < 1e-10 and worst_atom == 0.0 and worst_norm < 1e-6
        return ok, f"max rel density err {worst_rel:.1e}, atom err {worst_atom:.1e}, |mass-1| {worst_norm:.1e}", []

    return _timed(2, "CV reduction", 1.0, run)


# --------------------------------------------------------------------- 3

LAMBDA0_CASES = ((0, 0.5), (0.5, 0.5), (1, 0.5), (0, 1.5), (0.5, 1.5), (1, 1.5), (0, 1.9), (1, 1.9))


def laplace_consistency_cases():
    out = [("lambda=0", cv_params(beta=b, alpha=a)) for a, b in LAMBDA0_CASES]
    out += [("nu=1/2, lambda>0", cv_params(lam=0.25, beta=b)) for b in (0.5, 1.5, 2.0)]
    out += [("nu=3/2, lambda>0", cv_params(lam=0.25, beta=3.0, alpha=1.0))]
    return out


def check_laplace_consistency(n_points: int = 20, tol: float = 2e-3) -> CheckResult:
    def run():
        rows = []
        for label, p in laplace_consistency_cases():
            worst = 0.0
            for t in (0.5, 1.0, 2.0):
                _, hi = an.support_interval(p, t)
                # interior points only: 5% away from the origin and the front
                xs = np.linspace(0.05 * hi, 0.95 * hi, n_points)
                closed = an.pdf_cv(p, xs, t).density
                num = np.array([invert_gaver_stehfest(an.laplace_image(p, x), t) for x in xs])
                worst = max(worst, float(np.max(np.abs(closed - num))))
            rows.append((label, p.alpha, p.beta, p.lam, worst))
        ok = all(r[-1] < tol for r in rows)
        return ok, f"{len(rows)} regimes, worst abs diff {max(r[-1] for r in rows):.2e}", rows

    return _timed(3, "Laplace consistency", 30.0, run)


# --------------------------------------------------------------------- 4


def check_normalization(tol: float = 1e-4) -> CheckResult:
    def run():
        rows = []
        for a in (0.0, 0.5, 1.0):
            for b in (0.5, 1.0, 1.5, 1.9):
                p = cv_params(beta=b, alpha=a)
                for t in (0.5, 1.0):
                    rows.append((a, b, 0.0, t, an.pdf_cv_lambda0(p, [0.5], t).front, an.total_mass(p, t)))
        for b in (0.5, 1.5):
            p = cv_params(lam=0.25, beta=b)
            rows.append((0.5, b, 0.25, 1.0, "atom", an.total_mass(p, 1.0)))
        p = cv_params(lam=0.25, beta=3.0, alpha=1.0)
        rows.append((1.0, 3.0, 0.25, 1.0, "atom", an.total_mass(p, 1.0)))
        worst = max(abs(r[-1] - 1) for r in rows)
        n_fp = sum(r[4] == "hypersingular" for r in rows)
        return worst < tol, f"{len(rows)} cases, max |mass-1| {worst:.1e} ({n_fp} via finite part)", rows

    return _timed(4, "normalization", 30.0, run)


# --------------------------------------------------------------------- 5

CM_CASES = ((0.5, 2.0, 0.5), (0.0, 0.5, 0.25), (1.0, 1.5, 0.3), (1.0, 3.0, 0.25), (0.5, 0.5, 1.0), (0.0, 1.9, 0.0), (1.0, 2.5, 0.5), (0.5, 1.0, 0.0))


def sine_control(s):
    return (1.5 + math.sin(3 * s)) / s


def check_complete_monotonicity() -> CheckResult:
    def run():
        s_grid = np.geomspace(0.2, 20, 12)
        rows = []
        for a, b, lam in CM_CASES:
            p = cv_params(lam=lam, beta=b, alpha=a)
            for x in (0.1, 0.5, 1.0):
                rows.append((a, b, lam, x, p.nu, an.cm_check(p, x, s_grid, 4)))
        control = an.is_completely_monotone(sine_control, s_grid, 4)
        canonical = an.is_completely_monotone(lambda s: 1 / s, s_grid, 6)
        ok = all(r[-1] for r in rows) and not control and canonical
        return ok, f"{sum(r[-1] for r in rows)}/{len(rows)} CM, control rejected={not control}", rows

    return _timed(5, "complete monotonicity", 5.0, run)


# --------------------------------------------------------------------- 6

ODE_SETS = ((0.5, 2.0, 0.5), (0.25, 0.5, 0.0), (1.0, 1.5, 1.0), (0.5, 2.5, 1.0), (0.5, 1.0, 0.5), (0.25, 1.9, 0.0))


def check_ode_residual() -> CheckResult:
    def run():
        X = np.geomspace(0.05, 2, 5)
        S = np.geomspace(0.05, 5, 5)
        rows = []
        for lam, b, a in ODE_SETS:
            p = an.ModelParams(lam=lam, beta=b, B=1.0, tau=0.1, alpha=a)
            r = max(an.ode_residual(p, x, s) for x in X for s in S)
            c = max(an.ode_residual(p, x, s, nu_shift=0.1) for x in X for s in S)
            rows.append((lam, b, a, p.nu, r, c))
        ok = all(r < 1e-6 and c > 1e-2 for *_, r, c in rows)
        return ok, f"max residual {max(r[4] for r in rows):.1e}, min control {min(r[5] for r in rows):.1e}", rows

    return _timed(6, "ODE residual", 5.0, run)


# --------------------------------------------------------------------- 7


def check_msd_crossover() -> CheckResult:
    def run():
        rows = []
        for b in (0.5, 1.0, 1.5):
            for a in (0.0, 0.5, 1.0):
                p = cv_params(beta=b, alpha=a)
                if not p.lambda0_ok:
                    continue
                c = an.msd_cv(p, [1.0])
                T = 1e4 * p.tau
                amp = an.moments_lambda0(p, 1, T) / an.msd_hd(p, T)
                rows.append((b, a, c.exponent_short, c.exponent_long, amp))
        ok = all(abs(s - 2 * b) <= 0.05 and abs(l - b) <= 0.05 and abs(m - 1) <= 0.01 for b, _, s, l, m in rows)
        detail = "; ".join(f"beta={b}: {s:.3f}/{l:.3f}" for b, a, s, l, _ in rows if a == 0.5)
        return ok, detail + f"; amplitude ratios within {max(abs(r[-1] - 1) for r in rows):.1e}", rows

    return _timed(7, "MSD crossover", 5.0, run)


# --------------------------------------------------------------------- 8


def check_telegrapher_mc(n_traj: int = 10**6, seed: int = 20240601) -> CheckResult:
    def run():
        p = cv_params()
        cfg = mc.SimConfig(p, dt=0.01, t_end=1.0, n_traj=n_traj, seed=seed)
        e = mc.simulate_telegrapher(cfg, times=[0.0, 1.0])
        x = e.positions[:, -1]
        front = e.at_front[:, -1]
        lo, hi = an.support_interval(p, 1.0)
        outside = int(np.sum((x < lo) | (x > hi)))
        edges = np.linspace(-0.9, 0.9, 51)
        obs, _ = np.histogram(x[~front], edges)
        expected = np.array(
            [n_traj * integrate.quad(lambda y: an.cv_density(y, 1.0, 1.0, 0.1), l, r)[0] for l, r in zip(edges[:-1], edges[1:])]
        )
        chi2 = float(np.sum((obs - expected) ** 2 / expected))
        pval = float(stats.chi2.sf(chi2, len(obs)))
        front_mass = float(front.mean())
        ok = pval > 0.01 and outside == 0
        return ok, f"chi2={chi2:.1f} (50 bins) p={pval:.3f}, outside={outside}, front mass {front_mass:.5f} vs {math.exp(-5):.5f}", []

    return _timed(8, "telegrapher Monte Carlo", 120.0, run)


# --------------------------------------------------------------------- 9


def check_hd_msd(n_traj: int = 10**5, seed: int = 7) -> CheckResult:
    def run():
        rows = []
        for b in (0.5, 1.5):
            p = an.ModelParams(beta=b, B=1.0, alpha=0.5)
            cfg = mc.SimConfig(p, dt=0.01, t_end=10.0, n_traj=n_traj, seed=seed, regularization=1e-4, record_every=50)
            e = mc.simulate_hd(cfg)
            ts = e.times[e.times >= 1.0 - 1e-12]
            curve = mc.estimate_msd(e, ts)
            ratio = curve.msd / an.msd_hd(p, ts)
            rows.append((b, float(ratio.min()), float(ratio.max())))
        ok = all(lo >= 0.95 and hi <= 1.05 for _, lo, hi in rows)
        return ok, "; ".join(f"beta={b}: ratio in [{lo:.4f}, {hi:.4f}]" for b, lo, hi in rows), rows

    return _timed(9, "heterogeneous-diffusion MSD", 300.0, run)


# --------------------------------------------------------------------- 10


def check_ergodicity_breaking(n_traj: int = 10**4, seed: int = 11, dt: float = 0.05) -> CheckResult:
    def run():
        rows = []
        for b, want, tol in ((0.5, 0.10, 0.02), (1.0, 1.00, 0.05)):
            p = an.ModelParams(beta=b, B=1.0, alpha=0.5)
            e = mc.simulate_hd(mc.SimConfig(p, dt=dt, t_end=100.0, n_traj=n_traj, seed=seed))
            eb = mc.estimate_eb(e, 1.0)
            rows.append((b, eb, want, tol))
        ok = all(abs(eb - want) <= tol for _, eb, want, tol in rows)
        return ok, "; ".join(f"beta={b}: EB={eb:.3f} (target {w}+-{t})" for b, eb, w, t in rows), rows

    return _timed(10, "ergodicity breaking", 300.0, run)


# --------------------------------------------------------------------- 11


def check_voter(n_rep: int = 3000, seed: int = 5) -> CheckResult:
    def run():
        worst = 0.0
        for A in (0.0, 0.3, 1.0):
            p = voter.VoterParams(50, A)
            n = np.arange(51)
            pp, pm = voter.rates(p, n)
            qp, qm = voter.rates_from_fp(lambda x: voter.drift_diffusion(p, x)[1], lambda x: voter.drift_diffusion(p, x)[0], 50, n / 50)
            worst = max(worst, float(np.max(np.abs(qp - pp))), float(np.max(np.abs(qm - pm))))
        p = voter.VoterParams(1000, 0.1)
        # independent replicas sampled after ten relaxation times 1/A
        agent = voter.voter_endpoints(p, 500, 100.0, n_rep, seed=seed) / p.N
        _, lang = voter.simulate_voter_langevin(p, 0.5, 0.01, 100.0, seed=seed + 1, n_rep=n_rep)
        edges = np.linspace(0, 1, 41)
        ca, _ = np.histogram(agent, edges)
        cl, _ = np.histogram(lang[:, -1], edges)
        keep = (ca + cl) > 0
        pval = float(stats.chi2_contingency(np.array([ca[keep], cl[keep]]))[1])
        ok = worst <= 1e-12 and pval > 0.01
        return ok, f"round-trip max err {worst:.1e}; stationary chi2 p={pval:.3f}", []

    return _timed(11, "voter round-trip", 120.0, run)


# --------------------------------------------------------------------- 12

PRABHAKAR_BATTERY = ((1.0, 4.0, 1.5), (1.0, 3.0, 1.0), (1.0, 2.5, 0.5), (0.75, 1.5, 1.0), (0.5, 1.25, 1.5), (0.6, 1.0, 1.0))


def check_prabhakar(tol: float = 1e-5) -> CheckResult:
    def run():
        rows = []
        for a, b, c in PRABHAKAR_BATTERY:
            for kappa in (0.5, 1.0, 2.0):
                img = lambda s, a=a, b=b, c=c, k=kappa: s ** (a * c - b) / (s**a + k) ** c
                for t in np.geomspace(0.1, 10, 9):
                    ref = specfun.prabhakar_kernel((a, b, c), kappa, t)
                    rel = abs(invert_gaver_stehfest(img, t) - ref) / abs(ref)
                    rows.append((a, b, c, kappa, t, rel))
        worst = max(r[-1] for r in rows)
        return worst < tol, f"{len(rows)} points, worst rel err {worst:.1e}", rows

    return _timed(12, "Prabhakar pair", 5.0, run)


CHECKS: dict[int, Callable[[], CheckResult]] = {
    1: check_support,
    2: check_cv_reduction,
    3: check_laplace_consistency,
    4: check_normalization,
    5: check_complete_monotonicity,
    6: check_ode_residual,
    7: check_msd_crossover,
    8: check_telegrapher_mc,
    9: check_hd_msd,
    10: check_ergodicity_breaking,
    11: check_voter,
    12: check_prabhakar,
}
FAST = (1, 2, 3, 4, 5, 6, 7, 12)


def run_suite(numbers=None):
    numbers = sorted(CHECKS) if numbers is None else numbers
    return [CHECKS[n]() for n in numbers]
