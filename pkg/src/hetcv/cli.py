"""Command line front end: ``hetcv <command> [options]``.

Exit codes: 0 success, 1 domain error (or a failed validation), 2 numerical
convergence failure, 64 usage error, 78 malformed configuration file.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analytic as an
from . import montecarlo as mc
from . import specfun, validation, voter
from .errors import ConfigError, ConvergenceError, DomainError, HetcvError
from .laplace import DEFAULT_TERMS, LaplaceImage, invert_on_grid

EXIT_USAGE = 64

# documented defaults, applied after config file and flags
DEFAULTS = {
    "alpha": 0.5,
    "beta": 1.0,
    "lam": 0.0,
    "B": 1.0,
    "tau": 0.1,
    "model": "cv",
    "t": 1.0,
    "xmin": None,
    "xmax": None,
    "n": 201,
    "tmin": 1e-3,
    "tmax": 10.0,
    "t1": 1.0,
    "t2_min": 1.5,
    "t2_max": 10.0,
    "horizon": 100.0,
    "lag_min": 1.0,
    "lag_max": 10.0,
    "engine": "hd",
    "interpretation": None,
    "dt": 0.01,
    "t_end": 10.0,
    "n_traj": 1000,
    "regularization": 1e-4,
    "record_every": 1,
    "scheme": "lamperti",
    "lags": "1",
    "hist_times": None,
    "bins": 50,
    "save_trajectories": False,
    "N": 100,
    "A": 0.1,
    "n0": None,
    "method": "gillespie",
    "preset": None,
    "x": 0.5,
    "n_terms": DEFAULT_TERMS,
    "times": None,
    "suite": "all",
    "out": None,
    "seed": None,
}

# config keys use the flag spelling; map to argparse dests
_KEY_ALIASES = {"lambda": "lam"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: {message}")


def _model_args(p):
    g = p.add_argument_group("model")
    g.add_argument("--alpha", type=float, help="interpretation in [0, 1] (default 0.5)")
    g.add_argument("--beta", type=float, help="heterogeneity exponent > 0 (default 1)")
    g.add_argument("--lambda", dest="lam", type=float, help="cusp offset >= 0 (default 0)")
    g.add_argument("--B", type=float, help="diffusivity scale > 0 (default 1)")
    g.add_argument("--tau", type=float, help="relaxation time >= 0 (default 0.1)")


def _common(p, out=True, seed=False):
    p.add_argument("--config", type=Path, help="INI file with [model] and command sections")
    if out:
        p.add_argument("--out", type=Path, help="output directory (default: CSV to stdout)")
    if seed:
        p.add_argument("--seed", type=int, help="root seed (default $HETCV_SEED or 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hetcv", description="Heterogeneous diffusion and finite-speed transport toolkit.")
    ap.add_argument("--version", action="version", version=f"hetcv {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("pdf", help="density on a grid")
    _model_args(p)
    p.add_argument("--model", choices=["cv", "hd"])
    p.add_argument("--t", type=float)
    p.add_argument("--xmin", type=float)
    p.add_argument("--xmax", type=float)
    p.add_argument("--n", type=int)
    _common(p)

    p = sub.add_parser("msd", help="mean squared displacement on a log time grid")
    _model_args(p)
    p.add_argument("--model", choices=["cv", "hd"])
    p.add_argument("--tmin", type=float)
    p.add_argument("--tmax", type=float)
    p.add_argument("--n", type=int)
    _common(p)

    p = sub.add_parser("acf", help="two-time autocorrelation of heterogeneous diffusion")
    _model_args(p)
    p.add_argument("--t1", type=float)
    p.add_argument("--t2-min", dest="t2_min", type=float)
    p.add_argument("--t2-max", dest="t2_max", type=float)
    p.add_argument("--n", type=int)
    _common(p)

    p = sub.add_parser("tamsd", help="leading-order time-averaged MSD")
    _model_args(p)
    p.add_argument("--horizon", type=float)
    p.add_argument("--lag-min", dest="lag_min", type=float)
    p.add_argument("--lag-max", dest="lag_max", type=float)
    p.add_argument("--n", type=int)
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo ensemble")
    _model_args(p)
    p.add_argument("--engine", choices=["hd", "telegrapher"])
    p.add_argument("--interpretation", choices=["HK", "Stratonovich", "Ito"])
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--n-traj", dest="n_traj", type=int)
    p.add_argument("--regularization", type=float)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--scheme", choices=["lamperti", "direct"])
    p.add_argument("--lags", help="comma-separated TA-MSD lags")
    p.add_argument("--hist-times", dest="hist_times", help="comma-separated histogram times (default t_end)")
    p.add_argument("--bins", type=int)
    p.add_argument("--save-trajectories", dest="save_trajectories", action="store_const", const=True)
    _common(p, seed=True)

    p = sub.add_parser("simulate-voter", help="noisy voter model path")
    p.add_argument("--N", type=int)
    p.add_argument("--A", type=float)
    p.add_argument("--n0", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--method", choices=["gillespie", "discrete", "langevin"])
    p.add_argument("--dt", type=float)
    p.add_argument("--bins", type=int)
    _common(p, seed=True)

    p = sub.add_parser("invert-laplace", help="Gaver-Stehfest inversion of a preset or model image")
    _model_args(p)
    p.add_argument("--preset", choices=sorted(PRESETS), help="known image; omit to invert the model density at --x")
    p.add_argument("--x", type=float)
    p.add_argument("--tmin", type=float)
    p.add_argument("--tmax", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--times", help="comma-separated times (overrides the grid)")
    p.add_argument("--n-terms", dest="n_terms", type=int)
    _common(p)

    p = sub.add_parser("validate", help="run the acceptance checks")
    p.add_argument("--suite", help="all, fast, or comma-separated check numbers")
    _common(p, out=False)

    p = sub.add_parser("specfun", help="evaluate a special function (debugging aid)")
    sp_sub = p.add_subparsers(dest="action", parser_class=_Parser)
    e = sp_sub.add_parser("eval")
    e.add_argument("--fn", required=True, choices=sorted(SPECFUNS))
    for name in ("nu", "z", "a", "b", "c", "x", "r", "kappa", "t"):
        e.add_argument(f"--{name}", type=float)
    return ap


PRESETS = {
    "exp": (lambda s: 1 / (s + 1), "1/(s+1)"),
    "ramp": (lambda s: 1 / s**2, "1/s^2"),
    "const": (lambda s: 1 / s, "1/s"),
    "step": (lambda s: math.exp(-s) / s, "exp(-s)/s"),
    "prabhakar": (lambda s: s**-2.5 / (s + 2) ** 1.5, "s^-2.5/(s+2)^1.5"),
}

SPECFUNS = {
    "gamma": (("x",), lambda a: specfun.gamma(a["x"])),
    "pochhammer": (("c", "r"), lambda a: specfun.pochhammer(a["c"], int(a["r"]))),
    "ml": (("a", "b", "c", "x"), lambda a: specfun.mittag_leffler3((a["a"], a["b"], a["c"]), a["x"])),
    "prabhakar": (("a", "b", "c", "kappa", "t"), lambda a: specfun.prabhakar_kernel((a["a"], a["b"], a["c"]), a["kappa"], a["t"])),
    "besseli": (("nu", "z"), lambda a: specfun.bessel_i(a["nu"], a["z"])),
    "besselk": (("nu", "z"), lambda a: specfun.bessel_k(a["nu"], a["z"])),
    "hyp2f1": (("a", "b", "c", "z"), lambda a: specfun.hyp2f1(a["a"], a["b"], a["c"], a["z"])),
    "erfc": (("x",), lambda a: specfun.erfc(a["x"])),
}


# ------------------------------------------------------------------ config


def load_config(path, command: str, parser: argparse.ArgumentParser) -> dict:
    """Read an INI file; sections ``[model]`` and ``[<command>]`` are accepted.

    Returns ``{dest: converted value}``. Unknown sections or keys raise
    :class:`ConfigError` with the offending line number.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    types = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    lines = text.splitlines()

    def lineno(section, key):
        cur = None
        for i, raw in enumerate(lines, 1):
            s = raw.strip()
            if s.startswith("[") and s.endswith("]"):
                cur = s[1:-1].strip()
            elif cur == section and s.split("=")[0].split(":")[0].strip() == key:
                return i
        return None

    out = {}
    for section in cp.sections():
        if section not in ("model", command):
            raise ConfigError(f"unknown section [{section}]", lineno(section, None) or _section_line(lines, section))
        for key, raw in cp.items(section):
            dest = _KEY_ALIASES.get(key, key.replace("-", "_"))
            if dest not in types:
                raise ConfigError(f"unknown key {key!r} in [{section}]", lineno(section, key))
            act = types[dest]
            try:
                if act.const is True:
                    val = cp.getboolean(section, key)
                elif act.type is not None:
                    val = act.type(raw)
                else:
                    val = raw
            except ValueError:
                raise ConfigError(f"bad value {raw!r} for {key}", lineno(section, key)) from None
            if act.choices is not None and val not in act.choices:
                raise ConfigError(f"{key} must be one of {list(act.choices)}", lineno(section, key))
            out[dest] = val
    return out


def _section_line(lines, section):
    for i, raw in enumerate(lines, 1):
        if raw.strip() == f"[{section}]":
            return i
    return None


def _resolve(args, parser, command):
    cli = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config", "action")}
    from_file = load_config(args.config, command, parser) if getattr(args, "config", None) else {}
    dests = {a.dest for a in parser._actions}
    resolved = {k: v for k, v in DEFAULTS.items() if k in dests}
    resolved.update(from_file)
    resolved.update(cli)
    if "seed" in dests and resolved.get("seed") is None:
        env = os.environ.get("HETCV_SEED")
        try:
            resolved["seed"] = int(env) if env else 0
        except ValueError:
            raise DomainError(f"HETCV_SEED must be an integer, got {env!r}") from None
    prov = {
        "config_file": str(args.config) if getattr(args, "config", None) else None,
        "config_values": from_file,
        "cli_overrides": {k: v for k, v in cli.items() if k in from_file},
        "cli_values": cli,
    }
    return resolved, prov


# ------------------------------------------------------------------ output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _write_csv(stream, header, rows):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


class _Output:
    def __init__(self, out, command, resolved, prov, argv):
        self.dir = Path(out) if out else None
        self.meta = {
            "command": command,
            "version": __version__,
            "argv": list(argv),
            "parameters": resolved,
            **prov,
        }
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name, header, rows, primary=False):
        if self.dir:
            with open(self.dir / name, "w", newline="") as fh:
                _write_csv(fh, header, rows)
        elif primary:
            _write_csv(sys.stdout, header, rows)

    def json(self, name, obj):
        if self.dir:
            (self.dir / name).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def close(self):
        self.json("meta.json", self.meta)


def _params(r, tau=None):
    return an.ModelParams(lam=r["lam"], beta=r["beta"], B=r["B"], tau=r["tau"] if tau is None else tau, alpha=r["alpha"])


def _floats(s):
    return [float(v) for v in str(s).split(",") if v.strip()]


# ---------------------------------------------------------------- commands


def cmd_pdf(r, out):
    t = r["t"]
    if r["model"] == "hd":
        p = _params(r, tau=0.0)
        h = 5 * math.sqrt(max(float(an.msd_hd(p, t)), 1e-300))
        lo, hi = (r["xmin"] if r["xmin"] is not None else -h), (r["xmax"] if r["xmax"] is not None else h)
        grid = np.linspace(lo, hi, r["n"])
        res = an.pdf_hd_result(p, grid, t)
    else:
        p = _params(r)
        slo, shi = an.support_interval(p, t)
        lo = r["xmin"] if r["xmin"] is not None else slo
        hi = r["xmax"] if r["xmax"] is not None else shi
        grid = np.linspace(lo, hi, r["n"])
        res = an.pdf_cv(p, grid, t)
    out.csv("pdf.csv", ["x", "density"], zip(res.grid, res.density), primary=True)
    out.json("pdf.json", res.to_dict())
    out.meta["result"] = res.to_dict()


def cmd_msd(r, out):
    ts = np.geomspace(r["tmin"], r["tmax"], r["n"])
    if r["model"] == "hd":
        p = _params(r, tau=0.0)
        rows = [(t, float(an.msd_hd(p, t))) for t in ts]
    else:
        p = _params(r)
        if p.lam == 0:
            curve = an.msd_cv(p, ts)
            rows = list(zip(ts, curve.msd))
            out.meta["exponent_short"] = curve.exponent_short
            out.meta["exponent_long"] = curve.exponent_long
        else:
            rows = [(t, an.msd_lambda(p, t)) for t in ts]
    out.csv("msd.csv", ["t", "msd"], rows, primary=True)


def cmd_acf(r, out):
    p = _params(r, tau=0.0)
    t1 = r["t1"]
    rows = [(t1, t2, an.autocorrelation_hd(p, t1, t2)) for t2 in np.geomspace(r["t2_min"], r["t2_max"], r["n"])]
    out.csv("acf.csv", ["t1", "t2", "acf"], rows, primary=True)


def cmd_tamsd(r, out):
    p = _params(r, tau=0.0)
    T = r["horizon"]
    rows = []
    for lag in np.geomspace(r["lag_min"], r["lag_max"], r["n"]):
        ta = an.tamsd_hd(p, lag, T)
        rows.append((lag, ta, float(an.msd_hd(p, lag)), ta / float(an.msd_hd(p, lag))))
    out.csv("tamsd.csv", ["lag", "tamsd", "msd", "eb"], rows, primary=True)


def cmd_simulate(r, out):
    model = _params(r)
    cfg = mc.SimConfig(
        model,
        dt=r["dt"],
        t_end=r["t_end"],
        n_traj=r["n_traj"],
        seed=r["seed"],
        interpretation=r["interpretation"],
        regularization=r["regularization"],
        record_every=r["record_every"],
        scheme=r["scheme"],
    )
    e = mc.simulate_telegrapher(cfg) if r["engine"] == "telegrapher" else mc.simulate_hd(cfg)
    curve = mc.estimate_msd(e)
    out.csv("msd.csv", ["t", "msd", "stderr"], zip(curve.times, curve.msd, curve.stderr), primary=True)
    lags = [lag for lag in _floats(r["lags"]) if lag <= e.times[-1] / 10]
    if lags:
        out.csv("tamsd.csv", ["lag", "tamsd"], zip(lags, mc.estimate_tamsd_ensemble(e, lags)))
    hist_meta = {}
    for t in _floats(r["hist_times"]) if r["hist_times"] else [e.times[-1]]:
        h = mc.histogram_pdf(e, t, r["bins"])
        out.csv(f"hist_t{_fmt(float(t))}.csv", ["x", "density"], zip(h.grid, h.density))
        hist_meta[_fmt(float(t))] = h.to_dict()
    if r["save_trajectories"]:
        rows = ((i, t, x) for i in range(e.n_traj) for t, x in zip(e.times, e.positions[i]))
        out.csv("trajectories.csv", ["traj_id", "t", "x"], rows)
    out.meta["histograms"] = hist_meta
    out.meta["simulation"] = e.config
    out.meta["n_flagged"] = int(np.sum(e.flagged)) if e.flagged is not None else 0


def cmd_simulate_voter(r, out):
    p = voter.VoterParams(r["N"], r["A"])
    n0 = r["n0"] if r["n0"] is not None else p.N // 2
    out.meta["time_unit"] = "total event rate N(pi+ + pi-); one expected update per agent per unit time"
    if r["method"] == "langevin":
        dt = r["dt"] if r["dt"] is not None else 0.01
        times, x = voter.simulate_voter_langevin(p, n0 / p.N, dt, r["t_end"], seed=r["seed"])
        out.csv("path.csv", ["t", "x"], zip(times, x[0]), primary=True)
        frac, weights = x[0], None
    else:
        dt = r["dt"] if r["method"] == "discrete" else None
        path = voter.simulate_voter(p, n0, r["t_end"], seed=r["seed"], method=r["method"], dt=dt)
        out.csv("path.csv", ["t", "n"], zip(path.times, path.counts), primary=True)
        out.meta["absorbed"] = path.absorbed
        frac = path.fractions[:-1]
        weights = np.diff(path.times)
    # time-weighted occupation over the second half of the run
    times = np.arange(len(frac)) if weights is None else np.concatenate([[0.0], np.cumsum(weights)[:-1]])
    keep = times >= times[-1] / 2 if len(times) > 1 else slice(None)
    w = None if weights is None else weights[keep]
    counts, edges = np.histogram(frac[keep], bins=r["bins"], range=(0, 1), weights=w)
    dens = counts / max(counts.sum(), 1e-300) / (edges[1] - edges[0])
    out.csv("stationary_hist.csv", ["x", "density"], zip(0.5 * (edges[1:] + edges[:-1]), dens))


def cmd_invert(r, out):
    if r["times"]:
        times = _floats(r["times"])
    else:
        times = np.geomspace(r["tmin"], r["tmax"], r["n"]) if r["tmin"] > 0 else np.linspace(r["tmin"], r["tmax"], r["n"])
    if r["preset"]:
        img = LaplaceImage(PRESETS[r["preset"]][0])
        out.meta["image"] = PRESETS[r["preset"]][1]
    else:
        p = _params(r)
        img = an.laplace_image(p, r["x"])
        out.meta["image"] = f"model density at x={r['x']}"
    res = invert_on_grid(img, times, r["n_terms"])
    out.csv("inversion.csv", ["t", "value", "diagnostic"], zip(res.times, res.values, res.diagnostic), primary=True)
    out.meta["flagged_times"] = res.times[res.flagged].tolist()


def cmd_validate(r, out):
    s = str(r["suite"])
    if s == "all":
        nums = sorted(validation.CHECKS)
    elif s == "fast":
        nums = list(validation.FAST)
    else:
        try:
            nums = [int(v) for v in s.split(",")]
        except ValueError:
            raise DomainError(f"unknown suite {s!r}") from None
        bad = [n for n in nums if n not in validation.CHECKS]
        if bad:
            raise DomainError(f"unknown checks {bad}")
    failed = 0
    for n in nums:
        res = validation.CHECKS[n]()
        print(res.line(), flush=True)
        failed += not res.passed
    print(f"{len(nums) - failed}/{len(nums)} checks passed")
    return 1 if failed else 0


def cmd_specfun(args):
    if args.action != "eval":
        raise _UsageError("specfun: expected 'eval'")
    names, fn = SPECFUNS[args.fn]
    vals = {k: getattr(args, k) for k in names}
    missing = [k for k, v in vals.items() if v is None]
    if missing:
        raise _UsageError(f"specfun eval --fn {args.fn} needs --{' --'.join(missing)}")
    print("%.17g" % fn(vals))
    return 0


COMMANDS = {
    "pdf": cmd_pdf,
    "msd": cmd_msd,
    "acf": cmd_acf,
    "tamsd": cmd_tamsd,
    "simulate": cmd_simulate,
    "simulate-voter": cmd_simulate_voter,
    "invert-laplace": cmd_invert,
    "validate": cmd_validate,
}


def _report(exc: HetcvError | Exception, code: str):
    print(json.dumps({"error": code, "message": str(exc)}), file=sys.stderr)


def dispatch(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        if args.command == "specfun":
            return cmd_specfun(args)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        resolved, prov = _resolve(args, sub, args.command)
        out = _Output(resolved.get("out"), args.command, resolved, prov, argv)
        rc = COMMANDS[args.command](resolved, out)
        out.close()
        return rc or 0
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DomainError, ConvergenceError) as exc:
        _report(exc, exc.code)
        return exc.exit_code
    except HetcvError as exc:
        _report(exc, exc.code)
        return exc.exit_code


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
