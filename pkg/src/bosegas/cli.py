"""Command-line runner: every subcommand writes results.csv and manifest.json into --out."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config, experiments, limitlaws, partition, sampler, spectral, weights
from .cache import ENV_VAR, TableCache, default_root
from .errors import BoseGasError, CacheCorruptionError, ConfigError, ToleranceError

SUBCOMMANDS = ("trace", "mpfit", "weights", "pmf", "partition", "gamma", "meso", "clt", "local-clt",
               "pd", "sample", "dickman", "suite", "cache")


# ---------------------------------------------------------------------------
# output

def fmt(v) -> str:
    """17 significant digits for floats; 'nan' and '+inf'/'-inf' are the only non-finite sentinels."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "+inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for r in rows:
            out.writerow([fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Run:
    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.started = time.perf_counter()
        self.choices: dict = {}
        self.extra: dict = {}

    def finish(self, header, rows, extra_files=()):
        self.out.mkdir(parents=True, exist_ok=True)
        write_csv(self.out / "results.csv", header, rows)
        for name, h, r in extra_files:
            write_csv(self.out / name, h, r)
        manifest = {
            "command": self.command,
            "config": self.cfg,
            "code_version": f"bosegas {__version__}",
            "python": platform.python_version(),
            "numpy": np.__version__,
            "rng_algorithm": sampler.RNG_ALGORITHM,
            "seed": self.cfg.get("seed"),
            "particle_count_rounding": "floor(rho L^d)",
            "resolved_choices": self.choices,
            "wall_time_s": time.perf_counter() - self.started,
            **self.extra,
        }
        (self.out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# argument helpers

def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _rho(text):
    if text == "critical":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("rho must be 'critical' or a number") from None


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("model")
    g.add_argument("--config", help="JSON config file; flags override it")
    g.add_argument("--out", help="output directory (default .)")
    g.add_argument("--geometry", help="torus:<d> | box:<d>:dirichlet | box:<d>:neumann")
    g.add_argument("--beta", type=float)
    g.add_argument("--L", dest="L", type=float, help="single scale")
    g.add_argument("--L-list", dest="L_list", type=_floats, help="comma-separated scales")
    g.add_argument("--rho", type=_rho, help="'critical' or a density")
    g.add_argument("--n-cut", dest="n_cut", type=int, help="longest loop kept (default floor(rho L^d))")
    g.add_argument("--mu-mode", dest="mu_mode", choices=["none", "solve-to-density", "explicit"])
    g.add_argument("--mu", type=float, help="chemical potential for --mu-mode explicit")
    g.add_argument("--seed", type=int)
    g.add_argument("--cache", help=f"cache directory (default ${ENV_VAR})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bosegas", description="Exact finite-size numerics for the free Bose gas loop soup.")
    ap.add_argument("--version", action="version", version=f"bosegas {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="heat trace Z(t)")
    _common(p)
    p.add_argument("--t-list", dest="t_list", type=_floats)

    _common(sub.add_parser("mpfit", help="small-t coefficients a0, a1, a2"))
    _common(sub.add_parser("weights", help="loop weights t_j and tilted weights"))

    p = sub.add_parser("pmf", help="exact law of the particle number")
    _common(p)
    p.add_argument("--window", type=_ints, help="lo,hi loop-length window")
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--method", choices=["direct", "fft"])

    _common(sub.add_parser("partition", help="log Z over the L grid with local slopes"))

    p = sub.add_parser("gamma", help="reduced density matrix along a line from the centre")
    _common(p)
    p.add_argument("--points", type=int, default=17)

    p = sub.add_parser("meso", help="mesoscopic particle-number law against the Dickman density")
    _common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--M", dest="M", type=float)

    p = sub.add_parser("clt", help="Kolmogorov distance to the Fredholm law")
    _common(p)

    _common(sub.add_parser("local-clt", help="tilted pmf peak against both Gaussian variance candidates"))

    p = sub.add_parser("pd", help="longest-loop fraction against Poisson-Dirichlet(1)")
    _common(p)
    p.add_argument("--samples", type=int)

    p = sub.add_parser("sample", help="draw loop configurations")
    _common(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--conditioned", action="store_true", help="condition on N = floor(rho L^d)")
    p.add_argument("--paths", help="write spatial paths of the first draw (torus only) to this CSV")
    p.add_argument("--ds", type=float, default=0.05)

    p = sub.add_parser("dickman", help="Dickman function and density")
    _common(p)
    p.add_argument("--y-list", dest="y_list", type=_floats)

    p = sub.add_parser("suite", help="run a verification suite")
    _common(p)
    p.add_argument("--name", choices=["acceptance"], default="acceptance")
    p.add_argument("--only", type=_ints, help="comma-separated check-group numbers")

    p = sub.add_parser("cache", help="inspect the weight cache")
    p.add_argument("verb", choices=["list", "verify", "purge"])
    p.add_argument("--cache", help=f"cache directory (default ${ENV_VAR})")
    p.add_argument("--all", action="store_true", help="purge every entry, not only stale formats")
    return ap


CONFIG_KEYS = ("geometry", "beta", "L", "L_list", "rho", "n_cut", "mu_mode", "mu", "seed", "out", "cache",
               "window", "n_max", "method", "alpha", "M", "samples")


def resolve_config(args) -> dict:
    overrides = {k: getattr(args, k, None) for k in CONFIG_KEYS}
    cfg = config.load(args.config, overrides)
    if cfg.get("cache"):
        os.environ[ENV_VAR] = cfg["cache"]
    return cfg


def _params(cfg, L=None) -> weights.ModelParams:
    L = L if L is not None else cfg.get("L", cfg["L_list"][0])
    return weights.ModelParams(cfg["geometry"], L, cfg["beta"], cfg["rho"], cfg.get("n_cut"))


def _mu(cfg, p, w, run: Run) -> float:
    mode = cfg["mu_mode"]
    if mode == "explicit":
        if "mu" not in cfg:
            raise ConfigError("--mu-mode explicit needs --mu")
        return float(cfg["mu"])
    if mode == "solve-to-density":
        solve = weights.solve_mu(p, p.density * p.L**p.d, w)
        run.choices["tilt"] = {"mu": solve.mu, "r": solve.r, "achieved": solve.achieved}
        return solve.mu
    return 0.0


# ---------------------------------------------------------------------------
# subcommands

def cmd_trace(args, run):
    g = spectral.parse_geometry(run.cfg["geometry"])
    t = np.asarray(args.t_list) if args.t_list else np.geomspace(1e-3, 10.0, 41)
    z = spectral.heat_trace(g, t)
    run.finish(["t", "Z", "Z_times_4pi_t_d2"], zip(t, z, z * (4 * math.pi * t) ** (g.d / 2)))


def cmd_mpfit(args, run):
    g = spectral.parse_geometry(run.cfg["geometry"])
    fit, ref = spectral.mp_fit(g), spectral.mp_reference(g)
    run.extra["fit"] = {"residual": fit.residual, "condition": fit.condition}
    run.finish(["k", "fit", "reference"], [(k, getattr(fit, f"a{k}"), getattr(ref, f"a{k}")) for k in range(3)])


def cmd_weights(args, run):
    p = _params(run.cfg)
    w = weights.build_weights(p)
    w = w.with_mu(_mu(run.cfg, p, w, run))
    run.extra["weights_key"] = w.key
    run.finish(["j", "t", "tilted"], zip(w.j.astype(int), w.t, w.tilted))


def cmd_pmf(args, run):
    cfg = run.cfg
    p = _params(cfg)
    w = weights.build_weights(p)
    w = w.with_mu(_mu(cfg, p, w, run))
    pmf = partition.compound_pmf(w, cfg.get("window"), cfg.get("n_max"), cfg["method"])
    run.extra["pmf"] = {"window": list(pmf.window), "method": pmf.method, "weights_key": pmf.weights_key,
                        "normalization_deficit": pmf.normalization_deficit}
    run.finish(["n", "logp"], pmf.to_csv_rows())


def cmd_partition(args, run):
    cfg = run.cfg
    Ls = cfg["L_list"]
    logz = [partition.canonical_partition_function(_params(cfg, L)) for L in Ls]
    slopes = [math.nan] + [(b - a) / math.log(L2 / L1) for a, b, L1, L2 in zip(logz, logz[1:], Ls, Ls[1:])]
    run.finish(["L", "logZ", "local_slope"], zip(Ls, logz, slopes))


def cmd_gamma(args, run):
    p = _params(run.cfg)
    n = p.n_particles
    pmf = partition.compound_pmf(weights.build_weights(p), None, n)
    centre = np.full(p.d, p.L / 2)
    s = np.linspace(0.0, 0.45 * p.L, args.points)
    y = centre + np.outer(s, np.eye(p.d)[0])
    g = partition.gamma_rdm(p, pmf, np.broadcast_to(centre, y.shape), y, n)
    run.extra["trace_identity"] = {"n": n, "trace": partition.gamma_trace(pmf, n)}
    run.finish(["s", "gamma", "gamma_times_L"], zip(s, g, g * p.L))


def cmd_meso(args, run):
    cfg = run.cfg
    p = _params(cfg)
    alpha, M = cfg.get("alpha", 1.0), cfg.get("M", 1.0)
    pmf = partition.mesoscopic_pmf(p, alpha, M)
    lo, hi = pmf.window
    cmp = partition.mesoscopic_comparison(p, pmf, np.arange(lo, hi + 1), alpha)
    run.extra["window"] = [lo, hi]
    run.finish(["k", "y", "scaled", "scaled_upper", "p1"],
               zip(cmp["k"], cmp["y"], cmp["scaled"], cmp["scaled_upper"], cmp["dickman"]))


def cmd_clt(args, run):
    cfg = run.cfg
    law = limitlaws.chi_zeta(cfg["geometry"], np.zeros(1))
    run.extra["chi_zeta"] = {"variance": law.measure.variance, "tail_fraction": law.measure.tail_fraction}
    run.finish(["L", "ks"], [(L, experiments.fredholm_ks(_params(cfg, L), law)) for L in cfg["L_list"]])


def cmd_local_clt(args, run):
    rows = []
    for L in run.cfg["L_list"]:
        pk = experiments.tilted_peak(_params(run.cfg, L))
        rows.append((L, pk.r, pk.scaled_peak, pk.modes["stated"][1], pk.modes["from_proof"][1]))
    run.finish(["L", "r", "scaled_peak", "mode_stated", "mode_from_proof"], rows)


def cmd_pd(args, run):
    cfg = run.cfg
    draws = cfg.get("samples", 10_000)
    rows = []
    for i, L in enumerate(cfg["L_list"]):
        ks, mean = experiments.largest_loop_ks(_params(cfg, L), draws, sampler.SeedSpec(cfg["seed"], i))
        rows.append((L, ks, mean))
    run.extra["golomb_dickman"] = limitlaws.GOLOMB_DICKMAN
    run.finish(["L", "ks", "mean_largest_fraction"], rows)


def cmd_sample(args, run):
    cfg = run.cfg
    p = _params(cfg)
    w = weights.build_weights(p)
    w = w.with_mu(_mu(cfg, p, w, run))
    size = cfg.get("samples", 1)
    seed = sampler.SeedSpec(cfg["seed"], 0)
    if args.conditioned:
        n = p.n_particles
        batch = sampler.sample_conditioned(partition.compound_pmf(w, None, n), n, seed, size)
        configs = batch.configurations()
    else:
        counts = sampler.sample_soup(w, seed, size)
        configs = [sampler.LoopConfiguration(np.nonzero(c)[0] + 1, c[np.nonzero(c)[0]]) for c in counts]
    rows = [(i, c.total, c.n_loops, int(c.loops()[0]) if c.n_loops else 0) for i, c in enumerate(configs)]
    if args.paths:
        spatial = sampler.sample_spatial_torus(configs[0], p, args.ds, seed.child(1))
        sampler.write_paths_csv(spatial, args.paths, p.d)
    run.finish(["sample", "total", "n_loops", "largest"], rows)


def cmd_dickman(args, run):
    y = np.asarray(args.y_list) if args.y_list else np.linspace(0.0, 10.0, 101)
    rho, p1 = limitlaws.dickman(y)
    run.finish(["y", "rho", "p1"], zip(y, rho, p1))


def cmd_suite(args, run):
    seed = run.cfg["seed"]

    def progress(res):
        for c in res.checks:
            print(f"[{'PASS' if c.passed else 'FAIL'}] {c.suite:>2} {res.title}: {c.name} "
                  f"(value {c.value:.6g}, reference {c.reference:.6g})", file=sys.stderr)

    results = experiments.run_acceptance(seed, args.only, progress)
    rows = [(c.suite, c.name, c.value, c.reference, c.tolerance, c.passed) for r in results for c in r.checks]
    details = [(r.number, *row) for r in results for row in r.rows]
    run.choices = {str(r.number): r.choices for r in results if r.choices}
    run.extra["wall_times_s"] = {str(r.number): r.elapsed for r in results}
    run.extra["passed"] = all(r.passed for r in results)
    run.finish(["suite", "check", "value", "reference", "tolerance", "passed"], rows,
               [("details.csv", ["suite", "series", "x", "value"], details)])
    failed = [c for r in results for c in r.checks if not c.passed]
    if failed:
        raise ToleranceError(f"{len(failed)} of {len(rows)} checks failed")


def cmd_cache(args):
    root = args.cache or default_root()
    if root is None:
        raise ConfigError(f"no cache directory: pass --cache or set {ENV_VAR}")
    cache = TableCache(root)
    if args.verb == "list":
        for e in cache.entries():
            print(e["key"], e.get("format_version"), e.get("count"), json.dumps(e.get("params"), sort_keys=True))
        return 0
    if args.verb == "verify":
        bad = cache.verify()
        for key in bad:
            print(f"corrupt {key}")
        if bad:
            raise CacheCorruptionError(f"{len(bad)} corrupt cache entries")
        print(f"ok {len(cache.entries())} entries")
        return 0
    for key in cache.purge(everything=args.all):
        print(f"removed {key}")
    return 0


HANDLERS = {
    "trace": cmd_trace, "mpfit": cmd_mpfit, "weights": cmd_weights, "pmf": cmd_pmf, "partition": cmd_partition,
    "gamma": cmd_gamma, "meso": cmd_meso, "clt": cmd_clt, "local-clt": cmd_local_clt, "pd": cmd_pd,
    "sample": cmd_sample, "dickman": cmd_dickman, "suite": cmd_suite,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "cache":
            return cmd_cache(args)
        cfg = resolve_config(args)
        HANDLERS[args.command](args, Run(args.command, cfg))
        return 0
    except BoseGasError as exc:
        print(f"bosegas: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"bosegas: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
