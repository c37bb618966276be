"""``gkprepeater`` command line: analytic, simulate, single-link, cost and sweep runs."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analytic, cost as costmod
from .cache import ResultCache, canonical_json
from .config import ConfigError, load, validate
from .montecarlo import ChainConfig, default_workers, estimate, single_link_experiment, write_trial_log
from .quadrature import FiberParams, Squeezing
from .rescaling import PrecisionExhausted

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_PRECISION = 0, 2, 3, 4

log = logging.getLogger("gkprepeater")


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def write_csv(path: Path, header: list[str], rows, legend: dict | None = None) -> None:
    """CSV with an optional ``#``-prefixed column legend above the header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        for col, text in (legend or {}).items():
            f.write(f"# {col}: {text}\n")
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r[h]) for h in header])


def write_json(path: Path, payload: dict) -> str:
    """Write ``payload`` plus a hash of everything except the timestamp; returns the hash."""
    digest = hashlib.sha256(canonical_json(payload).encode()).hexdigest()
    doc = dict(payload, content_hash=digest, timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return digest


def _chain_config(cfg: dict) -> ChainConfig:
    return ChainConfig(cfg["eta0"], cfg["sigma_gkp"], cfg.get("code", "gkp"), cfg.get("n_multi", 1),
                       cfg.get("n_all", 40), cfg.get("links", 100), cfg.get("analog", True), cfg["precision"],
                       cfg.get("lossless", False))


def cmd_analytic(cfg: dict, out: Path, threads: int) -> int:
    header = ["eta0", "sigma_gkp", "optimal_spacing_km", "achievable_distance_km"]
    rows = []
    for eta0, sg in itertools.product(cfg["eta0"], cfg["sigma_gkp"]):
        fiber, sq = FiberParams(eta0), Squeezing.from_sigma(sg)
        d = analytic.achievable_distance(fiber, sq, cfg["threshold"])
        spacing = analytic.optimize_spacing(fiber, sq, d)[0] if d > 0 else analytic.MIN_SPACING_KM
        rows.append(dict(zip(header, (eta0, sg, spacing, d))))
    write_csv(out / "analytic.csv", header, rows)
    return EXIT_OK


def cmd_simulate(cfg: dict, out: Path, threads: int) -> int:
    chain = _chain_config(cfg)
    cache = ResultCache(out / "cache")
    est = estimate(chain, cfg["b"], cfg["seed"], cfg["budget"], threads, cache)
    write_json(out / "simulate.json", {"estimate": est.to_dict(),
                                       "per_link": {"x": est.per_link("x"), "z": est.per_link("z")}})
    if cfg["trial_log"]:
        write_trial_log(out / "trials.bin", chain, est.k, cfg["seed"])
    return EXIT_OK if est.converged else EXIT_BUDGET


def cmd_single_link(cfg: dict, out: Path, threads: int) -> int:
    gammas = np.linspace(cfg["gamma_min"], cfg["gamma_max"], cfg["points"])
    header = ["gamma", "scheme", "p_err", "stderr", "k", "converged"]
    rows, ok = [], True
    for scheme in cfg["schemes"]:
        for pt in single_link_experiment(gammas, scheme, cfg["b"], cfg["seed"], cfg["budget"], threads):
            rows.append({"gamma": pt.gamma, "scheme": scheme, "p_err": pt.p_err, "stderr": pt.stderr,
                         "k": pt.k, "converged": int(pt.converged)})
            ok &= pt.converged
    write_csv(out / "single_link.csv", header, rows, {
        "gamma": "loss parameter, shift variance per quadrature",
        "p_err": "probability of any logical Pauli error",
        "stderr": "binomial standard error",
    })
    return EXIT_OK if ok else EXIT_BUDGET


def cmd_cost(cfg: dict, out: Path, threads: int) -> int:
    fiber, sq = FiberParams(cfg["eta0"]), Squeezing.from_sigma(cfg["sigma_gkp"])
    code = cfg["code"]
    layouts = [tuple(p) for p in cfg["layouts"]] if "layouts" in cfg else costmod.enumerate_configs()
    cache = ResultCache(out / "cache")
    flagged = []

    def link_probs(code_, nm, na):
        chain = ChainConfig(cfg["eta0"], cfg["sigma_gkp"], code_, nm, na, cfg["links"], True, cfg["precision"])
        est = estimate(chain, cfg["b"], cfg["seed"], cfg["budget"], threads, cache)
        if est.flagged:
            flagged.append((nm, na))
        return est.per_link("x"), est.per_link("z")

    header = ["distance_km", "constraint", "code", "n_multi", "n_all", "key_per_mode", "cost", "normalized_cost"]
    rows = []
    for dist in cfg["distances_km"]:
        for constraint in ("hybrid", "type-A-only"):
            rep = costmod.optimize(fiber, sq, code, dist, link_probs, cfg["objective"], constraint, layouts)
            rows.append(dict(rep.row(), constraint=constraint))
    write_csv(out / "cost.csv", header, rows, {
        "key_per_mode": "secret bits per optical mode",
        "cost": "storage mode-steps per secret bit",
        "normalized_cost": "cost per km",
    })
    if flagged:
        log.warning("%d layouts hit the sample budget", len(set(flagged)))
    return EXIT_BUDGET if flagged else EXIT_OK


def cmd_sweep(cfg: dict, out: Path, threads: int) -> int:
    names = sorted(cfg["vary"])
    header = names + ["p_x", "p_z", "se_x", "se_z", "k", "converged"]
    rows, ok = [], True
    cache = ResultCache(out / "cache")
    for values in itertools.product(*(cfg["vary"][n] for n in names)):
        point = validate({"kind": "simulate", **cfg["base"], **dict(zip(names, values)),
                          "seed": cfg["seed"], "precision": cfg["precision"], "budget": cfg["budget"]})
        est = estimate(_chain_config(point), point["b"], point["seed"], point["budget"], threads, cache)
        rows.append({**dict(zip(names, values)), "p_x": est.p_x, "p_z": est.p_z, "se_x": est.se_x,
                     "se_z": est.se_z, "k": est.k, "converged": int(est.converged)})
        ok &= est.converged
    write_csv(out / "sweep.csv", header, rows)
    return EXIT_OK if ok else EXIT_BUDGET


COMMANDS = {
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "single-link": cmd_single_link,
    "cost": cmd_cost,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gkprepeater", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
        s.add_argument("--precision", type=int, help="decimal digits for the coefficient solver")
        s.add_argument("--budget", type=int, help="trial cap per estimate")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load(args.config)
        if cfg["kind"] != args.command:
            raise ConfigError(f"config kind {cfg['kind']!r} does not match command {args.command!r}")
        overrides = {k: getattr(args, k) for k in ("seed", "out", "precision", "budget")
                     if getattr(args, k) is not None}
        if overrides:
            cfg = validate({**cfg, **overrides})
        threads = args.threads or cfg.get("threads") or default_workers()
        if threads < 1:
            raise ConfigError("--threads must be positive")
        return COMMANDS[args.command](cfg, Path(cfg["out"]), threads)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except PrecisionExhausted as exc:
        log.error("%s (largest solvable prefix: %d)", exc, exc.solvable_prefix)
        return EXIT_PRECISION
    except ValueError as exc:
        log.error("invalid parameters: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
