"""Command-line experiment runner.

Usage::

    latgauge SUBCOMMAND --config run.yaml --out results/ [--seed S] [--threads N] [--cap-states C]

Subcommands: ``simulate``, ``exact``, ``wilson``, ``center-test``, ``couple``
and ``corr``. Each writes ``measurements.jsonl``, ``summary.csv`` and
``manifest.json`` into the output directory.

Exit codes: 0 success, 2 configuration error, 3 resource cap exceeded,
4 insufficient statistics (partial results are written and flagged).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import itertools
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, build_boundary, build_edge, build_geometry, build_group,
                     build_observable, build_sampler, config_hash, load, resolve)
from .exact import EnumeratedSpace, ResourceCapError, stream_expectations
from .groups import acts_nontrivially_on_center, parse_rep
from .lattice import vertical_chain
from .model import Chain, InsufficientStatistics, batch_means, center_twisted

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_STATS = 0, 2, 3, 4


def fmt(x) -> str:
    """Locale-free number formatting with 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    if x is None:
        return ""
    return str(x)


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


class Recorder:
    """Collects measurement records, summary rows and scalar results."""

    def __init__(self):
        self.records = []
        self.columns = None
        self.rows = []
        self.results = {}
        self.partial = False
        self.notes = []
        self.golden = []  # exact-mode reference values, written to golden.json when present

    def record(self, **kv):
        self.records.append(kv)

    def row(self, **kv):
        if self.columns is None:
            self.columns = list(kv)
        self.rows.append(kv)

    def write(self, out: Path) -> dict:
        paths = {}
        p = out / "measurements.jsonl"
        with open(p, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r, default=_json_default, sort_keys=True) + "\n")
        paths[p.name] = p
        p = out / "summary.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = self.columns or []
            w.writerow(cols)
            for r in self.rows:
                w.writerow([fmt(r.get(c)) for c in cols])
        paths[p.name] = p
        if self.golden:
            p = out / "golden.json"
            p.write_text(json.dumps(self.golden, indent=2, sort_keys=True, default=_json_default))
            paths[p.name] = p
        return {name: hashlib.sha256(path.read_bytes()).hexdigest() for name, path in paths.items()}


def _setup(cfg):
    group = build_group(cfg)
    geom = build_geometry(cfg)
    bc = build_boundary(geom, group, cfg["boundary"])
    return group, geom, bc


def _space(cfg, geom, group, bc):
    if group.kind != "cyclic":
        raise ConfigError("exact mode needs a cyclic group Z_n", "/group")
    return EnumeratedSpace(geom, group, bc, cap=cfg["cap_states"])


def _mc_series(cfg, geom, group, bc, beta, fns: dict) -> list:
    """Run ``chains`` independent chains (``threads`` at a time); one dict of series per chain."""
    def one(c):
        chain = Chain(geom, group, bc, build_sampler(cfg, beta, chain=c))
        obs = {k: (lambda f: lambda conf: complex(f(conf.values[None])[0]))(f) for k, f in fns.items()}
        return chain.run(obs)

    n = cfg["sampler"]["chains"]
    with ThreadPoolExecutor(max_workers=cfg["threads"]) as ex:
        return list(ex.map(one, range(n)))


def _combine(estimates):
    """Equal-weight combination of independent chain estimates."""
    k = len(estimates)
    mean = sum(e.mean for e in estimates) / k
    se = math.sqrt(sum(e.stderr ** 2 for e in estimates)) / k
    return mean, se


def _mc_estimates(cfg, rec, geom, group, bc, beta, fns, record_series=True) -> dict:
    """Per-observable ``(mean, stderr, tau_int, n)``; ``None`` when statistics are insufficient."""
    runs = _mc_series(cfg, geom, group, bc, beta, fns)
    out = {}
    for name in fns:
        ests = []
        for c, series in enumerate(runs):
            if record_series:
                for i, v in enumerate(series[name]):
                    rec.record(beta=beta, chain=c, step=i, observable=name, re=v.real, im=v.imag)
            try:
                ests.append(batch_means(series[name], cfg["sampler"]["batches"]))
            except InsufficientStatistics as exc:
                rec.partial = True
                rec.notes.append(f"{name} at beta={beta}: {exc}")
        if len(ests) == len(runs):
            mean, se = _combine(ests)
            out[name] = (mean, se, max(e.tau_int for e in ests), sum(e.n for e in ests))
        else:
            out[name] = None
    return out


# ---------------------------------------------------------------- subcommands
def run_simulate(cfg, rec):
    group, geom, bc = _setup(cfg)
    fns = {ob["name"]: build_observable(geom, group, ob, f"/observables/{i}")
           for i, ob in enumerate(cfg["observables"])}
    if not fns:
        raise ConfigError("simulate needs at least one observable", "/observables")
    for beta in cfg["beta"]:
        est = _mc_estimates(cfg, rec, geom, group, bc, beta, fns)
        for name, e in est.items():
            if e is None:
                rec.row(beta=beta, observable=name, re_mean=None, im_mean=None, stderr=None,
                        n_eff=None, tau_int=None, n=None, sufficient=False)
            else:
                rec.row(beta=beta, observable=name, re_mean=e[0].real, im_mean=e[0].imag,
                        stderr=e[1], n_eff=e[3] / max(2.0 * e[2], 1.0), tau_int=e[2], n=e[3],
                        sufficient=True)


def run_exact(cfg, rec):
    group, geom, bc = _setup(cfg)
    obs = cfg["observables"] or [{"type": "plaquette", "index": 0, "rep": "fund", "name": "W_plaquette"}]
    fns = {ob["name"]: build_observable(geom, group, ob, f"/observables/{i}") for i, ob in enumerate(obs)}
    space = _space(cfg, geom, group, bc)
    res = stream_expectations(space, cfg["beta"], fns)
    for beta in cfg["beta"]:
        for name, v in res[beta].items():
            rec.record(beta=beta, observable=name, re=v.real, im=v.imag)
            rec.row(beta=beta, observable=name, re_mean=v.real, im_mean=v.imag)
        rec.golden.append({"geometry": cfg["geometry"], "group": cfg["group"], "beta": beta,
                           "bc": cfg["boundary"],
                           "observables": {k: v.real for k, v in res[beta].items()},
                           "observables_imag": {k: v.imag for k, v in res[beta].items()}})
    rec.results["n_states"] = space.n_states


def run_wilson(cfg, rec):
    from .observables import potential_extract

    w = {"loops": [[1, 1], [1, 2], [2, 1], [2, 2]], "rep": "fund", "plane": [0, 1], "table": None,
         **cfg.get("wilson", {})}
    tables, extra = {}, {}
    if w["table"]:
        tables[None] = [tuple(r) for r in w["table"]]
    else:
        group, geom, bc = _setup(cfg)
        fns = {f"W({R},{T})": build_observable(
            geom, group, {"type": "wilson", "R": R, "T": T, "plane": w["plane"], "rep": w["rep"]},
            "/wilson/loops") for R, T in w["loops"]}
        if cfg["mode"] == "exact":
            res = stream_expectations(_space(cfg, geom, group, bc), cfg["beta"], fns)
            for beta in cfg["beta"]:
                tables[beta] = [(R, T, res[beta][f"W({R},{T})"].real, 0.0) for R, T in w["loops"]]
                extra[beta] = {(R, T): (res[beta][f"W({R},{T})"].imag, None) for R, T in w["loops"]}
        else:
            for beta in cfg["beta"]:
                est = _mc_estimates(cfg, rec, geom, group, bc, beta, fns, record_series=False)
                ok = [(R, T, est[f"W({R},{T})"]) for R, T in w["loops"] if est[f"W({R},{T})"] is not None]
                tables[beta] = [(R, T, e[0].real, e[1]) for R, T, e in ok]
                extra[beta] = {(R, T): (e[0].imag, e[3] / max(2.0 * e[2], 1.0)) for R, T, e in ok}
    for beta, table in tables.items():
        pr = potential_extract(table)
        for R, T, m, s in table:
            im, n_eff = extra.get(beta, {}).get((R, T), (None, None))
            rec.record(beta=beta, R=R, T=T, mean=m, stderr=s)
            rec.row(R=R, T=T, re_mean=m, im_mean=im, stderr=s, n_eff=n_eff, beta=beta,
                    creutz=pr.creutz.get((R, T), (None,))[0], excluded=(R, T) in pr.excluded)
        rec.results[str(beta)] = {"sigma": pr.sigma, "sigma_err": pr.sigma_err,
                                  "perimeter": pr.perimeter, "const": pr.const,
                                  "V": {str(k): v for k, v in pr.V.items()},
                                  "excluded": [list(x) for x in pr.excluded]}


def _exact_chain_values(cfg, geom, group, bc, rep, edges, fns):
    """Enumerate when the state space fits the cap, else contract (one-dimensional reps only)."""
    from .exact import contract_expectation, loop_edge_factors

    try:
        space = _space(cfg, geom, group, bc)
    except ResourceCapError:
        if group.kind != "cyclic" or rep.charge is None:
            raise
        factors = loop_edge_factors(group, rep.charge, edges, [1] * len(edges))
        return {b: {"chain0": (contract_expectation(geom, group, bc, b, factors), 0.0)} for b in cfg["beta"]}
    res = stream_expectations(space, cfg["beta"], fns)
    return {b: {n: (v, 0.0) for n, v in res[b].items()} for b in cfg["beta"]}


def run_center_test(cfg, rec):
    from .observables import ChainVariableSpec, chain_variable_values

    group, geom = build_group(cfg), build_geometry(cfg)
    ct = {"rep": "fund", "spatial": None, "indices": None, "ensembles": [cfg["boundary"]],
          **cfg.get("center_test", {})}
    try:
        rep = parse_rep(group, ct["rep"])
        edges = vertical_chain(geom, ct["spatial"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc), "/center_test") from None
    m, k = rep.dim, len(edges)
    if ct["indices"]:
        choices = [tuple(tuple(p) for p in c) for c in ct["indices"]]
    else:
        if (m * m) ** k > 4096:
            raise ResourceCapError(f"{(m * m) ** k} index choices; list them under center_test.indices")
        pairs = list(itertools.product(range(m), repeat=2))
        choices = list(itertools.product(pairs, repeat=k))
    fns = {}
    for j, ch in enumerate(choices):
        spec = ChainVariableSpec(tuple(edges), ch)
        try:
            spec.validate(rep)
        except ValueError as exc:
            raise ConfigError(str(exc), f"/center_test/indices/{j}") from None
        fns[f"chain{j}"] = (lambda s: lambda v: chain_variable_values(group, v, s, rep))(spec)
    nontrivial = acts_nontrivially_on_center(rep)
    for ei, ens in enumerate(ct["ensembles"]):
        bc = build_boundary(geom, group, ens, f"/center_test/ensembles/{ei}")
        if cfg["mode"] == "exact":
            vals = _exact_chain_values(cfg, geom, group, bc, rep, edges, fns)
        else:
            vals = {}
            for b in cfg["beta"]:
                est = _mc_estimates(cfg, rec, geom, group, bc, b, fns, record_series=False)
                vals[b] = {n: (e[0], e[1]) if e else (complex("nan"), float("nan")) for n, e in est.items()}
        for b in cfg["beta"]:
            for j, ch in enumerate(choices):
                v, se = vals[b][f"chain{j}"]
                idx = ";".join(f"{r}{c}" for r, c in ch)
                rec.record(ensemble=ei, beta=b, indices=[list(p) for p in ch], re=v.real, im=v.imag,
                           stderr=se)
                rec.row(ensemble=ei, beta=b, indices=idx, rep=rep.label, nontrivial=nontrivial,
                        re_mean=v.real, im_mean=v.imag, abs=abs(v), stderr=se)
    rec.results["nontrivial_on_center"] = nontrivial


def run_couple(cfg, rec):
    from .slab import SlabCouplingProblem, iterate_profile, log_linear_slope

    group, geom = build_group(cfg), build_geometry(cfg)
    if cfg["geometry"]["kind"] != "slab":
        raise ConfigError("couple needs a slab geometry", "/geometry/kind")
    cp = {"r": 1, "twist": 1, "n_max": 1000, "tol": 1e-10, "min_iter": 0, **cfg.get("couple", {})}
    spec = {**cfg["boundary"], "twist": None}
    if spec["type"] == "free":
        spec["type"] = "fixed"
    spec["on"] = "all"
    bc = build_boundary(geom, group, spec)
    try:
        bc2 = center_twisted(bc, int(cp["twist"]))
        problem = SlabCouplingProblem(geom, group, cfg["beta"][0], bc, bc2, r=cp["r"], cap=cfg["cap_states"])
    except ValueError as exc:
        raise ConfigError(str(exc), "/couple") from None
    res = iterate_profile(problem, n_max=cp["n_max"], tol=cp["tol"], min_iter=cp["min_iter"])
    dist = problem.distances()
    for it, prof in enumerate(res.profiles):
        for e, r in prof.items():
            rec.record(iteration=it, edge=geom.edge_label(e), rho=r)
    for e in problem.interior:
        rec.row(edge=geom.edge_label(e), distance=dist[e], rho_initial=res.profiles[0][e],
                rho_final=res.final[e])
    slope = log_linear_slope([dist[e] for e in problem.interior], [res.final[e] for e in problem.interior])
    rec.results.update(iterations=len(res.profiles) - 1, converged_at=res.converged_at, slope=slope,
                       marginal_error=res.state.core.marginal_error())


def run_corr(cfg, rec):
    from .observables import CorrelationRequest, LocalFunction, correlation_decay, exact_correlation

    group, geom, bc = _setup(cfg)
    cc = cfg.get("corr", {})
    if "f" not in cc:
        raise ConfigError("corr needs an edge 'f'", "/corr/f")
    kind = cc.get("kind", "plaquette")
    f = build_edge(geom, cc["f"], "/corr/f")
    if cc.get("g"):
        gs = [build_edge(geom, g, f"/corr/g/{j}") for j, g in enumerate(cc["g"])]
    else:
        gs = [int(e) for e in np.flatnonzero(geom.edge_axis == geom.edge_axis[f]) if e != f]
    req = CorrelationRequest(LocalFunction(f, kind), [LocalFunction(g, kind) for g in gs])
    for beta in cfg["beta"]:
        if cfg["mode"] == "exact":
            r = exact_correlation(req, _space(cfg, geom, group, bc), beta)
        else:
            try:
                r = correlation_decay(req, geom, group, bc, build_sampler(cfg, beta),
                                      n_blocks=cc.get("batches", cfg["sampler"]["batches"]))
            except InsufficientStatistics as exc:
                rec.partial = True
                rec.notes.append(f"beta={beta}: {exc}")
                continue
        for g, d, c, s in zip(gs, r.distances, r.cov, r.err):
            rec.record(beta=beta, edge=geom.edge_label(g), distance=d, cov=c, err=s)
            rec.row(beta=beta, edge=geom.edge_label(g), distance=d, cov=c, err=s)
        rec.results[str(beta)] = {"K1": r.K1, "K2": r.K2, "sufficient": r.sufficient,
                                  "fitted": [int(i) for i in r.fitted]}
        if not r.sufficient:
            rec.partial = True


RUNNERS = {"simulate": run_simulate, "exact": run_exact, "wilson": run_wilson,
           "center-test": run_center_test, "couple": run_couple, "corr": run_corr}


# ---------------------------------------------------------------- entry point
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latgauge", description="Lattice gauge theory experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", required=True, type=Path)
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        s.add_argument("--threads", type=int, default=None, help="independent chains run concurrently")
        s.add_argument("--cap-states", type=int, default=None, dest="cap_states")
    return p


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def run(command: str, config, out, seed=None, threads=None, cap_states=None) -> int:
    """Run one subcommand; ``config`` is a path or an already parsed mapping."""
    started = _now()
    try:
        cfg = load(config) if isinstance(config, (str, Path)) else resolve(config)
        if seed is not None:
            cfg["seed"] = int(seed)
        if threads is not None:
            cfg["threads"] = int(threads)
        if cap_states is not None:
            cfg["cap_states"] = int(cap_states)
        cfg = resolve(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error: output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rec = Recorder()
    status, error = EXIT_OK, None
    try:
        RUNNERS[command](cfg, rec)
    except ConfigError as exc:
        status, error = EXIT_CONFIG, f"config error: {exc}"
    except ResourceCapError as exc:
        status, error = EXIT_CAP, f"resource cap exceeded: {exc}"
    except InsufficientStatistics as exc:
        status, error = EXIT_STATS, f"insufficient statistics: {exc}"
        rec.partial = True
    if status == EXIT_OK and rec.partial:
        status = EXIT_STATS
    if error:
        print(error, file=sys.stderr)
    digests = rec.write(out)
    manifest = {
        "tool": "latgauge", "version": __version__, "subcommand": command,
        "config_hash": config_hash(cfg), "config": cfg, "seed": cfg["seed"],
        "started": started, "finished": _now(), "exit_status": status, "partial": rec.partial,
        "notes": rec.notes + ([error] if error else []), "results": rec.results, "outputs": digests,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default, sort_keys=True))
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.seed, args.threads, args.cap_states)


if __name__ == "__main__":
    sys.exit(main())
