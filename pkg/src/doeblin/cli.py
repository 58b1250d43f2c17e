"""Command-line entry point: ``doeblin <command> [options]``.

Every command writes one table, as CSV with a ``#`` metadata header or as
JSON carrying the same metadata and rows.  Replication r of a run uses seed
``seed + r``, so results do not depend on ``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import __version__
from .bridge import build_bridge
from .distributions import make_distribution
from .errors import DoeblinError, UsageError
from .estimators import invariant_measure_oracle, k_function, mean_measure
from .models import parse_model
from .monotone import sample_potential_pp, sample_taboo_pp
from .noise import Coupling, NoiseField
from .renewal import meeting_experiment

OUTPUT_DIR_ENV = "DOEBLIN_OUTPUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: "str | None" = None
    dists: tuple[str, ...] = ()
    coupling: str = "common"
    seed: int = 1
    replications: int = 1
    K: int = 20
    max_n: int = 100_000
    out: "str | None" = None
    fmt: "str | None" = None
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seed < 1 or self.replications < 1:
            raise UsageError("seed and replications must be positive")
        if self.K < 0 or self.max_n < 0:
            raise UsageError("--region and --max-n must be nonnegative")
        if self.fmt not in (None, "csv", "json"):
            raise UsageError("--format must be csv or json")
        if self.threads < 1:
            raise UsageError("--threads must be positive")
        Coupling.parse(self.coupling)

    @property
    def format(self) -> str:
        if self.fmt:
            return self.fmt
        return "json" if self.out and self.out.endswith(".json") else "csv"

    def echo(self) -> dict:
        d = {
            "command": self.command,
            "model": self.model,
            "dist": ",".join(self.dists) or None,
            "coupling": self.coupling,
            "seed": self.seed,
            "replications": self.replications,
            "region": self.K,
            "max_n": self.max_n,
        }
        d.update(self.extra)
        return {k: v for k, v in d.items() if v is not None}


@dataclass
class Table:
    columns: list[str]
    rows: list[list]
    meta: dict

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return json.dumps({"meta": self.meta, "columns": self.columns, "rows": self.rows}, sort_keys=True) + "\n"
        buf = io.StringIO()
        for k in sorted(self.meta):
            buf.write(f"# {k}: {self.meta[k]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        w.writerows(self.rows)
        return buf.getvalue()


def _noise(cfg: RunConfig, r: int = 0) -> NoiseField:
    return NoiseField(cfg.seed + r, cfg.coupling)


def _one_sample(job):
    kind, cfg, r = job
    model = parse_model(cfg.model)
    noise = _noise(cfg, r)
    if kind == "taboo":
        return sample_taboo_pp(model, noise, cfg.K, cfg.max_n)
    return sample_potential_pp(model, noise, cfg.K, cfg.max_n, strategy=cfg.extra.get("strategy", "linear"))


def _samples(kind: str, cfg: RunConfig, n: "int | None" = None):
    jobs = [(kind, cfg, r) for r in range(cfg.replications if n is None else n)]
    if cfg.threads == 1 or len(jobs) == 1:
        return [_one_sample(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
        return list(ex.map(_one_sample, jobs, chunksize=max(1, len(jobs) // (4 * cfg.threads))))


def _meta(cfg: RunConfig, **more) -> dict:
    meta = {"version": __version__, **cfg.echo()}
    meta.update(more)
    return meta


def _need_model(cfg: RunConfig) -> None:
    if not cfg.model:
        raise UsageError(f"{cfg.command} needs --model")
    parse_model(cfg.model)


def cmd_sample(cfg: RunConfig, kind: str) -> Table:
    _need_model(cfg)
    samples = _samples(kind, cfg)
    rows = [[r, s, c] for r, smp in enumerate(samples) for s, c in smp.measure.items()]
    censored = sum(not s.exact for s in samples)
    status = ";".join(s.status for s in samples)
    depths = ";".join(str(s.depth_used) for s in samples)
    return Table(["replication", "state", "count"], rows, _meta(cfg, censored=censored, status=status, depth_used=depths))


def cmd_mean_measure(cfg: RunConfig) -> Table:
    _need_model(cfg)
    if cfg.replications < 2:
        raise UsageError("mean-measure needs --replications >= 2")
    kind = cfg.extra["kind"]
    samples = _samples(kind, cfg)
    rep = mean_measure(samples, cfg.K)
    rows = [[s, e, se, rep.n, rep.censored_fraction] for s, e, se in rep.rows()]
    censored = sum(not s.exact for s in samples)
    return Table(["state", "estimate", "stderr", "n", "censored_fraction"], rows, _meta(cfg, censored=censored))


def cmd_invariant_oracle(cfg: RunConfig) -> Table:
    _need_model(cfg)
    model = parse_model(cfg.model)
    n = cfg.extra["n"]
    if n < 1:
        raise UsageError("--n must be positive")
    noise = NoiseField(cfg.seed, Coupling.TOTALLY_INDEPENDENT)
    rep = invariant_measure_oracle(model, cfg.K, n, noise, cap=cfg.extra["cap"])
    rows = [[s, e, se, rep.n, rep.censored_fraction] for s, e, se in rep.rows()]
    censored = round(rep.censored_fraction * rep.n)
    return Table(["state", "estimate", "stderr", "n", "censored_fraction"], rows, _meta(cfg, censored=censored))


def _meeting_job(job):
    dist, z0, horizon, trials, seed = job
    return meeting_experiment(dist, z0, horizon, trials, NoiseField(seed, Coupling.TOTALLY_INDEPENDENT))


def cmd_eft_connectivity(cfg: RunConfig) -> Table:
    if not cfg.dists:
        raise UsageError("eft-connectivity needs at least one --dist")
    z0, horizon, trials = cfg.extra["z0"], cfg.extra["horizon"], cfg.extra["trials"]
    if z0 < 1 or horizon < 1 or trials < 1:
        raise UsageError("--z0, --horizon and --trials must be positive")
    for d in cfg.dists:
        make_distribution(d)
    jobs = [(d, z0, horizon, trials, cfg.seed + r) for r, d in enumerate(cfg.dists)]
    if cfg.threads == 1 or len(jobs) == 1:
        results = [_meeting_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(ex.map(_meeting_job, jobs))
    rows = []
    for d, res in zip(cfg.dists, results):
        dist = make_distribution(d)
        alpha = dist.params[0] if dist.kind == "zeta" else ""
        rows.append([alpha, z0, horizon, trials, res.frequency, res.ci_low, res.ci_high])
    return Table(
        ["alpha", "z0", "horizon", "trials", "meeting_frequency", "ci_low", "ci_high"], rows, _meta(cfg, censored=0)
    )


def cmd_k_function(cfg: RunConfig) -> Table:
    _need_model(cfg)
    i, radii = cfg.extra["i"], cfg.extra["radii"]
    if not radii or min(radii) < 1:
        raise UsageError("--radius values must be at least 1")
    if cfg.K < i + max(radii):
        raise UsageError("--region must cover i + max radius")
    samples = _samples("taboo", cfg)
    rows = []
    for r in radii:
        est = k_function(samples, i, r, include_center=cfg.extra["include_center"])
        rows.append([i, r, "" if est.value is None else est.value, "" if est.stderr is None else est.stderr, est.n_conditioned, est.n])
    censored = sum(not s.exact for s in samples)
    return Table(["i", "r", "k", "stderr", "n_conditioned", "n"], rows, _meta(cfg, censored=censored))


def cmd_queue_demo(cfg: RunConfig) -> Table:
    _need_model(cfg)
    model = parse_model(cfg.model)
    rows, status, censored = [], [], 0
    for r in range(cfg.replications):
        noise = _noise(cfg, r)
        for kind, sampler in (("taboo", sample_taboo_pp), ("potential", sample_potential_pp)):
            smp = sampler(model, noise, cfg.K, cfg.max_n)
            rows.extend([r, kind, s, c] for s, c in smp.measure.items())
            status.append(f"{kind}:{smp.status}:{smp.depth_used}")
            censored += not smp.exact
    return Table(["replication", "kind", "state", "count"], rows, _meta(cfg, censored=censored, status=";".join(status)))


def cmd_bridge_dump(cfg: RunConfig) -> Table:
    _need_model(cfg)
    t_min, t_max = cfg.extra["t_min"], cfg.extra["t_max"]
    if t_min >= t_max:
        raise UsageError("--t-min must be smaller than --t-max")
    bridge = build_bridge(parse_model(cfg.model), _noise(cfg), t_min, t_max)
    lines = bridge.to_csv().splitlines()
    columns = lines[0].split(",")
    rows = [next(csv.reader([ln])) for ln in lines[1:]]
    rows = [[int(a) if a.lstrip("-").isdigit() else a for a in row] for row in rows]
    return Table(columns, rows, _meta(cfg, censored=0, vertices=bridge.n_vertices))


COMMANDS = {
    "sample-taboo": lambda c: cmd_sample(c, "taboo"),
    "sample-potential": lambda c: cmd_sample(c, "potential"),
    "mean-measure": cmd_mean_measure,
    "invariant-oracle": cmd_invariant_oracle,
    "eft-connectivity": cmd_eft_connectivity,
    "k-function": cmd_k_function,
    "queue-demo": cmd_queue_demo,
    "bridge-dump": cmd_bridge_dump,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="doeblin", description="Doeblin graphs, Taboo/Potential point processes and perfect sampling.")
    p.add_argument("--version", action="version", version=f"doeblin {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, model=None, coupling="common", K=20):
        sp.add_argument("--model", default=model, help="model spec, e.g. queue:geo:0.2:geo:0.2")
        sp.add_argument("--coupling", default=coupling, choices=[c.value for c in Coupling])
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--replications", type=int, default=1)
        sp.add_argument("--region", "--K", dest="K", type=int, default=K, help="region bound K")
        sp.add_argument("--max-n", type=int, default=100_000, help="backward depth cap")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", dest="fmt", choices=["csv", "json"])
        sp.add_argument("--threads", type=int, default=1)
        return sp

    common(sub.add_parser("sample-taboo", help="perfect Taboo samples on [0, K]"))
    sp = common(sub.add_parser("sample-potential", help="perfect Potential samples on [0, K]"))
    sp.add_argument("--strategy", default="linear", choices=["linear", "exponential_search"])
    sp = common(sub.add_parser("mean-measure", help="mean of perfect samples per state"), K=5)
    sp.add_argument("--kind", default="taboo", choices=["taboo", "potential"])
    sp = common(sub.add_parser("invariant-oracle", help="invariant measure from excursions"), coupling="totally_independent", K=10)
    sp.add_argument("--n", type=int, default=100_000, help="number of excursions")
    sp.add_argument("--cap", type=int, default=1_000_000, help="excursion length cap")
    sp = common(sub.add_parser("eft-connectivity", help="meeting frequency of two renewal walks"), coupling="totally_independent")
    sp.add_argument("--dist", dest="dists", action="append", default=[], help="jump distribution; repeatable")
    sp.add_argument("--z0", type=int, default=1)
    sp.add_argument("--horizon", type=int, default=100_000)
    sp.add_argument("--trials", type=int, default=1000)
    sp = common(sub.add_parser("k-function", help="K-function of perfect Taboo samples"), K=None)
    sp.add_argument("--i", type=int, required=True)
    sp.add_argument("--radius", dest="radii", type=int, action="append", default=[])
    sp.add_argument("--include-center", action="store_true")
    common(sub.add_parser("queue-demo", help="Taboo and Potential samples of one queue run"), model="queue:geo:0.2:geo:0.2", K=1000)
    sp = common(sub.add_parser("bridge-dump", help="vertices of a windowed bridge graph"))
    sp.add_argument("--t-min", type=int, default=-20)
    sp.add_argument("--t-max", type=int, default=1)
    return p


_BASE = {"command", "model", "dists", "coupling", "seed", "replications", "K", "max_n", "out", "fmt", "threads"}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    d = vars(ns).copy()
    if ns.command == "k-function":
        if not d["radii"]:
            d["radii"] = [1, 2, 5, 10]
        if d["K"] is None:
            d["K"] = d["i"] + max(d["radii"])
    extra = {k: v for k, v in d.items() if k not in _BASE}
    base = {k: v for k, v in d.items() if k in _BASE}
    base["dists"] = tuple(base.get("dists") or ())
    return RunConfig(**base, extra=extra)


def _destination(out: str) -> str:
    root = os.environ.get(OUTPUT_DIR_ENV)
    if root and not os.path.isabs(out):
        os.makedirs(root, exist_ok=True)
        return os.path.join(root, out)
    return out


def run(cfg: RunConfig) -> str:
    """Execute one command and return the rendered output (also written to ``cfg.out`` if set)."""
    text = COMMANDS[cfg.command](cfg).render(cfg.format)
    if cfg.out:
        with open(_destination(cfg.out), "w", newline="") as fh:
            fh.write(text)
    return text


def main(argv: "list[str] | None" = None) -> int:
    try:
        cfg = config_from_args(build_parser().parse_args(argv))
        text = run(cfg)
    except (UsageError, ValueError) as exc:
        print(f"doeblin: error: {exc}", file=sys.stderr)
        return 1
    except (DoeblinError, RuntimeError, OSError, MemoryError) as exc:
        print(f"doeblin: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if not cfg.out:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
