"""Command-line experiment runner.

Usage::

    d2dcache analyze  [--config FILE] [--out DIR] [--seed N] [--set key=value ...]
    d2dcache simulate ...
    d2dcache place    ...
    d2dcache fit      ...

The config file is flat ``key = value`` text (``#`` comments allowed);
``--set`` overrides apply on top.  List-valued keys take comma-separated
values and define a sweep (cartesian product).  Every CSV starts with a
``#`` metadata line carrying the config hash and the seed.

All randomness derives from ``--seed``: each consumer gets its own stream
seeded by ``sha256("<seed>/<purpose>/<sweep key>...")``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import logging
import sys
from dataclasses import dataclass
from pathlib import Path


from ._validation import substream
from .analytics import SystemConfig, overall_ratio, zipf_requests
from .instancegen import (
    GammaSpec,
    gamma_from_moments,
    read_mobility_csv,
    sample_mobility,
    write_mobility_csv,
)
from .mobility import TraceFormatError, fit_from_trace, read_trace, scale_speed
from .placement import (
    greedy_place,
    optimal_place,
    optimal_work,
    popular_place,
    random_place,
    write_gain_trace_csv,
    write_placement_csv,
)
from .simulator import SimScenario, replay_trace, simulate_resource_limited, simulate_union

logger = logging.getLogger(__name__)

STRATEGIES = ("greedy", "greedy_ignore", "random", "popular", "optimal")

# key -> (kind, default)
KEYS = {
    "n_users": ("intlist", [15]),
    "n_files": ("int", 100),
    "file_size": ("float", 300.0),
    "cache_size": ("float", 1000.0),
    "rate": ("float", 1.5),
    "deadline": ("float", 300.0),
    "gamma_r": ("floatlist", [0.6]),
    "mu": ("floatlist", [1.0]),
    "mean_contact": ("floatlist", []),
    "strategies": ("strlist", ["greedy", "random", "popular"]),
    "n_instances": ("int", 1),
    "n_requests": ("int", 10000),
    "mode": ("str", "union"),
    "blocks": ("int", 15),
    "source": ("str", "sampled"),
    "mobility_csv": ("str", ""),
    "trace": ("str", ""),
    "fit_window": ("window", None),
    "eval_window": ("window", None),
    "optimal_budget": ("int", 10**7),
    "inter_shape": ("float", 4.43),
    "inter_scale": ("float", 1 / 1088),
    "contact_shape": ("float", 4.43 * 25),
    "contact_scale": ("float", 1 / 1088 / 5),
}


class ConfigError(ValueError):
    pass


def _parse_value(key: str, raw: str, where: str):
    kind = KEYS[key][0]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if kind == "intlist":
            return [int(s) for s in items]
        if kind == "floatlist":
            return [float(s) for s in items]
        if kind == "strlist":
            return items
        if kind == "window":
            if len(items) != 2:
                raise ValueError("expected 'start,end'")
            return (float(items[0]), float(items[1]))
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {raw!r} ({exc})") from None
    raise AssertionError(kind)


def _parse_assignment(text: str, where: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"{where}: expected key = value, got {text.strip()!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    return key, raw


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the config file, then ``--set`` overrides."""
    cfg = {k: v for k, (_, v) in KEYS.items()}
    if path is not None:
        try:
            lines = Path(path).read_text().splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for lineno, line in enumerate(lines, 1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            where = f"{path}:{lineno}"
            key, raw = _parse_assignment(s, where)
            cfg[key] = _parse_value(key, raw, where)
    for k, text in enumerate(overrides, 1):
        where = f"--set #{k}"
        key, raw = _parse_assignment(text, where)
        cfg[key] = _parse_value(key, raw, where)
    return cfg


def config_hash(cfg: dict, command: str) -> str:
    canon = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg))
    return hashlib.sha256(f"{command}\n{canon}".encode()).hexdigest()[:16]


def validate(cfg: dict, command: str) -> SystemConfig:
    def need(cond, field, msg):
        if not cond:
            raise ConfigError(f"field {field!r}: {msg}")

    try:
        sc = SystemConfig(cfg["file_size"], cfg["cache_size"], cfg["rate"], cfg["deadline"])
    except ValueError as exc:
        raise ConfigError(f"system parameters: {exc}") from None
    if command == "fit":
        need(cfg["trace"], "trace", "a trace file is required")
        return sc
    need(len(cfg["strategies"]) > 0, "strategies", "at least one strategy is required")
    for s in cfg["strategies"]:
        need(s in STRATEGIES, "strategies", f"unknown strategy {s!r} (choose from {', '.join(STRATEGIES)})")
    need(cfg["n_files"] >= 1, "n_files", "must be >= 1")
    need(len(cfg["n_users"]) > 0 and all(n >= 1 for n in cfg["n_users"]), "n_users", "must be >= 1")
    need(len(cfg["gamma_r"]) > 0 and all(g >= 0 for g in cfg["gamma_r"]), "gamma_r", "must be >= 0")
    need(len(cfg["mu"]) > 0 and all(m > 0 for m in cfg["mu"]), "mu", "must be > 0")
    need(all(t > 0 for t in cfg["mean_contact"]), "mean_contact", "must be > 0")
    need(cfg["n_instances"] >= 1, "n_instances", "must be >= 1")
    need(cfg["n_requests"] >= 1, "n_requests", "must be >= 1")
    need(cfg["mode"] in ("union", "resource_limited"), "mode", "must be union or resource_limited")
    need(cfg["blocks"] >= 1, "blocks", "must be >= 1")
    need(cfg["source"] in ("sampled", "mobility_csv", "trace"), "source", "must be sampled, mobility_csv or trace")
    for k in ("inter_shape", "inter_scale", "contact_shape", "contact_scale"):
        need(cfg[k] > 0, k, "must be > 0")
    if cfg["source"] == "mobility_csv":
        need(cfg["mobility_csv"], "mobility_csv", "path required for source=mobility_csv")
    if cfg["source"] == "trace":
        need(cfg["trace"], "trace", "path required for source=trace")
        need(cfg["fit_window"] is not None, "fit_window", "required for source=trace")
        if command == "simulate":
            need(cfg["eval_window"] is not None, "eval_window", "required to simulate on a trace")
    if command == "place":
        for k in ("n_users", "gamma_r", "mu", "mean_contact"):
            need(len(cfg[k]) <= 1, k, "place takes a single value, not a sweep")
    if "optimal" in cfg["strategies"] and cfg["source"] == "sampled":
        for n in cfg["n_users"]:
            work = optimal_work(n, cfg["n_files"], sc.slots)
            need(work <= cfg["optimal_budget"], "strategies",
                 f"optimal placement for {n} users needs {work} operations, "
                 f"above optimal_budget={cfg['optimal_budget']}")
    return sc


# ---------------------------------------------------------------------------


@dataclass
class _Point:
    n_users: int
    gamma_r: float
    mean_contact: float | None
    mu: float
    instance: int

    def key(self):
        mc = "default" if self.mean_contact is None else _fmt(self.mean_contact)
        return [self.n_users, _fmt(self.gamma_r), mc, _fmt(self.mu), self.instance]


SWEEP_COLUMNS = ["n_users", "gamma_r", "mean_contact", "mu", "instance"]


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def _derive_seed(seed: int, *labels) -> int:
    return int(substream(seed, *labels).integers(0, 2**63 - 1))


class _Runner:
    def __init__(self, cfg: dict, sc: SystemConfig, seed: int):
        self.cfg, self.sc, self.seed = cfg, sc, seed
        self._trace = None
        self._fitted = None

    def trace(self):
        if self._trace is None:
            self._trace = read_trace(self.cfg["trace"])
        return self._trace

    def points(self):
        c = self.cfg
        if c["source"] == "sampled":
            users = c["n_users"]
        else:
            users = [self.base_mobility(None, None, 0).n_users]
        contacts = c["mean_contact"] or [None]
        for n, g, mc, inst, mu in itertools.product(users, c["gamma_r"], contacts,
                                                    range(c["n_instances"]), c["mu"]):
            yield _Point(n, g, mc, mu, inst)

    def base_mobility(self, n_users, mean_contact, instance):
        c = self.cfg
        if c["source"] == "mobility_csv":
            return read_mobility_csv(c["mobility_csv"])
        if c["source"] == "trace":
            if self._fitted is None:
                self._fitted = fit_from_trace(self.trace(), c["fit_window"]).mobility
            return self._fitted
        inter = GammaSpec(c["inter_shape"], c["inter_scale"])
        if mean_contact is None:
            contact = GammaSpec(c["contact_shape"], c["contact_scale"])
        else:
            contact = gamma_from_moments(1.0 / mean_contact, inter.variance)
        rng = substream(self.seed, "mobility", n_users, mean_contact, instance)
        return sample_mobility(n_users, inter, contact, rng)

    def instance(self, pt: _Point):
        m = scale_speed(self.base_mobility(pt.n_users, pt.mean_contact, pt.instance), pt.mu)
        req = zipf_requests(m.n_users, self.cfg["n_files"], pt.gamma_r)
        return m, req

    def place(self, strategy: str, pt: _Point, m, req):
        sc = self.sc
        if strategy == "greedy":
            return greedy_place(m, req, sc)
        if strategy == "greedy_ignore":
            return greedy_place(m, req, sc, ignore_contact_duration=True)
        if strategy == "random":
            rng = substream(self.seed, "random_place", pt.n_users, pt.gamma_r, pt.mean_contact, pt.instance)
            return random_place(req, sc, rng), None
        if strategy == "popular":
            return popular_place(req, sc), None
        if strategy == "optimal":
            return optimal_place(m, req, sc, self.cfg["optimal_budget"]), None
        raise ConfigError(f"unknown strategy {strategy!r}")


def _write_csv(path: Path, meta: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {meta}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _meta(command: str, cfg: dict, seed: int) -> str:
    meta = f"d2dcache {command} config_sha256={config_hash(cfg, command)} seed={seed}"
    if command != "fit" and "greedy_ignore" in cfg["strategies"]:
        # the baseline objective is a stand-in: any single meeting delivers the whole file
        meta += " note=greedy_ignore_assumes_one_contact_delivers_whole_file"
    return meta


def cmd_analyze(cfg: dict, out: Path, seed: int) -> Path:
    sc = validate(cfg, "analyze")
    run = _Runner(cfg, sc, seed)
    rows = []
    for pt in run.points():
        m, req = run.instance(pt)
        for s in cfg["strategies"]:
            x, _ = run.place(s, pt, m, req)
            rows.append(pt.key() + [s, _fmt(overall_ratio(m, x, req, sc))])
    path = out / "analyze.csv"
    meta = _meta("analyze", cfg, seed)
    _write_csv(path, meta, SWEEP_COLUMNS + ["strategy", "ratio"], rows)
    return path


def cmd_simulate(cfg: dict, out: Path, seed: int) -> Path:
    sc = validate(cfg, "simulate")
    run = _Runner(cfg, sc, seed)
    rows = []
    for pt in run.points():
        m, req = run.instance(pt)
        for s in cfg["strategies"]:
            x, _ = run.place(s, pt, m, req)
            analytic = overall_ratio(m, x, req, sc)
            sim_seed = _derive_seed(seed, "simulate", *pt.key(), s)
            if cfg["source"] == "trace":
                tr = run.trace()
                if cfg["mode"] == "union":
                    rep = replay_trace(tr, x, req, sc, cfg["eval_window"], sim_seed, cfg["n_requests"])
                else:
                    scen = SimScenario(m, x, req, sc, cfg["n_requests"], sim_seed, "resource_limited", cfg["blocks"])
                    rep = simulate_resource_limited(scen, trace=tr, window=cfg["eval_window"])
            else:
                blocks = cfg["blocks"] if cfg["mode"] == "resource_limited" else None
                scen = SimScenario(m, x, req, sc, cfg["n_requests"], sim_seed, cfg["mode"], blocks)
                rep = simulate_union(scen) if cfg["mode"] == "union" else simulate_resource_limited(scen)
            rows.append(pt.key() + [s, cfg["mode"], _fmt(analytic), _fmt(rep.mean_ratio),
                                    _fmt(rep.stderr), rep.n_samples])
    path = out / "simulate.csv"
    meta = _meta("simulate", cfg, seed)
    _write_csv(path, meta, SWEEP_COLUMNS + ["strategy", "mode", "analytic", "simulated", "stderr", "n"], rows)
    return path


def cmd_place(cfg: dict, out: Path, seed: int) -> list[Path]:
    sc = validate(cfg, "place")
    run = _Runner(cfg, sc, seed)
    pt = next(run.points())
    m, req = run.instance(pt)
    meta = _meta("place", cfg, seed)
    paths = []
    for s in cfg["strategies"]:
        x, trace = run.place(s, pt, m, req)
        p = out / f"placement_{s}.csv"
        write_placement_csv(x, p, meta)
        paths.append(p)
        if trace is not None:
            p = out / f"gains_{s}.csv"
            write_gain_trace_csv(trace, p, meta)
            paths.append(p)
    return paths


def cmd_fit(cfg: dict, out: Path, seed: int) -> list[Path]:
    validate(cfg, "fit")
    trace = read_trace(cfg["trace"])
    window = cfg["fit_window"] if cfg["fit_window"] is not None else trace.span
    res = fit_from_trace(trace, window)
    meta = _meta("fit", cfg, seed)
    mob = out / "mobility.csv"
    write_mobility_csv(res.mobility, mob, meta)
    diag = out / "diagnostics.csv"
    _write_csv(diag, meta, ["user_a", "user_b", "reason"],
               [[a, b, "no_gap_in_window"] for a, b in res.skipped_pairs])
    return [mob, diag]


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "place": cmd_place, "fit": cmd_fit}


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="d2dcache", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        args.out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg, args.out, args.seed)
    except (ConfigError, TraceFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in result if isinstance(result, list) else [result]:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
