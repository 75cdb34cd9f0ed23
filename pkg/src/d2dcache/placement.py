"""Cache placement strategies under per-user capacity.

A placement is a boolean ``(n_users, n_files)`` matrix; equivalently a subset
of the ground set ``{(user, file)}``.  A placement is feasible when no user
holds more than ``cfg.slots`` files, which is a partition matroid with one
block per user.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import as_generator, check_placement, check_requests
from .analytics import (
    SystemConfig,
    cacher_rates,
    ratio_from_rates,
    ratio_ignoring_duration_from_rates,
)
from .mobility import MobilityModel

logger = logging.getLogger(__name__)

__all__ = [
    "PriorityEntry",
    "greedy_place",
    "optimal_place",
    "random_place",
    "popular_place",
    "marginal_gain",
    "is_feasible",
    "optimal_work",
    "write_placement_csv",
    "read_placement_csv",
    "write_gain_trace_csv",
]

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class PriorityEntry:
    user: int
    file: int
    gain: float


def _ratio_fn(ignore_contact_duration: bool):
    return ratio_ignoring_duration_from_rates if ignore_contact_duration else ratio_from_rates


def is_feasible(x, slots: int) -> bool:
    return bool(np.all(np.asarray(x).sum(axis=1) <= slots))


def _column_ratios(m: MobilityModel, col: np.ndarray, cfg: SystemConfig, fn) -> np.ndarray:
    """Per-request ratio of every user for one file given who caches it (1 for cachers)."""
    out = np.ones(col.size)
    if not col.any():
        return np.zeros(col.size)
    x = col[:, None]
    for i in np.flatnonzero(~col):
        out[i] = fn(*cacher_rates(m, x, i, 0), cfg)
    return out


def _file_utility(m, col, p_col, cfg, fn) -> float:
    return float(np.dot(p_col, _column_ratios(m, col, cfg, fn))) / col.size


def _gain(m, x, req, cfg, fn, j, f, current) -> float:
    """Marginal gain of adding ``(j, f)``; ``current`` holds the file's present ratios."""
    n = x.shape[0]
    col = x[:, f].copy()
    col[j] = True
    new = _column_ratios(m, col, cfg, fn)
    others = ~col
    total = req[j, f] * (1.0 - current[j]) + float(np.dot(req[others, f], new[others] - current[others]))
    return total / n


def marginal_gain(placement, j: int, f: int, m: MobilityModel, req, cfg: SystemConfig,
                  ignore_contact_duration: bool = False) -> float:
    """Increase of the overall ratio when user ``j`` additionally caches file ``f``.

    Only the file-``f`` terms change: ``j``'s own request now hits its cache,
    and every other non-caching user gains from one more potential donor.
    """
    x = np.asarray(placement).astype(bool)
    if x[j, f]:
        raise ValueError(f"user {j} already caches file {f}")
    req = np.asarray(req, dtype=float)
    fn = _ratio_fn(ignore_contact_duration)
    current = _column_ratios(m, x[:, f], cfg, fn)
    return _gain(m, x, req, cfg, fn, j, f, current)


def greedy_place(m: MobilityModel, req, cfg: SystemConfig, ignore_contact_duration: bool = False):
    """Greedy maximization of the offloading ratio over the capacity matroid.

    Starts empty and repeatedly adds the feasible ``(user, file)`` with the
    largest marginal gain, ties going to the lower file and then the lower
    user.  After each pick only the gains for the picked file are refreshed,
    since a file's ratios depend on nobody else's cache contents.

    Returns the placement and the ordered list of picks with their gains.
    """
    n_users = m.n_users
    req = check_requests(req, n_users=n_users)
    n_files = req.shape[1]
    slots = cfg.slots
    fn = _ratio_fn(ignore_contact_duration)

    x = np.zeros((n_users, n_files), dtype=bool)
    ratios = np.zeros((n_users, n_files))
    gains = np.full((n_users, n_files), -np.inf)

    def refresh(f):
        for j in range(n_users):
            if not x[j, f] and x[j].sum() < slots:
                gains[j, f] = _gain(m, x, req, cfg, fn, j, f, ratios[:, f])
            else:
                gains[j, f] = -np.inf

    for f in range(n_files):
        refresh(f)

    trace: list[PriorityEntry] = []
    target = n_users * min(slots, n_files)
    while len(trace) < target:
        best = gains.max()
        if not np.isfinite(best):
            break
        cand = np.argwhere(gains >= best - _TIE_TOL)
        # argwhere is user-major; ties are resolved by (file, user)
        j, f = min(map(tuple, cand), key=lambda jf: (jf[1], jf[0]))
        g = float(gains[j, f])
        if trace and g > trace[-1].gain + 1e-9:
            logger.info("greedy gain increased from %.3g to %.3g at step %d", trace[-1].gain, g, len(trace))
        trace.append(PriorityEntry(int(j), int(f), g))
        x[j, f] = True
        ratios[:, f] = _column_ratios(m, x[:, f], cfg, fn)
        if x[j].sum() >= slots:
            gains[j, :] = -np.inf
        refresh(f)
    return x, trace


def optimal_work(n_users: int, n_files: int, slots: int) -> int:
    """Table work of the file-by-file dynamic program used by :func:`optimal_place`."""
    cap = min(slots, n_files)
    return n_files * (cap + 1) ** n_users * 2**n_users


def optimal_place(m: MobilityModel, req, cfg: SystemConfig, budget: int = 10**7,
                  ignore_contact_duration: bool = False) -> np.ndarray:
    """Exact maximizer of the analytic offloading ratio.

    The objective is a sum of per-file utilities, each depending only on the
    set of users caching that file.  A dynamic program over files with the
    vector of remaining per-user capacities as state enumerates every feasible
    placement implicitly.  Among optimal placements the lexicographically
    smallest one in file-major order is returned.
    """
    n_users = m.n_users
    req = check_requests(req, n_users=n_users)
    n_files = req.shape[1]
    cap = min(cfg.slots, n_files)
    work = optimal_work(n_users, n_files, cfg.slots)
    if work > budget:
        raise ValueError(
            f"optimal placement needs about {work} table operations, above the budget of {budget}"
        )
    fn = _ratio_fn(ignore_contact_duration)

    # columns sorted lexicographically by (x_0, x_1, ...), all-zero first
    columns = np.array(list(itertools.product([False, True], repeat=n_users)), dtype=bool)
    utility = np.empty((n_files, len(columns)))
    for f in range(n_files):
        for c, col in enumerate(columns):
            utility[f, c] = _file_utility(m, col, req[:, f], cfg, fn)

    radix = (cap + 1) ** np.arange(n_users)
    n_states = (cap + 1) ** n_users
    digits = (np.arange(n_states)[:, None] // radix) % (cap + 1)
    col_cost = columns.astype(int) @ radix

    value = np.zeros((n_files + 1, n_states))
    for f in range(n_files - 1, -1, -1):
        best = np.full(n_states, -np.inf)
        for c, col in enumerate(columns):
            ok = np.all(digits[:, col] >= 1, axis=1)
            cand = np.full(n_states, -np.inf)
            cand[ok] = utility[f, c] + value[f + 1, np.flatnonzero(ok) - col_cost[c]]
            np.maximum(best, cand, out=best)
        value[f] = best

    x = np.zeros((n_users, n_files), dtype=bool)
    state = n_states - 1
    for f in range(n_files):
        target = value[f, state]
        for c, col in enumerate(columns):
            if np.any(digits[state, col] < 1):
                continue
            if utility[f, c] + value[f + 1, state - col_cost[c]] >= target - _TIE_TOL:
                x[:, f] = col
                state -= col_cost[c]
                break
    return x


def random_place(req, cfg: SystemConfig, rng=None) -> np.ndarray:
    """Each user caches ``slots`` distinct files drawn proportionally to its request probabilities.

    Weighted sampling without replacement via exponential keys: file ``f``
    gets key ``log(u) / p_f`` and the largest keys win, which has the same
    law as drawing files one at a time with renormalized weights.
    """
    req = check_requests(req)
    rng = as_generator(rng)
    n_users, n_files = req.shape
    k = min(cfg.slots, n_files)
    x = np.zeros((n_users, n_files), dtype=bool)
    for i in range(n_users):
        u = rng.random(n_files)
        with np.errstate(divide="ignore"):
            keys = np.where(req[i] > 0, np.log(u) / req[i], -np.inf)
        order = np.lexsort((rng.random(n_files), -keys))
        x[i, order[:k]] = True
    return x


def popular_place(req, cfg: SystemConfig) -> np.ndarray:
    """Every user caches the files with the highest mean request probability."""
    req = check_requests(req)
    n_users, n_files = req.shape
    k = min(cfg.slots, n_files)
    top = np.argsort(-req.mean(axis=0), kind="stable")[:k]
    x = np.zeros((n_users, n_files), dtype=bool)
    x[:, top] = True
    return x


def write_placement_csv(x, path, header_comment: str | None = None) -> None:
    x = np.asarray(x).astype(bool)
    with open(Path(path), "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "file"])
        for j, f in np.argwhere(x):
            w.writerow([int(j), int(f)])


def read_placement_csv(path, n_users: int, n_files: int) -> np.ndarray:
    x = np.zeros((n_users, n_files), dtype=bool)
    with open(Path(path), newline="") as fh:
        for rec in csv.DictReader(ln for ln in fh if not ln.startswith("#")):
            x[int(rec["user"]), int(rec["file"])] = True
    return check_placement(x, n_users, n_files)


def write_gain_trace_csv(trace, path, header_comment: str | None = None) -> None:
    with open(Path(path), "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "user", "file", "gain"])
        for k, e in enumerate(trace):
            w.writerow([k, e.user, e.file, f"{e.gain:.9g}"])
