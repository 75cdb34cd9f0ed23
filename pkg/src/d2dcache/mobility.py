"""Pairwise alternating-renewal contact processes.

Each unordered user pair alternates between *contact* (exponential with rate
``contact_rate``) and *apart* (exponential with rate ``intercontact_rate``).
A pair that never meets is stored with the convention
``contact_rate = inf, intercontact_rate = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import as_generator, check_positive

logger = logging.getLogger(__name__)

__all__ = [
    "PairParams",
    "MobilityModel",
    "PairTimeline",
    "ContactTrace",
    "TraceFormatError",
    "stationary_noncontact_prob",
    "scale_speed",
    "sample_pair_timeline",
    "synthesize_trace",
    "merge_contacts",
    "fit_from_trace",
    "read_trace",
    "write_trace",
]


@dataclass(frozen=True)
class PairParams:
    contact_rate: float
    intercontact_rate: float

    def __post_init__(self):
        lc, li = float(self.contact_rate), float(self.intercontact_rate)
        if np.isinf(lc) and li == 0.0:
            return
        if not (lc > 0 and li > 0 and np.isfinite(lc) and np.isfinite(li)):
            raise ValueError(
                f"pair rates must be positive and finite, or (inf, 0) for no contact; got ({lc}, {li})"
            )

    @classmethod
    def no_contact(cls) -> "PairParams":
        return cls(np.inf, 0.0)

    @property
    def is_no_contact(self) -> bool:
        return bool(np.isinf(self.contact_rate))

    @property
    def mean_contact(self) -> float:
        return 1.0 / self.contact_rate

    @property
    def mean_intercontact(self) -> float:
        return np.inf if self.is_no_contact else 1.0 / self.intercontact_rate


def stationary_noncontact_prob(p: PairParams) -> float:
    """Long-run probability that the pair is apart, ``lc / (lc + li)``."""
    if p.is_no_contact:
        return 1.0
    return p.contact_rate / (p.contact_rate + p.intercontact_rate)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MobilityModel:
    """Symmetric matrices of pair contact and inter-contact rates.

    Diagonal entries are forced to the no-contact convention and ignored
    everywhere else.
    """

    contact_rate: np.ndarray
    intercontact_rate: np.ndarray

    def __post_init__(self):
        lc = np.array(self.contact_rate, dtype=float)
        li = np.array(self.intercontact_rate, dtype=float)
        if lc.ndim != 2 or lc.shape[0] != lc.shape[1] or lc.shape != li.shape:
            raise ValueError("rate matrices must be square and of equal shape")
        np.fill_diagonal(lc, np.inf)
        np.fill_diagonal(li, 0.0)
        if not (np.array_equal(lc, lc.T) and np.array_equal(li, li.T)):
            raise ValueError("rate matrices must be symmetric")
        none = np.isinf(lc)
        if np.any(li[none] != 0.0):
            raise ValueError("pairs with infinite contact rate must have zero inter-contact rate")
        ok = ~none
        if np.any(~(lc[ok] > 0)) or np.any(~(li[ok] > 0)) or np.any(~np.isfinite(li[ok])):
            raise ValueError("finite pair rates must be strictly positive")
        object.__setattr__(self, "contact_rate", _readonly(lc))
        object.__setattr__(self, "intercontact_rate", _readonly(li))

    @classmethod
    def from_pairs(cls, n_users: int, pairs: dict) -> "MobilityModel":
        """Build from ``{(a, b): PairParams}``; unlisted pairs never meet."""
        lc = np.full((n_users, n_users), np.inf)
        li = np.zeros((n_users, n_users))
        for (a, b), p in pairs.items():
            lc[a, b] = lc[b, a] = p.contact_rate
            li[a, b] = li[b, a] = p.intercontact_rate
        return cls(lc, li)

    @classmethod
    def uniform(cls, n_users: int, contact_rate: float, intercontact_rate: float) -> "MobilityModel":
        lc = np.full((n_users, n_users), float(contact_rate))
        li = np.full((n_users, n_users), float(intercontact_rate))
        return cls(lc, li)

    @property
    def n_users(self) -> int:
        return self.contact_rate.shape[0]

    def pair(self, i: int, j: int) -> PairParams:
        return PairParams(self.contact_rate[i, j], self.intercontact_rate[i, j])

    def noncontact_prob(self) -> np.ndarray:
        """Matrix of stationary apart probabilities (1 on the diagonal and for no-contact pairs)."""
        lc, li = self.contact_rate, self.intercontact_rate
        with np.errstate(invalid="ignore"):
            p = lc / (lc + li)
        p[np.isinf(lc)] = 1.0
        return p

    def pairs(self):
        """Iterate over ``(a, b)`` with ``a < b``."""
        n = self.n_users
        for a in range(n):
            for b in range(a + 1, n):
                yield a, b


def scale_speed(m: MobilityModel, mu: float) -> MobilityModel:
    """Multiply every finite rate by ``mu`` (users moving ``mu`` times faster)."""
    mu = check_positive(mu, "speed factor")
    lc = np.array(m.contact_rate)
    li = np.array(m.intercontact_rate)
    finite = np.isfinite(lc)
    lc[finite] *= mu
    li[finite] *= mu
    return MobilityModel(lc, li)


@dataclass(frozen=True)
class PairTimeline:
    """Alternating contact/apart intervals tiling ``[0, horizon]``.

    ``boundaries`` has one more entry than ``in_contact``; interval ``k`` spans
    ``boundaries[k]`` to ``boundaries[k + 1]``.
    """

    pair: tuple
    boundaries: np.ndarray
    in_contact: np.ndarray
    horizon: float

    @property
    def intervals(self) -> list[tuple[float, float, str]]:
        b = self.boundaries
        return [
            (float(b[k]), float(b[k + 1]), "contact" if c else "apart")
            for k, c in enumerate(self.in_contact)
        ]

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def contact_intervals(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.flatnonzero(self.in_contact)
        return self.boundaries[idx], self.boundaries[idx + 1]

    def time_apart(self) -> float:
        return float(self.durations[~self.in_contact].sum())


def sample_pair_timeline(p: PairParams, horizon: float, rng=None, pair=(0, 1)) -> PairTimeline:
    """Sample a stationary timeline of one pair over ``[0, horizon]``.

    The initial state is drawn from the stationary distribution; by
    memorylessness the residual first duration is a plain exponential, so no
    burn-in is required.
    """
    horizon = check_positive(horizon, "horizon")
    rng = as_generator(rng)
    if p.is_no_contact:
        return PairTimeline(tuple(pair), np.array([0.0, horizon]), np.array([False]), horizon)

    lc, li = p.contact_rate, p.intercontact_rate
    start_contact = bool(rng.random() < li / (lc + li))
    cycle = 1.0 / lc + 1.0 / li
    chunks = []
    total = 0.0
    state = start_contact
    while total < horizon:
        n = int(1.2 * (horizon - total) / cycle) + 16
        first = rng.exponential(1.0 / lc if state else 1.0 / li, n)
        second = rng.exponential(1.0 / li if state else 1.0 / lc, n)
        d = np.empty(2 * n)
        d[0::2], d[1::2] = first, second
        chunks.append(d)
        total += d.sum()
    durations = np.concatenate(chunks)
    ends = np.cumsum(durations)
    m = int(np.searchsorted(ends, horizon, side="left")) + 1
    boundaries = np.empty(m + 1)
    boundaries[0] = 0.0
    boundaries[1:m] = ends[: m - 1]
    boundaries[m] = horizon
    in_contact = np.zeros(m, dtype=bool)
    in_contact[0::2] = start_contact
    in_contact[1::2] = not start_contact
    return PairTimeline(tuple(pair), boundaries, in_contact, horizon)


@dataclass(frozen=True)
class ContactTrace:
    """Contact sightings ``(user_a, user_b, t_start, t_end)``, 0-based user ids."""

    records: np.ndarray = field(repr=False)
    n_users: int

    def __post_init__(self):
        r = np.asarray(self.records, dtype=float).reshape(-1, 4)
        if r.size:
            if np.any(r[:, 2] >= r[:, 3]):
                raise ValueError("every record needs t_start < t_end")
            ids = r[:, :2]
            if np.any(ids != np.round(ids)) or np.any(ids < 0) or np.any(ids >= self.n_users):
                raise ValueError(f"user ids must be integers in [0, {self.n_users})")
            if np.any(r[:, 0] == r[:, 1]):
                raise ValueError("a record must involve two distinct users")
        r = r.copy()
        r.setflags(write=False)
        object.__setattr__(self, "records", r)

    def __len__(self):
        return len(self.records)

    @property
    def span(self) -> tuple[float, float]:
        if len(self.records) == 0:
            raise ValueError("trace has no records")
        return float(self.records[:, 2].min()), float(self.records[:, 3].max())


class TraceFormatError(ValueError):
    """Malformed contact-trace input; ``lineno`` is 1-based when known."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


def read_trace(path, n_users: int | None = None) -> ContactTrace:
    """Parse a whitespace-separated ``a b t_start t_end`` trace file."""
    rows = []
    with open(Path(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 4:
                raise TraceFormatError(f"expected 4 columns, found {len(parts)}", lineno)
            try:
                a, b = int(parts[0]), int(parts[1])
                t0, t1 = float(parts[2]), float(parts[3])
            except ValueError:
                raise TraceFormatError(f"cannot parse {s!r}", lineno) from None
            if a < 0 or b < 0 or a == b:
                raise TraceFormatError("user ids must be distinct non-negative integers", lineno)
            if not (np.isfinite(t0) and np.isfinite(t1)) or t0 < 0 or t0 >= t1:
                raise TraceFormatError("need 0 <= t_start < t_end", lineno)
            rows.append((a, b, t0, t1))
    if not rows:
        raise TraceFormatError("no records")
    max_id = max(max(r[0], r[1]) for r in rows)
    if n_users is None:
        n_users = max_id + 1
    elif max_id >= n_users:
        raise TraceFormatError(f"user id {max_id} out of range for {n_users} users")
    return ContactTrace(np.array(rows, dtype=float), n_users)


def write_trace(trace: ContactTrace, path) -> None:
    with open(Path(path), "w") as fh:
        fh.write(f"# user_a user_b t_start t_end  ({trace.n_users} users)\n")
        for a, b, t0, t1 in trace.records:
            fh.write(f"{int(a)} {int(b)} {t0:.6f} {t1:.6f}\n")


def synthesize_trace(m: MobilityModel, horizon: float, rng=None) -> ContactTrace:
    """Sample every pair's timeline and emit its contact intervals as trace records."""
    rng = as_generator(rng)
    rows = []
    for a, b in m.pairs():
        p = m.pair(a, b)
        if p.is_no_contact:
            continue
        tl = sample_pair_timeline(p, horizon, rng, pair=(a, b))
        starts, ends = tl.contact_intervals()
        keep = ends > starts
        rows.append(np.column_stack([np.full(keep.sum(), a), np.full(keep.sum(), b), starts[keep], ends[keep]]))
    records = np.vstack(rows) if rows else np.empty((0, 4))
    return ContactTrace(records, m.n_users)


def merge_contacts(trace: ContactTrace, window: tuple[float, float]) -> dict:
    """Merge overlapping sightings per pair and clip them to ``window``.

    Returns ``{(a, b): (starts, ends)}`` with ``a < b`` and sorted, disjoint,
    non-empty intervals. Records touching or overlapping the previous merged
    interval (``t_start <= previous end``) are joined.
    """
    w0, w1 = map(float, window)
    if not w0 < w1:
        raise ValueError(f"window start must precede its end, got {window}")
    r = trace.records
    a = np.minimum(r[:, 0], r[:, 1]).astype(int)
    b = np.maximum(r[:, 0], r[:, 1]).astype(int)
    order = np.lexsort((r[:, 2], b, a))
    groups: dict = {}
    for k in order:
        groups.setdefault((int(a[k]), int(b[k])), []).append((r[k, 2], r[k, 3]))

    merged = {}
    for key, recs in groups.items():
        spans = []
        for s, e in recs:
            if spans and s <= spans[-1][1]:
                spans[-1][1] = max(spans[-1][1], e)
            else:
                spans.append([s, e])
        spans = np.clip(np.array(spans, dtype=float), w0, w1)
        spans = spans[spans[:, 1] > spans[:, 0]]
        if len(spans):
            merged[key] = (spans[:, 0].copy(), spans[:, 1].copy())
    return merged


@dataclass(frozen=True)
class TraceFit:
    mobility: MobilityModel
    skipped_pairs: list
    n_contacts: dict
    n_gaps: dict


def fit_from_trace(trace: ContactTrace, observation_window: tuple[float, float]) -> TraceFit:
    """Estimate pair rates as inverse mean contact / inter-contact durations.

    Contact intervals and the apart gaps between them, including partial ones
    at the window edges, all enter the means. Pairs that are in contact but
    never observed apart cannot yield an inter-contact rate; they fall back to
    the no-contact convention and are listed in ``skipped_pairs``.
    """
    if len(trace) == 0:
        raise ValueError("trace has no records")
    w0, w1 = map(float, observation_window)
    merged = merge_contacts(trace, (w0, w1))
    n = trace.n_users
    lc = np.full((n, n), np.inf)
    li = np.zeros((n, n))
    skipped, n_contacts, n_gaps = [], {}, {}
    for (a, b), (s, e) in merged.items():
        gaps = np.concatenate([[s[0] - w0], s[1:] - e[:-1], [w1 - e[-1]]])
        gaps = gaps[gaps > 0]
        n_contacts[(a, b)] = len(s)
        n_gaps[(a, b)] = len(gaps)
        if len(gaps) == 0:
            skipped.append((a, b))
            logger.warning("pair (%d, %d) never observed apart; treated as no-contact", a, b)
            continue
        lc[a, b] = lc[b, a] = 1.0 / np.mean(e - s)
        li[a, b] = li[b, a] = 1.0 / np.mean(gaps)
    return TraceFit(MobilityModel(lc, li), skipped, n_contacts, n_gaps)
