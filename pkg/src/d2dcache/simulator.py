"""Monte Carlo measurement of the data offloading ratio.

Nothing here touches the moment/beta machinery in :mod:`d2dcache.analytics`;
contact processes are sampled directly, so the simulator serves as an
independent check of the analytic approximation.
"""

from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_generator, check_placement, check_requests
from .analytics import SystemConfig
from .mobility import ContactTrace, MobilityModel, merge_contacts, sample_pair_timeline

__all__ = [
    "SimScenario",
    "OffloadReport",
    "simulate_union",
    "simulate_resource_limited",
    "replay_trace",
    "union_durations",
]


_N_BATCHES = 30


@dataclass(frozen=True)
class SimScenario:
    mobility: MobilityModel
    placement: np.ndarray
    requests: np.ndarray
    cfg: SystemConfig
    n_requests_per_user: int = 10_000
    seed: int = 0
    mode: str = "union"
    blocks: int | None = None

    def __post_init__(self):
        n = self.mobility.n_users
        p = check_requests(self.requests, n_users=n)
        x = check_placement(self.placement, n, p.shape[1], self.cfg.slots)
        object.__setattr__(self, "requests", p)
        object.__setattr__(self, "placement", x)
        if int(self.n_requests_per_user) < 1:
            raise ValueError("n_requests_per_user must be at least 1")
        if self.mode not in ("union", "resource_limited"):
            raise ValueError(f"unknown simulation mode {self.mode!r}")
        if self.mode == "resource_limited" and (self.blocks is None or int(self.blocks) < 1):
            raise ValueError("resource_limited mode needs blocks >= 1")


@dataclass(frozen=True)
class OffloadReport:
    mean_ratio: float
    stderr: float
    per_user_ratio: np.ndarray = field(repr=False)
    n_samples: int
    mode: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value", "stderr", "n"])
        w.writerow(["offloading_ratio", f"{self.mean_ratio:.9g}", f"{self.stderr:.9g}", self.n_samples])
        for u, r in enumerate(self.per_user_ratio):
            w.writerow([f"user_{u}", f"{r:.9g}", "", ""])
        return buf.getvalue()


def _report(scores: np.ndarray, users: np.ndarray, n_users: int, mode: str,
            batches: int | None = None) -> OffloadReport:
    """Summarize per-request scores.

    With ``batches`` the scores are taken to be in time order and possibly
    correlated; the standard error then comes from the spread of contiguous
    batch means instead of treating every score as independent.
    """
    n = len(scores)
    mean = float(scores.mean())
    if batches and n >= 2 * batches:
        means = np.array([b.mean() for b in np.array_split(scores, batches)])
        se = float(means.std(ddof=1) / np.sqrt(batches))
    else:
        se = float(scores.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    per_user = np.full(n_users, np.nan)
    sums = np.bincount(users, weights=scores, minlength=n_users)
    counts = np.bincount(users, minlength=n_users)
    has = counts > 0
    per_user[has] = sums[has] / counts[has]
    return OffloadReport(min(max(mean, 0.0), 1.0), se, per_user, n, mode)


def union_durations(lc, li, tau0: float, n: int, rng) -> np.ndarray:
    """Sample ``n`` stationary communication durations against a set of cachers.

    Each cacher's pair process is a two-state Markov chain; the joint state of
    independent chains is advanced event by event (next flip after an
    exponential with the total rate, flipping chain chosen proportionally to
    its rate), which samples exactly the same paths as drawing the pair
    timelines separately.  The returned value is the time within
    ``[0, tau0]`` that at least one chain is in contact.
    """
    lc, li = np.asarray(lc, float), np.asarray(li, float)
    k = lc.size
    if k == 0 or n == 0:
        return np.zeros(n)
    state = rng.random((n, k)) < li / (lc + li)
    t = np.zeros(n)
    acc = np.zeros(n)
    idx = np.arange(n)
    while idx.size:
        s = state[idx]
        rates = np.where(s, lc, li)
        cum = np.cumsum(rates, axis=1)
        total = cum[:, -1]
        dt = rng.exponential(1.0, idx.size) / total
        remaining = tau0 - t[idx]
        step = np.minimum(dt, remaining)
        acc[idx] += step * s.any(axis=1)
        t[idx] += step
        flipping = dt < remaining
        pick = (cum < (rng.random(idx.size) * total)[:, None]).sum(axis=1)
        pick = np.minimum(pick, k - 1)
        rows = idx[flipping]
        state[rows, pick[flipping]] = ~state[rows, pick[flipping]]
        idx = rows
    return acc


def _draw_requests(req: np.ndarray, n_per_user: int, rng) -> list[np.ndarray]:
    return [rng.choice(req.shape[1], size=n_per_user, p=req[i]) for i in range(req.shape[0])]


def simulate_union(s: SimScenario) -> OffloadReport:
    """Union-time Monte Carlo: a request is served whenever any cacher is in contact."""
    cfg = s.cfg
    rng = as_generator(s.seed)
    x, m = s.placement, s.mobility
    n_users, n_files = x.shape
    files = _draw_requests(s.requests, int(s.n_requests_per_user), rng)
    scores, users = [], []
    for i in range(n_users):
        fi = files[i]
        sc = np.empty(fi.size)
        for f in np.unique(fi):
            where = np.flatnonzero(fi == f)
            if x[i, f]:
                sc[where] = 1.0
                continue
            col = x[:, f].copy()
            col[i] = False
            lc, li = m.contact_rate[i, col], m.intercontact_rate[i, col]
            met = np.isfinite(lc)
            dur = union_durations(lc[met], li[met], cfg.deadline, where.size, rng)
            sc[where] = np.minimum(cfg.rate * dur / cfg.file_size, 1.0)
        scores.append(sc)
        users.append(np.full(fi.size, i))
    return _report(np.concatenate(scores), np.concatenate(users), n_users, "union")


def replay_trace(trace: ContactTrace, placement, requests, cfg: SystemConfig, window, seed=0,
                 n_requests_per_user: int = 2000) -> OffloadReport:
    """Union-time scoring with contact state read from a recorded trace.

    Request epochs are uniform over ``[window[0], window[1] - deadline]``.
    """
    w0, w1 = map(float, window)
    tau0 = cfg.deadline
    if not w1 - w0 >= tau0:
        raise ValueError("evaluation window must be at least one deadline long")
    lo, hi = trace.span
    if w0 < lo - 1e-9 * max(1.0, abs(lo)) or w1 > hi + 1e-9 * max(1.0, abs(hi)):
        raise ValueError(f"window {window} lies outside the trace span ({lo}, {hi})")
    n_users = trace.n_users
    p = check_requests(requests, n_users=n_users)
    x = check_placement(placement, n_users, p.shape[1], cfg.slots)
    merged = merge_contacts(trace, (w0, w1))
    rng = as_generator(seed)
    files = _draw_requests(p, int(n_requests_per_user), rng)
    scores, users = [], []
    for i in range(n_users):
        fi = files[i]
        epochs = rng.uniform(w0, w1 - tau0, fi.size)
        sc = np.empty(fi.size)
        for r, (f, t0) in enumerate(zip(fi, epochs)):
            if x[i, f]:
                sc[r] = 1.0
                continue
            spans = []
            t1 = t0 + tau0
            for j in np.flatnonzero(x[:, f]):
                if j == i:
                    continue
                key = (min(i, j), max(i, j))
                if key not in merged:
                    continue
                s, e = merged[key]
                lo_k = np.searchsorted(e, t0, side="right")
                hi_k = np.searchsorted(s, t1, side="left")
                if hi_k > lo_k:
                    spans.append(np.column_stack([np.maximum(s[lo_k:hi_k], t0), np.minimum(e[lo_k:hi_k], t1)]))
            sc[r] = min(cfg.rate * _union_length(spans) / cfg.file_size, 1.0)
        scores.append(sc)
        users.append(np.full(fi.size, i))
    return _report(np.concatenate(scores), np.concatenate(users), n_users, "trace_union")


def _union_length(spans: list) -> float:
    if not spans:
        return 0.0
    iv = np.vstack(spans)
    iv = iv[np.argsort(iv[:, 0])]
    total, cur_s, cur_e = 0.0, iv[0, 0], iv[0, 1]
    for a, b in iv[1:]:
        if a > cur_e:
            total += cur_e - cur_s
            cur_s, cur_e = a, b
        elif b > cur_e:
            cur_e = b
    return float(total + cur_e - cur_s)


# ---------------------------------------------------------------------------
# resource-limited, event-driven mode


def _contact_events(s: SimScenario, horizon: float, rng, trace: ContactTrace | None, t_offset: float):
    """Yield sorted ``(time, a, b, in_contact)`` transitions, plus the initial contact matrix."""
    n = s.mobility.n_users if trace is None else trace.n_users
    contact = np.zeros((n, n), dtype=bool)
    events = []
    if trace is None:
        for a, b in s.mobility.pairs():
            p = s.mobility.pair(a, b)
            if p.is_no_contact:
                continue
            tl = sample_pair_timeline(p, horizon, rng, pair=(a, b))
            contact[a, b] = contact[b, a] = bool(tl.in_contact[0])
            for k in range(1, len(tl.in_contact)):
                events.append((float(tl.boundaries[k]), a, b, bool(tl.in_contact[k])))
    else:
        merged = merge_contacts(trace, (t_offset, t_offset + horizon))
        for (a, b), (st, en) in merged.items():
            for s0, e0 in zip(st - t_offset, en - t_offset):
                if s0 <= 0.0:
                    contact[a, b] = contact[b, a] = True
                else:
                    events.append((float(s0), a, b, True))
                if e0 < horizon:
                    events.append((float(e0), a, b, False))
    events.sort(key=lambda e: (e[0], not e[3]))
    return contact, events


def simulate_resource_limited(s: SimScenario, trace: ContactTrace | None = None, window=None) -> OffloadReport:
    """Event-driven simulation with limited radio resources.

    All users share one timeline.  Each user issues ``n_requests_per_user``
    back-to-back requests, each lasting one deadline, starting from a uniform
    random phase.  Whenever anything changes (contact start/end, request
    start/end, download completion) the active D2D links are re-selected:
    receivers are visited in random order and each grabs a random idle donor
    among the cachers it is in contact with; if more links than ``blocks``
    result, a random subset of ``blocks`` is kept.  Active links deliver at
    the fixed rate; handovers cost nothing.

    When ``trace`` is given, contact state is read from its merged intervals
    starting at ``window[0]`` instead of sampled from the mobility model.

    Scores of requests close in time are correlated through the shared
    timeline, so ``stderr`` is a batch-means estimate over time-ordered scores.
    """
    if s.mode != "resource_limited":
        raise ValueError("scenario is not in resource_limited mode")
    cfg = s.cfg
    tau0, rate, fsize = cfg.deadline, cfg.rate, cfg.file_size
    x, req = s.placement, s.requests
    n_users = x.shape[0]
    n_req = int(s.n_requests_per_user)
    blocks = int(s.blocks)
    rng = as_generator(s.seed)

    horizon = (n_req + 1) * tau0
    t_offset = 0.0
    if trace is not None:
        if trace.n_users != n_users:
            raise ValueError("trace and placement disagree on the number of users")
        if window is None:
            window = trace.span
        t_offset, w1 = map(float, window)
        horizon = min(horizon, w1 - t_offset)
        n_req = int(horizon // tau0) - 1
        if n_req < 1:
            raise ValueError("trace window shorter than two deadlines")
    contact, events = _contact_events(s, horizon, rng, trace, t_offset)

    phase = rng.uniform(0.0, tau0, n_users)
    files = _draw_requests(req, n_req, rng)

    # per-user request state
    k_req = np.full(n_users, -1)
    active = np.zeros(n_users, dtype=bool)
    delivered = np.zeros(n_users)
    cur_file = np.zeros(n_users, dtype=int)
    scores, users = [], []

    queue = []
    for i in range(n_users):
        heapq.heappush(queue, (phase[i], 1, i))
    ev_pos = 0

    def next_contact_time():
        return events[ev_pos][0] if ev_pos < len(events) else np.inf

    def start_request(i, t):
        k_req[i] += 1
        f = files[i][k_req[i]]
        cur_file[i] = f
        delivered[i] = 0.0
        if x[i, f]:
            scores.append(1.0)
            users.append(i)
            active[i] = False
        else:
            active[i] = True
        if k_req[i] + 1 < n_req:
            heapq.heappush(queue, (t + tau0, 1, i))
        heapq.heappush(queue, (t + tau0, 0, i))

    def finish_request(i):
        f = cur_file[i]
        if not x[i, f]:
            scores.append(min(delivered[i] / fsize, 1.0))
            users.append(i)
        active[i] = False

    def select_links():
        receivers = np.flatnonzero(active & (delivered < fsize))
        if receivers.size == 0:
            return []
        rng.shuffle(receivers)
        busy = np.zeros(n_users, dtype=bool)
        links = []
        for i in receivers:
            cand = np.flatnonzero(contact[i] & x[:, cur_file[i]] & ~busy)
            if cand.size:
                j = cand[rng.integers(cand.size)]
                busy[j] = True
                links.append(i)
        if len(links) > blocks:
            links = list(rng.choice(links, size=blocks, replace=False))
        return links

    t = 0.0
    links: list = []
    while True:
        t_next = min(queue[0][0] if queue else np.inf, next_contact_time())
        if not np.isfinite(t_next):
            break
        # advance deliveries, handling completions inside the segment
        while links:
            need = min(fsize - delivered[i] for i in links)
            t_done = t + need / rate
            if t_done >= t_next:
                break
            for i in links:
                delivered[i] += need
            for i in links:
                if fsize - delivered[i] <= 1e-9 * fsize:
                    delivered[i] = fsize
            t = t_done
            links = select_links()
        for i in links:
            delivered[i] = min(delivered[i] + (t_next - t) * rate, fsize)
        t = t_next
        # apply every event at this instant
        while ev_pos < len(events) and events[ev_pos][0] <= t:
            _, a, b, c = events[ev_pos]
            contact[a, b] = contact[b, a] = c
            ev_pos += 1
        while queue and queue[0][0] <= t:
            _, kind, i = heapq.heappop(queue)
            if kind == 0:
                finish_request(i)
            else:
                start_request(i, t)
        if not queue:
            break
        links = select_links()

    sc = np.asarray(scores, dtype=float)
    us = np.asarray(users, dtype=int)
    return _report(sc, us, n_users, "resource_limited", batches=_N_BATCHES)
