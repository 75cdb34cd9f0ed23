"""Closed-form data offloading ratio under the beta approximation.

For a requester ``i`` missing file ``f``, the communication duration is the
time within the deadline during which ``i`` is in contact with at least one
user caching ``f``.  Its first two moments are exact; its distribution is
replaced by a scaled beta with matching moments, which gives the per-request
offloading ratio through two incomplete beta evaluations.

Most functions come in two flavours: ``*_from_rates`` working directly on the
rate vectors of the relevant cachers, and wrappers taking a mobility model,
a placement and a ``(user, file)`` pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ._validation import check_placement, check_positive, check_requests
from .mobility import MobilityModel
from .special import inc_beta

__all__ = [
    "SystemConfig",
    "CommMoments",
    "BetaApprox",
    "InfeasibleMomentsError",
    "QuadratureError",
    "cacher_rates",
    "comm_expectation",
    "comm_variance_integral",
    "comm_variance_closed",
    "comm_moments",
    "beta_match",
    "per_request_ratio",
    "per_request_ratio_ignoring_duration",
    "ratio_matrix",
    "overall_ratio",
    "zipf_requests",
    "CLOSED_FORM_MAX_CACHERS",
]

CLOSED_FORM_MAX_CACHERS = 20
DEFAULT_SUBSET_BUDGET = 2**20
_LOG_PRODUCT_THRESHOLD = 50
_DEGENERATE_REL = 1e-12


class InfeasibleMomentsError(ArithmeticError):
    pass


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    """Global scalars. Sizes and rate share one data unit (e.g. MB and MB/s).

    ``n_files``/``n_users`` are optional and only used for dimension checks.
    """

    file_size: float
    cache_size: float
    rate: float
    deadline: float
    n_files: int | None = None
    n_users: int | None = None

    def __post_init__(self):
        for name in ("file_size", "cache_size", "rate", "deadline"):
            check_positive(getattr(self, name), name)
        if self.slots < 1:
            raise ValueError("cache must hold at least one file (cache_size >= file_size)")
        if not self.deadline > self.file_size / self.rate:
            raise ValueError("deadline must exceed the time needed to download one file")

    @property
    def slots(self) -> int:
        """Files per cache, ``floor(C / F)``."""
        return int(math.floor(self.cache_size / self.file_size + 1e-12))

    @property
    def threshold(self) -> float:
        """``F / (deadline * rate)``: fraction of the deadline needed to fetch a file."""
        return self.file_size / (self.deadline * self.rate)

    def with_sizes(self, n_users: int, n_files: int) -> "SystemConfig":
        return SystemConfig(self.file_size, self.cache_size, self.rate, self.deadline, n_files, n_users)


@dataclass(frozen=True)
class CommMoments:
    expectation: float
    variance: float


@dataclass(frozen=True)
class BetaApprox:
    alpha: float
    beta: float

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))


# ---------------------------------------------------------------------------
# moments from cacher rates


def cacher_rates(m: MobilityModel, placement, i: int, f: int) -> tuple[np.ndarray, np.ndarray]:
    """Rates between ``i`` and every *other* user caching ``f`` that it ever meets."""
    x = np.asarray(placement)
    col = x[:, f].astype(bool).copy()
    col[i] = False
    lc = m.contact_rate[i, col]
    li = m.intercontact_rate[i, col]
    met = np.isfinite(lc)
    return lc[met], li[met]


def _noncontact_product(lc: np.ndarray, li: np.ndarray) -> float:
    p = lc / (lc + li)
    if len(p) > _LOG_PRODUCT_THRESHOLD:
        return math.exp(float(np.sum(np.log(p))))
    return float(np.prod(p))


def expectation_from_rates(lc, li, tau0: float) -> float:
    lc, li = np.asarray(lc, float), np.asarray(li, float)
    if lc.size == 0:
        return 0.0
    return tau0 * (1.0 - _noncontact_product(lc, li))


def variance_integral_from_rates(lc, li, tau0: float) -> float:
    """Variance via adaptive quadrature of the two-time apart probability.

    The integrand is ``(tau0 - u) * prod_j p_j [p_j + (1 - p_j) exp(-u k_j)]``
    with ``k_j = lc_j + li_j``.  Its constant part integrates exactly against
    the subtracted ``tau0^2 prod p_j^2``, so only the decaying excess
    ``a0 * expm1(sum_j log1p(r_j exp(-u k_j)))`` is handed to the integrator,
    which keeps small variances free of cancellation.
    """
    lc, li = np.asarray(lc, float), np.asarray(li, float)
    if lc.size == 0:
        raise ValueError("variance needs at least one cacher in contact range")
    a0 = _noncontact_product(lc, li) ** 2
    r = li / lc
    kappa = lc + li

    def excess(u):
        return (tau0 - u) * math.expm1(float(np.sum(np.log1p(r * np.exp(-u * kappa)))))

    # breakpoints at the decay scales of the individual exponentials
    pts = sorted({c / k for k in kappa for c in (1.0, 5.0, 20.0)})
    pts = [t for t in pts if 0.0 < t < tau0]
    # integrand is positive, so a pure relative target is meaningful; the
    # acceptance check below still honours an absolute 1e-9 * tau0^2 floor
    val, err = integrate.quad(excess, 0.0, tau0, points=pts or None, epsabs=0.0,
                              epsrel=1e-10, limit=500)
    abs_tol = 1e-9 * tau0**2
    if 2.0 * a0 * err > max(abs_tol, 1e-8 * 2.0 * a0 * abs(val)):
        raise QuadratureError(f"variance quadrature did not converge (estimate {2 * a0 * val}, error {2 * a0 * err})")
    return 2.0 * a0 * val


def _x_plus_expm1(x: np.ndarray) -> np.ndarray:
    """``x - 1 + exp(-x)`` without cancellation for small ``x``."""
    out = x + np.expm1(-x)
    small = x < 1e-3
    xs = x[small]
    out[small] = xs * xs * (0.5 - xs * (1.0 / 6.0 - xs * (1.0 / 24.0 - xs / 120.0)))
    return out


def variance_closed_from_rates(lc, li, tau0: float, mu: float = 1.0,
                               subset_budget: int = DEFAULT_SUBSET_BUDGET) -> float:
    """Variance as a sum over non-empty subsets of cachers.

    With ``a0 = prod p_j^2``, ``a_Z = prod_{j in Z} li_j / lc_j`` and
    ``k_Z = sum_{j in Z} (lc_j + li_j)`` (all rates scaled by ``mu``)::

        Var = 2 a0 sum_Z a_Z / k_Z^2 * (k_Z tau0 - 1 + exp(-k_Z tau0))
    """
    lc, li = np.asarray(lc, float), np.asarray(li, float)
    k = lc.size
    if k == 0:
        raise ValueError("variance needs at least one cacher in contact range")
    if 2**k > subset_budget:
        raise ValueError(f"{k} cachers need 2^{k} subsets, above the budget of {subset_budget}")
    mu = check_positive(mu, "speed factor")
    a0 = _noncontact_product(lc, li) ** 2
    r = li / lc
    kap = mu * (lc + li)
    a_z = np.ones(1)
    k_z = np.zeros(1)
    for j in range(k):
        a_z = np.concatenate([a_z, a_z * r[j]])
        k_z = np.concatenate([k_z, k_z + kap[j]])
    a_z, k_z = a_z[1:], k_z[1:]
    terms = a_z / (k_z * k_z) * _x_plus_expm1(k_z * tau0)
    return float(2.0 * a0 * np.sum(terms))


def moments_from_rates(lc, li, tau0: float) -> CommMoments:
    lc, li = np.asarray(lc, float), np.asarray(li, float)
    e = expectation_from_rates(lc, li, tau0)
    if lc.size == 0:
        return CommMoments(0.0, 0.0)
    if lc.size <= CLOSED_FORM_MAX_CACHERS:
        v = variance_closed_from_rates(lc, li, tau0)
    else:
        v = variance_integral_from_rates(lc, li, tau0)
    return CommMoments(e, v)


# ---------------------------------------------------------------------------
# public (model, placement, i, f) wrappers


def _check_requester(placement, i, f):
    if np.asarray(placement)[i, f]:
        raise ValueError(f"user {i} already caches file {f}")


def comm_expectation(m: MobilityModel, placement, i: int, f: int, tau0: float) -> float:
    """Expected communication duration for user ``i`` requesting uncached file ``f``."""
    _check_requester(placement, i, f)
    return expectation_from_rates(*cacher_rates(m, placement, i, f), tau0)


def comm_variance_integral(m: MobilityModel, placement, i: int, f: int, tau0: float) -> float:
    _check_requester(placement, i, f)
    lc, li = cacher_rates(m, placement, i, f)
    if lc.size == 0:
        raise ValueError(f"no user in contact range of {i} caches file {f}")
    return variance_integral_from_rates(lc, li, tau0)


def comm_variance_closed(m: MobilityModel, placement, i: int, f: int, tau0: float, mu: float = 1.0,
                         subset_budget: int = DEFAULT_SUBSET_BUDGET) -> float:
    _check_requester(placement, i, f)
    lc, li = cacher_rates(m, placement, i, f)
    if lc.size == 0:
        raise ValueError(f"no user in contact range of {i} caches file {f}")
    return variance_closed_from_rates(lc, li, tau0, mu, subset_budget)


def comm_moments(m: MobilityModel, placement, i: int, f: int, tau0: float) -> CommMoments:
    _check_requester(placement, i, f)
    return moments_from_rates(*cacher_rates(m, placement, i, f), tau0)


def beta_match(mom: CommMoments, tau0: float) -> BetaApprox:
    """Beta shapes whose mean and variance equal those of ``duration / tau0``."""
    e, v = float(mom.expectation), float(mom.variance)
    if not (0.0 < e < tau0) or not v > 0.0 or not v < e * (tau0 - e):
        raise InfeasibleMomentsError(f"no beta with mean {e} and variance {v} on [0, {tau0}]")
    mean = e / tau0
    var = v / tau0**2
    alpha = mean * (mean * (1.0 - mean) / var - 1.0)
    beta = (1.0 - mean) / mean * alpha
    if not (alpha > 0 and beta > 0):
        raise InfeasibleMomentsError(f"non-positive beta shapes ({alpha}, {beta})")
    return BetaApprox(alpha, beta)


def ratio_from_moments(mom: CommMoments, cfg: SystemConfig) -> float:
    tau0 = cfg.deadline
    e, v = mom.expectation, mom.variance
    if e <= _DEGENERATE_REL * tau0:
        return 0.0
    spread = e * (tau0 - e)
    if tau0 - e <= _DEGENERATE_REL * tau0 or v <= _DEGENERATE_REL * spread:
        return min(e * cfg.rate / cfg.file_size, 1.0)
    ab = beta_match(mom, tau0)
    q = cfg.threshold
    val = 1.0 - inc_beta(q, ab.alpha, ab.beta) + e * cfg.rate / cfg.file_size * inc_beta(q, ab.alpha + 1.0, ab.beta)
    return min(max(val, 0.0), 1.0)


def ratio_from_rates(lc, li, cfg: SystemConfig) -> float:
    lc, li = np.asarray(lc, float), np.asarray(li, float)
    if lc.size == 0:
        return 0.0
    return ratio_from_moments(moments_from_rates(lc, li, cfg.deadline), cfg)


def ratio_ignoring_duration_from_rates(lc, li, cfg: SystemConfig) -> float:
    """Probability of meeting at least one cacher before the deadline.

    Any meeting is assumed to deliver the whole file, so contact lengths play
    no role; only the apart probability and the inter-contact rate matter.
    """
    lc, li = np.asarray(lc, float), np.asarray(li, float)
    if lc.size == 0:
        return 0.0
    p = lc / (lc + li)
    return float(-np.expm1(np.sum(np.log(p) - li * cfg.deadline)))


def per_request_ratio(m: MobilityModel, placement, cfg: SystemConfig, i: int, f: int) -> float:
    """Approximate fraction of file ``f`` that user ``i`` obtains over D2D links."""
    _check_requester(placement, i, f)
    return ratio_from_rates(*cacher_rates(m, placement, i, f), cfg)


def per_request_ratio_ignoring_duration(m: MobilityModel, placement, cfg: SystemConfig, i: int, f: int) -> float:
    _check_requester(placement, i, f)
    return ratio_ignoring_duration_from_rates(*cacher_rates(m, placement, i, f), cfg)


def ratio_matrix(m: MobilityModel, placement, cfg: SystemConfig, ignore_contact_duration: bool = False) -> np.ndarray:
    """``R[i, f]``: per-request D2D ratio, 1 where ``i`` caches ``f`` itself."""
    x = np.asarray(placement).astype(bool)
    fn = ratio_ignoring_duration_from_rates if ignore_contact_duration else ratio_from_rates
    out = np.ones(x.shape)
    for f in range(x.shape[1]):
        if not x[:, f].any():
            out[:, f] = 0.0
            continue
        for i in range(x.shape[0]):
            if not x[i, f]:
                out[i, f] = fn(*cacher_rates(m, x, i, f), cfg)
    return out


def overall_ratio(m: MobilityModel, placement, req, cfg: SystemConfig, ignore_contact_duration: bool = False) -> float:
    """Request-weighted offloading ratio averaged over users."""
    n_users = m.n_users
    p = check_requests(req, n_users=n_users)
    x = check_placement(placement, n_users, p.shape[1])
    r = ratio_matrix(m, x, cfg, ignore_contact_duration)
    val = float(np.sum(p * r)) / n_users
    return min(max(val, 0.0), 1.0)


def zipf_requests(n_users: int, n_files: int, gamma_r: float) -> np.ndarray:
    """Identical Zipf popularity rows, file index 0 the most popular."""
    if gamma_r < 0:
        raise ValueError("Zipf exponent must be non-negative")
    w = np.arange(1, n_files + 1, dtype=float) ** (-float(gamma_r))
    return np.tile(w / w.sum(), (n_users, 1))
