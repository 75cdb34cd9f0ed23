"""Synthetic instances with gamma-distributed pair rates.

Gamma distributions use the (shape, scale) parameterization throughout, so the
mean rate is ``shape * scale``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import as_generator, check_positive
from .mobility import MobilityModel

__all__ = [
    "GammaSpec",
    "DEFAULT_INTERCONTACT",
    "DEFAULT_CONTACT",
    "sample_mobility",
    "sweep_contact_duration",
    "gamma_from_moments",
    "write_mobility_csv",
    "read_mobility_csv",
]


@dataclass(frozen=True)
class GammaSpec:
    shape: float
    scale: float

    def __post_init__(self):
        check_positive(self.shape, "shape")
        check_positive(self.scale, "scale")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale**2


# inter-contact rate ~ Gamma(4.43, 1/1088); contact rate scaled so that the mean
# contact duration is one fifth of the mean inter-contact duration
DEFAULT_INTERCONTACT = GammaSpec(4.43, 1 / 1088)
DEFAULT_CONTACT = GammaSpec(4.43 * 25, 1 / 1088 / 5)


def gamma_from_moments(mean: float, variance: float) -> GammaSpec:
    mean = check_positive(mean, "mean")
    variance = check_positive(variance, "variance")
    return GammaSpec(mean * mean / variance, variance / mean)


def _symmetric(n: int, values: np.ndarray) -> np.ndarray:
    out = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    out[iu] = values
    return out + out.T


def sample_mobility(n_users: int, inter_spec: GammaSpec = DEFAULT_INTERCONTACT,
                    contact_spec: GammaSpec = DEFAULT_CONTACT, rng=None) -> MobilityModel:
    """Independent gamma draws of both rates for every unordered pair."""
    rng = as_generator(rng)
    n_pairs = n_users * (n_users - 1) // 2
    li = rng.gamma(inter_spec.shape, inter_spec.scale, n_pairs)
    lc = rng.gamma(contact_spec.shape, contact_spec.scale, n_pairs)
    # gamma draws of tiny shape can underflow to exactly zero
    li = np.maximum(li, np.finfo(float).tiny)
    lc = np.maximum(lc, np.finfo(float).tiny)
    return MobilityModel(_symmetric(n_users, lc), _symmetric(n_users, li))


def sweep_contact_duration(n_users: int, mean_contact: float, rng=None,
                           inter_spec: GammaSpec = DEFAULT_INTERCONTACT) -> MobilityModel:
    """Contact rates with mean ``1 / mean_contact`` and the variance of the inter-contact spec."""
    mean_contact = check_positive(mean_contact, "mean contact duration")
    contact_spec = gamma_from_moments(1.0 / mean_contact, DEFAULT_INTERCONTACT.variance)
    return sample_mobility(n_users, inter_spec, contact_spec, rng)


def write_mobility_csv(m: MobilityModel, path, header_comment: str | None = None) -> None:
    with open(Path(path), "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_a", "user_b", "lambda_c", "lambda_i"])
        for a, b in m.pairs():
            w.writerow([a, b, f"{m.contact_rate[a, b]:.9g}", f"{m.intercontact_rate[a, b]:.9g}"])


def read_mobility_csv(path, n_users: int | None = None) -> MobilityModel:
    """Read ``user_a,user_b,lambda_c,lambda_i`` rows; missing pairs never meet."""
    rows = []
    with open(Path(path), newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        for k, rec in enumerate(csv.DictReader(lines), 2):
            try:
                rows.append((int(rec["user_a"]), int(rec["user_b"]),
                             float(rec["lambda_c"]), float(rec["lambda_i"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: bad mobility row {k}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no mobility rows")
    n = n_users if n_users is not None else max(max(a, b) for a, b, _, _ in rows) + 1
    lc = np.full((n, n), np.inf)
    li = np.zeros((n, n))
    for a, b, c, i in rows:
        lc[a, b] = lc[b, a] = c
        li[a, b] = li[b, a] = i
    return MobilityModel(lc, li)
