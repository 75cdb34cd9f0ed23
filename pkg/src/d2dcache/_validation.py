"""Input validation and RNG helpers shared across the package."""

from __future__ import annotations

import hashlib
import numbers

import numpy as np


def as_generator(seed=None) -> np.random.Generator:
    """Turn ``None``, an int, or an existing Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def substream(seed: int, *labels) -> np.random.Generator:
    """Derive an independent generator from a top-level seed and a purpose label.

    The child seed is the first 16 bytes of ``sha256("<seed>/<label>/...")``, so
    the same (seed, labels) pair always yields the same stream regardless of
    the order in which other streams were drawn.
    """
    key = "/".join([str(int(seed)), *map(str, labels)]).encode()
    digest = hashlib.sha256(key).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def check_positive(value, name: str, allow_inf: bool = False) -> float:
    value = float(value)
    if not value > 0 or np.isnan(value) or (np.isinf(value) and not allow_inf):
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_requests(probs, n_users: int | None = None, n_files: int | None = None) -> np.ndarray:
    """Validate a users x files request-probability matrix (rows sum to one)."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 2:
        raise ValueError(f"request matrix must be 2-D, got shape {p.shape}")
    if n_users is not None and p.shape[0] != n_users:
        raise ValueError(f"request matrix has {p.shape[0]} rows, expected {n_users} users")
    if n_files is not None and p.shape[1] != n_files:
        raise ValueError(f"request matrix has {p.shape[1]} columns, expected {n_files} files")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("request probabilities must be finite and non-negative")
    if not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12):
        raise ValueError("each row of the request matrix must sum to 1")
    return p


def check_placement(x, n_users: int, n_files: int, slots: int | None = None) -> np.ndarray:
    """Validate a binary users x files placement; optionally enforce per-user capacity."""
    a = np.asarray(x)
    if a.shape != (n_users, n_files):
        raise ValueError(f"placement has shape {a.shape}, expected {(n_users, n_files)}")
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("placement entries must be 0 or 1")
    a = a.astype(bool)
    if slots is not None:
        over = np.flatnonzero(a.sum(axis=1) > slots)
        if over.size:
            raise ValueError(f"users {over.tolist()} exceed the cache capacity of {slots} files")
    return a
