"""scikit-learn style wrappers around the placement strategies and the trace fitter.

The estimators follow the usual conventions: hyper-parameters are plain
constructor arguments (so ``get_params``/``set_params``/``clone`` work), ``fit``
returns ``self``, and learned state lives in attributes with a trailing
underscore.  ``fit`` takes a :class:`~d2dcache.mobility.MobilityModel` and a
``(n_users, n_files)`` request matrix rather than a feature matrix.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_requests
from .analytics import SystemConfig, overall_ratio, ratio_matrix
from .mobility import ContactTrace, MobilityModel, fit_from_trace
from .placement import greedy_place, optimal_place, popular_place, random_place

__all__ = [
    "GreedyPlacement",
    "OptimalPlacement",
    "RandomPlacement",
    "PopularPlacement",
    "ContactRateEstimator",
]


class _PlacementBase(BaseEstimator):
    def __init__(self, file_size=300.0, cache_size=1000.0, rate=1.5, deadline=300.0):
        self.file_size = file_size
        self.cache_size = cache_size
        self.rate = rate
        self.deadline = deadline

    def _config(self, mobility: MobilityModel, requests) -> tuple[SystemConfig, np.ndarray]:
        if not isinstance(mobility, MobilityModel):
            raise TypeError(f"expected a MobilityModel, got {type(mobility).__name__}")
        req = check_requests(requests, n_users=mobility.n_users)
        cfg = SystemConfig(self.file_size, self.cache_size, self.rate, self.deadline,
                           n_files=req.shape[1], n_users=mobility.n_users)
        return cfg, req

    def fit(self, mobility, requests):
        cfg, req = self._config(mobility, requests)
        self.placement_ = self._place(mobility, req, cfg)
        self.n_users_, self.n_files_ = self.placement_.shape
        return self

    def predict(self, mobility):
        """Per-request D2D ratios ``R[i, f]`` of the fitted placement on ``mobility``."""
        check_is_fitted(self, "placement_")
        cfg = SystemConfig(self.file_size, self.cache_size, self.rate, self.deadline)
        return ratio_matrix(mobility, self.placement_, cfg)

    def score(self, mobility, requests) -> float:
        """Analytic overall offloading ratio of the fitted placement."""
        check_is_fitted(self, "placement_")
        cfg, req = self._config(mobility, requests)
        return overall_ratio(mobility, self.placement_, req, cfg)


class GreedyPlacement(_PlacementBase):
    """Greedy submodular placement; ``gain_trace_`` records every pick.

    With ``ignore_contact_duration=True`` the objective assumes any single
    contact delivers the whole file.
    """

    def __init__(self, file_size=300.0, cache_size=1000.0, rate=1.5, deadline=300.0,
                 ignore_contact_duration=False):
        super().__init__(file_size, cache_size, rate, deadline)
        self.ignore_contact_duration = ignore_contact_duration

    def _place(self, mobility, req, cfg):
        x, trace = greedy_place(mobility, req, cfg, self.ignore_contact_duration)
        self.gain_trace_ = trace
        return x


class OptimalPlacement(_PlacementBase):
    def __init__(self, file_size=300.0, cache_size=1000.0, rate=1.5, deadline=300.0, budget=10**7):
        super().__init__(file_size, cache_size, rate, deadline)
        self.budget = budget

    def _place(self, mobility, req, cfg):
        return optimal_place(mobility, req, cfg, self.budget)


class RandomPlacement(_PlacementBase):
    def __init__(self, file_size=300.0, cache_size=1000.0, rate=1.5, deadline=300.0, random_state=None):
        super().__init__(file_size, cache_size, rate, deadline)
        self.random_state = random_state

    def _place(self, mobility, req, cfg):
        return random_place(req, cfg, np.random.default_rng(self.random_state))


class PopularPlacement(_PlacementBase):
    def _place(self, mobility, req, cfg):
        return popular_place(req, cfg)


class ContactRateEstimator(BaseEstimator):
    """Fit pair contact and inter-contact rates from a contact trace.

    ``window=None`` uses the trace's own span.
    """

    def __init__(self, window=None):
        self.window = window

    def fit(self, trace: ContactTrace, y=None):
        if not isinstance(trace, ContactTrace):
            raise TypeError(f"expected a ContactTrace, got {type(trace).__name__}")
        window = trace.span if self.window is None else tuple(self.window)
        res = fit_from_trace(trace, window)
        self.mobility_ = res.mobility
        self.skipped_pairs_ = res.skipped_pairs
        self.n_contacts_ = res.n_contacts
        return self
