"""scikit-learn compatible wrappers around the estimation routines.

The input ``X`` of :meth:`fit` is a series of daily registered counts,
either 1-D or a single column.  Fitted estimators compose with
``sklearn.base.clone`` and parameter search utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array

from .estimate import (
    DEFAULT_Q,
    DEFAULT_WINDOW,
    CaseSeries,
    ci_mean,
    estimate,
    estimator_path,
    normalize_kind,
)
from .exceptions import ValidationError
from .model import InitialPopulation, calibrate, classify
from .simulate import ModelConfig, monte_carlo

__all__ = ["BranchingProcessModel", "ReproductionMeanEstimator", "check_counts"]


def check_counts(X, min_length: int = 1) -> np.ndarray:
    """Validate a count series and return it as a 1-D int64 array.

    Accepts a :class:`CaseSeries`, a sequence, a 1-D array or an
    ``(n, 1)`` array.
    """
    if isinstance(X, CaseSeries):
        X = X.z2
    arr = check_array(X, ensure_2d=False, dtype=None, ensure_min_samples=min_length)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValidationError(f"expected a single column of counts, got shape {arr.shape}")
        arr = arr[:, 0]
    if not np.all(np.mod(arr, 1) == 0):
        raise ValidationError("counts must be integers")
    if np.any(arr < 0):
        raise ValidationError("counts must be non-negative")
    return arr.astype(np.int64)


def _check_fitted(est, attr="m_"):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class ReproductionMeanEstimator(BaseEstimator):
    """Estimate the daily reproduction mean from registered counts.

    Parameters
    ----------
    kind : {'harris', 'lotka_nagaev', 'crump_hove'}
    window : int
        Crump-Hove window length.
    base_day : int, optional
        Day whose registered count stands in for the unregistered mean in
        :meth:`predict`.  Defaults to the last day.
    ci_level : float, optional
        If set, :meth:`fit` also computes a bootstrap interval ``ci_``.
    ci_reps : int
    q : float
        Registration mass used by the bootstrap law.
    random_state : int

    Attributes
    ----------
    m_ : float
    estimate_ : MeanEstimate
    path_ : EstimatorPath
    z2_ : ndarray
    ci_ : tuple or None
    """

    def __init__(self, kind="harris", window=DEFAULT_WINDOW, base_day=None, ci_level=None,
                 ci_reps=2000, q=DEFAULT_Q, random_state=0):
        self.kind = kind
        self.window = window
        self.base_day = base_day
        self.ci_level = ci_level
        self.ci_reps = ci_reps
        self.q = q
        self.random_state = random_state

    def fit(self, X, y=None):
        z = check_counts(X, min_length=2).tolist()
        kind = normalize_kind(self.kind)
        self.z2_ = np.asarray(z)
        self.estimate_ = estimate(z, kind, None, self.window)
        self.m_ = self.estimate_.value
        self.path_ = estimator_path(z, kind, self.window)
        self.ci_ = None
        if self.ci_level is not None:
            self.ci_ = ci_mean(z, kind, self.ci_level, self.ci_reps, self.random_state,
                               self.q, self.window)
        return self

    def _base(self):
        s = self.base_day if self.base_day is not None else len(self.z2_)
        if not 1 <= s <= len(self.z2_):
            raise ValidationError(f"base_day {s} outside 1..{len(self.z2_)}")
        return s

    def predict(self, X):
        """Expected unregistered contaminated on the given days: ``z2(s) m**(d - s)``."""
        _check_fitted(self)
        days = np.asarray(X, dtype=float).ravel()
        s = self._base()
        return self.z2_[s - 1] * self.m_ ** (days - s)

    def transform(self, X):
        """Rolling estimator path of ``X``, NaN where the estimator is undefined.

        Entry ``i`` holds the estimate whose sample ends on day ``i + 1``.
        """
        _check_fitted(self)
        z = check_counts(X, min_length=2).tolist()
        path = estimator_path(z, self.kind, self.window)
        out = np.full(len(z), np.nan)
        lag = self.window if normalize_kind(self.kind) == "crump_hove" else 1
        for e in path:
            out[e.day + lag - 1] = e.value
        return out


class BranchingProcessModel(BaseEstimator):
    """Two-type branching model calibrated to an observed series.

    :meth:`fit` estimates the reproduction mean and calibrates an offspring
    law of ``family`` to it; :meth:`simulate` then produces Monte Carlo
    ensembles of the hidden contaminated population.
    """

    def __init__(self, family="geometric", q=DEFAULT_Q, kind="harris", window=DEFAULT_WINDOW,
                 n0=1):
        self.family = family
        self.q = q
        self.kind = kind
        self.window = window
        self.n0 = n0

    def fit(self, X, y=None):
        z = check_counts(X, min_length=2).tolist()
        self.m_ = estimate(z, self.kind, None, self.window).value
        self.law_ = calibrate(self.family, self.m_, self.q)
        self.criticality_ = classify(self.m_)
        return self

    def simulate(self, days, reps=1000, seed=0, workers=1):
        _check_fitted(self, "law_")
        config = ModelConfig(self.law_, InitialPopulation.fixed(self.n0), days)
        return monte_carlo(config, reps, seed, workers)
