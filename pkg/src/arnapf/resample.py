"""Weighted ensembles and the single-filter SIR machinery.

Weights are stored as log-weights (``-inf`` for a zero weight); likelihoods
of a dim spot over a 121-pixel window are far outside double range.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .statemodel import DynamicsParams, Frame, ObservationParams, log_likelihood_ratio, propagate


class FilterDivergence(RuntimeError):
    """Every weight in an ensemble (or every PE weight sum) is zero."""


@dataclass(eq=False)
class WeightedEnsemble:
    states: np.ndarray       # (N, 5)
    log_weights: np.ndarray  # (N,)
    ids: np.ndarray | None = None  # optional particle tags, travel with the particle

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 5)
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if len(self.states) != len(self.log_weights):
            raise ValueError("states and weights differ in length")
        if np.any(np.isnan(self.log_weights)) or np.any(self.log_weights == np.inf):
            raise ValueError("weights must be finite and >= 0")
        if self.ids is not None:
            self.ids = np.asarray(self.ids).reshape(-1)
            if len(self.ids) != len(self.states):
                raise ValueError("ids and states differ in length")

    @classmethod
    def from_weights(cls, states, weights, ids=None) -> "WeightedEnsemble":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and >= 0")
        with np.errstate(divide="ignore"):
            return cls(states, np.log(w), ids)

    @classmethod
    def uniform(cls, states, ids=None) -> "WeightedEnsemble":
        n = len(np.asarray(states).reshape(-1, 5))
        return cls(states, np.full(n, -np.log(n)), ids)

    def __len__(self) -> int:
        return len(self.log_weights)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def take(self, idx) -> "WeightedEnsemble":
        return WeightedEnsemble(self.states[idx], self.log_weights[idx],
                                None if self.ids is None else self.ids[idx])

    @staticmethod
    def concat(parts) -> "WeightedEnsemble":
        parts = list(parts)
        ids = None
        if all(p.ids is not None for p in parts):
            ids = np.concatenate([p.ids for p in parts])
        return WeightedEnsemble(np.concatenate([p.states for p in parts]),
                                np.concatenate([p.log_weights for p in parts]), ids)


def normalize(e: WeightedEnsemble) -> WeightedEnsemble:
    total = logsumexp(e.log_weights) if len(e) else -np.inf
    if not np.isfinite(total):
        raise FilterDivergence("weight sum is zero")
    return WeightedEnsemble(e.states, e.log_weights - total, e.ids)


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def systematic_resample(e: WeightedEnsemble, rng: np.random.Generator,
                        n: int | None = None) -> WeightedEnsemble:
    """Draw ``n`` offspring (default: ensemble size) with one shared uniform offset.

    Particle ``i`` gets ``floor(n w_i)`` or ``ceil(n w_i)`` copies.
    """
    if n is None:
        n = len(e)
    if n == 0 or len(e) == 0:
        return e
    cdf = np.cumsum(e.weights)
    cdf /= cdf[-1]
    strata = (rng.random() + np.arange(n)) / n
    idx = np.minimum(np.searchsorted(cdf, strata, side="right"), len(e) - 1)
    out = e.take(idx)
    out.log_weights = np.full(n, -np.log(n))
    return out


def estimate(e: WeightedEnsemble) -> np.ndarray:
    """Weighted mean state; expects normalized weights."""
    return e.weights @ e.states


def weight_update(e: WeightedEnsemble, frame: Frame, dyn: DynamicsParams,
                  obs: ObservationParams, rng: np.random.Generator):
    """Propagate and reweight (the P and U steps).

    Returns the moved ensemble with unnormalized log-weights and the log of
    their sum. Prior weights are shifted by their maximum first, so a flat
    prior contributes exactly zero and the result does not depend on the
    prior's overall scale beyond the returned sum.
    """
    states = propagate(e.states, dyn, rng)
    ll = log_likelihood_ratio(states, frame, obs)
    peak = np.max(e.log_weights) if len(e) else -np.inf
    if not np.isfinite(peak):
        raise FilterDivergence("prior weight sum is zero")
    rel = (e.log_weights - peak) + ll
    log_sum = logsumexp(rel)
    if not np.isfinite(log_sum):
        raise FilterDivergence("posterior weight sum is zero")
    return WeightedEnsemble(states, rel, e.ids), peak + log_sum


def sir_step(e: WeightedEnsemble, frame: Frame, dyn: DynamicsParams, obs: ObservationParams,
             n_thresh: float | None, rng: np.random.Generator):
    """One SIR iteration; returns ``(ensemble, estimate)``.

    Resamples when the effective sample size falls below ``n_thresh``
    (default ``N / 2``).
    """
    if n_thresh is None:
        n_thresh = len(e) / 2
    moved, _ = weight_update(e, frame, dyn, obs, rng)
    post = normalize(moved)
    est = estimate(post)
    if effective_sample_size(post.weights) < n_thresh:
        post = systematic_resample(post, rng)
    return post, est
