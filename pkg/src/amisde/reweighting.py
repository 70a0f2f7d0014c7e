"""Re-weighting schemes and the generalized effective sample size.

The MIS estimator consumes one re-weight factor w per sample,

    psi_hat = (1/norm) sum_l sum_n h(X_n^l) (dQ/dP_l)(X_n^l) w_n^l,

where ``norm`` is the total sample count for flat and balance re-weighting
and the retained count for the discarding family (whose uniform factor
k/(k - t_k) is reported on the samples but cancels against the explicit
normalization when batch sizes are equal).

Five schemes are provided: flat (w = 1), the balance heuristic
(deterministic multiple mixture), discarding with the fixed rule
t_k = ceil(k/2), discarding with an ESS-optimized time, and the non-mixing
scheme that keeps only the latest batch.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ConfigurationError,
    InvalidDiscardTimeError,
    StructuralError,
    UndefinedEssError,
)
from .sde import FeedbackControl, cross_log_ratio
from .store import SampleStore

CANDIDATE_ALL = "all"
CANDIDATE_POWERS_OF_TWO = "powers_of_two"


@dataclass(frozen=True)
class Flat:
    name: str = "flat"


@dataclass(frozen=True)
class Balance:
    name: str = "balance"


@dataclass(frozen=True)
class DiscardFixed:
    """Discarding with the deterministic rule t_k = ceil(k/2), capped at k-1."""

    name: str = "discard_fixed"


@dataclass(frozen=True)
class DiscardOptimized:
    candidate_set: str = CANDIDATE_ALL
    min_retained: int = 2
    name: str = "discard_optimized"

    def __post_init__(self):
        if self.candidate_set not in (CANDIDATE_ALL, CANDIDATE_POWERS_OF_TWO):
            raise ConfigurationError(f"unknown candidate set {self.candidate_set!r}")
        if self.min_retained < 2:
            raise ConfigurationError("min_retained must be at least 2")


@dataclass(frozen=True)
class NonMixingLastBatch:
    name: str = "nonmixing"


Scheme = Flat | Balance | DiscardFixed | DiscardOptimized | NonMixingLastBatch


@dataclass(frozen=True)
class EssReport:
    """ESS summary for one weight assignment."""

    ess_hat: float
    retained_samples: int
    discard_time: int = 0


def ess_estimate(y) -> float:
    """Sample effective sample size (sum y)^2 / sum y^2.

    Takes values in [1, len(y)]: 1 when all but one value are zero, len(y)
    when all values are equal, and is invariant to positive rescaling.

    Raises
    ------
    UndefinedEssError
        If every value is zero (or the sequence is empty).
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("ESS inputs must be nonnegative")
    m = float(y.max(initial=0.0))
    if m == 0.0:
        raise UndefinedEssError("all weighted values are zero")
    # rescaling by the maximum keeps the ratio finite for values spanning
    # hundreds of orders of magnitude (the estimator is scale invariant)
    ys = y / m
    s = float(np.sum(ys))
    return s * s / float(np.dot(ys, ys))


def flat_weights(store: SampleStore) -> np.ndarray:
    """w = 1 for every sample."""
    if store.num_iterations == 0:
        raise StructuralError("empty store")
    return np.ones(store.total_samples)


def balance_weights(
    store: SampleStore, controls: list[FeedbackControl] | None = None
) -> np.ndarray:
    """Balance-heuristic weights from path-wise likelihood ratios.

    For a sample x drawn from P_k,

        w_k(x) = 1 / ( (1/N) sum_l N_l (dP_l/dP_k)(x) ),

    computed in log domain with cross_log_ratio along the stored path.  One
    call over a store with K batches of M samples costs Theta(K^2 M) ratio
    evaluations.
    """
    if store.num_iterations == 0:
        raise StructuralError("empty store")
    if controls is None:
        controls = store.frozen_controls
    if len(controls) != store.num_iterations:
        raise StructuralError("one control per iteration is required")
    sizes = store.batch_sizes
    log_nl = np.log(sizes.astype(float))
    log_n = math.log(store.total_samples)
    w = np.empty(store.total_samples)
    pos = 0
    for b in store.batches:
        own = controls[b.iteration - 1]
        for n in range(b.size):
            path = store.path(b.iteration, n)
            ratios = np.array(
                [cross_log_ratio(path, own, other) for other in controls]
            )
            w[pos] = math.exp(-(logsumexp(log_nl + ratios) - log_n))
            pos += 1
    return w


def discard_weights(store: SampleStore, t_k: int) -> np.ndarray:
    """Discarding weights: w = 0 for batches l <= t_k, else k/(k - t_k).

    The estimator consuming these weights normalizes explicitly over the
    retained samples, sum_{l > t_k} N_l; with equal batch sizes the two
    conventions coincide.
    """
    k = store.num_iterations
    if k == 0:
        raise StructuralError("empty store")
    if not 0 <= t_k < k:
        raise InvalidDiscardTimeError(f"discard time {t_k} outside [0, {k - 1}]")
    factor = k / (k - t_k)
    parts = [
        np.full(b.size, 0.0 if b.iteration <= t_k else factor) for b in store.batches
    ]
    return np.concatenate(parts)


def nonmixing_weights(store: SampleStore) -> np.ndarray:
    """w = 0 except on the latest batch, which keeps flat weights and is
    normalized over its own size by the consuming estimator."""
    if store.num_iterations == 0:
        raise StructuralError("empty store")
    parts = [
        np.full(b.size, 1.0 if b.iteration == store.num_iterations else 0.0)
        for b in store.batches
    ]
    return np.concatenate(parts)


def choose_fixed_discard(k: int) -> int:
    """Deterministic discard time ceil(k/2), capped so one batch survives."""
    if k < 1:
        raise InvalidDiscardTimeError("iteration count must be at least 1")
    return min(math.ceil(k / 2), k - 1)


def powers_of_two_candidates(k: int) -> list[int]:
    """{0} plus the powers 2^s, s >= 1, that are valid discard times."""
    out = [0]
    s = 2
    while s <= k - 1:
        out.append(s)
        s *= 2
    return out


def choose_optimized_discard(
    store: SampleStore, scheme: DiscardOptimized
) -> tuple[int, EssReport]:
    """ESS-maximizing discard time over the scheme's candidate set.

    Candidates that would retain fewer than ``scheme.min_retained`` samples
    are skipped; ties break toward the smallest t (retain more samples).
    One ESS evaluation is spent per candidate plus one for the final report,
    so candidate_set="all" costs exactly k + 1 evaluations at iteration k.
    Falls back to t = 0 when no candidate is admissible.
    """
    k = store.num_iterations
    if k == 0:
        raise ConfigurationError("empty candidate set: store has no batches")
    y = store.y_raw_all()
    sizes = store.batch_sizes
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    total = int(offsets[-1])
    if scheme.candidate_set == CANDIDATE_ALL:
        candidates = range(k)
    else:
        candidates = powers_of_two_candidates(k)
    best_t, best_ess = None, -np.inf
    for t in candidates:
        if total - offsets[t] < scheme.min_retained:
            continue
        ess = ess_estimate(y[offsets[t] :])
        if ess > best_ess:
            best_t, best_ess = t, ess
    if best_t is None:
        best_t = 0
    final = ess_estimate(y[offsets[best_t] :])
    return best_t, EssReport(
        ess_hat=final,
        retained_samples=total - int(offsets[best_t]),
        discard_time=best_t,
    )


def weighted_mean(store: SampleStore, weights: np.ndarray, norm_count: int) -> float:
    """(1/norm_count) sum_n y_raw_n w_n, computed through log-sum-exp."""
    log_y = store.log_y_raw_all()
    with np.errstate(divide="ignore"):
        log_w = np.where(weights > 0, np.log(weights, where=weights > 0), -np.inf)
    total = logsumexp(log_y + log_w)
    return float(np.exp(total - math.log(norm_count)))
