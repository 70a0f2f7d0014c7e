"""Append-only sample store shared by the AMIS loop and the re-weighting
schemes.

Samples are grouped in per-iteration batches; each batch remembers the
frozen proposal control it was drawn under.  A sample's log h and Girsanov
log-weight never change after insertion; only its re-weight factor w is
updated by the schemes.  Paths (states and noise increments) are retained by
default and may be dropped for large memory-lean runs, in which case
operations that need them raise :class:`StructuralError`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError
from .sde import FeedbackControl, SamplePath


@dataclass
class WeightedSample:
    """One sample as seen by re-weighting and adaptation."""

    log_h: float
    log_dqdp: float
    w: float
    iteration: int
    index: int
    path: SamplePath | None = None


@dataclass
class _Batch:
    iteration: int
    size: int
    log_h: np.ndarray
    log_dqdp: np.ndarray
    w: np.ndarray
    states: np.ndarray | None = None
    noise: np.ndarray | None = None
    q_increments: np.ndarray | None = None
    cache: dict = field(default_factory=dict)


class SampleStore:
    """Batches of weighted samples with frozen per-iteration proposals."""

    def __init__(self, retain_paths: bool = True, times: np.ndarray | None = None):
        self.retain_paths = retain_paths
        self.times = times
        self.batches: list[_Batch] = []
        self.frozen_controls: list[FeedbackControl] = []
        self._w_flat: np.ndarray | None = None
        self._used = 0

    def reserve(self, capacity: int) -> None:
        """Preallocate contiguous weight storage for ``capacity`` samples.

        Batch weight vectors become views into one flat array, so scheme
        updates that rewrite every weight cost a couple of vectorized
        writes instead of one write per batch.
        """
        if self.batches:
            raise StructuralError("reserve must be called before the first batch")
        self._w_flat = np.ones(capacity)

    # -- growth ---------------------------------------------------------

    def append_batch(
        self,
        control: FeedbackControl,
        log_h: np.ndarray,
        log_dqdp: np.ndarray,
        states: np.ndarray | None = None,
        noise: np.ndarray | None = None,
        q_increments: np.ndarray | None = None,
        cache: dict | None = None,
    ) -> _Batch:
        log_h = np.asarray(log_h, dtype=float)
        log_dqdp = np.asarray(log_dqdp, dtype=float)
        if log_h.shape != log_dqdp.shape or log_h.ndim != 1:
            raise StructuralError("log_h and log_dqdp must be equal-length vectors")
        if self.retain_paths and (states is None or noise is None):
            raise StructuralError("store retains paths but none were provided")
        size = len(log_h)
        if self._w_flat is not None:
            if self._used + size > len(self._w_flat):
                raise StructuralError("reserved weight capacity exceeded")
            w = self._w_flat[self._used : self._used + size]
            w[:] = 1.0
        else:
            w = np.ones(size)
        batch = _Batch(
            iteration=len(self.batches) + 1,
            size=size,
            log_h=log_h,
            log_dqdp=log_dqdp,
            w=w,
            states=states if self.retain_paths else None,
            noise=noise if self.retain_paths else None,
            q_increments=q_increments if self.retain_paths else None,
            cache=cache or {},
        )
        self._used += size
        self.batches.append(batch)
        self.frozen_controls.append(control)
        return batch

    # -- shape ----------------------------------------------------------

    @property
    def num_iterations(self) -> int:
        return len(self.batches)

    @property
    def batch_sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.batches], dtype=int)

    @property
    def total_samples(self) -> int:
        return int(sum(b.size for b in self.batches))

    # -- access ---------------------------------------------------------

    def log_h_all(self) -> np.ndarray:
        return np.concatenate([b.log_h for b in self.batches]) if self.batches else np.empty(0)

    def log_dqdp_all(self) -> np.ndarray:
        return (
            np.concatenate([b.log_dqdp for b in self.batches]) if self.batches else np.empty(0)
        )

    def log_y_raw_all(self) -> np.ndarray:
        """log of y = h * dQ/dP per sample (re-weight factor excluded)."""
        return self.log_h_all() + self.log_dqdp_all()

    def y_raw_all(self) -> np.ndarray:
        return np.exp(self.log_y_raw_all())

    def weights_all(self) -> np.ndarray:
        if self._w_flat is not None:
            return self._w_flat[: self._used].copy()
        return np.concatenate([b.w for b in self.batches]) if self.batches else np.empty(0)

    def set_weights(self, w: np.ndarray) -> None:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.total_samples,):
            raise StructuralError("weight vector length does not match the store")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if self._w_flat is not None:
            self._w_flat[: self._used] = w
            return
        pos = 0
        for b in self.batches:
            b.w[:] = w[pos : pos + b.size]
            pos += b.size

    def set_suffix_weights(self, cutoff: int, value: float) -> None:
        """Zero the first ``cutoff`` samples, set ``value`` on the rest."""
        if self._w_flat is not None:
            self._w_flat[:cutoff] = 0.0
            self._w_flat[cutoff : self._used] = value
            return
        pos = 0
        for b in self.batches:
            lo, hi = pos, pos + b.size
            if hi <= cutoff:
                b.w[:] = 0.0
            elif lo >= cutoff:
                b.w[:] = value
            else:
                b.w[: cutoff - lo] = 0.0
                b.w[cutoff - lo :] = value
            pos = hi

    def iteration_index_all(self) -> np.ndarray:
        """1-based generating iteration of each sample, concatenated."""
        if not self.batches:
            return np.empty(0, dtype=int)
        return np.concatenate([np.full(b.size, b.iteration, dtype=int) for b in self.batches])

    def path(self, iteration: int, index: int) -> SamplePath:
        b = self.batches[iteration - 1]
        if b.states is None or b.noise is None:
            raise StructuralError("store did not retain paths")
        return SamplePath(
            times=self.times,
            states=b.states[index],
            noise_increments=b.noise[index],
            iteration=iteration,
            index=index,
            q_increments=None if b.q_increments is None else b.q_increments[index],
        )

    def sample(self, iteration: int, index: int) -> WeightedSample:
        b = self.batches[iteration - 1]
        path = self.path(iteration, index) if b.states is not None else None
        return WeightedSample(
            log_h=float(b.log_h[index]),
            log_dqdp=float(b.log_dqdp[index]),
            w=float(b.w[index]),
            iteration=iteration,
            index=index,
            path=path,
        )

    def samples(self):
        for b in self.batches:
            for n in range(b.size):
                yield self.sample(b.iteration, n)

    # -- test construction ---------------------------------------------

    @classmethod
    def from_components(
        cls,
        log_h,
        log_dqdp,
        batch_sizes,
        controls: list[FeedbackControl] | None = None,
    ) -> "SampleStore":
        """Build a path-less store from raw per-sample values (tests)."""
        store = cls(retain_paths=False)
        log_h = np.asarray(log_h, dtype=float)
        log_dqdp = np.asarray(log_dqdp, dtype=float)
        pos = 0
        for i, size in enumerate(batch_sizes):
            control = controls[i] if controls is not None else None
            store.append_batch(
                control, log_h[pos : pos + size], log_dqdp[pos : pos + size]
            )
            pos += size
        if pos != len(log_h):
            raise StructuralError("batch sizes do not cover the provided values")
        return store
