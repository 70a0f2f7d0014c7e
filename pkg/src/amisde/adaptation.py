"""Path-integral proposal adaptation.

The next proposal control u(t, x) = A g(t, x) is fitted from the weighted
samples drawn so far by solving A = F G^{-1}, where F and G estimate

    F* = E[ h dQ/dP^u  int (u dt + dW) g^T ],
    G* = E[ h dQ/dP^u  int g g^T dt ],

with each sample's own frozen generating control inside the integrals.  The
expectation ratio is realized as a ratio of weighted sums; the 1/N factors
cancel, so no normalization is applied (and none is needed).

Accumulation is associative: every sample contributes
``y * (path integrals)`` with y = h (dQ/dP) w, so totals can be maintained
incrementally whenever re-weighting never changes a weight once set (flat
and discarding schemes).  Balance re-weighting rewrites history each
iteration and therefore requires a full recompute.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .basis import ConstantBasis
from .errors import ConfigurationError, StructuralError
from .sde import FeedbackControl
from .store import SampleStore, WeightedSample

logger = logging.getLogger(__name__)

FULL_RECOMPUTE = "full_recompute"
INCREMENTAL = "incremental"

COND_THRESHOLD = 1e12
RIDGE_SCALE = 1e-8


@dataclass
class AdaptationState:
    """Accumulators for the linear solve A = F (G + lambda I)^{-1}."""

    F: np.ndarray
    G: np.ndarray
    A: np.ndarray
    last_processed: tuple[int, int] = (0, 0)

    @classmethod
    def zeros(cls, noise_dim: int, basis_length: int) -> "AdaptationState":
        return cls(
            F=np.zeros((noise_dim, basis_length)),
            G=np.zeros((basis_length, basis_length)),
            A=np.zeros((noise_dim, basis_length)),
        )


def path_integrals(path, control: FeedbackControl, basis) -> tuple[np.ndarray, np.ndarray]:
    """Unit-weight integrals (Gamma, Phi) along one path.

    Gamma = sum_i g_i g_i^T dt (shape (l, l)) and
    Phi = sum_i (u_i dt + dW_i) g_i^T (shape (m, l)), with u the generating
    control evaluated on the stored states.  The bracket u dt + dW is the
    path's target-measure increment, taken from the recorded values when
    present.
    """
    from .sde import _q_increments

    t, s = path.times[:-1], path.states[:-1]
    g = basis.along(t, s)
    dt = path.dt
    gamma = dt * (g.T @ g)
    phi = _q_increments(path, control).T @ g
    return gamma, phi


def batch_path_integrals(
    times: np.ndarray,
    states: np.ndarray,
    q_increments: np.ndarray,
    basis,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized unit-weight integrals for a batch of paths.

    states (n, steps+1, d), q_increments (n, steps, m) ->
    Gamma (n, l, l), Phi (n, m, l).
    """
    g = basis.along_states(times[:-1], states[:, :-1, :])
    gamma = dt * np.einsum("nsl,nsk->nlk", g, g)
    phi = np.einsum("nsm,nsl->nml", q_increments, g)
    return gamma, phi


def accumulate(
    sample: WeightedSample, control_of_its_iteration: FeedbackControl, basis
) -> tuple[np.ndarray, np.ndarray]:
    """Contribution of one weighted sample to (F, G).

    Returns ``(F_contribution, G_contribution)`` where each equals
    ``h exp(log dQ/dP) w`` times the corresponding unit-weight path
    integral.
    """
    if sample.path is None:
        raise StructuralError("sample is missing its path (noise increments)")
    gamma, phi = path_integrals(sample.path, control_of_its_iteration, basis)
    weight = math.exp(sample.log_h + sample.log_dqdp) * sample.w
    return weight * phi, weight * gamma


def solve_params(
    state: AdaptationState,
    blocks: list[slice] | None = None,
    cond_threshold: float = COND_THRESHOLD,
    ridge_scale: float = RIDGE_SCALE,
) -> np.ndarray:
    """Solve A = F (G + lambda I)^{-1}, block by block.

    lambda = 0 while G is well conditioned (2-norm condition estimate below
    ``cond_threshold``); otherwise lambda = ridge_scale * trace(G) / l.  A
    numerically zero (or non-finite) block keeps its previous parameters, so
    a degenerate iteration never destabilizes the run.
    """
    l = state.G.shape[0]
    if blocks is None:
        blocks = [slice(0, l)]
    out = state.A.copy()
    for blk in blocks:
        gb = state.G[blk, blk]
        fb = state.F[:, blk]
        tr = float(np.trace(gb))
        if not np.isfinite(tr) or tr <= 0.0 or not np.all(np.isfinite(fb)):
            logger.debug("degenerate G block %s; keeping previous params", blk)
            continue
        nb = gb.shape[0]
        if nb == 1:
            cond = 1.0
        else:
            eigs = np.linalg.eigvalsh(gb)
            cond = np.inf if eigs[0] <= 0 else float(eigs[-1] / eigs[0])
        lam = 0.0 if cond < cond_threshold else ridge_scale * tr / nb
        solved = np.linalg.solve(gb + lam * np.eye(nb), fb.T).T
        if np.all(np.isfinite(solved)):
            out[:, blk] = solved
        else:
            logger.debug("non-finite solve for block %s; keeping previous params", blk)
    state.A = out
    return out


class NoAdaptation:
    """Keep u = 0 at every iteration."""

    basis = None
    produces_constant_controls = True

    def next_control(self, store: SampleStore, noise_dim: int, discard_time: int = 0):
        from .sde import zero_control

        return zero_control(noise_dim)

    def observe_batch(self, store, batch) -> None:
        pass


class ForcedControls:
    """Bypass adaptation with a fixed proposal sequence (iteration k uses
    the k-th control; the list's last entry repeats past its end)."""

    basis = None

    def __init__(self, controls: list[FeedbackControl]):
        if not controls:
            raise ConfigurationError("forced control list is empty")
        self.controls = list(controls)

    @property
    def produces_constant_controls(self) -> bool:
        return all(c.is_state_independent for c in self.controls)

    def next_control(self, store: SampleStore, noise_dim: int, discard_time: int = 0):
        i = store.num_iterations  # 0-based index of the upcoming iteration
        return self.controls[min(i, len(self.controls) - 1)]

    def observe_batch(self, store, batch) -> None:
        pass


class PathIntegralAdaptation:
    """Fit A = F G^{-1} from the store and return u = A g.

    mode "incremental" keeps per-batch partial sums of unit-weight
    contributions and re-selects the surviving suffix after discarding
    (amortized Theta(N_k) new work per call); it is only valid with flat or
    discarding re-weighting, whose weights are uniform over the retained
    samples and therefore cancel in A.  mode "full_recompute" re-sums every
    sample with its current weight and is required for balance
    re-weighting.
    """

    def __init__(
        self,
        basis,
        mode: str = INCREMENTAL,
        clamp_bound: float | None = None,
        cond_threshold: float = COND_THRESHOLD,
        ridge_scale: float = RIDGE_SCALE,
    ):
        if mode not in (FULL_RECOMPUTE, INCREMENTAL):
            raise ConfigurationError(f"unknown adaptation mode {mode!r}")
        self.basis = basis
        self.mode = mode
        self.clamp_bound = clamp_bound
        self.cond_threshold = cond_threshold
        self.ridge_scale = ridge_scale
        self._f_parts: np.ndarray | None = None  # (capacity, m, l)
        self._g_parts: np.ndarray | None = None  # (capacity, l, l)
        self._n_parts = 0
        self._prev_A: np.ndarray | None = None

    def _append_parts(self, f_part: np.ndarray, g_part: np.ndarray) -> None:
        if self._g_parts is None:
            m, l = f_part.shape
            self._f_parts = np.zeros((8, m, l))
            self._g_parts = np.zeros((8, l, l))
        elif self._n_parts == len(self._g_parts):
            self._f_parts = np.concatenate([self._f_parts, np.zeros_like(self._f_parts)])
            self._g_parts = np.concatenate([self._g_parts, np.zeros_like(self._g_parts)])
        self._f_parts[self._n_parts] = f_part
        self._g_parts[self._n_parts] = g_part
        self._n_parts += 1

    @property
    def produces_constant_controls(self) -> bool:
        return isinstance(self.basis, ConstantBasis)

    # -- ingestion -------------------------------------------------------

    def observe_batch(self, store: SampleStore, batch) -> None:
        """Record the unit-weight partial sums of a freshly drawn batch.

        Uses per-sample integrals cached by the engine when present, and
        falls back to literal accumulation from the stored paths.
        """
        y = np.exp(batch.log_h + batch.log_dqdp)
        if "stat_G" in batch.cache:
            g_part = np.einsum("n,nlk->lk", y, batch.cache["stat_G"])
            f_part = np.einsum("n,nml->ml", y, batch.cache["stat_F"])
        else:
            control = store.frozen_controls[batch.iteration - 1]
            l, m = self.basis.length, control.noise_dim
            g_part = np.zeros((l, l))
            f_part = np.zeros((m, l))
            for n in range(batch.size):
                gamma, phi = path_integrals(
                    store.path(batch.iteration, n), control, self.basis
                )
                g_part += y[n] * gamma
                f_part += y[n] * phi
        self._append_parts(f_part, g_part)

    def _ingest_pending(self, store: SampleStore) -> None:
        while self._n_parts < store.num_iterations:
            self.observe_batch(store, store.batches[self._n_parts])

    # -- control construction --------------------------------------------

    def next_control(
        self, store: SampleStore, noise_dim: int, discard_time: int = 0
    ) -> FeedbackControl:
        l = self.basis.length
        state = AdaptationState.zeros(noise_dim, l)
        if self._prev_A is not None:
            state.A = self._prev_A.copy()
        if store.num_iterations > 0:
            if self.mode == INCREMENTAL:
                self._ingest_pending(store)
                state.G = self._g_parts[discard_time : self._n_parts].sum(axis=0)
                state.F = self._f_parts[discard_time : self._n_parts].sum(axis=0)
            else:
                self._full_recompute(store, state)
            state.last_processed = (
                store.num_iterations,
                store.batches[-1].size,
            )
            solve_params(state, self.basis.blocks(), self.cond_threshold, self.ridge_scale)
        self._prev_A = state.A.copy()
        return FeedbackControl(self.basis, state.A, self.clamp_bound)

    def _full_recompute(self, store: SampleStore, state: AdaptationState) -> None:
        for batch in store.batches:
            y = np.exp(batch.log_h + batch.log_dqdp) * batch.w
            if "stat_G" in batch.cache:
                state.G += np.einsum("n,nlk->lk", y, batch.cache["stat_G"])
                state.F += np.einsum("n,nml->ml", y, batch.cache["stat_F"])
            else:
                control = store.frozen_controls[batch.iteration - 1]
                for n in range(batch.size):
                    gamma, phi = path_integrals(
                        store.path(batch.iteration, n), control, self.basis
                    )
                    state.G += y[n] * gamma
                    state.F += y[n] * phi


def adapt(
    store: SampleStore,
    basis,
    mode: str = FULL_RECOMPUTE,
    *,
    noise_dim: int | None = None,
    clamp_bound: float | None = None,
    discard_time: int = 0,
) -> FeedbackControl:
    """One-shot adaptation over a store; empty stores yield u = 0.

    For repeated incremental use across iterations, hold on to a
    :class:`PathIntegralAdaptation` instance instead.
    """
    if noise_dim is None:
        if not store.frozen_controls or store.frozen_controls[0] is None:
            raise ConfigurationError("noise_dim is required for an empty store")
        noise_dim = store.frozen_controls[0].noise_dim
    strategy = PathIntegralAdaptation(basis, mode=mode, clamp_bound=clamp_bound)
    return strategy.next_control(store, noise_dim, discard_time=discard_time)
