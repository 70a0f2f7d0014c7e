"""The AMIS loop: adaptation, generation, re-weighting, output.

Each iteration k constructs a proposal control from the store, draws N_k
paths under it, records every sample's log h and Girsanov log-weight,
updates all re-weight factors according to the scheme, and emits the running
estimate

    psi_hat_k = (1/norm) sum_l sum_n exp(log_h + log_dqdp) w,

together with the generalized ESS and the free-energy estimate
J_hat = -log psi_hat (which equals the weighted -log mean of exp(-S) for
cost-form problems).  Runs are deterministic given (configuration, seed):
noise streams are counter-addressed by (seed, iteration, sample), so results
do not depend on batch chunking or execution order.

Weight bookkeeping is done in log domain throughout; proposal sequences like
the inconsistency counterexample produce weights spanning hundreds of orders
of magnitude.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import rng
from .adaptation import FULL_RECOMPUTE, INCREMENTAL, PathIntegralAdaptation, batch_path_integrals
from .basis import ConstantBasis
from .errors import (
    ConfigurationError,
    EngineError,
    StructuralError,
    UndefinedEssError,
    UndefinedResultError,
)
from .reweighting import (
    Balance,
    DiscardFixed,
    DiscardOptimized,
    EssReport,
    Flat,
    NonMixingLastBatch,
    choose_fixed_discard,
    powers_of_two_candidates,
)
from .sde import DiffusionProblem, FeedbackControl, _simulate_states, girsanov_log_weight
from .store import SampleStore

_CHUNK = 16384


@dataclass(frozen=True)
class IterationOutput:
    """Per-iteration snapshot emitted by the loop."""

    iteration: int
    total_samples: int
    psi_hat: float
    j_hat: float
    ess: EssReport
    params: np.ndarray
    adapt_ns: int
    generate_ns: int
    reweight_ns: int


@dataclass
class AmisResult:
    outputs: list[IterationOutput]
    final_control: FeedbackControl
    store: SampleStore

    @property
    def final_params(self) -> np.ndarray:
        return self.final_control.params


# ---------------------------------------------------------------------------
# per-scheme drivers
# ---------------------------------------------------------------------------


class _FlatDriver:
    def __init__(self):
        self._lse_y = -np.inf
        self._lse_2y = -np.inf

    def update(self, store: SampleStore, batch) -> tuple[float, EssReport]:
        log_y = batch.log_h + batch.log_dqdp
        self._lse_y = np.logaddexp(self._lse_y, logsumexp(log_y))
        self._lse_2y = np.logaddexp(self._lse_2y, logsumexp(2.0 * log_y))
        n = store.total_samples
        if self._lse_2y == -np.inf:
            raise UndefinedEssError("all weighted values are zero")
        ess = float(np.exp(2.0 * self._lse_y - self._lse_2y))
        return float(self._lse_y - math.log(n)), EssReport(ess, n, 0)


class _DiscardDriver:
    """Discarding family: fixed rule, ESS-optimized, or last-batch-only.

    Maintains per-batch log-sum-exp aggregates of y and y^2 so that the ESS
    of every candidate discard time costs O(k) per iteration via suffix
    accumulation (the re-weight factor is uniform over the retained samples
    and cancels from the ESS ratio).
    """

    def __init__(self, kind: str, scheme=None):
        self.kind = kind
        self.scheme = scheme
        self._s: list[float] = []
        self._q: list[float] = []
        self._sizes: list[int] = []

    def update(self, store: SampleStore, batch) -> tuple[float, EssReport]:
        log_y = batch.log_h + batch.log_dqdp
        self._s.append(float(logsumexp(log_y)))
        self._q.append(float(logsumexp(2.0 * log_y)))
        self._sizes.append(batch.size)
        k = store.num_iterations
        s = np.array(self._s)
        q = np.array(self._q)
        suffix_s = np.logaddexp.accumulate(s[::-1])[::-1]
        suffix_q = np.logaddexp.accumulate(q[::-1])[::-1]
        sizes = np.array(self._sizes)
        offsets = np.concatenate(([0], np.cumsum(sizes)))
        total = int(offsets[-1])
        retained_at = total - offsets[:-1]

        if self.kind == "fixed":
            t = choose_fixed_discard(k)
        elif self.kind == "last":
            t = k - 1
        else:
            if self.scheme.candidate_set == "all":
                candidates = np.arange(k)
            else:
                candidates = np.array(powers_of_two_candidates(k), dtype=int)
            admissible = candidates[retained_at[candidates] >= self.scheme.min_retained]
            if admissible.size == 0:
                t = 0
            else:
                ess_c = 2.0 * suffix_s[admissible] - suffix_q[admissible]
                t = int(admissible[int(np.argmax(ess_c))])

        if suffix_q[t] == -np.inf:
            raise UndefinedEssError("all retained weighted values are zero")
        retained = int(retained_at[t])
        log_psi = float(suffix_s[t] - math.log(retained))
        ess = float(np.exp(2.0 * suffix_s[t] - suffix_q[t]))

        w_retained = 1.0 if self.kind == "last" else k / (k - t)
        store.set_suffix_weights(int(offsets[t]), w_retained)
        return log_psi, EssReport(ess, retained, t)


class _BalanceDriver:
    """Balance heuristic, recomputed from scratch each iteration.

    Cross ratios are evaluated through the target-measure increments:
    log dP_l/dP_gen(x_j) = L_j(u_l) + log_dqdp_j where

        L_j(u) = sum_i u_i . dW^Q_i - (dt/2) sum_i |u_i|^2

    along path j (L_j(u_gen) = -log_dqdp_j cancels the generator term).
    State-independent proposals use the closed form through cached
    increment sums; state-dependent proposals are evaluated along every
    stored path, one GEMM per proposal block -- Theta(k^2 M) ratio
    evaluations per call, the cost the runtime-scaling table measures.
    Per-sample data lives in flat preallocated buffers.
    """

    _BLOCK = 8

    def __init__(self, problem: DiffusionProblem, capacity: int, shared_basis=None):
        self.problem = problem
        self.capacity = capacity
        self.shared_basis = shared_basis
        self._n = 0
        self._log_y = np.empty(capacity)
        self._log_dqdp = np.empty(capacity)
        self._q_sum = None  # (capacity, m) for constant proposals
        self._basis_rows = None  # (capacity, steps, l) for the shared basis
        self._q = None  # (capacity, steps, m)
        self._states = None  # (capacity, steps, d) for foreign bases
        self._const_values: list[np.ndarray] = []

    def _absorb(self, store: SampleStore, batch) -> None:
        lo, hi = self._n, self._n + batch.size
        self._log_y[lo:hi] = batch.log_h + batch.log_dqdp
        self._log_dqdp[lo:hi] = batch.log_dqdp
        if "q_sum" in batch.cache:
            if self._q_sum is None:
                self._q_sum = np.empty((self.capacity, batch.cache["q_sum"].shape[1]))
            self._q_sum[lo:hi] = batch.cache["q_sum"]
        if batch.q_increments is not None:
            if self._q is None:
                shape = batch.q_increments.shape[1:]
                self._q = np.empty((self.capacity,) + shape)
                self._states = np.empty(
                    (self.capacity, shape[0], self.problem.state_dim)
                )
            self._q[lo:hi] = batch.q_increments
            self._states[lo:hi] = batch.states[:, :-1, :]
        if "basis_along" in batch.cache:
            if self._basis_rows is None:
                shape = batch.cache["basis_along"].shape[1:]
                self._basis_rows = np.empty((self.capacity,) + shape)
            self._basis_rows[lo:hi] = batch.cache["basis_along"]
        self._n = hi

    def update(self, store: SampleStore, batch) -> tuple[float, EssReport]:
        self._absorb(store, batch)
        controls = store.frozen_controls
        if all(c.is_state_independent for c in controls):
            scores = self._proposal_scores_constant(controls)
        else:
            scores = self._proposal_scores_pathwise(controls)
        ratios = scores + self._log_dqdp[: self._n, None]
        sizes = store.batch_sizes.astype(float)
        log_denom = logsumexp(ratios + np.log(sizes)[None, :], axis=1) - math.log(
            store.total_samples
        )
        log_w = -log_denom
        store.set_weights(np.exp(log_w))
        log_y = self._log_y[: self._n] + log_w
        lse = logsumexp(log_y)
        lse2 = logsumexp(2.0 * log_y)
        if lse2 == -np.inf:
            raise UndefinedEssError("all weighted values are zero")
        n = store.total_samples
        ess = float(np.exp(2.0 * lse - lse2))
        return float(lse - math.log(n)), EssReport(ess, n, 0)

    def _proposal_scores_constant(self, controls) -> np.ndarray:
        """L_j(u_l) for constant proposals, (n, k)."""
        while len(self._const_values) < len(controls):
            self._const_values.append(controls[len(self._const_values)].constant_value())
        u = np.asarray(self._const_values)  # (k, m)
        n = self._n
        horizon = self.problem.horizon
        norm_sq = np.einsum("km,km->k", u, u)
        return self._q_sum[:n] @ u.T - 0.5 * horizon * norm_sq[None, :]

    def _proposal_scores_pathwise(self, controls) -> np.ndarray:
        dt = self.problem.dt
        n = self._n
        k = len(controls)
        q = self._q[:n]
        steps, m = q.shape[1], q.shape[2]
        sm = steps * m
        scores = np.empty((n, k))
        blockable = [
            l
            for l, c in enumerate(controls)
            if self.shared_basis is not None
            and c.basis is self.shared_basis
            and not c.is_state_independent
            and c.clamp_bound is None
        ]
        rest = sorted(set(range(k)) - set(blockable))
        if blockable:
            flat = self._basis_rows[:n].reshape(n * steps, -1)
            q_col = q.reshape(n, sm, 1)
            for lo in range(0, len(blockable), self._BLOCK):
                blk = blockable[lo : lo + self._BLOCK]
                nb = len(blk)
                stacked = np.concatenate(
                    [controls[l].params.T for l in blk], axis=1
                )  # (g, nb*m): one GEMM evaluates the whole proposal block
                u_blk = (flat @ stacked).reshape(n, steps, nb, m)
                u_flat = np.ascontiguousarray(u_blk.transpose(0, 2, 1, 3)).reshape(
                    n, nb, sm
                )
                t1 = np.matmul(u_flat, q_col)[:, :, 0]
                t2 = np.einsum("nlx,nlx->nl", u_flat, u_flat)
                scores[:, blk] = t1 - 0.5 * dt * t2
        for l in rest:
            u_l = self._proposal_values(controls[l], n, steps)
            scores[:, l] = np.einsum("nsm,nsm->n", u_l, q) - (0.5 * dt) * np.einsum(
                "nsm,nsm->n", u_l, u_l
            )
        return scores

    def _proposal_values(self, ctl, n: int, steps: int) -> np.ndarray:
        """u_l along every stored path, (n, steps, m)."""
        if ctl.is_state_independent:
            return np.broadcast_to(ctl.constant_value(), (n, steps, ctl.noise_dim))
        if self.shared_basis is not None and ctl.basis is self.shared_basis:
            flat = self._basis_rows[:n].reshape(n * steps, -1) @ ctl.params.T
            u_l = flat.reshape(n, steps, -1)
            if ctl.clamp_bound is not None:
                np.clip(u_l, -ctl.clamp_bound, ctl.clamp_bound, out=u_l)
            return u_l
        return ctl.u_along_states(self.problem.times()[:-1], self._states[:n])


def _make_driver(scheme, problem, capacity, shared_basis):
    if isinstance(scheme, Flat):
        return _FlatDriver()
    if isinstance(scheme, Balance):
        return _BalanceDriver(problem, capacity, shared_basis)
    if isinstance(scheme, DiscardFixed):
        return _DiscardDriver("fixed")
    if isinstance(scheme, DiscardOptimized):
        return _DiscardDriver("optimized", scheme)
    if isinstance(scheme, NonMixingLastBatch):
        return _DiscardDriver("last")
    raise ConfigurationError(f"unknown re-weighting scheme {scheme!r}")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _generate_batch(
    problem: DiffusionProblem,
    control: FeedbackControl,
    iteration: int,
    size: int,
    seed: int,
    *,
    retain_paths: bool,
    stats_basis,
    cache_per_sample_stats: bool,
    cache_balance_const: bool,
    cache_balance_pathwise: bool,
    chunk_threshold: int,
):
    """Draw one batch; returns (log_h, log_dqdp, states, noise, cache)."""
    steps, m = problem.num_steps, problem.noise_dim
    dt = problem.dt
    times = problem.times()
    vectorizable = problem.has_cost_form and not cache_balance_pathwise
    if size >= chunk_threshold and vectorizable:
        return _generate_vectorized(
            problem, control, iteration, size, seed, retain_paths,
            stats_basis, cache_per_sample_stats, cache_balance_const,
        )

    log_h = np.empty(size)
    log_dqdp = np.empty(size)
    states = np.empty((size, steps + 1, problem.state_dim))
    noise = np.empty((size, steps, m))
    q = np.empty((size, steps, m))
    cache: dict = {}
    if cache_balance_const:
        cache["q_sum"] = np.empty((size, m))
    if cache_balance_pathwise:
        cache["basis_along"] = np.empty((size, steps, stats_basis.length))
    if cache_per_sample_stats or stats_basis is not None:
        l = stats_basis.length
        cache["stat_G"] = np.empty((size, l, l))
        cache["stat_F"] = np.empty((size, m, l))

    from .sde import simulate_path

    for n in range(size):
        dw = rng.sample_increments(seed, iteration, n, steps, m, dt)
        path = simulate_path(problem, control, dw, iteration=iteration, index=n)
        log_h[n] = problem.log_h(path)
        log_dqdp[n] = girsanov_log_weight(path, control)
        states[n] = path.states
        noise[n] = dw
        q[n] = path.q_increments
        if cache_balance_const:
            cache["q_sum"][n] = path.q_increments.sum(axis=0)
        if "basis_along" in cache or "stat_G" in cache:
            g = stats_basis.along(times[:-1], path.states[:-1])
            if "basis_along" in cache:
                cache["basis_along"][n] = g
            if "stat_G" in cache:
                cache["stat_G"][n] = dt * (g.T @ g)
                cache["stat_F"][n] = path.q_increments.T @ g
    if not retain_paths:
        states = noise = q = None
    return log_h, log_dqdp, states, noise, q, cache


def _generate_vectorized(
    problem, control, iteration, size, seed, retain_paths,
    stats_basis, cache_per_sample_stats, cache_balance_const,
):
    steps, m = problem.num_steps, problem.noise_dim
    dt = problem.dt
    times = problem.times()
    is_zero = control.is_state_independent and not control.constant_value().any()
    log_h = np.empty(size)
    log_dqdp = np.zeros(size)
    keep_states = np.empty((size, steps + 1, problem.state_dim)) if retain_paths else None
    keep_noise = np.empty((size, steps, m)) if retain_paths else None
    keep_q = np.empty((size, steps, m)) if retain_paths else None
    cache: dict = {}
    if cache_balance_const:
        cache["q_sum"] = np.empty((size, m))
    if cache_per_sample_stats or stats_basis is not None:
        l = stats_basis.length
        cache["stat_G"] = np.empty((size, l, l))
        cache["stat_F"] = np.empty((size, m, l))

    for start in range(0, size, _CHUNK):
        stop = min(start + _CHUNK, size)
        c = stop - start
        noise = rng.normal_block(seed, iteration, start, c, steps, m, dt)
        states, q = _simulate_states(problem, control, noise)
        log_h[start:stop] = problem.log_h_states(times, states)
        if not is_zero:
            u = control.u_along_states(times[:-1], states[:, :-1, :])
            log_dqdp[start:stop] = -np.einsum("nsm,nsm->n", u, q) + (
                0.5 * dt
            ) * np.einsum("nsm,nsm->n", u, u)
        if cache_balance_const:
            cache["q_sum"][start:stop] = q.sum(axis=1)
        if "stat_G" in cache:
            gamma, phi = batch_path_integrals(times, states, q, stats_basis, dt)
            cache["stat_G"][start:stop] = gamma
            cache["stat_F"][start:stop] = phi
        if retain_paths:
            keep_states[start:stop] = states
            keep_noise[start:stop] = noise
            keep_q[start:stop] = q
    return log_h, log_dqdp, keep_states, keep_noise, keep_q, cache


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------


def run_amis(
    problem: DiffusionProblem,
    scheme,
    adaptation,
    schedule,
    seed: int,
    *,
    retain_paths: bool = True,
    chunk_threshold: int = 32,
) -> AmisResult:
    """Run the generic AMIS loop and return all per-iteration outputs.

    Parameters
    ----------
    scheme :
        One of the re-weighting schemes from :mod:`amisde.reweighting`.
    adaptation :
        NoAdaptation, ForcedControls or PathIntegralAdaptation; a fresh
        instance per run (strategies are stateful).
    schedule :
        Batch sizes N_1..N_K.
    retain_paths : bool
        Keep states and noise increments of every sample.  May be disabled
        for large memory-lean runs; path-wise balance re-weighting then
        becomes unavailable.
    """
    sizes = [int(s) for s in schedule]
    if not sizes or any(s < 1 for s in sizes):
        raise ConfigurationError("schedule must contain positive batch sizes")
    is_balance = isinstance(scheme, Balance)
    is_pi = isinstance(adaptation, PathIntegralAdaptation)
    if is_balance and is_pi and adaptation.mode == INCREMENTAL:
        raise ConfigurationError(
            "incremental adaptation is invalid with balance re-weighting; use full_recompute"
        )
    balance_pathwise = is_balance and not (
        adaptation.produces_constant_controls
    )
    if balance_pathwise and not retain_paths:
        raise ConfigurationError(
            "balance re-weighting with state-dependent proposals needs retained paths"
        )
    if not problem.has_cost_form and not retain_paths:
        raise ConfigurationError("generic path functionals require retained paths")

    store = SampleStore(retain_paths=retain_paths, times=problem.times())
    store.reserve(sum(sizes))
    driver = _make_driver(
        scheme, problem, sum(sizes), adaptation.basis if is_pi else None
    )
    outputs: list[IterationOutput] = []
    discard_time = 0
    total = 0

    for k, n_k in enumerate(sizes, start=1):
        t0 = time.perf_counter_ns()
        try:
            control = adaptation.next_control(store, problem.noise_dim, discard_time)
        except Exception as exc:  # noqa: BLE001 - annotate and re-raise
            raise EngineError(k, f"adaptation failed: {exc}") from exc
        t1 = time.perf_counter_ns()
        try:
            log_h, log_dqdp, states, noise, q, cache = _generate_batch(
                problem, control, k, n_k, seed,
                retain_paths=retain_paths,
                stats_basis=adaptation.basis if is_pi else None,
                cache_per_sample_stats=is_pi and adaptation.mode == FULL_RECOMPUTE,
                cache_balance_const=is_balance and not balance_pathwise,
                cache_balance_pathwise=balance_pathwise and is_pi,
                chunk_threshold=chunk_threshold,
            )
            batch = store.append_batch(
                control, log_h, log_dqdp, states, noise, q, cache
            )
            adaptation.observe_batch(store, batch)
        except EngineError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise EngineError(k, f"generation failed: {exc}") from exc
        t2 = time.perf_counter_ns()
        try:
            log_psi, report = driver.update(store, batch)
        except Exception as exc:  # noqa: BLE001
            raise EngineError(k, f"re-weighting failed: {exc}") from exc
        t3 = time.perf_counter_ns()
        discard_time = report.discard_time
        total += n_k
        outputs.append(
            IterationOutput(
                iteration=k,
                total_samples=total,
                psi_hat=float(np.exp(log_psi)),
                j_hat=float(-log_psi),
                ess=report,
                params=control.params.copy(),
                adapt_ns=t1 - t0,
                generate_ns=t2 - t1,
                reweight_ns=t3 - t2,
            )
        )

    final_control = adaptation.next_control(store, problem.noise_dim, discard_time)
    return AmisResult(outputs=outputs, final_control=final_control, store=store)


def free_energy(store: SampleStore, weights: np.ndarray) -> float:
    """J_hat = -log[(sum N_l)^{-1} sum exp(-S) w], by log-sum-exp.

    Meaningful for cost-form problems, where exp(-S) = h dQ/dP per sample.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (store.total_samples,):
        raise StructuralError("weight vector length does not match the store")
    log_y = store.log_y_raw_all()
    with np.errstate(divide="ignore"):
        log_w = np.where(weights > 0, np.log(weights, where=weights > 0), -np.inf)
    terms = log_y + log_w
    lse = logsumexp(terms)
    if lse == -np.inf:
        raise UndefinedResultError("no positive weighted term")
    return float(-(lse - math.log(store.total_samples)))


def estimate_signed(
    problem: DiffusionProblem,
    signed_h,
    scheme,
    adaptation_factory,
    schedule,
    seed: int,
    **run_kwargs,
) -> float:
    """E_Q[h] for sign-changing h via the split h = (h+ + 1) - (h- + 1).

    Runs two independent AMIS instances for the strictly positive targets
    E[h+ + 1] and E[h- + 1] and returns the difference of their final
    estimates.  ``adaptation_factory`` is called once per sub-run.
    """
    from dataclasses import replace

    def positive_part(path):
        return max(float(signed_h(path)), 0.0) + 1.0

    def negative_part(path):
        return max(-float(signed_h(path)), 0.0) + 1.0

    base = replace(
        problem, terminal_cost=None, running_cost=None, path_functional=positive_part
    )
    sub_seeds = [
        int(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)).generate_state(1)[0])
        for tag in (1, 2)
    ]
    plus = run_amis(base, scheme, adaptation_factory(), schedule, sub_seeds[0], **run_kwargs)
    minus_problem = replace(base, path_functional=negative_part)
    minus = run_amis(
        minus_problem, scheme, adaptation_factory(), schedule, sub_seeds[1], **run_kwargs
    )
    return plus.outputs[-1].psi_hat - minus.outputs[-1].psi_hat
