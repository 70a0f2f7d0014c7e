"""Diffusion problems, feedback controls, path simulation and path weights.

The target measure Q is the law of

    dX_t = mu(t, X_t) dt + sigma(t, X_t) dW_t,    X_0 = x0,

discretized by Euler-Maruyama on a uniform grid of ``num_steps`` steps.  A
feedback control u(t, x) tilts the dynamics to the proposal law P^u of

    dX_t = mu dt + sigma (u dt + dW_t),

and the change of measure along a simulated path is

    log dQ/dP^u = -sum_i u_i . dW_i - (dt/2) sum_i |u_i|^2,

with u_i = u(t_i, X_i) evaluated at the left endpoint, matching the
simulation grid exactly.  All integrals in this module use that left-endpoint
convention so the identity exp(-S) = h(X) dQ/dP^u holds at the discrete
level, not just in the continuous-time limit.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import ConstantBasis
from .errors import SimulationError, StructuralError, UnsupportedFormError


@dataclass(frozen=True)
class DiffusionProblem:
    """A target diffusion together with the path functional h.

    Parameters
    ----------
    state_dim, noise_dim : int
        Dimensions d and m of the state and the driving noise.
    horizon : float
        Final time T > 0.
    num_steps : int
        Number of uniform Euler-Maruyama steps; dt = T / num_steps.
    initial_state : array_like
        Starting point x0, shape (d,).
    drift : callable or None
        mu(t, x) -> (d,) vector; None means zero drift.  Must accept a
        batch of states (n, d) and broadcast to (n, d).
    diffusion : callable, ndarray or None
        sigma(t, x) -> (d, m) matrix; a constant matrix may be passed
        directly; None means the identity (requires d == m).
    terminal_cost, running_cost : callable or None
        Cost form of the functional: h = exp(-int R dt - Qc(X_T)).
        ``terminal_cost`` maps (..., d) states to (...) costs,
        ``running_cost`` maps (t, x) likewise; ``running_cost`` may be None
        for R = 0.
    path_functional : callable or None
        Generic form: h(path) >= 0 evaluated on a SamplePath.  Mutually
        exclusive with the cost form.
    """

    state_dim: int
    noise_dim: int
    horizon: float
    num_steps: int
    initial_state: np.ndarray
    drift: Callable | None = None
    diffusion: Callable | np.ndarray | None = None
    terminal_cost: Callable | None = None
    running_cost: Callable | None = None
    path_functional: Callable | None = None

    def __post_init__(self):
        if self.state_dim < 1 or self.noise_dim < 1:
            raise ValueError("state_dim and noise_dim must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.num_steps < 1:
            raise ValueError("num_steps must be positive")
        x0 = np.asarray(self.initial_state, dtype=float).reshape(-1)
        if x0.shape != (self.state_dim,):
            raise ValueError("initial_state must have shape (state_dim,)")
        object.__setattr__(self, "initial_state", x0)
        if self.diffusion is None and self.state_dim != self.noise_dim:
            raise ValueError("identity diffusion requires state_dim == noise_dim")
        if isinstance(self.diffusion, np.ndarray):
            if self.diffusion.shape != (self.state_dim, self.noise_dim):
                raise ValueError("constant diffusion must have shape (d, m)")
        cost_form = self.terminal_cost is not None
        if cost_form == (self.path_functional is not None):
            raise ValueError("specify exactly one of terminal_cost or path_functional")
        if self.running_cost is not None and not cost_form:
            raise ValueError("running_cost requires a terminal_cost")

    @property
    def dt(self) -> float:
        return self.horizon / self.num_steps

    @property
    def has_cost_form(self) -> bool:
        return self.terminal_cost is not None

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.num_steps + 1)

    def log_h(self, path: "SamplePath") -> float:
        """log h for a single path (-inf where h = 0)."""
        if self.has_cost_form:
            val = -float(self.terminal_cost(path.states[-1]))
            if self.running_cost is not None:
                r = self.running_cost(path.times[:-1], path.states[:-1])
                val -= float(np.sum(r)) * self.dt
            return val
        h = float(self.path_functional(path))
        if h < 0:
            raise ValueError("path functional must be nonnegative; use the signed split")
        with np.errstate(divide="ignore"):
            return float(np.log(h))

    def log_h_states(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Vectorized log h for cost-form problems; states (n, steps+1, d)."""
        if not self.has_cost_form:
            raise UnsupportedFormError("vectorized log h requires the cost form")
        val = -np.asarray(self.terminal_cost(states[:, -1, :]), dtype=float)
        if self.running_cost is not None:
            r = self.running_cost(times[:-1], states[:, :-1, :])
            val = val - np.sum(r, axis=-1) * self.dt
        return val


@dataclass(frozen=True)
class FeedbackControl:
    """Linear-in-basis feedback control u(t, x) = A g(t, x).

    ``params`` has shape (m, l) with l the basis length.  If ``clamp_bound``
    is set, every returned control value is clipped componentwise to
    [-clamp_bound, clamp_bound], which enforces the uniform boundedness
    required for consistency of flat re-weighting.
    """

    basis: object
    params: np.ndarray
    clamp_bound: float | None = None

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.params, dtype=float))
        if p.shape[1] != self.basis.length:
            raise ValueError("params must have shape (noise_dim, basis.length)")
        object.__setattr__(self, "params", p)
        if self.clamp_bound is not None and self.clamp_bound <= 0:
            raise ValueError("clamp_bound must be positive")

    @property
    def noise_dim(self) -> int:
        return self.params.shape[0]

    def _clip(self, u: np.ndarray) -> np.ndarray:
        if self.clamp_bound is None:
            return u
        return np.clip(u, -self.clamp_bound, self.clamp_bound)

    def u_at(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._clip(self.params @ self.basis.at(t, x))

    def u_along(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Control values (steps, m) along a stored path."""
        return self._clip(self.basis.along(times, states) @ self.params.T)

    def u_at_states(self, t: float, states: np.ndarray) -> np.ndarray:
        """Control values (n, m) for a batch of states at one time."""
        return self._clip(self.basis.at_states(t, states) @ self.params.T)

    def u_along_states(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Control values (n, steps, m) along a batch of paths."""
        g = self.basis.along_states(times, states)
        return self._clip(np.einsum("nsl,ml->nsm", g, self.params))

    @property
    def is_state_independent(self) -> bool:
        return isinstance(self.basis, ConstantBasis)

    def constant_value(self) -> np.ndarray:
        """The constant control vector, valid when state independent."""
        return self._clip(self.params[:, 0].copy())


def zero_control(noise_dim: int) -> FeedbackControl:
    return FeedbackControl(ConstantBasis(), np.zeros((noise_dim, 1)))


def constant_control(values, clamp_bound: float | None = None) -> FeedbackControl:
    values = np.asarray(values, dtype=float).reshape(-1, 1)
    return FeedbackControl(ConstantBasis(), values, clamp_bound)


@dataclass(frozen=True)
class SamplePath:
    """A discretized trajectory with its generating noise.

    ``states[0]`` equals the problem's initial state, and replaying the
    Euler-Maruyama recursion with ``noise_increments`` and the generating
    control reproduces ``states`` exactly.

    ``q_increments`` holds the target-measure Brownian increments
    u_i dt + dW_i recorded at simulation time.  They identify the path's
    law independently of which proposal generated it, which is what makes
    likelihood ratios between arbitrary proposal pairs (and their exact
    antisymmetry) well defined on a fixed trajectory.  Hand-built paths may
    omit them, in which case the weight operations reconstruct them from
    the sampled control's values.
    """

    times: np.ndarray
    states: np.ndarray
    noise_increments: np.ndarray
    iteration: int = 0
    index: int = 0
    q_increments: np.ndarray | None = None

    @property
    def num_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return (self.times[-1] - self.times[0]) / self.num_steps


def _check_path(path: SamplePath, control: FeedbackControl | None = None) -> None:
    steps = path.num_steps
    if path.states.ndim != 2 or path.states.shape[0] != steps + 1:
        raise StructuralError("states do not match the time grid")
    if path.noise_increments is None:
        raise StructuralError("path is missing its noise increments")
    if path.noise_increments.ndim != 2 or path.noise_increments.shape[0] != steps:
        raise StructuralError("noise increments do not match the time grid")
    if control is not None and control.noise_dim != path.noise_increments.shape[1]:
        raise StructuralError("control dimension does not match path noise")


def simulate_path(
    problem: DiffusionProblem,
    control: FeedbackControl,
    noise: np.ndarray,
    *,
    iteration: int = 0,
    index: int = 0,
) -> SamplePath:
    """Euler-Maruyama simulation of the controlled dynamics.

    Parameters
    ----------
    noise : ndarray
        Brownian increments, shape (num_steps, noise_dim).  Deterministic
        replay comes from drawing them with
        :func:`amisde.rng.sample_increments` keyed by (seed, iteration,
        index).

    Raises
    ------
    SimulationError
        If a state becomes non-finite, reporting the step index.
    """
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (problem.num_steps, problem.noise_dim):
        raise StructuralError("noise must have shape (num_steps, noise_dim)")
    times = problem.times()
    states, q = _simulate_states(problem, control, noise[None, :, :])
    return SamplePath(
        times=times,
        states=states[0],
        noise_increments=noise,
        iteration=iteration,
        index=index,
        q_increments=q[0],
    )


def _simulate_states(
    problem: DiffusionProblem, control: FeedbackControl, noise: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched Euler-Maruyama core.

    noise (n, steps, m) -> (states (n, steps+1, d), q_increments (n, steps, m))
    where q_increments = u dt + dW are the target-measure increments.
    """
    n = noise.shape[0]
    dt = problem.dt
    times = problem.times()
    sigma = problem.diffusion
    sigma_const = sigma if isinstance(sigma, np.ndarray) else None
    states = np.empty((n, problem.num_steps + 1, problem.state_dim))
    q = np.empty_like(noise)
    x = np.broadcast_to(problem.initial_state, (n, problem.state_dim)).copy()
    states[:, 0, :] = x
    for i in range(problem.num_steps):
        t = times[i]
        u = control.u_at_states(t, x)
        v = u * dt + noise[:, i, :]
        q[:, i, :] = v
        if sigma is None:
            dx = v
        elif sigma_const is not None:
            dx = v @ sigma_const.T
        else:
            dx = np.einsum("ndm,nm->nd", np.atleast_3d(_sigma_batch(sigma, t, x)), v)
        if problem.drift is not None:
            dx = dx + np.asarray(problem.drift(t, x)) * dt
        x = x + dx
        if not np.all(np.isfinite(x)):
            bad = int(np.argwhere(~np.isfinite(x).all(axis=1))[0, 0])
            raise SimulationError(i, f"non-finite state at step {i} (sample {bad})")
        states[:, i + 1, :] = x
    return states, q


def _sigma_batch(sigma: Callable, t: float, x: np.ndarray) -> np.ndarray:
    out = np.asarray(sigma(t, x))
    if out.ndim == 2:
        out = np.broadcast_to(out, (x.shape[0],) + out.shape)
    return out


def _q_increments(path: SamplePath, control_sampled: FeedbackControl) -> np.ndarray:
    """Target-measure increments u dt + dW, recorded or reconstructed."""
    if path.q_increments is not None:
        return path.q_increments
    u = control_sampled.u_along(path.times[:-1], path.states[:-1])
    return u * path.dt + path.noise_increments


def girsanov_log_weight(path: SamplePath, control: FeedbackControl) -> float:
    """log dQ/dP^u along a path generated under ``control``.

    Equals -sum_i u_i . dW_i - (dt/2) sum_i |u_i|^2 with the stored
    increments as the P^u-Brownian increments; computed through the
    target-measure increments dW^Q = u dt + dW as
    -sum u . dW^Q + (dt/2) sum |u|^2, which is the same quantity.
    """
    _check_path(path, control)
    u = control.u_along(path.times[:-1], path.states[:-1])
    q = _q_increments(path, control)
    return float(-np.sum(u * q) + 0.5 * path.dt * np.sum(u * u))


def cross_log_ratio(
    path: SamplePath,
    control_sampled: FeedbackControl,
    control_other: FeedbackControl,
) -> float:
    """log dP^{u_other}/dP^{u_sampled} along a path generated under
    ``control_sampled``.

    Both controls are evaluated on the stored states.  In terms of the
    sampled increments the value is

        sum_i (u_o - u_s)_i . dW_i - (dt/2) sum_i |u_o - u_s|_i^2;

    it is computed through the target-measure increments as

        sum_i (u_o - u_s)_i . dW^Q_i - (dt/2) sum_i (|u_o|^2 - |u_s|^2)_i,

    an identical quantity that is exactly antisymmetric under swapping the
    two controls along a fixed trajectory.
    """
    _check_path(path, control_sampled)
    _check_path(path, control_other)
    t, s = path.times[:-1], path.states[:-1]
    u_o = control_other.u_along(t, s)
    u_s = control_sampled.u_along(t, s)
    q = _q_increments(path, control_sampled)
    return float(
        np.sum((u_o - u_s) * q)
        - 0.5 * path.dt * (np.sum(u_o * u_o) - np.sum(u_s * u_s))
    )


def path_cost(
    path: SamplePath, control: FeedbackControl, problem: DiffusionProblem
) -> float:
    """Path cost S with exp(-S) = h(X) dQ/dP^u, for cost-form problems.

    S = Qc(X_T) + sum_i [R(t_i, X_i) + |u_i|^2 / 2] dt + sum_i u_i . dW_i.
    """
    if not problem.has_cost_form:
        raise UnsupportedFormError("path_cost requires the cost form of h")
    _check_path(path, control)
    if path.num_steps != problem.num_steps:
        raise StructuralError("path grid does not match the problem grid")
    dt = problem.dt
    u = control.u_along(path.times[:-1], path.states[:-1])
    s = float(problem.terminal_cost(path.states[-1]))
    s += 0.5 * dt * float(np.sum(u * u))
    if problem.running_cost is not None:
        r = problem.running_cost(path.times[:-1], path.states[:-1])
        s += dt * float(np.sum(r))
    s += float(np.sum(u * path.noise_increments))
    return s
