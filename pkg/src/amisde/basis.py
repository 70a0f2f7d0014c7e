"""Control basis functions g(t, x).

A basis maps (t, x) to a feature vector of fixed length ``l``; feedback
controls are linear in these features, u(t, x) = A g(t, x).  Three families
are provided:

* ``ConstantBasis`` -- g = (1,), open-loop time-constant controls;
* ``AffineBasis`` -- g = (1, x), linear state feedback;
* ``PiecewiseTimeBasis`` -- an inner basis replicated over equal time
  intervals of [0, T]; exactly one block of the output is nonzero.

All bases support single-point evaluation (``at``), evaluation along a path
(``along``), and evaluation over a batch of states at one time
(``at_states``).
"""

import numpy as np


class ConstantBasis:
    """g(t, x) = (1,)."""

    length = 1

    def at(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.ones(1)

    def along(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        return np.ones((len(times), 1))

    def at_states(self, t: float, states: np.ndarray) -> np.ndarray:
        return np.ones((states.shape[0], 1))

    def along_states(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        return np.ones(states.shape[:2] + (1,))

    def blocks(self) -> list[slice]:
        return [slice(0, 1)]

    def __repr__(self):
        return "ConstantBasis()"


class AffineBasis:
    """g(t, x) = (1, x_1, ..., x_d)."""

    def __init__(self, state_dim: int):
        if state_dim < 1:
            raise ValueError("state_dim must be positive")
        self.state_dim = state_dim
        self.length = 1 + state_dim

    def at(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.empty(self.length)
        out[0] = 1.0
        out[1:] = x
        return out

    def along(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        out = np.empty((len(times), self.length))
        out[:, 0] = 1.0
        out[:, 1:] = states
        return out

    def at_states(self, t: float, states: np.ndarray) -> np.ndarray:
        out = np.empty((states.shape[0], self.length))
        out[:, 0] = 1.0
        out[:, 1:] = states
        return out

    def along_states(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        out = np.empty(states.shape[:2] + (self.length,))
        out[..., 0] = 1.0
        out[..., 1:] = states
        return out

    def blocks(self) -> list[slice]:
        return [slice(0, self.length)]

    def __repr__(self):
        return f"AffineBasis(state_dim={self.state_dim})"


class PiecewiseTimeBasis:
    """Inner basis replicated over ``num_intervals`` equal slices of [0, T].

    The output has length ``inner.length * num_intervals``; the block for the
    interval containing t holds ``inner(t, x)`` and every other block is
    zero.  The right endpoint t = T maps to the last interval.
    """

    def __init__(self, inner, num_intervals: int, horizon: float):
        if num_intervals < 1:
            raise ValueError("num_intervals must be positive")
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.inner = inner
        self.num_intervals = num_intervals
        self.horizon = horizon
        self.length = inner.length * num_intervals

    def _interval(self, t: float) -> int:
        idx = int(t / self.horizon * self.num_intervals)
        return min(max(idx, 0), self.num_intervals - 1)

    def at(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.length)
        i = self._interval(t)
        w = self.inner.length
        out[i * w : (i + 1) * w] = self.inner.at(t, x)
        return out

    def along(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        inner_vals = self.inner.along(times, states)
        out = np.zeros((len(times), self.length))
        idx = np.minimum(
            (np.asarray(times) / self.horizon * self.num_intervals).astype(int),
            self.num_intervals - 1,
        )
        w = self.inner.length
        cols = idx[:, None] * w + np.arange(w)[None, :]
        np.put_along_axis(out, cols, inner_vals, axis=1)
        return out

    def at_states(self, t: float, states: np.ndarray) -> np.ndarray:
        out = np.zeros((states.shape[0], self.length))
        i = self._interval(t)
        w = self.inner.length
        out[:, i * w : (i + 1) * w] = self.inner.at_states(t, states)
        return out

    def along_states(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        inner_vals = self.inner.along_states(times, states)
        n, s = states.shape[:2]
        out = np.zeros((n, s, self.length))
        idx = np.minimum(
            (np.asarray(times) / self.horizon * self.num_intervals).astype(int),
            self.num_intervals - 1,
        )
        w = self.inner.length
        cols = idx[:, None] * w + np.arange(w)[None, :]
        out[:, np.arange(s)[:, None], cols] = inner_vals
        return out

    def blocks(self) -> list[slice]:
        w = self.inner.length
        return [slice(i * w, (i + 1) * w) for i in range(self.num_intervals)]

    def __repr__(self):
        return (
            f"PiecewiseTimeBasis({self.inner!r}, num_intervals={self.num_intervals}, "
            f"horizon={self.horizon})"
        )
