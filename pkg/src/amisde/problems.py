"""Benchmark sampling problems.

Both benchmarks target expectations of a Gaussian bump around a point z
under Brownian-motion path measure, in the cost form h = exp(-Qc(X_T)) so
that exp(-S) = h dQ/dP holds exactly on the grid.
"""

import numpy as np

from .sde import DiffusionProblem


def gaussian_target_problem(
    dim: int = 3,
    target=(2.0, 2.0, 2.0),
    num_steps: int = 100,
    horizon: float = 1.0,
) -> DiffusionProblem:
    """Standard d-dimensional Brownian motion with
    h(X) = exp(-|X_T - z|^2 / 2); the paper's ESS benchmark uses d = 3,
    z = (2, 2, 2)."""
    z = np.asarray(target, dtype=float).reshape(-1)
    if z.shape != (dim,):
        raise ValueError("target must have length dim")

    def terminal(x):
        diff = np.asarray(x) - z
        return 0.5 * np.sum(diff * diff, axis=-1)

    return DiffusionProblem(
        state_dim=dim,
        noise_dim=dim,
        horizon=horizon,
        num_steps=num_steps,
        initial_state=np.zeros(dim),
        terminal_cost=terminal,
    )


def gaussian_target_psi(dim: int = 3, target=(2.0, 2.0, 2.0)) -> float:
    """Closed form E_Q[h] = prod_i 2^{-1/2} exp(-z_i^2 / 4)."""
    z = np.asarray(target, dtype=float)
    return float(np.prod(np.exp(-z**2 / 4.0) / np.sqrt(2.0)))


def counterexample_problem() -> DiffusionProblem:
    """One-step degenerate diffusion (d = m = 1, T = 1) reproducing the
    Gaussian densities of the inconsistency counterexample: under the
    constant control u the terminal state is N(u, 1), and
    h(x) = exp(-x^2/2) gives psi = 1/sqrt(2)."""

    def terminal(x):
        x = np.asarray(x)
        return 0.5 * np.sum(x * x, axis=-1)

    return DiffusionProblem(
        state_dim=1,
        noise_dim=1,
        horizon=1.0,
        num_steps=1,
        initial_state=np.zeros(1),
        terminal_cost=terminal,
    )


COUNTEREXAMPLE_PSI = 1.0 / np.sqrt(2.0)
