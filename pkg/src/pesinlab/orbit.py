"""Recorded backward orbits (samples of the natural extension)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class BackwardOrbit:
    """A chain x_0, x_1, ..., x_N with f(x_{k+1}) = x_k.

    ``step_derivs[k]`` is f'(x_{k+1}); ``log_weights[k]`` the log-probability of
    the choice made at step k. In ``first_return`` mode every step is a first
    return: ``return_times[k]`` single-map steps lead from x_{k+1} to x_k and
    ``chain`` holds the underlying single-map backward chain.
    """

    points: np.ndarray
    step_derivs: np.ndarray
    log_weights: np.ndarray
    mode: str
    return_times: np.ndarray | None = None
    chain: np.ndarray | None = None
    raw_weight_sums: np.ndarray | None = None
    resamples: int = 0
    max_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex)
        self.step_derivs = np.asarray(self.step_derivs, dtype=complex)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.step_derivs.size != self.points.size - 1 or self.log_weights.size != self.points.size - 1:
            raise ValueError("orbit arrays have inconsistent lengths")

    @property
    def depth(self) -> int:
        return self.points.size - 1

    def log_derivative_chain(self) -> np.ndarray:
        """log|(f^n)'(x_n)| for n = 0..N (single-map steps in plain modes)."""
        return np.concatenate([[0.0], np.cumsum(np.log(np.abs(self.step_derivs)))])

    def to_dict(self):
        out = {
            "mode": self.mode,
            "points": [[z.real, z.imag] for z in self.points],
            "step_derivs_abs": np.abs(self.step_derivs).tolist(),
            "log_weights": self.log_weights.tolist(),
            "resamples": self.resamples,
            "max_residual": self.max_residual,
        }
        if self.return_times is not None:
            out["return_times"] = np.asarray(self.return_times).tolist()
        return out
