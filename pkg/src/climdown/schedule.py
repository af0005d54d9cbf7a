"""Diffusion noise schedule: beta, alpha, alpha-bar and sigma tables.

Tables are precomputed in float64 (cast to float32 at use sites) to keep
the cumulative product free of drift. Internal timestep indices run from
0 to T-1; index 0 is the first (least noisy) diffusion step.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed schedule quantities for T timesteps (float64)."""

    timesteps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    def lookup(self, t: int):
        """(beta, alpha, alpha_bar, sigma) at internal index t in [0, T)."""
        if not 0 <= t < self.timesteps:
            raise IndexError(f"timestep {t} outside [0, {self.timesteps})")
        return (
            float(self.beta[t]),
            float(self.alpha[t]),
            float(self.alpha_bar[t]),
            float(self.sigma[t]),
        )


def linear_schedule(
    timesteps: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02
) -> NoiseSchedule:
    """Linear beta schedule with the canonical DDPM endpoints.

    beta[t] interpolates linearly from beta_start to beta_end across the
    T steps; sigma[t] = sqrt(beta[t]) is the reverse-step noise scale.
    """
    if timesteps < 1:
        raise ValueError(f"timesteps must be >= 1, got {timesteps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    if timesteps == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        beta = np.linspace(beta_start, beta_end, timesteps, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(beta)
    return NoiseSchedule(timesteps, beta, alpha, alpha_bar, sigma)
