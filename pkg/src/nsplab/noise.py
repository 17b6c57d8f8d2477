"""Truncated cylindrical Wiener process and the diffusion family g_k.

The concrete family is linear in (rho, m) with a smooth compactly supported
cutoff chi inside the box:

    g_k(x, rho, m) = chi(x) * a_k * (alpha_k * rho * v_k + B_k m),

with a_k = k^-2, fixed unit vectors v_k, scalars alpha_k and 3x3 matrices
B_k drawn once from the model seed.  Linearity makes the growth bounds
closed-form and gives the limit diffusion by substituting (1, U).

Wiener increments come from a counter-based generator keyed by
(seed, path, step) so the identical path can be replayed by two different
solvers (coupled-path comparison) and across re-runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseModel", "WienerIncrement"]


@dataclass(frozen=True)
class WienerIncrement:
    dbeta: np.ndarray     # (K,) draws, each N(0, dt)
    dt: float


def _bump_profile(r):
    """C^infinity bump on (-1,1), 1 at the center, 0 outside."""
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    z = r[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z * z))
    return out


class NoiseModel:
    """K-mode noise with coefficients frozen at construction."""

    def __init__(self, grid, mode_count=16, seed=0, decay=2.0,
                 support_fraction=0.5, amplitude=1.0):
        if mode_count < 0:
            raise ValueError("mode_count must be nonnegative")
        if not 0.0 < support_fraction <= 1.0:
            raise ValueError("support_fraction must lie in (0,1]")
        self.grid = grid
        self.mode_count = int(mode_count)
        self.seed = int(seed)
        self.amplitude = float(amplitude)

        # chi: tensorized bump centered in the box, zero outside the sub-box
        # of side support_fraction * L.
        half = 0.5 * support_fraction * grid.length
        center = 0.5 * grid.length
        chi = np.ones(grid.shape)
        for axis in range(3):
            x = grid.mesh[axis]
            chi = chi * _bump_profile((x - center) / half)
        self.chi = chi

        k = np.arange(1, self.mode_count + 1, dtype=float)
        self.a = amplitude * k ** (-decay)

        rng = np.random.Generator(np.random.Philox(key=[self.seed, 0x6B]))
        if self.mode_count > 0:
            self.alpha = rng.uniform(0.5, 1.0, size=self.mode_count)
            v = rng.standard_normal((self.mode_count, 3))
            self.v = v / np.linalg.norm(v, axis=1, keepdims=True)
            b = rng.standard_normal((self.mode_count, 3, 3))
            norms = np.linalg.norm(b, ord=2, axis=(1, 2))
            self.B = b / norms[:, None, None]
        else:
            self.alpha = np.zeros(0)
            self.v = np.zeros((0, 3))
            self.B = np.zeros((0, 3, 3))

        # Sum a_k^2 (alpha_k^2 + |B_k|_F^2) covers both growth ratios;
        # the factor 2 absorbs the cross term in |x + y|^2.
        self.c_growth = 2.0 * float(
            np.sum(
                self.a ** 2
                * (self.alpha ** 2 + np.sum(self.B ** 2, axis=(1, 2)))
            )
        )

    def evaluate_diffusion(self, state, k):
        """g_k for 1-based mode index k."""
        if not 1 <= k <= self.mode_count:
            raise ValueError(
                f"mode index {k} out of range 1..{self.mode_count}"
            )
        i = k - 1
        lin = self.alpha[i] * state.rho[None] * self.v[i][:, None, None, None]
        lin = lin + np.einsum("ab,b...->a...", self.B[i], state.momentum)
        return self.chi[None] * self.a[i] * lin

    def diffusion_fields(self, state):
        """All g_k stacked, shape (K, 3, n, n, n)."""
        if self.mode_count == 0:
            return np.zeros((0, 3) + self.grid.shape)
        lin = (
            self.alpha[:, None, None, None, None]
            * self.v[:, :, None, None, None]
            * state.rho[None, None]
        )
        lin = lin + np.einsum("kab,b...->ka...", self.B, state.momentum)
        return self.chi[None, None] * self.a[:, None, None, None, None] * lin

    def growth_bound_check(self, state):
        """(ratio1, ratio2): pointwise growth and gradient-growth maxima.

        ratio1 = max_x sum_k |g_k|^2 / (rho^2 + |m|^2)
        ratio2 = max_x sum_k (|d g_k/d rho|^2 + |d g_k/d m|_F^2)
        Both must stay <= c_growth for every reachable state.
        """
        if self.mode_count == 0:
            return 0.0, 0.0
        g = self.diffusion_fields(state)
        num = np.sum(g * g, axis=(0, 1))
        den = state.rho ** 2 + np.sum(state.momentum ** 2, axis=0)
        ratio1 = float(np.max(num / den))
        coef = float(
            np.sum(
                self.a ** 2
                * (self.alpha ** 2 + np.sum(self.B ** 2, axis=(1, 2)))
            )
        )
        ratio2 = float(np.max(self.chi ** 2)) * coef
        return ratio1, ratio2

    def sample_increment(self, step, dt, path=0):
        """K iid N(0, dt) draws, reproducible from (seed, path, step)."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        bitgen = np.random.Philox(
            key=[self.seed, 0xA5], counter=[0, 0, path, step]
        )
        draws = np.random.Generator(bitgen).standard_normal(self.mode_count)
        return WienerIncrement(dbeta=np.sqrt(dt) * draws, dt=dt)

    def apply_noise(self, state, increment):
        """Momentum increment sum_k g_k dbeta_k (vector field)."""
        if increment.dbeta.shape != (self.mode_count,):
            raise ValueError("increment size does not match mode count")
        if self.mode_count == 0:
            return np.zeros((3,) + self.grid.shape)
        g = self.diffusion_fields(state)
        return np.einsum("k,ka...->a...", increment.dbeta, g)

    def ito_correction_density(self, state):
        """Pointwise (1/2) rho^-1 sum_k |g_k|^2 (energy-inequality term)."""
        if self.mode_count == 0:
            return np.zeros(self.grid.shape)
        g = self.diffusion_fields(state)
        return 0.5 * np.sum(g * g, axis=(0, 1)) / state.rho
