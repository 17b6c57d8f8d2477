"""Constitutive quantities of the scaled compressible Navier-Stokes-Poisson
system: pressure rho^gamma, relative energy H, density fluctuation sigma,
Poisson coupling eps^beta lap(V) = rho - 1, the electric-force tensor
identity, and the slow forcing tensors used by the acoustic Duhamel step.

Scaling conventions (epsilon = Mach number, lambda^2 = epsilon^beta):

    d(rho) + div(m) dt = 0
    d(m)   + [div(rho u x u) + eps^-2 grad(rho^gamma)] dt
           = [nu1 lap(u) + (nu1+nu2) grad(div u) + eps^-2 rho grad(V)] dt
             + G(rho, m) dW
    eps^beta lap(V) = rho - 1

The momentum equation splits into a stiff linear part acting on
(sigma, Q m) and the slow remainder

    -div(FT1 + FT2) - grad(FS1 + FS2),
    FT1 = rho u x u - eps^(beta-2) grad(V) x grad(V),
    FT2 = -nu1 grad(u),
    FS1 = eps^-2 (gamma-1) H + eps^(beta-2) |grad V|^2 / 2,
    FS2 = -(nu1+nu2) div(u),

which is exact because eps^-2 rho grad(V) = eps^-2 grad(V)
+ eps^(beta-2)[div(grad V x grad V) - grad(|grad V|^2)/2].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp

__all__ = [
    "PhysParams",
    "FluidState",
    "ForcingTensors",
    "relative_energy",
    "pressure",
    "sigma_fluctuation",
    "poisson_solve",
    "electric_force_identity_check",
    "assemble_forcing",
    "energy_functional",
    "energy_components",
    "make_ill_prepared_data",
]

MEAN_TOL = 1e-10


@dataclass(frozen=True)
class PhysParams:
    """Physical parameters of one scaled run."""

    gamma: float = 2.0
    nu1: float = 0.1
    nu2: float = 0.0
    epsilon: float = 0.1
    beta: float = 0.2
    delta_slack: float = 0.1

    def __post_init__(self):
        if self.gamma <= 1.5:
            raise ValueError(f"gamma must exceed 3/2, got {self.gamma}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0,1], got {self.epsilon}")
        if self.nu1 < 0 or self.nu2 < 0:
            raise ValueError("viscosities must be nonnegative")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.delta_slack <= 0:
            raise ValueError("delta_slack must be positive")
        if self.beta > 0 and self.beta >= 1.0 / (2.0 + self.delta_slack):
            raise ValueError(
                f"quasineutral mode needs beta < 1/(2+delta) = "
                f"{1.0 / (2.0 + self.delta_slack):.4f}, got {self.beta}"
            )

    @property
    def eps_beta(self):
        return self.epsilon ** self.beta

    @property
    def decay_exponent(self):
        """Predicted gradient-part decay exponent 1 - (2+delta)*beta."""
        return 1.0 - (2.0 + self.delta_slack) * self.beta


@dataclass
class FluidState:
    """Density, momentum and electric potential on the grid."""

    rho: np.ndarray
    momentum: np.ndarray
    potential: np.ndarray
    time: float = 0.0

    def velocity(self, floor=1e-10):
        rmin = float(np.min(self.rho))
        if rmin <= floor:
            raise ValueError(f"density not positive: min rho = {rmin:.3e}")
        return self.momentum / self.rho

    def copy(self):
        return FluidState(
            self.rho.copy(), self.momentum.copy(),
            self.potential.copy(), self.time,
        )


@dataclass
class ForcingTensors:
    """Slow forcing of the momentum equation (see module docstring)."""

    F1_tensor: np.ndarray    # (3,3,n,n,n)
    F2_tensor: np.ndarray
    F1_scalar: np.ndarray
    F2_scalar: np.ndarray


def relative_energy(rho, gamma):
    """H(rho,1) = [rho^gamma - gamma (rho-1) - 1]/(gamma-1), pointwise >= 0."""
    rho = np.asarray(rho)
    if np.min(rho) <= 0:
        raise ValueError("relative_energy needs positive density")
    return (rho ** gamma - gamma * (rho - 1.0) - 1.0) / (gamma - 1.0)


def pressure(rho, gamma, a=1.0):
    rho = np.asarray(rho)
    if np.min(rho) <= 0:
        raise ValueError("pressure needs positive density")
    return a * rho ** gamma


def sigma_fluctuation(rho, epsilon):
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return (np.asarray(rho) - 1.0) / epsilon


def poisson_solve(rho, epsilon, beta, grid):
    """Zero-mean V with eps^beta lap(V) = rho - 1 (torus compatibility)."""
    mean = float(np.mean(rho))
    if abs(mean - 1.0) > 1e-8:
        raise ValueError(
            f"Poisson source incompatible: mean(rho) = {mean!r}, expected 1"
        )
    eps_beta = epsilon ** beta
    return sp.inverse_laplacian(np.asarray(rho) - 1.0, grid) / eps_beta


def electric_force_identity_check(V, epsilon, beta, grid):
    """Relative residual of lap(V) grad(V) = div(gV x gV) - grad(|gV|^2)/2.

    Products are dealiased; both sides carry the eps^(beta-2) scaling of the
    momentum equation (a common factor, kept for fidelity).
    """
    scale = epsilon ** (beta - 2.0)
    gv = sp.gradient(V, grid)
    lap_v = sp.laplacian(V, grid)
    lhs = scale * np.stack([sp.dealias(lap_v * gv[i], grid) for i in range(3)])

    div_t = np.zeros((3,) + grid.shape)
    for i in range(3):
        for j in range(3):
            prod = sp.forward(sp.dealias(gv[i] * gv[j], grid), grid)
            div_t[i] += sp.inverse(1j * grid.xi[j] * prod, grid)
    sq = sp.dealias(gv[0] ** 2 + gv[1] ** 2 + gv[2] ** 2, grid)
    rhs = scale * (div_t - 0.5 * sp.gradient(sq, grid))

    denom = sp.l2_norm(lhs, grid)
    if denom == 0.0:
        return sp.l2_norm(rhs, grid)
    return sp.l2_norm(lhs - rhs, grid) / denom


def _check_consistent(state, params, grid, tol=1e-6):
    res = params.eps_beta * sp.laplacian(state.potential, grid) - (
        state.rho - 1.0
    )
    src = sp.l2_norm(state.rho - 1.0, grid)
    if src > 0 and sp.l2_norm(res, grid) > tol * src:
        raise ValueError("potential inconsistent with density (re-solve Poisson)")


def assemble_forcing(state, params, grid, dealias_products=True):
    """Slow forcing tensors at the current state (products dealiased)."""
    u = state.velocity()
    _check_consistent(state, params, grid)
    gv = sp.gradient(state.potential, grid)
    eps = params.epsilon
    scale_e = eps ** (params.beta - 2.0)

    trim = (lambda f: sp.dealias(f, grid)) if dealias_products else (lambda f: f)

    f1t = np.empty((3, 3) + grid.shape)
    for i in range(3):
        for j in range(3):
            f1t[i, j] = trim(state.rho * u[i] * u[j]) - scale_e * trim(
                gv[i] * gv[j]
            )

    grad_u = np.stack([sp.gradient(u[i], grid) for i in range(3)])
    f2t = -params.nu1 * grad_u

    h = relative_energy(state.rho, params.gamma)
    f1s = (params.gamma - 1.0) / eps ** 2 * trim(h) + 0.5 * scale_e * trim(
        gv[0] ** 2 + gv[1] ** 2 + gv[2] ** 2
    )
    f2s = -(params.nu1 + params.nu2) * sp.divergence(u, grid)
    return ForcingTensors(f1t, f2t, f1s, f2s)


def energy_components(state, params, grid):
    """(kinetic, internal, electric) integrals of the augmented energy."""
    u = state.velocity()
    kin = 0.5 * grid.h ** 3 * float(np.sum(state.rho * np.sum(u * u, axis=0)))
    h = relative_energy(state.rho, params.gamma)
    internal = grid.h ** 3 * float(np.sum(h)) / params.epsilon ** 2
    gv = sp.gradient(state.potential, grid)
    # the 1/2 makes the noise-off balance d/dt E = -dissipation exact:
    # d/dt (1/2)int|gV|^2 = -eps^-beta int gV.m pairs with the eps^-2 rho gV
    # work term of the kinetic part
    electric = 0.5 * params.epsilon ** (params.beta - 2.0) * grid.h ** 3 * (
        float(np.sum(gv * gv))
    )
    return kin, internal, electric


def energy_functional(state, params, grid):
    return float(sum(energy_components(state, params, grid)))


def _band_limited_field(rng, grid, band, shape=()):
    """Zero-mean real field with modes 0 < |k|_inf <= band, random phases."""
    n = grid.n
    fh = np.zeros(shape + grid.spectral_shape, dtype=complex)
    k = np.fft.fftfreq(n, d=1.0 / n)
    kr = np.fft.rfftfreq(n, d=1.0 / n)
    mask = (
        (np.abs(k[:, None, None]) <= band)
        & (np.abs(k[None, :, None]) <= band)
        & (np.abs(kr[None, None, :]) <= band)
    )
    mask[0, 0, 0] = False
    idx = np.where(mask)
    m = len(idx[0])
    coeffs = rng.standard_normal(shape + (m,)) + 1j * rng.standard_normal(
        shape + (m,)
    )
    fh[..., idx[0], idx[1], idx[2]] = coeffs
    f = sp.inverse(fh, grid)
    return f - np.mean(f, axis=(-3, -2, -1), keepdims=True)


def make_ill_prepared_data(params, grid, seed, amplitude=1.0,
                           velocity_amplitude=1.0, band=2):
    """Seeded ill-prepared data: rho0 = 1 + eps sigma0, Q u0 != 0.

    sigma0 is band-limited, zero-mean, with sup norm eps^(beta/2) * amplitude
    so that all three energy components stay bounded uniformly in eps (the
    electric term scales like eps^-beta * ||grad invlap sigma0||^2).  The
    underlying random fields depend on the seed only, so runs at different
    eps share the same shapes.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    if params.epsilon * amplitude >= 1.0:
        raise ValueError(
            f"amplitude {amplitude} too large for positivity at "
            f"eps={params.epsilon}"
        )
    rng = np.random.Generator(np.random.Philox(key=seed))

    sigma0 = _band_limited_field(rng, grid, band)
    sup = float(np.max(np.abs(sigma0)))
    if sup > 0 and amplitude > 0:
        sigma0 *= params.eps_beta ** 0.5 * amplitude / sup
    else:
        sigma0 = np.zeros(grid.shape)
    rho0 = 1.0 + params.epsilon * sigma0

    vec = _band_limited_field(rng, grid, band, shape=(3,))
    sol = sp.project_solenoidal(vec, grid)
    nrm = sp.l2_norm(sol, grid)
    if nrm > 0:
        sol *= velocity_amplitude / nrm
    pot_seed = _band_limited_field(rng, grid, band)
    grad_part = sp.gradient(pot_seed, grid)
    nrm = sp.l2_norm(grad_part, grid)
    if nrm > 0:
        grad_part *= velocity_amplitude / nrm
    u0 = sol + grad_part

    v0 = poisson_solve(rho0, params.epsilon, params.beta, grid)
    return FluidState(rho=rho0, momentum=rho0 * u0, potential=v0, time=0.0)
