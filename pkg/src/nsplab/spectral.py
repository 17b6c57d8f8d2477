"""Spectral backbone on the periodic box [0, L)^3.

Real fields are plain float64 arrays: scalars have shape (n, n, n), vector
fields (3, n, n, n).  All spectral work uses the half-complex rfft layout
(n, n, n//2 + 1); a SpectralGrid carries the wavevector tables, the
two-thirds dealiasing mask and the quadrature weights needed for norms.

Conventions fixed here and relied on everywhere else:
  * the zero mode of the inverse Laplacian is gauged to 0 (mean-free output),
  * the Helmholtz gradient part Q v = grad(invlap(div v)) carries no zero
    mode; constants are assigned to the solenoidal part P v,
  * dealiasing is applied only inside nonlinear products, never inside
    linear propagators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpectralGrid",
    "MollifierSpec",
    "forward",
    "inverse",
    "apply_multiplier",
    "gradient",
    "divergence",
    "laplacian",
    "helmholtz",
    "project_solenoidal",
    "project_gradient",
    "inverse_laplacian",
    "mollifier_symbol",
    "mollify",
    "lp_norm",
    "l2_norm",
    "spectral_l2",
    "dealias",
    "mollifier_inverse_estimate_check",
]


def _check_finite(f, name="field"):
    if not np.all(np.isfinite(f)):
        bad = int(np.count_nonzero(~np.isfinite(f)))
        raise ValueError(f"{name} contains {bad} non-finite entries")


class SpectralGrid:
    """Immutable periodic-grid descriptor with precomputed mode tables."""

    def __init__(self, n: int, length: float = 2.0 * np.pi):
        if n < 8 or n % 2 != 0:
            raise ValueError(f"n must be even and >= 8, got {n}")
        if length <= 0:
            raise ValueError("box length must be positive")
        self.n = int(n)
        self.length = float(length)
        self.h = self.length / self.n
        self.volume = self.length ** 3

        k1 = np.fft.fftfreq(n, d=1.0 / n)            # integers -n/2..n/2-1
        k3 = np.fft.rfftfreq(n, d=1.0 / n)           # integers 0..n/2
        scale = 2.0 * np.pi / self.length
        # true per-axis frequencies (even multipliers: Laplacian, symbols)
        self.xi_full = (
            scale * k1[:, None, None],
            scale * k1[None, :, None],
            scale * k3[None, None, :],
        )
        self.xi_sq = (
            self.xi_full[0] ** 2 + self.xi_full[1] ** 2 + self.xi_full[2] ** 2
        )
        self.xi_sq_flat = np.broadcast_to(
            self.xi_sq, (n, n, n // 2 + 1)
        ).copy()
        # derivative tables: the Nyquist frequency is zeroed so that odd
        # (first-derivative) multipliers keep the Hermitian symmetry of
        # real fields; div/grad/Helmholtz all share these tables.
        k1d = k1.copy()
        k1d[n // 2] = 0.0
        k3d = k3.copy()
        k3d[-1] = 0.0
        self.xi = (
            scale * k1d[:, None, None],
            scale * k1d[None, :, None],
            scale * k3d[None, None, :],
        )
        self.xi_d_sq = self.xi[0] ** 2 + self.xi[1] ** 2 + self.xi[2] ** 2
        self.xi_d_sq_flat = np.broadcast_to(
            self.xi_d_sq, (n, n, n // 2 + 1)
        ).copy()
        # modes visible to the derivative operators (gauge slots excluded)
        self.deriv_mask = self.xi_d_sq_flat > 0

        kmax = n // 3
        self.dealias_mask = (
            (np.abs(k1[:, None, None]) <= kmax)
            & (np.abs(k1[None, :, None]) <= kmax)
            & (np.abs(k3[None, None, :]) <= kmax)
        )

        # rfft stores only half the spectrum; these weights make spectral
        # sums equal full-spectrum sums (conjugate modes counted twice).
        w = np.full(n // 2 + 1, 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        self.rfft_weights = w[None, None, :]

        x = np.arange(n) * self.h
        self.mesh = np.meshgrid(x, x, x, indexing="ij")

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def spectral_shape(self):
        return (self.n, self.n, self.n // 2 + 1)

    def __repr__(self):
        return f"SpectralGrid(n={self.n}, length={self.length:g})"


@dataclass(frozen=True)
class MollifierSpec:
    """Fourier-side mollifier of width kappa in (0, 1)."""

    kappa: float
    kind: str = "gaussian-fourier"

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie in (0,1), got {self.kappa}")
        if self.kind not in ("gaussian-fourier", "bump-fourier"):
            raise ValueError(f"unknown mollifier kind {self.kind!r}")


def forward(f, grid):
    """rfftn over the last three axes (vector fields componentwise)."""
    _check_finite(f)
    return np.fft.rfftn(f, axes=(-3, -2, -1))


def inverse(fh, grid):
    return np.fft.irfftn(fh, s=grid.shape, axes=(-3, -2, -1))


def apply_multiplier(f, mu, grid):
    """Apply the Fourier multiplier mu to a scalar or vector field.

    mu is either a spectral-shape ndarray or a callable (xi1, xi2, xi3) ->
    ndarray, evaluated on the half-spectrum.  Real output assumes the
    Hermitian symmetry mu(-xi) = conj(mu(xi)).
    """
    if callable(mu):
        mu = mu(*grid.xi)
    mu = np.asarray(mu)
    if not np.all(np.isfinite(mu)):
        raise ValueError("multiplier is undefined (non-finite) at some mode")
    return inverse(forward(f, grid) * mu, grid)


def gradient(f, grid):
    fh = forward(f, grid)
    return np.stack([inverse(1j * grid.xi[i] * fh, grid) for i in range(3)])


def divergence(v, grid):
    vh = forward(v, grid)
    return inverse(
        1j * (grid.xi[0] * vh[0] + grid.xi[1] * vh[1] + grid.xi[2] * vh[2]),
        grid,
    )


def laplacian(f, grid):
    return apply_multiplier(f, -grid.xi_sq, grid)


def _q_hat(vh, grid):
    """Gradient-part spectrum: xi (xi . vh) / |xi|^2, zero mode dropped."""
    dot = grid.xi[0] * vh[0] + grid.xi[1] * vh[1] + grid.xi[2] * vh[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(grid.xi_d_sq > 0, dot / grid.xi_d_sq, 0.0)
    return np.stack([grid.xi[i] * coef for i in range(3)])


def helmholtz(v, grid):
    """Split v into (P_part, Q_part): solenoidal + gradient components.

    The zero mode (constant field) goes to the solenoidal part.
    """
    _check_finite(v, "vector field")
    vh = forward(v, grid)
    qh = _q_hat(vh, grid)
    q = inverse(qh, grid)
    p = inverse(vh - qh, grid)
    return p, q


def project_solenoidal(v, grid):
    vh = forward(v, grid)
    return inverse(vh - _q_hat(vh, grid), grid)


def project_gradient(v, grid):
    return inverse(_q_hat(forward(v, grid), grid), grid)


def inverse_laplacian(f, grid):
    """Zero-mean g with lap(g) = f - mean(f); gauge g_hat(0) = 0."""
    _check_finite(f)
    fh = forward(f, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        gh = np.where(grid.xi_sq > 0, -fh / grid.xi_sq, 0.0)
    return inverse(gh, grid)


def _sinc(z):
    return np.sinc(z / np.pi)      # sin(z)/z with the 0 limit


def mollifier_symbol(spec: MollifierSpec, grid):
    """Kernel symbol on the half-spectrum; values in [0, 1], symbol(0)=1."""
    if spec.kind == "gaussian-fourier":
        return np.exp(-0.5 * spec.kappa ** 2 * grid.xi_sq_flat)
    # bump-fourier: tensorized triangle kernel of width 2*kappa
    # (nonnegative, unit mass, compact support); symbol sinc^2 per axis.
    sym = np.ones(grid.spectral_shape)
    for i in range(3):
        sym = sym * _sinc(0.5 * spec.kappa * grid.xi_full[i]) ** 2
    return sym


def mollify(f, spec: MollifierSpec, grid):
    return apply_multiplier(f, mollifier_symbol(spec, grid), grid)


def dealias(f, grid):
    """Truncate to the two-thirds band (use inside nonlinear products)."""
    return inverse(forward(f, grid) * grid.dealias_mask, grid)


def lp_norm(f, p, grid):
    """Quadrature L^p norm over the box; vector fields use |v| pointwise."""
    f = np.asarray(f)
    if f.ndim == 4:
        mag_p = np.sum(f * f, axis=0) ** (p / 2.0)
    else:
        mag_p = np.abs(f) ** p
    return float((grid.h ** 3 * np.sum(mag_p)) ** (1.0 / p))


def l2_norm(f, grid):
    f = np.asarray(f)
    return float(np.sqrt(grid.h ** 3 * np.sum(f * f)))


def spectral_l2(fh, grid):
    """L2 norm evaluated from an rfft spectrum (Parseval with weights)."""
    mag = np.abs(fh) ** 2 * grid.rfft_weights
    return float(np.sqrt(grid.volume * np.sum(mag)) / grid.n ** 3)


def mollifier_inverse_estimate_check(f, kappa, s, r, p, grid,
                                     kind="gaussian-fourier"):
    """Measured ratio for the inverse (negative-order) mollifier bound.

    ratio = ||[f]_kappa||_{L^p} / (kappa^{-s-3(1/r-1/p)} * |f|_{-s,r})
    where |f|_{-s,r} is the Bessel-potential surrogate: the L^r norm of
    (1 - lap)^{-s/2} f.  Exact W^{-s,2} for r = 2.
    """
    if r > p:
        raise ValueError(f"need r <= p, got r={r} > p={p}")
    if s < 0:
        raise ValueError("need s >= 0")
    spec = MollifierSpec(kappa, kind)
    smoothed = mollify(f, spec, grid)
    num = lp_norm(smoothed, p, grid)
    bessel = apply_multiplier(
        f, (1.0 + grid.xi_sq_flat) ** (-0.5 * s), grid
    )
    surrogate = lp_norm(bessel, r, grid)
    if surrogate == 0.0:
        return 0.0
    return num / (kappa ** (-s - 3.0 * (1.0 / r - 1.0 / p)) * surrogate)
