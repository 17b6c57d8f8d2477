import numpy as np
import pytest

from nsplab.spectral import SpectralGrid


@pytest.fixture(scope="session")
def grid16():
    return SpectralGrid(16)


@pytest.fixture(scope="session")
def grid32():
    return SpectralGrid(32)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=1234))


def random_field(rng, grid, band=None):
    """Real random field, optionally band-limited to |k|_inf <= band."""
    f = rng.standard_normal(grid.shape)
    if band is not None:
        k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
        kr = np.fft.rfftfreq(grid.n, d=1.0 / grid.n)
        mask = (
            (np.abs(k[:, None, None]) <= band)
            & (np.abs(k[None, :, None]) <= band)
            & (np.abs(kr[None, None, :]) <= band)
        )
        f = np.fft.irfftn(np.fft.rfftn(f) * mask, s=grid.shape, axes=(0, 1, 2))
    return f


def random_vector(rng, grid, band=None):
    return np.stack([random_field(rng, grid, band) for _ in range(3)])
