"""
Clustered Saleh-Valenzuela mmWave channel with uniform linear arrays.

Channels are plain complex ``(n_r, n_t)`` arrays; datasets are
``(count, n_r, n_t)`` arrays with a small binary file format for storage.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError

__all__ = [
    "ChannelConfig",
    "steering_vector",
    "steering_matrix",
    "truncated_laplace",
    "sample_channel",
    "generate_dataset",
    "write_dataset",
    "read_dataset",
]

DATASET_MAGIC = b"SVCH"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


@dataclass(frozen=True)
class ChannelConfig:
    """Saleh-Valenzuela channel parameters (angles in degrees, lengths in meters)."""

    n_t: int = 16
    n_r: int = 4
    n_cl: int = 2
    n_ray: int = 8
    wavelength: float = 5e-3
    spacing: float | None = None
    angular_spread: float = 7.5
    tx_sector: tuple = (-30.0, 30.0)
    rx_sector: tuple = (-180.0, 180.0)
    rng_seed: int = 0
    truncation: float = 3.0

    def __post_init__(self):
        if self.n_t < 1 or self.n_r < 1:
            raise ConfigurationError("antenna counts must be positive")
        if self.n_cl < 1 or self.n_ray < 1:
            raise ConfigurationError("n_cl and n_ray must be at least 1")
        if self.angular_spread <= 0:
            raise ConfigurationError("angular_spread must be positive")
        for name in ("tx_sector", "rx_sector"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigurationError(f"{name} must be a nonempty interval")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.wavelength <= 0:
            raise ConfigurationError("wavelength must be positive")
        if self.spacing is not None and self.spacing <= 0:
            raise ConfigurationError("spacing must be positive")

    @property
    def element_spacing(self) -> float:
        return self.wavelength / 2 if self.spacing is None else self.spacing


def steering_vector(theta, n, wavelength=5e-3, spacing=None):
    """Normalized ULA response ``exp(j 2 pi d/lambda k sin(theta)) / sqrt(n)``.

    Parameters
    ----------
    theta : float or array
        Angle(s) in degrees.  An array of angles gives one column per angle.
    n : int
        Number of array elements.
    wavelength, spacing : float
        Carrier wavelength and element spacing; spacing defaults to half a
        wavelength.
    """
    if n < 1:
        raise DimensionError("steering vector needs at least one element")
    if spacing is None:
        spacing = wavelength / 2
    theta = np.asarray(theta, dtype=float)
    k = np.arange(n)
    phase = 2 * np.pi * spacing / wavelength * np.multiply.outer(k, np.sin(np.deg2rad(theta)))
    return np.exp(1j * phase) / np.sqrt(n)


def steering_matrix(thetas, n, wavelength=5e-3, spacing=None):
    """Steering vectors for a 1-d array of angles, stacked as columns ``(n, len(thetas))``."""
    return steering_vector(np.atleast_1d(thetas), n, wavelength, spacing)


def truncated_laplace(rng, std, cutoff, size):
    """Zero-mean Laplacian samples with standard deviation ``std``, truncated at ``±cutoff*std``.

    Uses inverse-CDF sampling so exactly one uniform draw is consumed per sample.
    """
    b = std / np.sqrt(2.0)
    c = cutoff * std
    lo = 0.5 * np.exp(-c / b)
    u = rng.uniform(lo, 1.0 - lo, size=size)
    return np.where(u < 0.5, b * np.log(2 * u), -b * np.log(2 - 2 * u))


def _angles(rng, sector, n_cl, n_ray, spread, cutoff):
    centers = rng.uniform(sector[0], sector[1], size=(n_cl, 1))
    return centers + truncated_laplace(rng, spread, cutoff, (n_cl, n_ray))


def sample_channel(cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw one channel realization ``H`` of shape ``(n_r, n_t)``."""
    n_paths = cfg.n_cl * cfg.n_ray
    aod = _angles(rng, cfg.tx_sector, cfg.n_cl, cfg.n_ray, cfg.angular_spread, cfg.truncation)
    aoa = _angles(rng, cfg.rx_sector, cfg.n_cl, cfg.n_ray, cfg.angular_spread, cfg.truncation)
    gains = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2)
    a_t = steering_matrix(aod.ravel(), cfg.n_t, cfg.wavelength, cfg.element_spacing)
    a_r = steering_matrix(aoa.ravel(), cfg.n_r, cfg.wavelength, cfg.element_spacing)
    scale = np.sqrt(cfg.n_t * cfg.n_r / n_paths)
    return scale * (a_r * gains) @ a_t.conj().T


def sample_angles(cfg: ChannelConfig, rng: np.random.Generator):
    """AoD/AoA draws as used by :func:`sample_channel` (for sector checks)."""
    aod = _angles(rng, cfg.tx_sector, cfg.n_cl, cfg.n_ray, cfg.angular_spread, cfg.truncation)
    aoa = _angles(rng, cfg.rx_sector, cfg.n_cl, cfg.n_ray, cfg.angular_spread, cfg.truncation)
    return aod, aoa


def generate_dataset(cfg: ChannelConfig, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``count`` independent channels as a ``(count, n_r, n_t)`` array.

    Without an explicit ``rng`` the generator is seeded from ``cfg.rng_seed``.
    """
    if count < 1:
        raise ConfigurationError("count must be at least 1")
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    return np.stack([sample_channel(cfg, rng) for _ in range(count)])


def write_dataset(path, channels: np.ndarray) -> None:
    """Write channels as little-endian header + interleaved float64 re/im, row-major."""
    channels = np.asarray(channels, dtype=np.complex128)
    if channels.ndim == 2:
        channels = channels[None]
    if channels.ndim != 3:
        raise DimensionError("expected a (count, n_r, n_t) array")
    count, n_r, n_t = channels.shape
    body = np.ascontiguousarray(channels).view(np.float64).astype("<f8", copy=False)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, n_r, n_t, count))
        fh.write(body.tobytes())


def read_dataset(path) -> np.ndarray:
    """Inverse of :func:`write_dataset`."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n_r, n_t, count = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise ValueError(f"{path}: not a channel dataset (magic {magic!r})")
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    expected = count * n_r * n_t * 16
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    vals = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return vals.view(np.complex128).reshape(count, n_r, n_t)
