"""
GSM hybrid beamformers: diagonal constant-modulus analog stage, one digital
beamformer per legal connector, and the Frobenius power normalization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBeamformerError, DimensionError
from .topology import Connector, ConnectorSet

__all__ = [
    "HybridBeamformer",
    "build_analog",
    "normalize_digital",
    "effective_channel",
    "precoders",
    "normalize_precoders",
    "random_beamformer",
]

DEGENERATE_NORM = 1e-12


def _matrix(c):
    return c.matrix if isinstance(c, Connector) else np.asarray(c)


def build_analog(theta_a, n_k: int) -> np.ndarray:
    """Diagonal analog beamformer ``diag(exp(j theta_a)) / sqrt(n_k)``."""
    theta_a = np.asarray(theta_a, dtype=float)
    if theta_a.ndim != 1:
        raise DimensionError("theta_a must be a vector")
    return np.diag((np.cos(theta_a) + 1j * np.sin(theta_a)) / np.sqrt(n_k))


def normalize_digital(a: np.ndarray, c_m, d_hat: np.ndarray, n_s: int | None = None) -> np.ndarray:
    """Scale ``d_hat`` so that ``||A C_m D_m||_F^2 = n_s``.

    ``n_s`` defaults to the number of columns of ``d_hat``.
    """
    d_hat = np.asarray(d_hat)
    if n_s is None:
        n_s = d_hat.shape[-1]
    norm = np.linalg.norm(a @ _matrix(c_m) @ d_hat)
    if not norm >= DEGENERATE_NORM:
        raise DegenerateBeamformerError(f"||A C D_hat||_F = {norm:.3g} is degenerate")
    return np.sqrt(n_s) / norm * d_hat


def effective_channel(h, a, c_m, d_m) -> np.ndarray:
    """Noiseless signal map ``H A C_m D_m`` of shape ``(n_r, n_s)``."""
    h, a, d_m = np.asarray(h), np.asarray(a), np.asarray(d_m)
    c = _matrix(c_m)
    if h.shape[-1] != a.shape[-2] or a.shape[-1] != c.shape[-2] or c.shape[-1] != d_m.shape[-2]:
        raise DimensionError(
            f"non-conformable shapes H{h.shape} A{a.shape} C{c.shape} D{d_m.shape}")
    return h @ a @ c @ d_m


def precoders(theta_a, d, connectors, n_k: int) -> np.ndarray:
    """Stacked effective precoders ``A C_m D_m``.

    Broadcasts over leading batch axes: ``theta_a`` is ``(..., n_t)``, ``d`` is
    ``(..., M, n_rf, n_s)`` and the result is ``(..., M, n_t, n_s)``.
    """
    c = connectors.stacked() if isinstance(connectors, ConnectorSet) else np.asarray(connectors, float)
    theta_a = np.asarray(theta_a, dtype=float)
    phasor = np.exp(1j * theta_a) / np.sqrt(n_k)
    ac = phasor[..., None, :, None] * c
    return ac @ np.asarray(d)


def normalize_precoders(f_hat: np.ndarray, n_s: int | None = None) -> np.ndarray:
    """Batched equivalent of :func:`normalize_digital` applied to stacked precoders."""
    if n_s is None:
        n_s = f_hat.shape[-1]
    norm = np.sqrt(np.sum(np.abs(f_hat) ** 2, axis=(-2, -1), keepdims=True))
    if np.any(~(norm >= DEGENERATE_NORM)):
        raise DegenerateBeamformerError("at least one raw digital beamformer is degenerate")
    return f_hat * (np.sqrt(n_s) / norm)


@dataclass
class HybridBeamformer:
    """Analog phases plus one normalized digital beamformer per legal connector."""

    theta_a: np.ndarray
    digital: np.ndarray  # (M, n_rf, n_s) complex
    connectors: ConnectorSet
    n_k: int

    def __post_init__(self):
        self.theta_a = np.asarray(self.theta_a, dtype=float)
        self.digital = np.asarray(self.digital, dtype=complex)
        if self.digital.ndim != 3 or self.digital.shape[0] != self.connectors.m:
            raise DimensionError(
                f"need {self.connectors.m} digital beamformers, got shape {self.digital.shape}")

    @property
    def m(self) -> int:
        return self.connectors.m

    @property
    def n_s(self) -> int:
        return self.digital.shape[-1]

    @property
    def analog(self) -> np.ndarray:
        return build_analog(self.theta_a, self.n_k)

    def precoders(self) -> np.ndarray:
        """``(M, n_t, n_s)`` stack of ``A C_m D_m``."""
        return precoders(self.theta_a, self.digital, self.connectors, self.n_k)

    @classmethod
    def from_raw(cls, theta_a, d_hat, connectors: ConnectorSet, n_k: int):
        """Normalize every raw ``d_hat[m]`` against its connector and wrap."""
        a = build_analog(theta_a, n_k)
        d = np.stack([normalize_digital(a, c, dh) for c, dh in zip(connectors.legal, d_hat)])
        return cls(theta_a, d, connectors, n_k)


def random_beamformer(connectors: ConnectorSet, n_k: int, n_s: int, rng) -> HybridBeamformer:
    """Uniform random phases and complex Gaussian digital beamformers, normalized."""
    n_t, n_rf = connectors[0].matrix.shape
    theta = rng.uniform(0, 2 * np.pi, n_t)
    shape = (connectors.m, n_rf, n_s)
    d_hat = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return HybridBeamformer.from_raw(theta, d_hat, connectors, n_k)
