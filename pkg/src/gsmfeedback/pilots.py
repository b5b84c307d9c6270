"""
Learned downlink pilots constrained to GSM activation patterns.

Each pilot column may only drive the antennas of one legal connector, so the
pilot matrix is a fixed 0/1 mask times constant-modulus phasors whose phases
are trained.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError
from .topology import ConnectorSet, activation_distance, greedy_max_average

__all__ = ["build_pilot_mask", "PilotLayer", "emit_pilots", "observe", "complex_noise"]


def build_pilot_mask(connectors: ConnectorSet, l: int, seed_index: int = 0) -> np.ndarray:
    """``(n_t, l)`` mask whose columns are activation patterns of legal connectors.

    Patterns are picked greedily by maximum average Hamming distance to those
    already picked (ties to the lexicographically lowest group tuple).  Once
    all ``M`` patterns are used the greedy order repeats.
    """
    if l < 1:
        raise ConfigurationError("pilot length must be at least 1")
    if connectors is None or len(connectors) == 0:
        raise ConfigurationError("empty connector set")
    legal = sorted(connectors.legal, key=lambda c: c.groups)
    pats = np.stack([c.pattern for c in legal])
    dist = np.array([[activation_distance(a, b) for b in pats] for a in pats])
    idx = greedy_max_average(dist, l, seed_index=seed_index, allow_repeat=True)
    return pats[idx].T.astype(float)


def complex_noise(rng, shape, noise_var):
    """i.i.d. ``CN(0, noise_var)`` samples."""
    s = np.sqrt(noise_var / 2)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


class PilotLayer(ad.Module):
    """Trainable pilot phases behind a fixed GSM mask (a bias-free linear layer)."""

    def __init__(self, mask, power: float, n_k: int, rng):
        self.mask = np.asarray(mask, dtype=float)
        self.power = float(power)
        self.n_k = int(n_k)
        self.theta_x = ad.Parameter(rng.uniform(0.0, 2 * np.pi, size=self.mask.shape))

    @property
    def l(self) -> int:
        return self.mask.shape[1]

    @property
    def amplitude(self) -> float:
        return np.sqrt(self.power / self.n_k)

    def forward(self) -> ad.Complex:
        scale = self.amplitude * self.mask
        return ad.Complex(ad.mul(ad.cos(self.theta_x), scale), ad.mul(ad.sin(self.theta_x), scale))

    def matrix(self) -> np.ndarray:
        """Current pilot matrix as a plain complex array."""
        return self.amplitude * np.exp(1j * self.theta_x.values) * self.mask


def emit_pilots(layer: PilotLayer) -> ad.Complex:
    """``sqrt(P/n_k) exp(j theta_X) * mask`` as a differentiable complex pair."""
    return layer()


def observe(h, x, noise_var: float, rng, noise=None):
    """Noisy pilot observation ``Y = H X + N``.

    ``h`` may carry leading batch axes.  ``x`` is either a complex array or a
    differentiable :class:`Complex` pair; the result has the same kind.  A
    precomputed ``noise`` array overrides the draw from ``rng``.
    """
    h = np.asarray(h)
    if isinstance(x, ad.Complex):
        clean = ad.cmatmul(h, x)
    else:
        clean = h @ np.asarray(x)
    if noise is None:
        noise = complex_noise(rng, clean.shape, noise_var) if noise_var > 0 else np.zeros(clean.shape, complex)
    return clean + noise
