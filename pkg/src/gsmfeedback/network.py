"""
Encoder / binary quantizer / decoder that map pilot observations at the user
to hybrid beamformer parameters at the base station through ``B`` feedback bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DimensionError

__all__ = [
    "odd",
    "EncoderSpec",
    "DecoderSpec",
    "Encoder",
    "Decoder",
    "quantize",
    "encode",
    "decode",
]


def odd(x: float) -> int:
    """Closest odd integer to ``x``; even integers round down (16 -> 15)."""
    return max(1, 2 * math.floor((x - 1) / 2) + 1)


@dataclass(frozen=True)
class EncoderSpec:
    n_r: int
    l: int
    feedback_bits: int
    expand_channels: int = 24
    branch_kernels: tuple = (7, 11)

    def __post_init__(self):
        if self.feedback_bits < 1:
            raise ConfigurationError("feedback_bits must be at least 1")
        if self.n_r < 1 or self.l < 1:
            raise ConfigurationError("n_r and l must be positive")
        object.__setattr__(self, "branch_kernels", tuple(self.branch_kernels))

    @property
    def seq_len(self) -> int:
        return self.n_r * self.l

    @property
    def expander_kernel(self) -> int:
        return odd(self.n_r * self.l / 2)


@dataclass(frozen=True)
class DecoderSpec:
    feedback_bits: int
    n_t: int
    m: int
    n_rf: int
    n_s: int
    hidden_dims: tuple = (2048, 1024, 512)

    def __post_init__(self):
        if self.feedback_bits < 1:
            raise ConfigurationError("feedback_bits must be at least 1")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    @property
    def digital_size(self) -> int:
        return 2 * self.m * self.n_rf * self.n_s


class Encoder(ad.Module):
    """Complex flattening, adaptive-kernel expander, two parallel conv branches, affine to B."""

    def __init__(self, spec: EncoderSpec, rng):
        self.spec = spec
        c = spec.expand_channels
        self.expand = ad.Conv1d(2, c, spec.expander_kernel, rng)
        self.expand_bn = ad.BatchNorm(c)
        self.branches = [ad.Conv1d(c, c, k, rng) for k in spec.branch_kernels]
        self.branch_bns = [ad.BatchNorm(c) for _ in spec.branch_kernels]
        self.fc = ad.Linear(c * len(spec.branch_kernels) * spec.seq_len, spec.feedback_bits, rng)

    def forward(self, y: ad.Complex) -> ad.Tensor:
        b, n_r, l = y.shape
        if (n_r, l) != (self.spec.n_r, self.spec.l):
            raise DimensionError(f"encoder expects (*, {self.spec.n_r}, {self.spec.l}), got {y.shape}")
        n = n_r * l
        x = ad.concat([ad.reshape(y.re, (b, 1, n)), ad.reshape(y.im, (b, 1, n))], axis=1)
        x = ad.relu(self.expand_bn(self.expand(x)))
        feats = [ad.relu(bn(conv(x))) for conv, bn in zip(self.branches, self.branch_bns)]
        x = ad.concat(feats, axis=1)
        return self.fc(ad.reshape(x, (b, -1)))


class Decoder(ad.Module):
    """Pyramidal MLP followed by an analog-phase head and a digital-beamformer head."""

    def __init__(self, spec: DecoderSpec, rng):
        self.spec = spec
        dims = (spec.feedback_bits,) + spec.hidden_dims
        self.hidden = [ad.Linear(i, o, rng) for i, o in zip(dims[:-1], dims[1:])]
        self.hidden_bns = [ad.BatchNorm(o) for o in dims[1:]]
        self.phase_head = ad.Linear(dims[-1], spec.n_t, rng)
        self.digital_head = ad.Linear(dims[-1], spec.digital_size, rng)

    def forward(self, q):
        """Return ``(theta_a, d_re, d_im)`` with shapes ``(b, n_t)`` and ``(b, M, n_rf, n_s)``."""
        q = ad.tensor(q)
        if q.ndim != 2 or q.shape[1] != self.spec.feedback_bits:
            raise DimensionError(f"decoder expects (*, {self.spec.feedback_bits}) bits, got {q.shape}")
        x = q
        for lin, bn in zip(self.hidden, self.hidden_bns):
            x = ad.relu(bn(lin(x)))
        theta = self.phase_head(x)
        s = self.spec
        d = ad.reshape(self.digital_head(x), (q.shape[0], 2, s.m, s.n_rf, s.n_s))
        return theta, d[:, 0], d[:, 1]


def quantize(logits, surrogate_forward: bool = False) -> ad.Tensor:
    """Feedback bits in ``{-1, +1}`` with a straight-through ``tanh`` gradient."""
    return ad.sign_ste(logits, surrogate_forward=surrogate_forward)


def encode(y_tilde, encoder: Encoder) -> np.ndarray:
    """Pre-quantization logits for one ``(n_r, L)`` observation or a batch of them."""
    y = np.asarray(y_tilde)
    single = y.ndim == 2
    with ad.no_grad():
        out = encoder(ad.Complex(y[None] if single else y)).values
    return out[0] if single else out


def decode(q, decoder: Decoder):
    """Raw beamformer parameters for one bit vector: ``(theta_a, d_hat)`` with ``d_hat`` ``(M, n_rf, n_s)``."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    with ad.no_grad():
        theta, d_re, d_im = decoder(q[None] if single else q)
    d = d_re.values + 1j * d_im.values
    theta = theta.values
    return (theta[0], d[0]) if single else (theta, d)
