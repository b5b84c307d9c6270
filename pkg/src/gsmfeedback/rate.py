"""
Achievable rate of a GSM hybrid beamformer.

The rate splits into the amplitude-phase term ``I(y; s | m)`` (closed form,
log-determinants of the per-connector received covariances) and the spatial
term ``I(y; m)`` (Monte Carlo over the Gaussian mixture of hypotheses).  Only
the former is differentiable and serves as the training objective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .beamforming import DEGENERATE_NORM, HybridBeamformer
from .errors import ConfigurationError, DegenerateBeamformerError, NumericalDomainError

__all__ = [
    "LinkParams",
    "RateReport",
    "covariance",
    "covariances",
    "logdet_hpd",
    "mi_amp_phase",
    "mi_amp_phase_batch",
    "mi_spatial",
    "mi_spatial_from_cov",
    "achievable_rate",
    "training_loss",
    "link_from_snr",
]

LOG2E = 1.0 / np.log(2.0)


@dataclass(frozen=True)
class LinkParams:
    """Average transmit power ``P`` and noise variance ``sigma^2`` (linear)."""

    power: float = 1.0
    noise_var: float = 0.1

    def __post_init__(self):
        if not (self.power > 0 and self.noise_var > 0):
            raise ConfigurationError("power and noise_var must be positive")

    @property
    def snr_db(self) -> float:
        return 10 * np.log10(self.power / self.noise_var)


def link_from_snr(snr_db: float, power: float = 1.0) -> LinkParams:
    """``P`` fixed, ``sigma^2 = P * 10^(-SNR/10)``."""
    return LinkParams(power=power, noise_var=power * 10 ** (-snr_db / 10))


@dataclass(frozen=True)
class RateReport:
    mi_amp_phase: float
    mi_spatial: float
    total: float
    mc_samples: int
    mc_stderr: float


def covariances(h, f, link: LinkParams) -> np.ndarray:
    """Received covariances for stacked precoders.

    ``h`` is ``(..., n_r, n_t)`` and ``f`` the ``(..., M, n_t, n_s)`` stack of
    ``A C_m D_m``; returns ``(..., M, n_r, n_r)``.
    """
    h = np.asarray(h)
    g = h[..., None, :, :] @ f
    n_s = f.shape[-1]
    n_r = h.shape[-2]
    gram = g @ np.conj(np.swapaxes(g, -1, -2))
    return link.noise_var * np.eye(n_r) + (link.power / n_s) * gram


def covariance(h, a, c_m, d_m, link: LinkParams) -> np.ndarray:
    """``sigma^2 I + (P/n_s) (H A C D)(H A C D)^H`` for one connector."""
    from .beamforming import effective_channel
    g = effective_channel(h, a, c_m, d_m)
    n_s = g.shape[-1]
    return link.noise_var * np.eye(g.shape[0]) + (link.power / n_s) * (g @ g.conj().T)


def logdet_hpd(s) -> np.ndarray:
    """Natural log-determinant of Hermitian positive-definite stacks via Cholesky."""
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NumericalDomainError("covariance is not positive definite") from exc
    return 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)


def mi_amp_phase_batch(h, f, link: LinkParams) -> np.ndarray:
    """Amplitude-phase MI (bits) for each leading batch entry of ``h``/``f``."""
    sig = covariances(h, f, link) / link.noise_var
    return logdet_hpd(sig).mean(axis=-1) * LOG2E


def mi_amp_phase(hb: HybridBeamformer, h, link: LinkParams) -> float:
    """``(1/M) sum_m log2 det(Sigma_m / sigma^2)``."""
    return float(mi_amp_phase_batch(h, hb.precoders(), link))


def mi_spatial_from_cov(sigmas, mc_samples: int, rng) -> tuple[float, float]:
    """Monte-Carlo ``I(y; m)`` for equiprobable zero-mean complex Gaussian hypotheses.

    Parameters
    ----------
    sigmas : array (M, n, n)
        Hypothesis covariances.
    mc_samples : int
        Draws of ``y`` per hypothesis.

    Returns
    -------
    value, stderr : float
        Estimate in bits (floored at 0) and its Monte-Carlo standard error.
    """
    if mc_samples < 1:
        raise ConfigurationError("mc_samples must be at least 1")
    sigmas = np.asarray(sigmas, dtype=complex)
    m, n, _ = sigmas.shape
    if m == 1:
        return 0.0, 0.0
    try:
        chol = np.linalg.cholesky(sigmas)
    except np.linalg.LinAlgError as exc:
        raise NumericalDomainError("singular hypothesis covariance") from exc
    logdets = 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)
    chol_inv = np.linalg.inv(chol)
    z = (rng.standard_normal((m, mc_samples, n)) + 1j * rng.standard_normal((m, mc_samples, n))) / np.sqrt(2)
    y = np.einsum("mij,msj->msi", chol, z)
    # whitened residual of every draw under every hypothesis l: (m, s, l, n)
    w = np.einsum("lij,msj->msli", chol_inv, y)
    # log f(y|l) up to the common -n log(pi) term
    logf = -logdets[None, None, :] - np.sum(np.abs(w) ** 2, axis=-1)
    own = logf[np.arange(m), :, np.arange(m)][..., None]  # (m, s, 1)
    diff = logf - own
    top = diff.max(axis=-1, keepdims=True)
    lse = top[..., 0] + np.log(np.exp(diff - top).sum(axis=-1))
    terms = (np.log(m) - lse) * LOG2E  # (m, s), each <= log2 m
    value = float(terms.mean())
    if mc_samples > 1:
        stderr = float(np.sqrt(terms.var(axis=1, ddof=1).sum() / mc_samples) / m)
    else:
        stderr = 0.0
    return max(value, 0.0), stderr


def mi_spatial(hb: HybridBeamformer, h, link: LinkParams, mc_samples: int = 1000,
               rng=None) -> tuple[float, float]:
    """Spatial-domain MI ``I(y; m)`` of one beamformer/channel pair."""
    rng = np.random.default_rng() if rng is None else rng
    return mi_spatial_from_cov(covariances(h, hb.precoders(), link), mc_samples, rng)


def achievable_rate(hb: HybridBeamformer, h, link: LinkParams, mc_samples: int = 1000,
                    rng=None) -> RateReport:
    amp = mi_amp_phase(hb, h, link)
    spat, err = mi_spatial(hb, h, link, mc_samples, rng)
    return RateReport(amp, spat, amp + spat, mc_samples, err)


# ---------------------------------------------------------------- differentiable loss

def graph_precoders(theta_a: ad.Tensor, d_re: ad.Tensor, d_im: ad.Tensor,
                    connectors: np.ndarray, n_k: int, normalize: bool = True) -> ad.Complex:
    """Normalized ``A C_m D_m`` stacks inside the graph.

    ``theta_a`` is ``(b, n_t)``; ``d_re``/``d_im`` are ``(b, M, n_rf, n_s)``;
    ``connectors`` is the constant ``(M, n_t, n_rf)`` stack.  Returns a
    ``(b, M, n_t, n_s)`` complex pair scaled so that every ``||A C_m D_m||_F^2 = n_s``.
    With ``normalize=False`` the digital beamformers are taken as already scaled.
    """
    b, n_t = theta_a.shape
    n_s = d_re.shape[-1]
    amp = 1.0 / np.sqrt(n_k)
    ph = ad.Complex(ad.reshape(ad.cos(theta_a), (b, 1, n_t, 1)) * amp,
                    ad.reshape(ad.sin(theta_a), (b, 1, n_t, 1)) * amp)
    ac = ph * connectors  # (b, M, n_t, n_rf)
    f_hat = ad.cmatmul(ac, ad.Complex(d_re, d_im))
    if not normalize:
        return f_hat
    norm2 = ad.sum(f_hat.abs2(), axis=(2, 3), keepdims=True)
    if np.any(~(np.sqrt(norm2.values) >= DEGENERATE_NORM)):
        raise DegenerateBeamformerError("raw digital beamformer collapsed to zero")
    scale = ad.div(np.sqrt(n_s), ad.sqrt(norm2))
    return f_hat * scale


def training_loss(theta_a, d_re, d_im, channels, connectors, link: LinkParams, n_k: int,
                  normalize: bool = True) -> ad.Tensor:
    """Batch mean of ``-I(y; s | m)`` in bits, differentiable w.r.t. the raw outputs.

    ``channels`` is a constant ``(b, n_r, n_t)`` complex array.  ``normalize``
    applies the power normalization inside the graph; switch it off to score
    beamformers that are already feasible (or deliberately silent).
    """
    channels = np.asarray(channels)
    if channels.ndim != 3 or channels.shape[0] == 0:
        raise ConfigurationError("training_loss needs a nonempty (b, n_r, n_t) batch")
    n_r = channels.shape[1]
    n_s = d_re.shape[-1]
    f = graph_precoders(theta_a, d_re, d_im, np.asarray(connectors, float), n_k, normalize)
    g = ad.cmatmul(channels[:, None], f)  # (b, M, n_r, n_s)
    gram = ad.cmatmul(g, g.H)
    c = link.power / (n_s * link.noise_var)
    s_re = ad.add(np.eye(n_r), ad.mul(gram.re, c))
    s_im = ad.mul(gram.im, c)
    ld = ad.hermitian_logdet(s_re, s_im)  # (b, M), nats
    return ad.mul(ad.mean(ld), -LOG2E)
