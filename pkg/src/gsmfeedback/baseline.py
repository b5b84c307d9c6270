"""
Conventional comparison pipeline: OMP channel estimation from the pilot
observations, optional uniform scalar quantization of the estimate, and an
SVD-based beamformer projected onto the GSM structure ("OMP+SVD-GSM").

This is a stand-in for the turbo-optimization beamformer, which is not
reproduced here.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .beamforming import HybridBeamformer, build_analog
from .channel import steering_matrix
from .errors import ConfigurationError, DimensionError
from .topology import ConnectorSet

__all__ = [
    "Dictionary",
    "build_dictionary",
    "sensing_matrix",
    "omp_estimate",
    "nmse",
    "allocate_bits",
    "quantize_csi",
    "svd_gsm_beamformer",
    "run_baseline",
]


@dataclass(frozen=True)
class Dictionary:
    """Outer-product steering atoms ``vec(a_r(theta_r) a_t(theta_t)^H)`` (row-major vec)."""

    grid_tx: np.ndarray
    grid_rx: np.ndarray
    atoms: np.ndarray  # (n_r * n_t, len(grid_rx) * len(grid_tx)), column index = i_rx * n_tx + i_tx
    n_r: int
    n_t: int

    @property
    def size(self) -> int:
        return self.atoms.shape[1]

    def atom_matrix(self, k: int) -> np.ndarray:
        return self.atoms[:, k].reshape(self.n_r, self.n_t)


def build_dictionary(n_r: int, n_t: int, grid_tx=64, grid_rx=64, tx_sector=(-30.0, 30.0),
                     rx_sector=(-180.0, 180.0), wavelength=5e-3, spacing=None) -> Dictionary:
    """Uniform angle grids over the given sectors (an int means that many points)."""
    gt = np.linspace(*tx_sector, grid_tx) if np.isscalar(grid_tx) else np.asarray(grid_tx, float)
    gr = np.linspace(*rx_sector, grid_rx) if np.isscalar(grid_rx) else np.asarray(grid_rx, float)
    a_t = steering_matrix(gt, n_t, wavelength, spacing)
    a_r = steering_matrix(gr, n_r, wavelength, spacing)
    atoms = np.einsum("ri,tj->rtij", a_r, a_t.conj()).reshape(n_r * n_t, gr.size * gt.size)
    return Dictionary(gt, gr, atoms, n_r, n_t)


def sensing_matrix(x_tilde, dic: Dictionary) -> np.ndarray:
    """Columns ``vec(A_k X)``: how each atom appears in the row-major vectorized observation."""
    x = np.asarray(x_tilde)
    if x.shape[0] != dic.n_t:
        raise DimensionError(f"pilot matrix has {x.shape[0]} rows, dictionary expects {dic.n_t}")
    cube = dic.atoms.reshape(dic.n_r, dic.n_t, -1)
    return np.einsum("rtg,tl->rlg", cube, x).reshape(dic.n_r * x.shape[1], -1)


def _lsq(phi_s, y):
    gram = phi_s.conj().T @ phi_s
    rhs = phi_s.conj().T @ y
    if np.linalg.cond(gram) > 1e12:
        return np.linalg.solve(gram + 1e-10 * np.eye(gram.shape[0]), rhs), True
    return np.linalg.solve(gram, rhs), False


def omp_estimate(y_tilde, x_tilde, dic: Dictionary, sparsity: int, noise_var: float = 0.0,
                 phi=None, return_info: bool = False):
    """Orthogonal matching pursuit estimate of ``H`` from ``Y = H X + N``.

    Parameters
    ----------
    y_tilde : array (n_r, L)
    x_tilde : array (n_t, L)
    dic : Dictionary
    sparsity : int
        Number of greedy iterations (atoms selected).
    noise_var : float
        Accepted for interface symmetry; the iteration count is fixed by ``sparsity``.
    phi : array, optional
        Precomputed :func:`sensing_matrix` for ``x_tilde``.

    Returns
    -------
    h_hat : array (n_r, n_t)
    info : dict, only with ``return_info``
        ``support``, ``coefficients``, ``residual_norms`` (initial one first)
        and ``regularized`` (ridge fallback used).
    """
    if sparsity < 1:
        raise ConfigurationError("sparsity must be at least 1")
    y = np.asarray(y_tilde).reshape(-1)
    if phi is None:
        phi = sensing_matrix(x_tilde, dic)
    norms = np.linalg.norm(phi, axis=0)
    usable = norms > 1e-12 * max(norms.max(), 1e-300)
    inv_norms = np.where(usable, 1.0 / np.where(usable, norms, 1.0), 0.0)
    residual = y.copy()
    support: list[int] = []
    res_norms = [float(np.linalg.norm(residual))]
    coef = np.zeros(0, complex)
    regularized = False
    for _ in range(min(sparsity, int(usable.sum()))):
        corr = np.abs(phi.conj().T @ residual) * inv_norms
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        coef, reg = _lsq(phi[:, support], y)
        regularized |= reg
        residual = y - phi[:, support] @ coef
        res_norms.append(float(np.linalg.norm(residual)))
    if regularized:
        warnings.warn("OMP least-squares was rank deficient; ridge 1e-10 applied", RuntimeWarning)
    h_hat = (dic.atoms[:, support] @ coef).reshape(dic.n_r, dic.n_t) if support else \
        np.zeros((dic.n_r, dic.n_t), complex)
    if return_info:
        return h_hat, {"support": support, "coefficients": coef, "residual_norms": res_norms,
                       "regularized": regularized}
    return h_hat


def nmse(h_hat, h) -> float:
    return float(np.sum(np.abs(h_hat - h) ** 2) / np.sum(np.abs(h) ** 2))


def allocate_bits(bits_total: int, n_coeffs: int) -> np.ndarray:
    """Spread ``bits_total`` over ``n_coeffs`` as evenly as possible (leading ones get the remainder)."""
    base, extra = divmod(int(bits_total), n_coeffs)
    alloc = np.full(n_coeffs, base, dtype=int)
    alloc[:extra] += 1
    return alloc


def quantize_csi(h_hat, bits_total: int, clip_sigmas: float | None = 3.0,
                 scale: float | None = None) -> np.ndarray:
    """Uniform scalar quantization of the ``2 n_r n_t`` real coefficients of ``h_hat``.

    Each coefficient gets ``b`` bits (see :func:`allocate_bits`) and is
    quantized with ``2^b`` mid-point levels over ``[-c, c]``; ``b = 0`` maps to 0.
    The range ``c`` is ``scale`` when given, else ``clip_sigmas`` times the
    standard deviation of the coefficients, else (``clip_sigmas=None``) their
    largest magnitude.
    """
    h_hat = np.asarray(h_hat, dtype=complex)
    coeffs = np.concatenate([h_hat.real.ravel(), h_hat.imag.ravel()])
    bits = allocate_bits(bits_total, coeffs.size)
    if scale is None:
        scale = np.abs(coeffs).max() if clip_sigmas is None else clip_sigmas * coeffs.std()
    out = np.zeros_like(coeffs)
    if scale > 0:
        levels = 2.0 ** bits
        step = 2 * scale / levels
        idx = np.clip(np.floor((coeffs + scale) / step), 0, levels - 1)
        out = np.where(bits > 0, -scale + (idx + 0.5) * step, 0.0)
    half = coeffs.size // 2
    return (out[:half] + 1j * out[half:]).reshape(h_hat.shape)


def svd_gsm_beamformer(h_hat, connectors: ConnectorSet, n_k: int, n_s: int) -> HybridBeamformer:
    """Analog phases of the dominant right singular vector; per-connector SVD digital stage."""
    h_hat = np.asarray(h_hat)
    _, _, vh = np.linalg.svd(h_hat)
    theta = np.angle(vh[0].conj())
    a = build_analog(theta, n_k)
    d_hat = []
    for c in connectors.legal:
        _, _, vh_m = np.linalg.svd(h_hat @ a @ c.matrix)
        d_hat.append(vh_m[:n_s].conj().T)
    return HybridBeamformer.from_raw(theta, np.stack(d_hat), connectors, n_k)


def _rate_terms(f, h, link, mc_samples, rng):
    from .rate import covariances, mi_amp_phase_batch, mi_spatial_from_cov
    amp = float(mi_amp_phase_batch(h, f, link))
    spat, err = mi_spatial_from_cov(covariances(h, f, link), mc_samples, rng) if mc_samples > 0 else (0.0, 0.0)
    return amp, spat, err


def run_baseline(cfg, channels, snr_db: float, bits_list=None, mc_samples: int | None = None,
                 seed: int | None = None, threads: int = 1, include_reference: bool = True) -> list[dict]:
    """Mean achievable rate of the comparison schemes over ``channels``.

    Schemes: ``OMP+SVD-GSM/inf`` (estimate fed back unquantized), one
    ``OMP+SVD-GSM/B=<b>`` row per entry of ``bits_list`` and, with
    ``include_reference``, ``SVD-GSM/full-CSI`` and ``random`` beamformers.
    Pilot noise and Monte-Carlo draws of channel ``k`` use generator
    ``(seed, k)``; the quantizer range is set from the pooled coefficients of
    all OMP estimates in the run.

    Returns rows with keys ``scheme, feedback_bits, mi_amp_phase, mi_spatial, rate, mc_stderr``.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .beamforming import random_beamformer
    from .pilots import PilotLayer, build_pilot_mask, complex_noise
    from .rate import link_from_snr
    from .topology import legal_connectors

    g, bc = cfg.gsm, cfg.baseline
    bits_list = list(bc.feedback_bits if bits_list is None else bits_list)
    mc_samples = cfg.eval.mc_samples if mc_samples is None else mc_samples
    seed = cfg.eval.seed if seed is None else seed
    channels = np.asarray(channels)
    link = link_from_snr(snr_db, cfg.pilots.power)
    cs = legal_connectors(g)
    mask = build_pilot_mask(cs, cfg.pilots.length)
    x = PilotLayer(mask, cfg.pilots.power, g.n_k, np.random.default_rng(bc.pilot_seed)).matrix()
    ch = cfg.channel
    dic = build_dictionary(g.n_r, g.n_t, bc.grid_tx, bc.grid_rx, ch.tx_sector, ch.rx_sector,
                           ch.wavelength, ch.spacing)
    phi = sensing_matrix(x, dic)
    n = channels.shape[0]
    rngs = [np.random.default_rng([seed, k]) for k in range(n)]
    noise = [complex_noise(r, (g.n_r, cfg.pilots.length), link.noise_var) for r in rngs]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        h_hats = [omp_estimate(channels[k] @ x + noise[k], x, dic, bc.sparsity, link.noise_var, phi=phi)
                  for k in range(n)]
    pool = np.concatenate([np.concatenate([h.real.ravel(), h.imag.ravel()]) for h in h_hats])
    scale = (np.abs(pool).max() if bc.clip_sigmas is None else bc.clip_sigmas * pool.std())

    schemes = [("OMP+SVD-GSM/inf", None, lambda k: h_hats[k])]
    for b in bits_list:
        schemes.append((f"OMP+SVD-GSM/B={b}", b,
                        lambda k, b=b: quantize_csi(h_hats[k], b, scale=scale)))
    if include_reference:
        schemes.insert(0, ("SVD-GSM/full-CSI", None, lambda k: channels[k]))

    def one(k):
        # every scheme gets its own stream derived from the channel's generator
        sub = rngs[k].spawn(len(schemes) + 1)
        out = []
        for (name, _, est), r in zip(schemes, sub):
            hb = svd_gsm_beamformer(est(k), cs, g.n_k, g.n_s)
            out.append(_rate_terms(hb.precoders(), channels[k], link, mc_samples, r))
        if include_reference:
            hb = random_beamformer(cs, g.n_k, g.n_s, sub[-1])
            out.append(_rate_terms(hb.precoders(), channels[k], link, mc_samples, sub[-1]))
        return out

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            per = list(ex.map(one, range(n)))
    else:
        per = [one(k) for k in range(n)]
    per = np.array(per)  # (n, schemes, 3)
    names = [(s[0], s[1]) for s in schemes]
    if include_reference:
        names.append(("random", None))
    rows = []
    for j, (name, b) in enumerate(names):
        amp, spat, err = per[:, j, 0], per[:, j, 1], per[:, j, 2]
        rows.append({
            "scheme": name,
            "feedback_bits": b,
            "mi_amp_phase": float(amp.mean()),
            "mi_spatial": float(spat.mean()),
            "rate": float((amp + spat).mean()),
            "mc_stderr": float(np.sqrt(np.sum(err ** 2)) / n),
            "per_channel_rate": amp + spat,
        })
    return rows
