"""
End-to-end unsupervised training of pilots, encoder, quantizer and decoder
against the amplitude-phase mutual information.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import autodiff as ad
from .beamforming import normalize_precoders, precoders
from .channel import generate_dataset, sample_channel
from .config import RunConfig, TrainConfig
from .errors import NumericalDomainError
from .network import Decoder, DecoderSpec, Encoder, EncoderSpec, quantize
from .pilots import PilotLayer, build_pilot_mask, complex_noise, observe
from .rate import (LinkParams, covariances, link_from_snr, mi_amp_phase_batch,
                   mi_spatial_from_cov, training_loss)
from .topology import legal_connectors

__all__ = [
    "lr_schedule", "Adam", "EndToEndModel", "build_model", "evaluate", "train",
    "TrainHistory", "METRICS_COLUMNS", "write_csv", "default_threads",
]

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("epoch", "lr", "train_loss", "test_mi_amp_phase", "test_mi_spatial", "test_rate")
SCHEMA_VERSION = 1
THREADS_ENV = "GSMFEEDBACK_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Linear warmup from 0 to ``lr_init``, then cosine annealing down to ``lr_min``."""
    if epoch < cfg.warmup_epochs:
        return cfg.lr_init * epoch / cfg.warmup_epochs
    span = cfg.epochs - cfg.warmup_epochs
    t = (epoch - cfg.warmup_epochs) / span if span > 0 else 1.0
    return cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1 + math.cos(math.pi * t))


@numba.njit(cache=True)
def _adam_update(p, g, m, v, lr, b1, b2, c1, c2, eps):
    for i in range(p.size):
        m[i] = b1 * m[i] + (1 - b1) * g[i]
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
        p[i] -= lr * (m[i] / c1) / (math.sqrt(v[i] / c2) + eps)


class Adam:
    """Adam with bias correction; state is kept per parameter name."""

    def __init__(self, named_params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(named_params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.values) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in self.params.items()}

    def step(self, lr: float, grads: dict | None = None):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.step_count
        c2 = 1 - b2 ** self.step_count
        for k, p in self.params.items():
            g = grads[k] if grads is not None else p.grad
            if g is None:
                continue
            _adam_update(p.values.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                         self.m[k].reshape(-1), self.v[k].reshape(-1),
                         lr, b1, b2, c1, c2, self.eps)

    def state_dict(self) -> dict:
        out = {"adam.step": np.array(float(self.step_count))}
        for k in self.params:
            out[f"adam.m.{k}"] = self.m[k].copy()
            out[f"adam.v.{k}"] = self.v[k].copy()
        return out

    def load_state_dict(self, state: dict):
        self.step_count = int(state["adam.step"])
        for k in self.params:
            self.m[k] = np.array(state[f"adam.m.{k}"], dtype=float)
            self.v[k] = np.array(state[f"adam.v.{k}"], dtype=float)


class EndToEndModel(ad.Module):
    """Pilots, user-side encoder, binary quantizer and base-station decoder."""

    def __init__(self, cfg: RunConfig, rng):
        self.cfg = cfg
        g = cfg.gsm
        self.connectors = legal_connectors(g)
        self.c_stack = self.connectors.stacked()
        mask = build_pilot_mask(self.connectors, cfg.pilots.length)
        net = cfg.network
        b = cfg.train.feedback_bits
        self.pilots = PilotLayer(mask, cfg.pilots.power, g.n_k, rng)
        self.encoder = Encoder(EncoderSpec(g.n_r, cfg.pilots.length, b, net.expand_channels,
                                           net.branch_kernels), rng)
        self.decoder = Decoder(DecoderSpec(b, g.n_t, self.connectors.m, g.n_rf, g.n_s,
                                           net.hidden_dims), rng)
        for name, p in self.named_parameters():
            p.name = name
        for bn in self._batchnorms():
            bn.momentum = net.bn_momentum

    def _batchnorms(self):
        mods = [self.encoder.expand_bn, *self.encoder.branch_bns, *self.decoder.hidden_bns]
        return mods

    def forward(self, channels, noise, surrogate_forward=False):
        """Raw decoder outputs ``(theta_a, d_re, d_im, bits)`` for a channel batch.

        ``noise`` is the pilot noise array ``(b, n_r, L)``.
        """
        x = self.pilots()
        y = observe(channels, x, 0.0, None, noise=noise)
        logits = self.encoder(y)
        bits = quantize(logits, surrogate_forward=surrogate_forward)
        theta, d_re, d_im = self.decoder(bits)
        return theta, d_re, d_im, bits

    def loss(self, channels, noise, link: LinkParams, surrogate_forward=False) -> ad.Tensor:
        theta, d_re, d_im, _ = self.forward(channels, noise, surrogate_forward)
        return training_loss(theta, d_re, d_im, channels, self.c_stack, link, self.cfg.gsm.n_k)

    def beamformers(self, channels, noise):
        """Eval-mode normalized precoders ``(b, M, n_t, n_s)`` plus the bits that produced them."""
        was = self.training
        self.eval()
        try:
            with ad.no_grad():
                theta, d_re, d_im, bits = self.forward(channels, noise)
        finally:
            self.train(was)
        d = d_re.values + 1j * d_im.values
        f = precoders(theta.values, d, self.c_stack, self.cfg.gsm.n_k)
        return normalize_precoders(f), bits.values

    def state(self) -> dict:
        return {name: p.values.copy() for name, p in self.named_parameters()}


def build_model(cfg: RunConfig) -> EndToEndModel:
    return EndToEndModel(cfg, np.random.default_rng([cfg.train.seed, 7]))


def _channel_batch(cfg: RunConfig, rng, count):
    return np.stack([sample_channel(cfg.channel, rng) for _ in range(count)])


def evaluate(model: EndToEndModel, channels, snr_db: float, mc_samples: int, seed: int = 0,
             threads: int | None = None, chunk: int = 256) -> dict:
    """Mean test-set rate terms of ``model`` with eval-mode layers and hard bits.

    Pilot noise and Monte-Carlo draws of channel ``k`` come from a generator
    seeded by ``(seed, k)``, so results do not depend on ``threads``.
    """
    channels = np.asarray(channels)
    link = link_from_snr(snr_db, model.cfg.pilots.power)
    n, n_r, _ = channels.shape
    l = model.cfg.pilots.length
    rngs = [np.random.default_rng([seed, k]) for k in range(n)]
    noise = np.stack([complex_noise(r, (n_r, l), link.noise_var) for r in rngs])
    fs = np.concatenate([model.beamformers(channels[i:i + chunk], noise[i:i + chunk])[0]
                         for i in range(0, n, chunk)])
    amp = mi_amp_phase_batch(channels, fs, link)
    sig = covariances(channels, fs, link)

    def spatial(k):
        return mi_spatial_from_cov(sig[k], mc_samples, rngs[k]) if mc_samples > 0 else (0.0, 0.0)

    threads = threads or default_threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            res = list(pool.map(spatial, range(n)))
    else:
        res = [spatial(k) for k in range(n)]
    spat = np.array([r[0] for r in res])
    errs = np.array([r[1] for r in res])
    rate = amp + spat
    return {
        "mi_amp_phase": float(amp.mean()),
        "mi_spatial": float(spat.mean()),
        "rate": float(rate.mean()),
        # per-channel MC errors are independent; channel-to-channel spread is excluded
        "mc_stderr": float(np.sqrt(np.sum(errs ** 2)) / n),
        "per_channel_rate": rate,
    }


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    init: dict | None = None
    batch_losses: list = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.rows[-1]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, columns, rows, config_json: str | None = None):
    """CSV with ``#`` header lines carrying the schema version and config snapshot."""
    lines = [f"# schema_version={SCHEMA_VERSION}"]
    if config_json is not None:
        lines.append(f"# config={config_json}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) if not isinstance(row[c], str) else row[c] for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def _batch_inputs(cfg: RunConfig, epoch: int, batch: int, link: LinkParams):
    tc = cfg.train
    rng = np.random.default_rng([tc.seed, 1, epoch, batch])
    h = _channel_batch(cfg, rng, tc.batch_size)
    noise_rng = np.random.default_rng([tc.seed, 2, batch]) if tc.freeze_noise else rng
    noise = complex_noise(noise_rng, (tc.batch_size, cfg.gsm.n_r, cfg.pilots.length), link.noise_var)
    return h, noise


def _clip(grads: dict, max_norm):
    if max_norm is None:
        return grads
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values() if g is not None))
    if total > max_norm:
        s = max_norm / total
        grads = {k: (None if g is None else g * s) for k, g in grads.items()}
    return grads


def _save(model, opt, epoch, path):
    state = model.state()
    state.update(opt.state_dict())
    state["meta.epoch"] = np.array(float(epoch))
    ad.save_checkpoint(path, state)


def train(cfg: RunConfig, out_dir=None, resume=None, test_channels=None,
          evaluate_every: int = 1, stop_after: int | None = None) -> tuple[EndToEndModel, TrainHistory]:
    """Run the training protocol of ``cfg``.

    Parameters
    ----------
    out_dir : path, optional
        Run directory receiving ``config.json``, ``metrics.csv``,
        ``checkpoint.bin`` (latest, with optimizer state) and ``model.bin``.
    resume : path, optional
        Checkpoint to continue from; the next epoch reproduces an
        uninterrupted run exactly.
    test_channels : array, optional
        Test set; generated from ``cfg.channel`` with ``cfg.eval.test_count``
        draws when omitted.
    stop_after : int, optional
        Stop after this many epochs of the schedule (for interrupt/resume tests).
    """
    tc = cfg.train
    link = link_from_snr(tc.snr_db, cfg.pilots.power)
    model = build_model(cfg)
    opt = Adam([(k, p) for k, p in model.named_parameters() if p.trainable])
    start = 0
    if resume is not None:
        state = ad.load_checkpoint(resume)
        model.load_state_dict({k: v for k, v in state.items()
                               if not k.startswith(("adam.", "meta."))})
        opt.load_state_dict(state)
        start = int(state["meta.epoch"]) + 1
    if test_channels is None:
        test_channels = generate_dataset(cfg.channel, cfg.eval.test_count)
    history = TrainHistory()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        if resume is not None and (out / "metrics.csv").exists():
            history.rows = _read_metrics(out / "metrics.csv")[:start]

    def run_eval():
        return evaluate(model, test_channels, tc.snr_db, tc.eval_mc_samples, seed=cfg.eval.seed,
                        threads=cfg.eval.threads)

    if start == 0:
        history.init = run_eval()
    end = tc.epochs if stop_after is None else min(tc.epochs, start + stop_after)
    ckpt = out / "checkpoint.bin" if out is not None else None
    epoch = start
    try:
        for epoch in range(start, end):
            lr = lr_schedule(epoch, tc)
            model.train()
            losses = []
            for batch in range(tc.batches_per_epoch):
                h, noise = _batch_inputs(cfg, epoch, batch, link)
                model.zero_grad()
                loss = model.loss(h, noise, link)
                ad.backward(loss)
                grads = _clip({k: p.grad for k, p in opt.params.items()}, tc.max_grad_norm)
                opt.step(lr, grads)
                losses.append(float(loss.values))
            history.batch_losses.extend(losses)
            row = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses))}
            if (epoch + 1) % evaluate_every == 0 or epoch == end - 1:
                ev = run_eval()
                row.update(test_mi_amp_phase=ev["mi_amp_phase"], test_mi_spatial=ev["mi_spatial"],
                           test_rate=ev["rate"])
            else:
                row.update(test_mi_amp_phase=float("nan"), test_mi_spatial=float("nan"),
                           test_rate=float("nan"))
            history.rows.append(row)
            log.info("epoch %d lr %.3g loss %.4f rate %.4f", epoch, lr, row["train_loss"], row["test_rate"])
            if out is not None:
                _save(model, opt, epoch, ckpt)
                write_csv(out / "metrics.csv", METRICS_COLUMNS, history.rows, cfg.to_json())
    except NumericalDomainError:
        if ckpt is not None and not ckpt.exists():
            _save(model, opt, epoch - 1, ckpt)
        raise
    if out is not None:
        ad.save_checkpoint(out / "model.bin", model.state())
        if history.init is not None:
            init = {k: v for k, v in history.init.items() if k != "per_channel_rate"}
            (out / "init_eval.json").write_text(json.dumps(init, sort_keys=True) + "\n")
    return model, history


def _read_metrics(path) -> list:
    rows = []
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    for ln in lines[1:]:
        vals = ln.split(",")
        row = {k: (int(v) if k == "epoch" else float(v)) for k, v in zip(header, vals)}
        rows.append(row)
    return rows


def load_model(cfg: RunConfig, path) -> EndToEndModel:
    """Model of ``cfg`` with parameters read from a checkpoint (optimizer entries ignored)."""
    model = build_model(cfg)
    state = ad.load_checkpoint(path)
    model.load_state_dict({k: v for k, v in state.items() if not k.startswith(("adam.", "meta."))})
    model.eval()
    return model
