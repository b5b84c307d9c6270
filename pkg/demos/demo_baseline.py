"""
OMP estimation and quantized feedback
=====================================

The conventional route: estimate the channel from the same pilots with
orthogonal matching pursuit, quantize it coefficient by coefficient, and
build an SVD beamformer on the GSM structure from what arrives.
"""
import warnings

import numpy as np

from gsmfeedback.baseline import build_dictionary, nmse, omp_estimate, run_baseline, sensing_matrix
from gsmfeedback.channel import generate_dataset
from gsmfeedback.config import RunConfig
from gsmfeedback.pilots import PilotLayer, build_pilot_mask, complex_noise
from gsmfeedback.topology import legal_connectors

warnings.simplefilter("ignore", RuntimeWarning)
cfg = RunConfig()
rng = np.random.default_rng(3)
x = PilotLayer(build_pilot_mask(legal_connectors(cfg.gsm), 8), 1.0, 4, rng).matrix()
dic = build_dictionary(4, 16)
phi = sensing_matrix(x, dic)
print("dictionary atoms:", dic.size)

channels = generate_dataset(cfg.channel, 60)
for snr in (0, 10, 20):
    nv = 10 ** (-snr / 10)
    errs = [nmse(omp_estimate(h @ x + complex_noise(rng, (4, 8), nv), x, dic, 16, phi=phi), h) for h in channels]
    print(f"SNR {snr:2d} dB  median NMSE {np.median(errs):.3f}")

for row in run_baseline(cfg, channels, 10.0, [6, 36, 128, 512], mc_samples=200):
    print(f"{row['scheme']:22s} rate {row['rate']:.2f}")
