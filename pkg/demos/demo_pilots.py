"""
Pilots under the GSM constraint
===============================

Each pilot column may only drive the antennas of one legal connector.  The
mask is fixed and the phases are trained.
"""
import numpy as np

from gsmfeedback.channel import ChannelConfig, sample_channel
from gsmfeedback.pilots import PilotLayer, build_pilot_mask, observe
from gsmfeedback.topology import GsmConfig, legal_connectors

rng = np.random.default_rng(1)
cs = legal_connectors(GsmConfig())
mask = build_pilot_mask(cs, 8)
print("pilot mask (antennas x pilot slots)")
print(mask.astype(int))

layer = PilotLayer(mask, power=1.0, n_k=4, rng=rng)
x = layer.matrix()
print("entry magnitudes:", np.unique(np.round(np.abs(x), 12)))
print("column powers:", np.round(np.sum(np.abs(x) ** 2, axis=0), 3))

h = sample_channel(ChannelConfig(), rng)
y = observe(h, x, noise_var=0.1, rng=rng)
print("observation shape", y.shape, "SNR of the received pilots",
      round(10 * np.log10(np.mean(np.abs(h @ x) ** 2) / 0.1), 1), "dB")
