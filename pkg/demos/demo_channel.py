"""
Clustered mmWave channels
=========================

Draw channels from the two-cluster, eight-ray model with uniform linear
arrays and look at their energy and rank.
"""
import numpy as np

from gsmfeedback.channel import ChannelConfig, generate_dataset, read_dataset, write_dataset

cfg = ChannelConfig()
h = generate_dataset(cfg, 2000)
print("dataset shape", h.shape)

energy = np.sum(np.abs(h) ** 2, axis=(1, 2))
print(f"mean ||H||_F^2 = {energy.mean():.2f} (n_t n_r = {cfg.n_t * cfg.n_r})")

# singular values: a few strong paths dominate
s = np.linalg.svd(h, compute_uv=False)
print("mean singular values", np.round(s.mean(axis=0), 2))
print("share of energy in the top eigenmode", round(float(np.mean(s[:, 0] ** 2 / energy)), 3))

# one cluster with one ray is a rank-one channel
single = generate_dataset(ChannelConfig(n_cl=1, n_ray=1), 1)[0]
print("single-path singular values", np.round(np.linalg.svd(single, compute_uv=False), 6))

write_dataset("/tmp/demo_channels.bin", h[:10])
print("round trip ok:", np.array_equal(read_dataset("/tmp/demo_channels.bin"), h[:10]))
