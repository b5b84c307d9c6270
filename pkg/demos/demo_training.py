"""
Training the feedback network
=============================

Pilots, encoder, one-bit quantizer and decoder are trained jointly to
maximize the closed-form part of the rate.  This runs a few short epochs;
`desk_config()` is the half-hour protocol used by the acceptance tests.
"""
import numpy as np

from gsmfeedback.baseline import run_baseline
from gsmfeedback.channel import generate_dataset
from gsmfeedback.config import desk_config
from gsmfeedback.network import decode, encode
from gsmfeedback.trainer import train

cfg = desk_config(feedback_bits=30, epochs=4, batches_per_epoch=30, warmup_epochs=1)
test = generate_dataset(cfg.channel, 100)

model, history = train(cfg, out_dir="/tmp/demo_run", test_channels=test)
print(f"untrained model: rate {history.init['rate']:.2f} bits/s/Hz")
for row in history.rows:
    print(f"epoch {row['epoch']}  lr {row['lr']:.1e}  loss {row['train_loss']:.3f}  rate {row['test_rate']:.2f}")

rows = run_baseline(cfg, test, cfg.train.snr_db, [], mc_samples=200)
print("random beamformer:", round(next(r["rate"] for r in rows if r["scheme"] == "random"), 2))

# the user side sends 30 bits; the base station turns them into beamformers
model.eval()
y = test[0] @ model.pilots.matrix()
bits = np.where(encode(y, model.encoder) >= 0, 1, 0)
print("feedback bits:", "".join(map(str, bits)))
theta, d = decode(2.0 * bits - 1, model.decoder)
print("analog phases (deg):", np.round(np.degrees(theta[:4]) % 360, 1), "...")
