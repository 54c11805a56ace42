"""
Auto-encoder versus TV on held-out frames
=========================================

A compact version of the desk-scale benchmark: simulate pairs, train the
depth-7 auto-encoder for a few epochs, reconstruct held-out frames with both
methods and compare. With the 100 bundled digits this takes about a minute;
point $PHOTONLAB_MNIST_IDX at a full IDX file and raise the counts for the
real thing (or use ``photonlab bench``).
"""

# %%
import time

import numpy as np

from photonlab import cae, dataset_io, imageio, metrics, tv_recon
from _digits import OUT, load_digits

digits = load_digits()
n_train, n_test = min(80, len(digits) - 20), 20
split = dataset_io.make_split(len(digits), n_train, n_test, seed=0)
train = dataset_io.build_pairs(digits, split.train_indices, "paper-like", master_seed=0)
test = dataset_io.build_pairs(digits, split.test_indices, "paper-like", master_seed=0)
print(f"{len(train)} training pairs, {len(test)} held out")

# %%
arch = cae.build_architecture(7)
print("parameters:", arch.n_params())
t0 = time.perf_counter()
weights, history = cae.train((train.frames, train.truths), arch, cae.TrainConfig(epochs=15, batch_size=16),
                             seed=0, test_pairs=(test.frames, test.truths))
print(f"trained in {time.perf_counter() - t0:.0f} s")
for r in history.records[::3] + history.records[-1:]:
    print(f"epoch {r.epoch:3d}  train {r.train_mse:.4f}  test {r.test_mse:.4f}")

# %%
cae_recons = list(cae.forward(weights, test.frames))
tv_recons = [tv_recon.reconstruct_tv(f)[0] for f in test.frames]
report = metrics.compare_methods({"cae": cae_recons, "tv": tv_recons}, list(test.truths), test.indices)
for m in report.methods:
    ag = m.aggregates()
    print(f"{m.name}: median contrast {ag['median_contrast']:.3f}, median mse {ag['median_mse']:.4f}")

# %% [markdown]
# At this size the network is still mid-way down its learning curve and TV
# usually wins on MSE; the contrast of both sits near 1 because each leaves
# background pixels at (or next to) zero. The full benchmark trains on 2000
# pairs for 100 epochs, see ``photonlab bench``.
#
# Columns: truth, frame, TV, CAE.

# %%
OUT.mkdir(exist_ok=True)
rows = []
for k in range(6):
    cells = [test.truths[k], test.frames[k], tv_recons[k] / max(tv_recons[k].max(), 1e-12), cae_recons[k]]
    rows.append(np.concatenate([np.pad(np.asarray(c, float), 1, constant_values=1.0) for c in cells], axis=1))
imageio.write_png(OUT / "cae_vs_tv.png", imageio.to_uint8(np.concatenate(rows, axis=0)))
report.write(OUT / "report.json", OUT / "report.csv")
print("wrote", OUT / "cae_vs_tv.png")
