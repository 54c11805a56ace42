"""
Single-photon frames from a handwritten digit
=============================================

A gated, intensified camera sees only a photon or two per pixel per
exposure. This walk-through turns one clean digit into binary frames at the
two flux levels used throughout the package and checks the fraction of lit
pixels against the closed-form detection probability.
"""

# %%
import numpy as np

from photonlab import imageio, metrics, photon_sim
from _digits import OUT, load_digits

digits = load_digits()
truth = digits[0]
print("digit mean intensity %.3f" % truth.mean())

# %% [markdown]
# ``flux_map`` rescales the image so that its mean rate equals ``mu``; the
# frame is then Poisson counting, dark counts, read noise and a threshold.

# %%
frames = {}
for preset in ("paper-like", "paper-like-low"):
    cam = photon_sim.get_preset(preset)
    frame = photon_sim.simulate_frame(truth, cam, photon_sim.derive_seed(0, 0))
    expected = photon_sim.detection_probability(photon_sim.flux_map(truth, cam.mu), cam).mean()
    print(f"{preset:15s} mu={cam.mu}: lit fraction {frame.mean():.3f}, expected {expected:.3f}")
    frames[preset] = frame

# %% [markdown]
# One frame is close to unreadable. Summing many independent exposures
# recovers the digit, which is the classical route the reconstructions below
# try to short-cut.

# %%
cam = photon_sim.get_preset("paper-like")
stack = {n: photon_sim.accumulate_frames(truth, cam, n, master_seed=7) for n in (1, 10, 100)}
for n, counts in stack.items():
    img = counts / n
    print(f"{n:4d} frames: contrast {metrics.contrast(img):.3f}, mse vs truth {metrics.mse(img / img.max(), truth):.4f}")

# %%
OUT.mkdir(exist_ok=True)
row = [truth, frames["paper-like"], frames["paper-like-low"]] + [stack[n] / stack[n].max() for n in (10, 100)]
strip = np.concatenate([np.pad(np.asarray(r, float), 1, constant_values=1.0) for r in row], axis=1)
imageio.write_png(OUT / "photon_frames.png", imageio.to_uint8(strip))
print("wrote", OUT / "photon_frames.png")
